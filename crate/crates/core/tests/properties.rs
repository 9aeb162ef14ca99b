mod common;

use common::{brute_marginal, params, simpson};
use marginal_cox::intensity::Intensity;
use marginal_cox::marginal::{
    batch_loglik_with, compute_coefficients, compute_coefficients_with, marginal_loglik_lattice,
};
use marginal_cox::oracles::{mc_marginal_with, McSpec};
use marginal_cox::par::Exec;
use marginal_cox::paths::{adapt_path, tune_w};
use marginal_cox::{marginal_loglik, CountPath, PolyIntensity};
use proptest::prelude::*;

fn any_poly() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 1..=5)
}

/// Polynomials with nonnegative coefficients and a positive constant term.
fn positive_poly() -> impl Strategy<Value = Vec<f64>> {
    (0.1..3.0f64, prop::collection::vec(0.0..1.5f64, 0..=3)).prop_map(|(c0, rest)| {
        let mut c = vec![c0];
        c.extend(rest);
        c
    })
}

fn event_times(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(1u32..1_000_000, 1..=max)
        .prop_map(|s| s.into_iter().map(|k| k as f64 * 1e-6).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn alpha_matches_quadrature(
        coeffs in any_poly(),
        w in 1e-4..20.0f64,
        horizon in 0.1..5.0f64,
        a_frac in 0.0..1.0f64,
        b_frac in 0.0..1.0f64,
    ) {
        let g = PolyIntensity::new(coeffs).unwrap();
        let (a, b) = {
            let (x, y) = (a_frac * horizon, b_frac * horizon);
            (x.min(y), x.max(y))
        };
        let closed = g.alpha_integral(w, horizon, a, b);
        let rough = simpson(|t| (-w * (horizon - t)).exp() * g.eval(t).abs(), a, b, 1e-6);
        let tol = 1e-14 * rough.max(1e-300);
        let quad = simpson(|t| (-w * (horizon - t)).exp() * g.eval(t), a, b, tol);
        let scale = simpson(|t| (-w * (horizon - t)).exp() * g.eval(t).abs(), a, b, tol);
        prop_assert!((closed - quad).abs() <= 1e-10 * scale.max(1e-12),
            "closed {closed} quad {quad}");
    }

    #[test]
    fn alpha_is_additive(
        coeffs in any_poly(),
        w in 1e-3..10.0f64,
        horizon in 0.1..5.0f64,
        cuts in prop::array::uniform3(0.0..1.0f64),
    ) {
        let g = PolyIntensity::new(coeffs).unwrap();
        let mut c = cuts.map(|f| f * horizon);
        c.sort_by(f64::total_cmp);
        let whole = g.alpha_integral(w, horizon, c[0], c[2]);
        let parts = g.alpha_integral(w, horizon, c[0], c[1]) + g.alpha_integral(w, horizon, c[1], c[2]);
        let scale = g.coeffs().iter().enumerate().map(|(k, v)| v.abs() * horizon.powi(k as i32)).sum::<f64>() * horizon;
        prop_assert!((whole - parts).abs() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn cum_inverse_round_trip(coeffs in positive_poly(), horizon in 0.1..5.0f64, frac in 0.0..1.0f64) {
        let g = PolyIntensity::new(coeffs).unwrap();
        let t = frac * horizon;
        let back = g.cum_inverse(g.cum(t), horizon).unwrap();
        prop_assert!((back - t).abs() <= 1e-10 * horizon.max(1.0), "{t} -> {back}");
        prop_assert_eq!(g.cum_inverse(g.cum(horizon) * 1.001 + 1e-9, horizon).unwrap(), f64::INFINITY);
    }

    #[test]
    fn lambda_between_zero_and_cum(coeffs in positive_poly(), w in 1e-4..50.0f64, horizon in 0.1..5.0f64) {
        let g = PolyIntensity::new(coeffs).unwrap();
        let lam = g.lambda_integral(w, horizon);
        prop_assert!(lam >= 0.0);
        prop_assert!(lam <= g.cum(horizon) * (1.0 + 1e-12));
    }

    #[test]
    fn adaptation_conserves_area(events in event_times(40), scale in 0.2..5.0f64) {
        let raw = CountPath::new(events, 1.0).unwrap();
        let w = tune_w(&raw).unwrap();
        let out = adapt_path(&raw, w).unwrap();
        prop_assert_eq!(out.path.len(), raw.len());
        prop_assert!(out.path.jumps().windows(2).all(|p| p[0] < p[1]));
        for (i, &t) in out.crossings.iter().enumerate() {
            let smooth = 0.5 * w * raw.jumps().iter().filter(|&&s| s < t).map(|&s| (t - s).powi(2)).sum::<f64>();
            let step = out.path.area(t);
            prop_assert!((smooth - step).abs() <= 1e-10 * smooth.max(1.0), "level {}: {} vs {}", i + 1, smooth, step);
            prop_assert_eq!(out.path.value(t), i + 1);
        }

        // stretching time by `scale` and shrinking w by the same factor stretches the result
        let stretched = CountPath::new(raw.jumps().iter().map(|t| t * scale).collect(), scale).unwrap();
        let out2 = adapt_path(&stretched, w / scale).unwrap();
        prop_assert_eq!(out2.path.len(), out.path.len());
        for (a, b) in out.path.jumps().iter().zip(out2.path.jumps()) {
            prop_assert!((a * scale - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn loglik_ignores_input_order(events in event_times(30), seed in any::<u64>()) {
        let p = params(0.7, 1.3, &[1.0, 0.5], 1.0);
        let mut shuffled = events.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
        }
        let a = marginal_loglik(&CountPath::new(events, 1.0).unwrap(), &p).unwrap().loglik;
        let b = marginal_loglik(&CountPath::new(shuffled, 1.0).unwrap(), &p).unwrap().loglik;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn coefficients_grow_with_m(events in event_times(25), coeffs in positive_poly(), w in 0.1..3.0f64) {
        let p = marginal_cox::ModelParams::new(0.0, w, PolyIntensity::new(coeffs).unwrap(), 1.0).unwrap();
        let x = CountPath::new(events, 1.0).unwrap();
        let table = compute_coefficients(&x, &p).unwrap();
        for m in 1..=x.len() {
            for j in 0..m {
                prop_assert!(table.coefficient(m, j) >= table.coefficient(m - 1, j) * (1.0 - 1e-12));
            }
            prop_assert!(table.coefficient(m, m) > 0.0);
        }
    }

    #[test]
    fn closed_form_matches_brute_force(
        events in event_times(8),
        coeffs in positive_poly(),
        beta0 in 0.0..2.0f64,
        w in 0.1..3.0f64,
    ) {
        let p = marginal_cox::ModelParams::new(beta0, w, PolyIntensity::new(coeffs).unwrap(), 1.0).unwrap();
        let x = CountPath::new(events, 1.0).unwrap();
        let exact = marginal_loglik(&x, &p).unwrap().loglik;
        let brute = brute_marginal(&x, &p).ln();
        prop_assert!((exact - brute).abs() <= 1e-9, "{exact} vs {brute}");
        let lattice = marginal_loglik_lattice(&x, &p).unwrap().loglik;
        prop_assert!((exact - lattice).abs() <= 1e-12 * exact.abs().max(1.0));
    }
}

#[test]
fn parallel_and_sequential_agree() {
    let p = params(0.5, 1.0, &[1.0, 2.0], 3.0);
    let paths: Vec<CountPath> = (0..20)
        .map(|s| common::uniform_path(5 + 30 * s, 3.0, s as u64))
        .collect();
    let seq = batch_loglik_with(&paths, &p, Exec::Sequential).unwrap();
    let par = batch_loglik_with(&paths, &p, Exec::Parallel).unwrap();
    assert_eq!(seq, par);

    let big = common::uniform_path(1200, 3.0, 99);
    let a = compute_coefficients_with(&big, &p, Exec::Sequential).unwrap();
    let b = compute_coefficients_with(&big, &p, Exec::Parallel).unwrap();
    assert_eq!(a, b);

    let spec = McSpec::new(5000, 3).unwrap();
    let x = common::uniform_path(4, 3.0, 1);
    assert_eq!(
        mc_marginal_with(&x, &p, &spec, Exec::Sequential).unwrap(),
        mc_marginal_with(&x, &p, &spec, Exec::Parallel).unwrap()
    );
}

#[test]
fn batch_reports_failing_index() {
    let p = params(0.5, 1.0, &[1.0], 1.0);
    let paths = vec![
        CountPath::new(vec![0.5], 1.0).unwrap(),
        CountPath::new(vec![0.5], 2.0).unwrap(),
    ];
    match batch_loglik_with(&paths, &p, Exec::Sequential) {
        Err(marginal_cox::Error::Batch { index, .. }) => assert_eq!(index, 1),
        other => panic!("unexpected {other:?}"),
    }
}
