//! Test-only numerical oracles, independent of the library's closed forms.
#![allow(dead_code)]

use marginal_cox::{CountPath, ModelParams, PolyIntensity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn params(beta0: f64, w: f64, coeffs: &[f64], horizon: f64) -> ModelParams {
    ModelParams::new(beta0, w, PolyIntensity::new(coeffs.to_vec()).unwrap(), horizon).unwrap()
}

/// `m` sorted uniform event times on `(0, horizon)`.
pub fn uniform_path(m: usize, horizon: f64, seed: u64) -> CountPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = (0..m).map(|_| rng.random_range(1e-9..horizon)).collect();
    CountPath::new(events, horizon).unwrap()
}

fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton on `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// `∫ₐᵇ f` with a fixed Gauss–Legendre rule.
pub fn gl_integrate<F: FnMut(f64) -> f64>(rule: &[(f64, f64)], a: f64, b: f64, mut f: F) -> f64 {
    let (half, mid) = (0.5 * (b - a), 0.5 * (a + b));
    rule.iter().map(|&(x, wt)| wt * f(mid + half * x)).sum::<f64>() * half
}

/// Coefficient recursion in plain floats with explicit binomials, for small
/// `M`; `kernel[m-1] = A_m` with jumps in descending order.
pub fn brute_coefficients(kernel: &[f64]) -> Vec<f64> {
    let binom = |n: usize, k: usize| -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    };
    let mut c = vec![1.0];
    for (idx, &a) in kernel.iter().enumerate() {
        let m = idx + 1;
        let mut row = vec![0.0; m + 1];
        row[0] = 1.0;
        for j in 1..=m {
            let s: f64 = (0..j).map(|i| c[i] * binom(m - i - 1, j - i - 1)).sum();
            row[j] = a * s + c.get(j).copied().unwrap_or(0.0);
        }
        c = row;
    }
    c
}

/// `A_m` for descending jumps by adaptive Simpson.
pub fn simpson_kernels(x: &CountPath, p: &ModelParams) -> Vec<f64> {
    use marginal_cox::intensity::Intensity;
    let horizon = x.horizon();
    x.jumps()
        .iter()
        .rev()
        .map(|&t| {
            simpson(
                |s| (-p.w() * (horizon - s)).exp() * p.gamma().eval(s),
                0.0,
                t,
                1e-14,
            )
        })
        .collect()
}

/// Marginal likelihood from quadrature kernels and the brute recursion.
pub fn brute_marginal(x: &CountPath, p: &ModelParams) -> f64 {
    use marginal_cox::intensity::Intensity;
    let horizon = x.horizon();
    let c = brute_coefficients(&simpson_kernels(x, p));
    let m = x.len();
    let poly: f64 = c
        .iter()
        .enumerate()
        .map(|(j, cj)| cj * p.w().powi(j as i32) * p.beta0().powi((m - j) as i32))
        .sum();
    let lam = simpson(
        |s| (1.0 - (-p.w() * (horizon - s)).exp()) * p.gamma().eval(s),
        0.0,
        horizon,
        1e-14,
    );
    poly * (-p.beta0() * horizon - lam).exp()
}
