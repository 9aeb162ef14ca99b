//! Independent estimators of `p_X(x)` used to validate [`crate::marginal`].
//!
//! * [`grid_marginal`]: forward filter over a truncated latent state on the
//!   `n`-grid, with exact per-step factors.
//! * [`grid_coeff_marginal`]: the discrete coefficient recursion on the same
//!   grid, first-order terms only.
//! * [`mc_marginal`]: average of `p(x | Y)` over simulated latent paths.
//!
//! None of them call into the marginal module.

use crate::error::{Error, Result};
use crate::intensity::Intensity;
use crate::par::{self, Exec};
use crate::paths::{CountPath, ModelParams};
use crate::simulator::{conditional_loglik, replica_rng, simulate_latent_with};

/// Upper-tail mass of the latent count allowed to fall off the grid state.
pub const TRUNCATION_TAIL: f64 = 1e-12;

/// Grid resolution and latent truncation for [`grid_marginal`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: usize,
    y_max: usize,
}

impl GridSpec {
    /// `n` intervals with `y_max` chosen from the latent count's tail.
    pub fn new(n: usize, params: &ModelParams) -> Result<Self> {
        let horizon = params.horizon();
        let h = horizon / n as f64;
        let riemann: f64 = (0..n).map(|k| params.gamma().eval(k as f64 * h) * h).sum();
        let mean = params.gamma().cum(horizon).max(riemann);
        Self::with_y_max(n, poisson_quantile(mean, TRUNCATION_TAIL).max(1))
    }

    pub fn with_y_max(n: usize, y_max: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("grid needs n >= 2, got {n}")));
        }
        if y_max < 1 {
            return Err(Error::InvalidParameter("y_max must be >= 1".into()));
        }
        Ok(GridSpec { n, y_max })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn y_max(&self) -> usize {
        self.y_max
    }

    pub fn step(&self, horizon: f64) -> f64 {
        horizon / self.n as f64
    }
}

/// Smallest `k` with `P(Poisson(mean) > k) < tail`.
fn poisson_quantile(mean: f64, tail: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let top = (mean + 40.0 * mean.sqrt() + 60.0).ceil() as usize;
    let mut pmf = Vec::with_capacity(top + 1);
    let mut log_p = -mean;
    for k in 0..=top {
        if k > 0 {
            log_p += mean.ln() - (k as f64).ln();
        }
        pmf.push(log_p.exp());
    }
    // tail_above[k] = P(N > k)
    let mut above = 0.0;
    let mut answer = top;
    for k in (0..=top).rev() {
        if above >= tail {
            break;
        }
        answer = k;
        above += pmf[k];
    }
    answer
}

/// Grid cell index `k ≥ 1` such that `kh` is the first grid point `≥ t`.
fn grid_cells(x: &CountPath, n: usize) -> Result<Vec<usize>> {
    let h = x.horizon() / n as f64;
    let mut cells = Vec::with_capacity(x.len());
    for &t in x.jumps() {
        let mut k = (t / h).ceil() as usize;
        if k > 1 && (k - 1) as f64 * h >= t {
            k -= 1;
        }
        if (k as f64) * h < t {
            k += 1;
        }
        let k = k.clamp(1, n);
        if cells.last() == Some(&k) {
            return Err(Error::GridCollision { cell: k });
        }
        cells.push(k);
    }
    Ok(cells)
}

/// `log E[p(x⁽ⁿ⁾ | Y⁽ⁿ⁾)]` by a forward pass over `y = 0..=y_max`.
///
/// Step `k` multiplies state `y` by `e^{-β h}` (or `β e^{-β h}` when `x`
/// jumps at `(k+1)h`) and moves it up with probability `γ(kh)·h`.
pub fn grid_log_marginal(x: &CountPath, params: &ModelParams, spec: &GridSpec) -> Result<f64> {
    params.check_horizon(x.horizon())?;
    let (n, y_max) = (spec.n, spec.y_max);
    let h = spec.step(x.horizon());
    let mut jump_at = vec![false; n + 1];
    for k in grid_cells(x, n)? {
        jump_at[k] = true;
    }

    let (beta0, w) = (params.beta0(), params.w());
    let rate: Vec<f64> = (0..=y_max).map(|y| beta0 + w * y as f64).collect();
    let survive: Vec<f64> = rate.iter().map(|b| (-b * h).exp()).collect();
    let fire: Vec<f64> = rate.iter().zip(&survive).map(|(b, s)| b * s).collect();

    let mut weights = vec![0.0; y_max + 1];
    weights[0] = 1.0;
    let mut next = vec![0.0; y_max + 1];
    let mut log_offset = 0.0;

    for k in 0..n {
        let t = k as f64 * h;
        let up = params.gamma().eval(t) * h;
        if up >= 1.0 {
            return Err(Error::StepTooCoarse { t, value: up });
        }
        let up = up.max(0.0);
        let factor = if jump_at[k + 1] { &fire } else { &survive };
        next.iter_mut().for_each(|v| *v = 0.0);
        for y in 0..=y_max {
            let v = weights[y] * factor[y];
            next[y] += v * (1.0 - up);
            if y < y_max {
                next[y + 1] += v * up;
            }
        }
        let max = next.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        for (dst, &v) in weights.iter_mut().zip(&next) {
            *dst = v / max;
        }
        log_offset += max.ln();
    }
    Ok(log_offset + weights.iter().sum::<f64>().ln())
}

pub fn grid_marginal(x: &CountPath, params: &ModelParams, spec: &GridSpec) -> Result<f64> {
    grid_log_marginal(x, params, spec).map(f64::exp)
}

/// Discrete-grid coefficient recursion.
///
/// With `α_i = e^{-(n-i-1)wh} γ_i`, `λ_i = (1 - e^{-(n-i-1)wh}) γ_i` and the
/// jump at grid time `(r_m + 2)h`, the per-jump kernel is `Σ_{i ≤ r_m} α_i h`
/// and the value is
/// `(Σ_j c_j w^j β₀^{M-j}) · e^{-nβ₀h} · Π_{i ≤ n-2} (1 - λ_i h)`.
/// Plain floats throughout; meant for validation-sized paths.
pub fn grid_coeff_marginal(x: &CountPath, params: &ModelParams, n: usize) -> Result<f64> {
    params.check_horizon(x.horizon())?;
    if n < 2 {
        return Err(Error::InvalidParameter(format!("grid needs n >= 2, got {n}")));
    }
    let horizon = x.horizon();
    let h = horizon / n as f64;
    let (beta0, w) = (params.beta0(), params.w());

    let gamma_at: Vec<f64> = (0..n).map(|i| params.gamma().eval(i as f64 * h)).collect();
    if let Some((i, g)) = gamma_at.iter().enumerate().find(|(_, g)| **g * h >= 1.0) {
        return Err(Error::StepTooCoarse {
            t: i as f64 * h,
            value: g * h,
        });
    }
    let discount = |i: usize| (-((n - i - 1) as f64) * w * h).exp();

    // prefix[r + 1] = Σ_{i ≤ r} α_i h
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + discount(i) * gamma_at[i] * h;
    }
    let mut log_survival = -(n as f64) * beta0 * h;
    for (i, &g) in gamma_at.iter().enumerate().take(n.saturating_sub(1)) {
        let factor = 1.0 - (1.0 - discount(i)) * g * h;
        if factor <= 0.0 {
            return Err(Error::StepTooCoarse {
                t: i as f64 * h,
                value: g * h,
            });
        }
        log_survival += factor.ln();
    }

    let mut cells = grid_cells(x, n)?;
    cells.reverse();
    let kernels: Vec<f64> = cells
        .iter()
        .map(|&k| {
            // grid time k·h = (r + 2)h, sum over i = 0..=r
            let terms = (k as isize - 1).max(0) as usize;
            prefix[terms]
        })
        .collect();

    let big_m = kernels.len();
    let mut binom = vec![vec![1.0_f64]];
    for r in 1..big_m.max(1) {
        let prev = &binom[r - 1];
        let mut row = vec![1.0; r + 1];
        for k in 1..r {
            row[k] = prev[k - 1] + prev[k];
        }
        binom.push(row);
    }

    let mut c = vec![1.0_f64];
    for m in 1..=big_m {
        let a = kernels[m - 1];
        let mut row = vec![0.0; m + 1];
        row[0] = c[0];
        for j in 1..=m {
            let s: f64 = (0..j).map(|i| c[i] * binom[m - 1 - i][j - 1 - i]).sum();
            row[j] = s * a + c.get(j).copied().unwrap_or(0.0);
        }
        c = row;
    }
    let poly: f64 = if beta0 == 0.0 {
        c[big_m] * w.powi(big_m as i32)
    } else {
        c.iter()
            .enumerate()
            .map(|(j, cj)| cj * w.powi(j as i32) * beta0.powi((big_m - j) as i32))
            .sum()
    };
    Ok(poly * log_survival.exp())
}

/// Replica count and seed for [`mc_marginal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McSpec {
    pub replicas: usize,
    pub seed: u64,
}

impl McSpec {
    pub fn new(replicas: usize, seed: u64) -> Result<Self> {
        if replicas == 0 {
            return Err(Error::InvalidParameter("need at least one replica".into()));
        }
        Ok(McSpec { replicas, seed })
    }
}

/// Monte Carlo estimate kept in log space so large paths do not underflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub ln_estimate: f64,
    /// Standard error divided by the estimate; NaN with fewer than 2 replicas.
    pub relative_se: f64,
    pub replicas: usize,
}

impl McEstimate {
    pub fn estimate(&self) -> f64 {
        self.ln_estimate.exp()
    }

    pub fn standard_error(&self) -> f64 {
        if self.relative_se == 0.0 {
            0.0
        } else {
            self.estimate() * self.relative_se
        }
    }

    /// `|p − estimate|` in units of the standard error, computed in log space.
    pub fn z_score(&self, ln_p: f64) -> f64 {
        let ratio_gap = ((ln_p - self.ln_estimate).exp() - 1.0).abs();
        if self.relative_se == 0.0 {
            if ratio_gap == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            ratio_gap / self.relative_se
        }
    }
}

/// `E_Y[p(x | Y)]` averaged over `spec.replicas` latent draws.
pub fn mc_marginal(x: &CountPath, params: &ModelParams, spec: &McSpec) -> Result<McEstimate> {
    mc_marginal_with(x, params, spec, Exec::default())
}

pub fn mc_marginal_with(
    x: &CountPath,
    params: &ModelParams,
    spec: &McSpec,
    exec: Exec,
) -> Result<McEstimate> {
    params.check_horizon(x.horizon())?;
    let horizon = x.horizon();
    let draws = par::map_range(exec, spec.replicas, |r| -> Result<f64> {
        let mut rng = replica_rng(spec.seed, r as u64);
        let y = simulate_latent_with(params.gamma(), horizon, &mut rng)?;
        conditional_loglik(x, &y, params)
    });
    let logs: Vec<f64> = draws.into_iter().collect::<Result<_>>()?;
    Ok(summarize_log_weights(&logs))
}

fn summarize_log_weights(logs: &[f64]) -> McEstimate {
    let n = logs.len();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return McEstimate {
            ln_estimate: f64::NEG_INFINITY,
            relative_se: if n > 1 { 0.0 } else { f64::NAN },
            replicas: n,
        };
    }
    let scaled: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / n as f64;
    let relative_se = if n > 1 {
        let var = scaled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt() / mean
    } else {
        f64::NAN
    };
    McEstimate {
        ln_estimate: max + mean.ln(),
        relative_se,
        replicas: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::PolyIntensity;

    fn params(beta0: f64, w: f64, c: &[f64], horizon: f64) -> ModelParams {
        ModelParams::new(beta0, w, PolyIntensity::new(c.to_vec()).unwrap(), horizon).unwrap()
    }

    #[test]
    fn poisson_quantile_tail() {
        assert_eq!(poisson_quantile(0.0, 1e-12), 0);
        let k = poisson_quantile(1.0, 1e-12);
        // P(N > 14) ≈ 1.0e-12 for mean 1; P(N > 15) ≈ 6e-14
        assert!((14..=15).contains(&k), "{k}");
    }

    #[test]
    fn cells_round_up() {
        let x = CountPath::new(vec![0.25, 0.3, 1.0], 1.0).unwrap();
        assert_eq!(grid_cells(&x, 10).unwrap_err(), Error::GridCollision { cell: 3 });
        assert_eq!(grid_cells(&x, 20).unwrap(), vec![5, 6, 20]);
        let x = CountPath::new(vec![0.05, 0.3, 1.0], 1.0).unwrap();
        assert_eq!(grid_cells(&x, 10).unwrap(), vec![1, 3, 10]);
    }

    #[test]
    fn homogeneous_grid_value() {
        // single latent state: Π over jumps of β e^{-βh} times e^{-β h} elsewhere
        let p = params(2.0, 1.0, &[0.0], 1.0);
        let x = CountPath::new(vec![0.2, 0.5, 0.7], 1.0).unwrap();
        let spec = GridSpec::new(1 << 14, &p).unwrap();
        let v = grid_marginal(&x, &p, &spec).unwrap();
        let exact = 8.0 * (-2.0f64).exp();
        assert!((v - exact).abs() < 1e-12 * exact, "{v} vs {exact}");
    }

    #[test]
    fn coarse_grid_rejected() {
        let p = params(0.0, 1.0, &[3.0], 1.0);
        let x = CountPath::empty(1.0).unwrap();
        let spec = GridSpec::with_y_max(2, 10).unwrap();
        assert!(matches!(
            grid_marginal(&x, &p, &spec),
            Err(Error::StepTooCoarse { .. })
        ));
        assert!(matches!(
            grid_coeff_marginal(&x, &p, 2),
            Err(Error::StepTooCoarse { .. })
        ));
    }

    #[test]
    fn no_jump_grid_coeff_matches_product() {
        let p = params(0.5, 1.0, &[1.0, 0.5], 1.0);
        let x = CountPath::empty(1.0).unwrap();
        let n = 64;
        let h = 1.0 / n as f64;
        let mut expect = (-(n as f64) * 0.5 * h).exp();
        for i in 0..n - 1 {
            let lam = (1.0 - (-((n - i - 1) as f64) * h).exp()) * (1.0 + 0.5 * i as f64 * h);
            expect *= 1.0 - lam * h;
        }
        let got = grid_coeff_marginal(&x, &p, n).unwrap();
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn mc_zero_gamma_is_exact() {
        let p = params(2.0, 1.0, &[0.0], 1.0);
        let x = CountPath::new(vec![0.2, 0.5, 0.7], 1.0).unwrap();
        let est = mc_marginal(&x, &p, &McSpec::new(100, 1).unwrap()).unwrap();
        let exact = 8.0 * (-2.0f64).exp();
        assert!((est.estimate() - exact).abs() < 1e-12);
        assert_eq!(est.standard_error(), 0.0);
    }

    #[test]
    fn mc_parallel_matches_sequential() {
        let p = params(0.3, 1.0, &[1.0], 1.0);
        let x = CountPath::new(vec![0.6], 1.0).unwrap();
        let spec = McSpec::new(2000, 9).unwrap();
        let a = mc_marginal_with(&x, &p, &spec, Exec::Sequential).unwrap();
        let b = mc_marginal_with(&x, &p, &spec, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
