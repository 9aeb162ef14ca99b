//! Posterior sampling and point estimation of the latent intensity `γ`.
//!
//! `β₀` and `w` stay fixed; only the polynomial coefficients of `γ` move.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::{Intensity, PolyIntensity};
use crate::marginal::{marginal_loglik, marginal_loglik_lattice};
use crate::paths::{CountPath, ModelParams};

/// Pilot tuning aims for this block acceptance rate.
pub const TARGET_ACCEPTANCE: f64 = 0.25;
/// Paths longer than this are scored by the `O(M²)` lattice sweep.
pub const TABLE_MAX_EVENTS: usize = 64;
const PILOT_BATCH: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub degree: usize,
    /// Normal prior means: empty (all 0), one value for every coefficient,
    /// or one per coefficient.
    pub prior_mean: Vec<f64>,
    pub prior_sd: Vec<f64>,
    pub proposal_sd: Vec<f64>,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt_proposals: bool,
    pub pilot_iters: usize,
    /// When false the target is the prior restricted to `γ ≥ 0`.
    pub use_likelihood: bool,
    /// Update one coefficient per iteration instead of the whole vector.
    pub per_coordinate: bool,
    /// Starting coefficients; a moment-matched constant when absent.
    pub init: Option<Vec<f64>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            degree: 0,
            prior_mean: vec![0.0],
            prior_sd: vec![100.0],
            proposal_sd: vec![0.1],
            iters: 20_000,
            burnin: 5_000,
            thin: 1,
            seed: 0,
            adapt_proposals: true,
            pilot_iters: 2_000,
            use_likelihood: true,
            per_coordinate: false,
            init: None,
        }
    }
}

fn broadcast(name: &str, values: &[f64], len: usize, default: f64) -> Result<Vec<f64>> {
    match values.len() {
        0 => Ok(vec![default; len]),
        1 => Ok(vec![values[0]; len]),
        n if n == len => Ok(values.to_vec()),
        n => Err(Error::InvalidParameter(format!(
            "{name} has {n} entries, expected 1 or {len}"
        ))),
    }
}

struct Resolved {
    prior_mean: Vec<f64>,
    prior_sd: Vec<f64>,
    proposal_sd: Vec<f64>,
}

impl FitConfig {
    pub fn n_coeffs(&self) -> usize {
        self.degree + 1
    }

    /// Number of stored draws, `⌊(iters − burnin) / thin⌋`.
    pub fn n_draws(&self) -> usize {
        (self.iters - self.burnin) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    fn resolve(&self) -> Result<Resolved> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.iters <= self.burnin {
            return bad(format!(
                "iters ({}) must exceed burnin ({})",
                self.iters, self.burnin
            ));
        }
        if self.thin == 0 {
            return bad("thin must be >= 1".into());
        }
        let n = self.n_coeffs();
        let resolved = Resolved {
            prior_mean: broadcast("prior_mean", &self.prior_mean, n, 0.0)?,
            prior_sd: broadcast("prior_sd", &self.prior_sd, n, 100.0)?,
            proposal_sd: broadcast("proposal_sd", &self.proposal_sd, n, 0.1)?,
        };
        if resolved.prior_mean.iter().any(|v| !v.is_finite()) {
            return bad("prior_mean must be finite".into());
        }
        for (name, v) in [("prior_sd", &resolved.prior_sd), ("proposal_sd", &resolved.proposal_sd)] {
            if v.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return bad(format!("{name} entries must be finite and > 0"));
            }
        }
        if let Some(init) = &self.init {
            if init.len() != n {
                return bad(format!("init has {} entries, expected {n}", init.len()));
            }
        }
        Ok(resolved)
    }
}

/// Output of [`mh_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub draws: Vec<Vec<f64>>,
    pub logliks: Vec<f64>,
    /// Iteration index of each stored draw.
    pub iters: Vec<usize>,
    /// Whether the iteration that produced each stored draw accepted.
    pub accepted: Vec<bool>,
    /// Acceptance over all post-pilot iterations, burn-in included.
    pub accept_rate: f64,
    pub seed: u64,
    /// Proposal scales after pilot tuning.
    pub proposal_sd: Vec<f64>,
    /// Marginal likelihood evaluations, the initial point included.
    pub evaluations: u64,
    /// Proposals rejected for `γ < 0` without an evaluation, pilot included.
    pub infeasible: u64,
    pub warnings: Vec<String>,
}

impl Chain {
    /// A chain holding only draws, e.g. read back from disk.
    pub fn from_draws(draws: Vec<Vec<f64>>) -> Self {
        let n = draws.len();
        Chain {
            logliks: vec![f64::NAN; n],
            iters: (0..n).collect(),
            accepted: vec![false; n],
            draws,
            accept_rate: f64::NAN,
            seed: 0,
            proposal_sd: Vec::new(),
            evaluations: 0,
            infeasible: 0,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// `log p_X(x)` at `params`, by the table for short paths and the lattice
/// sweep otherwise.
pub fn fit_loglik(x: &CountPath, params: &ModelParams) -> Result<f64> {
    let result = if x.len() <= TABLE_MAX_EVENTS {
        marginal_loglik(x, params)?
    } else {
        marginal_loglik_lattice(x, params)?
    };
    Ok(result.loglik)
}

/// Parameters at `coeffs`, or `None` if `γ` dips below zero on `[0, T]`.
fn feasible(coeffs: &[f64], beta0: f64, w: f64, horizon: f64) -> Option<ModelParams> {
    let gamma = PolyIntensity::new(coeffs.to_vec()).ok()?;
    ModelParams::new(beta0, w, gamma, horizon).ok()
}

/// Constant `γ` matching `E[X(T)] = β₀T + wγT²/2` to the observed count.
pub fn initial_coefficients(x: &CountPath, beta0: f64, w: f64, n: usize) -> Vec<f64> {
    let horizon = x.horizon();
    let c0 = (x.len() as f64 - beta0 * horizon) / (0.5 * w * horizon * horizon);
    let mut init = vec![0.0; n];
    init[0] = c0.max(1e-3);
    init
}

fn log_prior(theta: &[f64], r: &Resolved) -> f64 {
    theta
        .iter()
        .zip(&r.prior_mean)
        .zip(&r.prior_sd)
        .map(|((v, m), s)| -0.5 * ((v - m) / s).powi(2))
        .sum()
}

struct Sampler<'a> {
    x: &'a CountPath,
    beta0: f64,
    w: f64,
    resolved: Resolved,
    per_coordinate: bool,
    use_likelihood: bool,
    rng: ChaCha8Rng,
    theta: Vec<f64>,
    loglik: f64,
    log_post: f64,
    evaluations: u64,
    infeasible: u64,
}

impl Sampler<'_> {
    fn score(&mut self, theta: &[f64]) -> Option<f64> {
        let Some(params) = feasible(theta, self.beta0, self.w, self.x.horizon()) else {
            self.infeasible += 1;
            return None;
        };
        if !self.use_likelihood {
            return Some(0.0);
        }
        self.evaluations += 1;
        fit_loglik(self.x, &params).ok().filter(|l| !l.is_nan())
    }

    /// One MH step with proposal scales `sd · scale`; returns acceptance.
    fn step(&mut self, iter: usize, scale: f64) -> bool {
        let n = self.theta.len();
        let mut proposal = self.theta.clone();
        if self.per_coordinate {
            let k = iter % n;
            let z: f64 = self.rng.sample(StandardNormal);
            proposal[k] += z * self.resolved.proposal_sd[k] * scale;
        } else {
            for (k, v) in proposal.iter_mut().enumerate() {
                let z: f64 = self.rng.sample(StandardNormal);
                *v += z * self.resolved.proposal_sd[k] * scale;
            }
        }
        // the uniform is always drawn so the stream does not depend on feasibility
        let u: f64 = self.rng.random();
        let Some(loglik) = self.score(&proposal) else {
            return false;
        };
        let log_post = loglik + log_prior(&proposal, &self.resolved);
        if log_post == f64::NEG_INFINITY {
            return false;
        }
        let ratio = log_post - self.log_post;
        if ratio >= 0.0 || u.ln() < ratio {
            self.theta = proposal;
            self.loglik = loglik;
            self.log_post = log_post;
            true
        } else {
            false
        }
    }
}

/// Random-walk Metropolis–Hastings over the coefficients of `γ`.
///
/// Proposals that make `γ` negative somewhere on `[0, T]` are rejected
/// without a likelihood evaluation. With `adapt_proposals` a pilot run first
/// rescales all proposal sds by a Robbins–Monro rule on batch acceptance; the
/// pilot draws are discarded and the main chain continues from its end point.
pub fn mh_fit(x: &CountPath, beta0: f64, w: f64, cfg: &FitConfig) -> Result<Chain> {
    let resolved = cfg.resolve()?;
    let n = cfg.n_coeffs();
    let init = cfg
        .init
        .clone()
        .unwrap_or_else(|| initial_coefficients(x, beta0, w, n));
    if !(beta0.is_finite() && beta0 >= 0.0 && w.is_finite() && w > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need beta0 >= 0 and w > 0, got beta0={beta0}, w={w}"
        )));
    }

    let mut sampler = Sampler {
        x,
        beta0,
        w,
        resolved,
        per_coordinate: cfg.per_coordinate,
        use_likelihood: cfg.use_likelihood,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        theta: init.clone(),
        loglik: 0.0,
        log_post: 0.0,
        evaluations: 0,
        infeasible: 0,
    };
    let loglik = sampler.score(&init).ok_or_else(|| {
        Error::InvalidParameter(format!("initial coefficients {init:?} give γ < 0 on [0, T]"))
    })?;
    if loglik == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter(format!(
            "initial coefficients {init:?} have zero likelihood"
        )));
    }
    sampler.loglik = loglik;
    sampler.log_post = loglik + log_prior(&init, &sampler.resolved);

    let mut log_scale = 0.0_f64;
    if cfg.adapt_proposals && cfg.pilot_iters > 0 {
        let mut batch_accepts = 0usize;
        let mut batch = 0usize;
        for i in 0..cfg.pilot_iters {
            batch_accepts += sampler.step(i, log_scale.exp()) as usize;
            if (i + 1) % PILOT_BATCH == 0 {
                batch += 1;
                let rate = batch_accepts as f64 / PILOT_BATCH as f64;
                log_scale += (rate - TARGET_ACCEPTANCE) * 2.0 / (batch as f64).sqrt();
                batch_accepts = 0;
            }
        }
    }
    let scale = log_scale.exp();

    let n_draws = cfg.n_draws();
    let mut chain = Chain {
        draws: Vec::with_capacity(n_draws),
        logliks: Vec::with_capacity(n_draws),
        iters: Vec::with_capacity(n_draws),
        accepted: Vec::with_capacity(n_draws),
        accept_rate: 0.0,
        seed: cfg.seed,
        proposal_sd: sampler.resolved.proposal_sd.iter().map(|s| s * scale).collect(),
        evaluations: 0,
        infeasible: 0,
        warnings: Vec::new(),
    };
    let mut accepts = 0usize;
    for i in 0..cfg.iters {
        let ok = sampler.step(i, scale);
        accepts += ok as usize;
        if i >= cfg.burnin && (i - cfg.burnin + 1).is_multiple_of(cfg.thin) {
            chain.draws.push(sampler.theta.clone());
            chain.logliks.push(sampler.loglik);
            chain.iters.push(i);
            chain.accepted.push(ok);
        }
    }
    chain.accept_rate = accepts as f64 / cfg.iters as f64;
    chain.evaluations = sampler.evaluations;
    chain.infeasible = sampler.infeasible;
    if accepts == 0 {
        chain
            .warnings
            .push("chain never accepted a proposal; draws are all the initial point".into());
    }
    Ok(chain)
}

/// Result of [`mle_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub coeffs: Vec<f64>,
    pub loglik: f64,
    /// False when the evaluation budget ran out first.
    pub converged: bool,
    pub evaluations: usize,
}

/// Nelder–Mead maximization of the marginal log-likelihood over `γ`.
///
/// Infeasible points (`γ < 0` somewhere) score `−∞`, so the simplex never
/// leaves the feasible region once it has a finite vertex. Stops when the
/// spread of the simplex values falls below `1e-9` relative, or after
/// `budget` evaluations.
pub fn mle_fit(
    x: &CountPath,
    beta0: f64,
    w: f64,
    start: &[f64],
    budget: usize,
) -> Result<MleFit> {
    let horizon = x.horizon();
    if start.is_empty() {
        return Err(Error::InvalidParameter("start must have at least one coefficient".into()));
    }
    if feasible(start, beta0, w, horizon).is_none() {
        return Err(Error::InvalidParameter(format!(
            "start {start:?} gives γ < 0 on [0, T]"
        )));
    }
    let evaluations = std::cell::Cell::new(0usize);
    let objective = |theta: &[f64]| -> f64 {
        evaluations.set(evaluations.get() + 1);
        match feasible(theta, beta0, w, horizon) {
            Some(p) => match fit_loglik(x, &p) {
                Ok(l) if !l.is_nan() => -l,
                _ => f64::INFINITY,
            },
            None => f64::INFINITY,
        }
    };

    let n = start.len();
    let base = start[0].abs().max(1.0);
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.to_vec(), objective(start))];
    for k in 0..n {
        let mut step = if start[k] != 0.0 {
            0.1 * start[k].abs()
        } else {
            0.1 * base / horizon.powi(k as i32)
        };
        let mut vertex = start.to_vec();
        let mut value = f64::INFINITY;
        for _ in 0..40 {
            for sign in [1.0, -1.0] {
                vertex[k] = start[k] + sign * step;
                value = objective(&vertex);
                if value.is_finite() {
                    break;
                }
            }
            if value.is_finite() {
                break;
            }
            step *= 0.5;
        }
        simplex.push((vertex, value));
    }

    let mut converged = false;
    let sort = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    sort(&mut simplex);
    while evaluations.get() < budget {
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if best.is_finite() && worst.is_finite() && (worst - best).abs() <= 1e-9 * best.abs().max(1e-300) {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(v, _)| v[k]).sum::<f64>() / n as f64)
            .collect();
        let towards = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let reflected = towards(-1.0);
        let fr = objective(&reflected);
        if fr < simplex[0].1 {
            let expanded = towards(-2.0);
            let fe = objective(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let (contracted, fc) = if fr < simplex[n].1 {
                let c = towards(-0.5);
                let f = objective(&c);
                (c, f)
            } else {
                let c = towards(0.5);
                let f = objective(&c);
                (c, f)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (contracted, fc);
            } else {
                let anchor = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let shrunk: Vec<f64> = anchor
                        .iter()
                        .zip(&vertex.0)
                        .map(|(a, v)| a + 0.5 * (v - a))
                        .collect();
                    let f = objective(&shrunk);
                    *vertex = (shrunk, f);
                }
            }
        }
        sort(&mut simplex);
    }
    let (coeffs, value) = simplex.swap_remove(0);
    Ok(MleFit {
        coeffs,
        loglik: -value,
        converged,
        evaluations: evaluations.get(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

/// Pointwise posterior band of `γ(t)` and `Γ(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub t: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub cum_mean: f64,
    pub cum_lo: f64,
    pub cum_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub coefficients: Vec<CoefSummary>,
    pub band: Vec<BandPoint>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn describe(values: &[f64]) -> CoefSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    CoefSummary {
        mean,
        sd,
        q025: quantile(&sorted, 0.025),
        q50: quantile(&sorted, 0.5),
        q975: quantile(&sorted, 0.975),
    }
}

/// Per-coefficient moments and quantiles, plus the 95% band of `γ` and `Γ`
/// at each time in `grid`.
pub fn summarize(chain: &Chain, grid: &[f64]) -> Result<Summary> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let n = chain.draws[0].len();
    if chain.draws.iter().any(|d| d.len() != n) {
        return Err(Error::InvalidParameter("draws differ in length".into()));
    }
    let coefficients = (0..n)
        .map(|k| describe(&chain.draws.iter().map(|d| d[k]).collect::<Vec<_>>()))
        .collect();

    let polys: Vec<PolyIntensity> = chain
        .draws
        .iter()
        .map(|d| PolyIntensity::with_max_degree(d.clone(), usize::MAX))
        .collect::<Result<_>>()?;
    let band = grid
        .iter()
        .map(|&t| {
            let rate = describe(&polys.iter().map(|p| p.eval(t)).collect::<Vec<_>>());
            let cum = describe(&polys.iter().map(|p| p.cum(t)).collect::<Vec<_>>());
            BandPoint {
                t,
                mean: rate.mean,
                lo: rate.q025,
                hi: rate.q975,
                cum_mean: cum.mean,
                cum_lo: cum.q025,
                cum_hi: cum.q975,
            }
        })
        .collect();
    Ok(Summary { coefficients, band })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_examples() {
        let s = summarize(&Chain::from_draws(vec![vec![2.0]; 5]), &[]).unwrap();
        assert_eq!(s.coefficients[0].mean, 2.0);
        assert_eq!(s.coefficients[0].sd, 0.0);

        let s = summarize(&Chain::from_draws(vec![vec![1.0], vec![3.0]]), &[0.5]).unwrap();
        assert_eq!(s.coefficients[0].mean, 2.0);
        assert!((s.coefficients[0].sd - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.band[0].cum_mean, 1.0);

        assert_eq!(summarize(&Chain::from_draws(vec![]), &[]), Err(Error::EmptyChain));
    }

    #[test]
    fn config_validation() {
        let cfg = FitConfig {
            iters: 10,
            burnin: 10,
            ..FitConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = FitConfig {
            degree: 2,
            prior_sd: vec![1.0, 2.0],
            ..FitConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = FitConfig {
            proposal_sd: vec![0.0],
            ..FitConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!(
            FitConfig {
                iters: 105,
                burnin: 5,
                thin: 3,
                ..FitConfig::default()
            }
            .n_draws(),
            33
        );
    }

    #[test]
    fn short_chain_bookkeeping() {
        let x = CountPath::new(vec![0.3, 0.6, 0.9], 1.0).unwrap();
        let cfg = FitConfig {
            iters: 300,
            burnin: 100,
            thin: 4,
            pilot_iters: 100,
            seed: 3,
            ..FitConfig::default()
        };
        let chain = mh_fit(&x, 0.5, 1.0, &cfg).unwrap();
        assert_eq!(chain.len(), 50);
        assert!((0.0..=1.0).contains(&chain.accept_rate));
        assert!(chain.draws.iter().all(|d| d[0] >= 0.0));
        assert_eq!(chain, mh_fit(&x, 0.5, 1.0, &cfg).unwrap());
    }
}
