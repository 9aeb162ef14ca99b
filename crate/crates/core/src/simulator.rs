//! Exact simulation of the latent and observed processes, and the
//! conditional likelihood `p(x | y)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::intensity::{Intensity, PolyIntensity};
use crate::paths::{CountPath, ModelParams};

/// Generator for replica `index` of a run seeded with `seed`.
///
/// Each replica gets its own ChaCha stream, so replicas can be generated in
/// any order or in parallel with identical results. Stream 0 is left to
/// [`simulate`], so a replica never replays the draw that made the data.
pub fn replica_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// Jump times of the latent process `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath(CountPath);

impl LatentPath {
    pub fn new(jumps: Vec<f64>, horizon: f64) -> Result<Self> {
        CountPath::new(jumps, horizon).map(LatentPath)
    }

    pub fn horizon(&self) -> f64 {
        self.0.horizon()
    }

    pub fn jumps(&self) -> &[f64] {
        self.0.jumps()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_count_path(&self) -> &CountPath {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub x: CountPath,
    pub y: LatentPath,
    pub seed: u64,
}

/// Draws `Y` on `[0, T]` by pushing unit-rate Poisson arrivals through `Γ⁻¹`.
pub fn simulate_latent(gamma: &PolyIntensity, horizon: f64, seed: u64) -> Result<LatentPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_latent_with(gamma, horizon, &mut rng)
}

pub fn simulate_latent_with<R: Rng + ?Sized>(
    gamma: &PolyIntensity,
    horizon: f64,
    rng: &mut R,
) -> Result<LatentPath> {
    let mut jumps = Vec::new();
    if !gamma.is_zero() {
        let mut u = 0.0;
        loop {
            u += rng.sample::<f64, _>(Exp1);
            let t = gamma.cum_inverse(u, horizon)?;
            if t > horizon {
                break;
            }
            jumps.push(t);
        }
    }
    LatentPath::new(jumps, horizon)
}

/// Simulates `(X, Y)` jointly.
///
/// `X` runs at the piecewise-constant rate `β₀ + w·y` between latent jumps.
/// At each latent jump the `X` clock restarts from the jump time with the
/// incremented rate; a zero rate waits for the next latent jump.
pub fn simulate(params: &ModelParams, seed: u64) -> Result<SimResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, y) = simulate_with(params, &mut rng)?;
    Ok(SimResult { x, y, seed })
}

pub fn simulate_with<R: Rng + ?Sized>(
    params: &ModelParams,
    rng: &mut R,
) -> Result<(CountPath, LatentPath)> {
    let horizon = params.horizon();
    let gamma = params.gamma();
    let (beta0, w) = (params.beta0(), params.w());

    let mut u: f64 = rng.sample(Exp1);
    let mut next_y = gamma.cum_inverse(u, horizon)?;
    let mut tx = 0.0;
    let mut y = 0u64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();

    while tx < horizon {
        let rate = beta0 + w * y as f64;
        let wait = if rate > 0.0 {
            rng.sample::<f64, _>(Exp1) / rate
        } else {
            f64::INFINITY
        };
        if tx + wait < next_y.min(horizon) {
            tx += wait;
            xs.push(tx);
        } else if next_y < horizon {
            let jump = next_y;
            ys.push(jump);
            u += rng.sample::<f64, _>(Exp1);
            next_y = gamma.cum_inverse(u, horizon)?;
            y += 1;
            tx = jump;
        } else {
            tx = horizon;
        }
    }
    Ok((CountPath::new(xs, horizon)?, LatentPath::new(ys, horizon)?))
}

/// `log p(x | y)`: `Σ_i log β(t_i−) − ∫₀ᵀ β(t, y(t)) dt`.
///
/// Uses the left limit `y(t_i−)`, so a latent jump at exactly `t_i` does not
/// count towards that event's rate. Returns `-∞` when some event has rate 0.
pub fn conditional_loglik(x: &CountPath, y: &LatentPath, params: &ModelParams) -> Result<f64> {
    if x.horizon() != y.horizon() {
        return Err(Error::HorizonMismatch {
            path: x.horizon(),
            params: y.horizon(),
        });
    }
    params.check_horizon(x.horizon())?;
    let horizon = x.horizon();
    let (beta0, w) = (params.beta0(), params.w());

    let ys = y.jumps();
    let mut below = 0usize;
    let mut log_rates = 0.0;
    for &t in x.jumps() {
        while below < ys.len() && ys[below] < t {
            below += 1;
        }
        let rate = beta0 + w * below as f64;
        if rate <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_rates += rate.ln();
    }
    let exposure: f64 = ys.iter().map(|&s| horizon - s).sum();
    Ok(log_rates - (beta0 * horizon + w * exposure))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(beta0: f64, w: f64, c: &[f64], horizon: f64) -> ModelParams {
        ModelParams::new(beta0, w, PolyIntensity::new(c.to_vec()).unwrap(), horizon).unwrap()
    }

    #[test]
    fn zero_gamma_gives_empty_latent() {
        let g = PolyIntensity::new(vec![0.0]).unwrap();
        for seed in 0..20 {
            assert!(simulate_latent(&g, 5.0, seed).unwrap().is_empty());
        }
    }

    #[test]
    fn seeded_determinism() {
        let p = params(0.5, 1.0, &[1.0, 0.5], 3.0);
        assert_eq!(simulate(&p, 11).unwrap(), simulate(&p, 11).unwrap());
        let a = simulate_latent(p.gamma(), 3.0, 5).unwrap();
        let b = simulate_latent(p.gamma(), 3.0, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_x_events_before_first_latent_jump_when_beta0_zero() {
        let p = params(0.0, 1.0, &[1.0], 4.0);
        for seed in 0..200 {
            let sim = simulate(&p, seed).unwrap();
            let first_y = sim.y.jumps().first().copied().unwrap_or(f64::INFINITY);
            assert!(sim.x.jumps().iter().all(|&t| t > first_y));
        }
    }

    #[test]
    fn conditional_examples() {
        let p = params(2.0, 1.0, &[0.0], 1.0);
        let x = CountPath::new(vec![0.1, 0.4, 0.9], 1.0).unwrap();
        let y = LatentPath::new(vec![], 1.0).unwrap();
        let ll = conditional_loglik(&x, &y, &p).unwrap();
        assert!((ll - (3.0 * 2f64.ln() - 2.0)).abs() < 1e-15);

        let p = params(0.0, 1.0, &[1.0], 1.0);
        let x = CountPath::empty(1.0).unwrap();
        let y = LatentPath::new(vec![0.5], 1.0).unwrap();
        assert_eq!(conditional_loglik(&x, &y, &p).unwrap(), -0.5);

        let x = CountPath::new(vec![0.3], 1.0).unwrap();
        let y = LatentPath::new(vec![], 1.0).unwrap();
        assert_eq!(conditional_loglik(&x, &y, &p).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn simultaneous_jump_uses_left_limit() {
        let p = params(0.0, 1.0, &[1.0], 1.0);
        let x = CountPath::new(vec![0.5], 1.0).unwrap();
        let y = LatentPath::new(vec![0.5], 1.0).unwrap();
        assert_eq!(conditional_loglik(&x, &y, &p).unwrap(), f64::NEG_INFINITY);
        let y = LatentPath::new(vec![0.25, 0.5], 1.0).unwrap();
        // rate 1 at the event, exposure 0.75 + 0.5
        assert!((conditional_loglik(&x, &y, &p).unwrap() + 1.25).abs() < 1e-15);
    }

    #[test]
    fn replica_streams_differ() {
        let mut a = replica_rng(3, 0);
        let mut b = replica_rng(3, 1);
        let va: u64 = a.random();
        let vb: u64 = b.random();
        assert_ne!(va, vb);
        let mut a2 = replica_rng(3, 0);
        assert_eq!(va, a2.random::<u64>());
        let mut base = ChaCha8Rng::seed_from_u64(3);
        assert_ne!(va, base.random::<u64>());
    }
}
