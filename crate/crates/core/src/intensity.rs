//! Polynomial intensities and the integrals the likelihood is built from.
//!
//! For an intensity `γ` on `[0, T]` and decay `w > 0` the likelihood needs
//!
//! * `Γ(t) = ∫₀ᵗ γ`, and its inverse for time-change simulation,
//! * `∫ₐᵇ e^{-w(T-t)} γ(t) dt` (the α-kernel),
//! * `∫₀ᵀ (1 - e^{-w(T-t)}) γ(t) dt` (the λ-kernel).
//!
//! All of them are evaluated in closed form for polynomials.

use crate::error::{Error, Result};

/// Largest polynomial degree accepted by [`PolyIntensity::new`].
pub const MAX_DEGREE: usize = 8;

/// Number of equispaced intervals used by the nonnegativity check.
pub const NONNEG_SAMPLES: usize = 1024;

const INVERSE_TOL: f64 = 1e-12;
const INVERSE_MAX_ITER: usize = 200;

/// An integrable, nonnegative rate function on `[0, T]`.
///
/// Only [`PolyIntensity`] implements it today; the likelihood code is written
/// against this trait so other closed-form families can slot in.
pub trait Intensity {
    fn eval(&self, t: f64) -> f64;

    /// `∫₀ᵗ γ(s) ds`.
    fn cum(&self, t: f64) -> f64;

    /// `∫ₐᵇ e^{-w(T-t)} γ(t) dt` for `0 ≤ a ≤ b ≤ T`.
    fn alpha_integral(&self, w: f64, horizon: f64, a: f64, b: f64) -> f64;

    /// `∫₀ᵀ (1 - e^{-w(T-t)}) γ(t) dt`, clamped at zero.
    fn lambda_integral(&self, w: f64, horizon: f64) -> f64 {
        (self.cum(horizon) - self.alpha_integral(w, horizon, 0.0, horizon)).max(0.0)
    }

    /// Smallest `t` with `Γ(t) = u`, or `f64::INFINITY` when `u > Γ(T)`.
    ///
    /// Bisection on the monotone `Γ`, accelerated by Newton steps that are
    /// only taken when they land inside the current bracket.
    fn cum_inverse(&self, u: f64, horizon: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::NonFinite(u));
        }
        if u <= 0.0 {
            return Ok(0.0);
        }
        let total = self.cum(horizon);
        if u > total {
            return Ok(f64::INFINITY);
        }
        if u == total && self.eval(horizon) > 0.0 {
            return Ok(horizon);
        }

        // invariant: cum(lo) < u <= cum(hi)
        let (mut lo, mut hi) = (0.0_f64, horizon);
        let mut t = hi * (u / total);
        for _ in 0..INVERSE_MAX_ITER {
            let f = self.cum(t) - u;
            if f == 0.0 {
                // step back over any flat stretch to the first crossing
                hi = t;
            } else if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            if hi - lo <= INVERSE_TOL {
                return Ok(hi);
            }
            let rate = self.eval(t);
            let newton = if rate > 0.0 { t - f / rate } else { f64::NAN };
            t = if newton > lo && newton < hi && f != 0.0 {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if t <= lo || t >= hi {
                // bracket is below floating-point resolution
                return Ok(hi);
            }
        }
        Err(Error::NoConvergence { mass: u })
    }
}

/// `γ(t) = Σ_k coeffs[k] · t^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyIntensity {
    coeffs: Vec<f64>,
}

impl PolyIntensity {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        Self::with_max_degree(coeffs, MAX_DEGREE)
    }

    pub fn with_max_degree(coeffs: Vec<f64>, max_degree: usize) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter(
                "polynomial needs at least one coefficient".into(),
            ));
        }
        if let Some(&bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        let degree = coeffs.len() - 1;
        if degree > max_degree {
            return Err(Error::DegreeTooHigh {
                degree,
                max: max_degree,
            });
        }
        Ok(PolyIntensity { coeffs })
    }

    pub fn constant(rate: f64) -> Result<Self> {
        Self::new(vec![rate])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Checks `γ ≥ 0` on `[0, T]`.
    ///
    /// Samples `NONNEG_SAMPLES + 1` equispaced points, then refines every
    /// sampled local minimum with a golden-section search so that dips between
    /// grid points are caught as well.
    pub fn validate_nonneg(&self, horizon: f64) -> Result<()> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if self.degree() == 0 {
            return if self.coeffs[0] >= 0.0 {
                Ok(())
            } else {
                Err(Error::NegativeIntensity {
                    t: 0.0,
                    value: self.coeffs[0],
                })
            };
        }

        let scale: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c.abs() * horizon.powi(k as i32))
            .sum();
        let tol = 1e-12 * scale;

        let n = NONNEG_SAMPLES;
        let h = horizon / n as f64;
        let values: Vec<f64> = (0..=n).map(|k| self.eval(k as f64 * h)).collect();

        let mut worst = (0.0, f64::INFINITY);
        for k in 0..=n {
            let v = values[k];
            let left = if k == 0 { f64::INFINITY } else { values[k - 1] };
            let right = if k == n { f64::INFINITY } else { values[k + 1] };
            let (t, v) = if v <= left && v <= right && k > 0 && k < n {
                self.refine_min((k - 1) as f64 * h, (k + 1) as f64 * h)
            } else {
                (k as f64 * h, v)
            };
            if v < worst.1 {
                worst = (t, v);
            }
        }
        if worst.1 < -tol {
            Err(Error::NegativeIntensity {
                t: worst.0,
                value: worst.1,
            })
        } else {
            Ok(())
        }
    }

    fn refine_min(&self, mut a: f64, mut b: f64) -> (f64, f64) {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let (mut fc, mut fd) = (self.eval(c), self.eval(d));
        for _ in 0..80 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = self.eval(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = self.eval(d);
            }
        }
        if fc < fd {
            (c, fc)
        } else {
            (d, fd)
        }
    }

    /// Coefficients of `s ↦ γ(origin + s)`.
    fn shifted(&self, origin: f64) -> Vec<f64> {
        let mut q = self.coeffs.clone();
        let n = q.len();
        for i in 0..n {
            for k in (i..n - 1).rev() {
                q[k] += origin * q[k + 1];
            }
        }
        q
    }
}

/// `∫₀ᵈ e^{-w v} v^k dv` for `k = 0..=max_k`.
///
/// Large `w·d` uses the finite integration-by-parts sum
/// `k!/w^{k+1} · (1 - e^{-x} Σ_{i≤k} x^i/i!)`; small `w·d` switches to the
/// equivalent tail series, which has no cancellation there.
fn discounted_moments(w: f64, d: f64, max_k: usize) -> Vec<f64> {
    let x = w * d;
    let ex = (-x).exp();
    (0..=max_k)
        .map(|k| {
            if x < (k + 1) as f64 {
                let mut term = 1.0 / (k + 1) as f64;
                let mut sum = term;
                for j in 0.. {
                    term *= x / (k + 2 + j) as f64;
                    sum += term;
                    if term <= 1e-17 * sum {
                        break;
                    }
                }
                ex * d.powi(k as i32 + 1) * sum
            } else {
                let mut term = 1.0;
                let mut partial = 1.0;
                let mut fact = 1.0;
                for i in 1..=k {
                    term *= x / i as f64;
                    partial += term;
                    fact *= i as f64;
                }
                fact / w.powi(k as i32 + 1) * (1.0 - ex * partial)
            }
        })
        .collect()
}

impl Intensity for PolyIntensity {
    fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    fn cum(&self, t: f64) -> f64 {
        let n = self.coeffs.len();
        let inner = (0..n)
            .rev()
            .fold(0.0, |acc, k| acc * t + self.coeffs[k] / (k + 1) as f64);
        inner * t
    }

    fn alpha_integral(&self, w: f64, horizon: f64, a: f64, b: f64) -> f64 {
        if b <= a || self.is_zero() {
            return 0.0;
        }
        // expand around b, where the discount e^{-w(T-t)} is largest
        let q = self.shifted(b);
        let moments = discounted_moments(w, b - a, q.len() - 1);
        let sum: f64 = q
            .iter()
            .zip(&moments)
            .enumerate()
            .map(|(k, (qk, mk))| if k % 2 == 0 { qk * mk } else { -qk * mk })
            .sum();
        (-w * (horizon - b)).exp() * sum
    }
}
