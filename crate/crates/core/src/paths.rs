//! Count paths, model parameters and the adaptation transform.

use crate::error::{Error, Result};
use crate::intensity::PolyIntensity;

/// Ordered jump times of a count path on `[0, T]`.
///
/// Jumps are strictly increasing and lie in `(0, T]`; the path value at `t` is
/// the number of jumps `≤ t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountPath {
    horizon: f64,
    jumps: Vec<f64>,
}

impl CountPath {
    /// Sorts and validates `events` as a path on `(0, horizon]`.
    pub fn new(mut events: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if let Some(&bad) = events.iter().find(|t| !t.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        events.sort_by(f64::total_cmp);
        if let Some(w) = events.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateTime { time: w[0] });
        }
        if let Some(&t) = events.iter().find(|&&t| t <= 0.0 || t > horizon) {
            return Err(Error::OutOfRange { time: t, horizon });
        }
        Ok(CountPath {
            horizon,
            jumps: events,
        })
    }

    pub fn empty(horizon: f64) -> Result<Self> {
        Self::new(Vec::new(), horizon)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Jump times in ascending order.
    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    /// Right-continuous path value `#{i : t_i ≤ t}`.
    pub fn value(&self, t: f64) -> usize {
        self.jumps.partition_point(|&s| s <= t)
    }

    /// Left limit `#{i : t_i < t}`.
    pub fn value_before(&self, t: f64) -> usize {
        self.jumps.partition_point(|&s| s < t)
    }

    /// `∫₀ᵗ x(s) ds`, exact for the step function.
    pub fn area(&self, t: f64) -> f64 {
        self.jumps
            .iter()
            .take_while(|&&s| s < t)
            .map(|&s| t - s)
            .sum()
    }
}

/// `(β₀, w, γ)` with `γ` validated nonnegative on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    beta0: f64,
    w: f64,
    gamma: PolyIntensity,
    horizon: f64,
}

impl ModelParams {
    pub fn new(beta0: f64, w: f64, gamma: PolyIntensity, horizon: f64) -> Result<Self> {
        if !(beta0.is_finite() && beta0 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta0 must be finite and >= 0, got {beta0}"
            )));
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "w must be finite and > 0, got {w}"
            )));
        }
        gamma.validate_nonneg(horizon)?;
        Ok(ModelParams {
            beta0,
            w,
            gamma,
            horizon,
        })
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn gamma(&self) -> &PolyIntensity {
        &self.gamma
    }

    /// The `T` that `γ` was validated against.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Same `(β₀, w, T)` with a different `γ`.
    pub fn with_gamma(&self, gamma: PolyIntensity) -> Result<Self> {
        Self::new(self.beta0, self.w, gamma, self.horizon)
    }

    pub(crate) fn check_horizon(&self, path_horizon: f64) -> Result<()> {
        if path_horizon != self.horizon {
            return Err(Error::HorizonMismatch {
                path: path_horizon,
                params: self.horizon,
            });
        }
        Ok(())
    }
}

/// Result of [`adapt_path`]: the adapted path plus the level-crossing times
/// `t̃_i` of the scaled integral.
#[derive(Debug, Clone, PartialEq)]
pub struct Adapted {
    pub path: CountPath,
    pub crossings: Vec<f64>,
    pub w: f64,
}

/// Scaled running integral `x̃(t) = w ∫₀ᵗ x*(s) ds` and its own integral.
struct ScaledIntegral<'a> {
    jumps: &'a [f64],
    w: f64,
}

impl ScaledIntegral<'_> {
    fn value(&self, t: f64) -> f64 {
        self.w
            * self
                .jumps
                .iter()
                .take_while(|&&s| s < t)
                .map(|&s| t - s)
                .sum::<f64>()
    }

    /// `∫₀ᵗ x̃(s) ds`.
    fn area(&self, t: f64) -> f64 {
        0.5 * self.w
            * self
                .jumps
                .iter()
                .take_while(|&&s| s < t)
                .map(|&s| (t - s) * (t - s))
                .sum::<f64>()
    }

    /// First times at which `x̃` reaches `1, 2, …, count`.
    fn crossings(&self, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count);
        let mut level = 1usize;
        // on [jumps[k-1], jumps[k]) the slope is w·k
        for k in 1..=self.jumps.len() {
            let start = self.jumps[k - 1];
            let end = self.jumps.get(k).copied().unwrap_or(f64::INFINITY);
            let base = self.value(start);
            let slope = self.w * k as f64;
            while level <= count {
                let t = start + (level as f64 - base) / slope;
                if t > end {
                    break;
                }
                out.push(t);
                level += 1;
            }
        }
        out
    }
}

/// Converts an arbitrary count path into one compatible with a
/// non-decreasing latent intensity.
///
/// `x̃(t) = w ∫₀ᵗ x*(s) ds` is piecewise linear; `t̃_i` is its first crossing
/// of level `i`, for `i = 1..=⌊x̃(T)⌋`. On each `[t̃_{i-1}, t̃_i]` the adapted
/// path steps from `i-1` to `i` at the unique `u_i` for which the step path
/// and `x̃` enclose the same area, so `x(t̃_i) = i` and
/// `∫₀^{t̃_i} x = ∫₀^{t̃_i} x̃` hold for every `i`.
pub fn adapt_path(raw: &CountPath, w: f64) -> Result<Adapted> {
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "w must be finite and > 0, got {w}"
        )));
    }
    if raw.is_empty() {
        return Err(Error::NoEventsAfterAdaptation);
    }
    let horizon = raw.horizon();
    let scaled = ScaledIntegral {
        jumps: raw.jumps(),
        w,
    };
    let count = scaled.value(horizon).floor();
    if count < 1.0 {
        return Err(Error::NoEventsAfterAdaptation);
    }
    let crossings = scaled.crossings(count as usize);

    let mut jumps = Vec::with_capacity(crossings.len());
    let mut prev_t = 0.0;
    let mut prev_area = 0.0;
    for (idx, &t) in crossings.iter().enumerate() {
        let level = (idx + 1) as f64;
        let area = scaled.area(t);
        let excess = (area - prev_area) - (level - 1.0) * (t - prev_t);
        let u = t - excess;
        jumps.push(u.min(horizon));
        prev_t = t;
        prev_area = area;
    }
    let path = CountPath::new(jumps, horizon)?;
    Ok(Adapted {
        path,
        crossings,
        w,
    })
}

/// Weight `w` for which [`adapt_path`] keeps the original number of events.
///
/// `w = M* / ∫₀ᵀ x*` puts `x̃(T)` exactly on the integer `M*`; the factor
/// `1 + 1e-9` lifts it just above so rounding cannot drop the last event.
pub fn tune_w(raw: &CountPath) -> Result<f64> {
    if raw.is_empty() {
        return Err(Error::NoEventsAfterAdaptation);
    }
    let area = raw.area(raw.horizon());
    Ok(raw.len() as f64 / area * (1.0 + 1e-9))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_sorts() {
        let p = CountPath::new(vec![0.5, 0.2], 1.0).unwrap();
        assert_eq!(p.jumps(), &[0.2, 0.5]);
        assert_eq!(CountPath::new(vec![], 1.0).unwrap().len(), 0);
    }

    #[test]
    fn load_rejects_bad_events() {
        assert_eq!(
            CountPath::new(vec![0.5, 0.5], 1.0),
            Err(Error::DuplicateTime { time: 0.5 })
        );
        assert!(matches!(
            CountPath::new(vec![0.0], 1.0),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            CountPath::new(vec![1.5], 1.0),
            Err(Error::OutOfRange { .. })
        ));
        assert!(CountPath::new(vec![1.0], 1.0).is_ok());
    }

    #[test]
    fn path_values() {
        let p = CountPath::new(vec![0.25, 0.75], 1.0).unwrap();
        assert_eq!(p.value(0.25), 1);
        assert_eq!(p.value_before(0.25), 0);
        assert_eq!(p.value(1.0), 2);
        assert!((p.area(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn adapt_single_jump() {
        let raw = CountPath::new(vec![0.5], 1.0).unwrap();
        let out = adapt_path(&raw, 2.0).unwrap();
        assert_eq!(out.crossings, vec![1.0]);
        assert_eq!(out.path.len(), 1);
        assert!((out.path.jumps()[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn adapt_requires_events() {
        let raw = CountPath::empty(1.0).unwrap();
        assert_eq!(adapt_path(&raw, 1.0), Err(Error::NoEventsAfterAdaptation));
        let raw = CountPath::new(vec![0.9], 1.0).unwrap();
        assert_eq!(adapt_path(&raw, 1.0), Err(Error::NoEventsAfterAdaptation));
    }

    #[test]
    fn tune_w_examples() {
        let raw = CountPath::new(vec![0.5], 1.0).unwrap();
        let w = tune_w(&raw).unwrap();
        assert!((w - 2.0).abs() < 1e-8);
        assert_eq!(adapt_path(&raw, w).unwrap().path.len(), 1);

        let raw = CountPath::new(vec![0.25, 0.75], 1.0).unwrap();
        let w = tune_w(&raw).unwrap();
        assert!((w - 2.0).abs() < 1e-8);
        assert_eq!(adapt_path(&raw, w).unwrap().path.len(), 2);
    }

    #[test]
    fn params_validation() {
        let g = PolyIntensity::new(vec![1.0]).unwrap();
        assert!(ModelParams::new(-1.0, 1.0, g.clone(), 1.0).is_err());
        assert!(ModelParams::new(0.0, 0.0, g.clone(), 1.0).is_err());
        let neg = PolyIntensity::new(vec![1.0, -2.0]).unwrap();
        assert!(ModelParams::new(0.0, 1.0, neg, 1.0).is_err());
        assert!(ModelParams::new(0.0, 1.0, g, 1.0).is_ok());
    }
}
