//! Closed-form marginal likelihood of the observed process.
//!
//! With jump times relabelled in descending order `t_1 > … > t_M` and
//! `A_m = ∫₀^{t_m} e^{-w(T-t)} γ(t) dt`, the coefficients obey
//!
//! ```text
//! c_0^(0) = 1
//! c_0^(m) = 1
//! c_j^(m) = A_m · Σ_{i<j} c_i^(m-1) · C(m-i-1, j-i-1) + c_j^(m-1)     (1 ≤ j ≤ m)
//! ```
//!
//! with `c_m^(m-1) = 0`, and
//!
//! ```text
//! log p(x) = log Σ_j c_j^(M) w^j β₀^(M-j) − β₀T − ∫₀ᵀ (1 − e^{-w(T-t)}) γ(t) dt.
//! ```
//!
//! The table is built in ordinary floats with per-row power-of-two rescaling
//! whenever that is exact, and otherwise in log space.

use crate::error::{Error, Result};
use crate::intensity::Intensity;
use crate::par::{self, Exec};
use crate::paths::{CountPath, ModelParams};

/// Largest `M` for which the scaled route is attempted; Pascal entries and
/// row sums stay below `2^1000` up to here.
const SCALED_MAX_M: usize = 900;
/// Kernel integrals outside `[2^-100, 2^100]` force the log route.
const SCALED_KERNEL_RANGE: i32 = 100;
/// Smallest nonzero mantissa (relative to a row max in `[1, 2)`) the scaled
/// route tolerates before falling back.
const SCALED_FLOOR_EXP: i32 = -800;
/// Terms more than this many nats below the largest term are dropped.
const LOG_CUTOFF: f64 = 60.0;
/// Rows shorter than this are never split across threads.
const PAR_MIN_ROW: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableRoute {
    /// Plain floats, one power-of-two scale per row.
    Scaled,
    /// Natural-log entries with max-shifted summation.
    LogDomain,
}

/// Triangular array `c_j^(m)`, `0 ≤ j ≤ m ≤ M`, stored as natural logs.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    jumps_desc: Vec<f64>,
    kernel: Vec<f64>,
    ln_c: Vec<f64>,
    route: TableRoute,
}

fn row_offset(m: usize) -> usize {
    m * (m + 1) / 2
}

impl CoefficientTable {
    /// Number of jumps `M`.
    pub fn len(&self) -> usize {
        self.kernel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel.is_empty()
    }

    pub fn route(&self) -> TableRoute {
        self.route
    }

    /// Jump times in the order the recursion consumes them (descending).
    pub fn jumps_desc(&self) -> &[f64] {
        &self.jumps_desc
    }

    /// `A_1, …, A_M`.
    pub fn kernel_integrals(&self) -> &[f64] {
        &self.kernel
    }

    /// `ln c_j^(m)` for `j = 0..=m`.
    pub fn ln_row(&self, m: usize) -> &[f64] {
        let start = row_offset(m);
        &self.ln_c[start..start + m + 1]
    }

    pub fn ln_coefficient(&self, m: usize, j: usize) -> f64 {
        self.ln_row(m)[j]
    }

    /// `c_j^(m)`; may overflow to infinity for large tables.
    pub fn coefficient(&self, m: usize, j: usize) -> f64 {
        self.ln_coefficient(m, j).exp()
    }

    /// Per-row log normalizer: the largest `ln c_j^(m)` in row `m`.
    pub fn log_scale(&self, m: usize) -> f64 {
        self.ln_row(m)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Row `m` divided by `exp(log_scale(m))`, so the largest entry is 1.
    pub fn scaled_row(&self, m: usize) -> Vec<f64> {
        let s = self.log_scale(m);
        self.ln_row(m).iter().map(|&l| (l - s).exp()).collect()
    }

    /// `log Σ_j c_j^(M) w^j β₀^(M-j)` with `0^0 = 1`.
    pub fn polynomial_log(&self, beta0: f64, w: f64) -> f64 {
        let big_m = self.len();
        let row = self.ln_row(big_m);
        if beta0 == 0.0 {
            return row[big_m] + big_m as f64 * w.ln();
        }
        let (lw, lb) = (w.ln(), beta0.ln());
        log_sum_exp(
            row.iter()
                .enumerate()
                .map(|(j, &l)| l + j as f64 * lw + (big_m - j) as f64 * lb),
        )
    }
}

/// `log Σ exp(v)` over finite-or-`-∞` inputs.
fn log_sum_exp<I: Iterator<Item = f64> + Clone>(values: I) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = values
        .filter(|&v| v - max > -LOG_CUTOFF)
        .map(|v| (v - max).exp())
        .sum();
    max + sum.ln()
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

fn descending_jumps(x: &CountPath) -> Vec<f64> {
    x.jumps().iter().rev().copied().collect()
}

fn kernel_integrals(jumps_desc: &[f64], params: &ModelParams) -> Vec<f64> {
    let (w, horizon) = (params.w(), params.horizon());
    jumps_desc
        .iter()
        .map(|&t| params.gamma().alpha_integral(w, horizon, 0.0, t).max(0.0))
        .collect()
}

/// Builds the coefficient table for path `x`.
pub fn compute_coefficients(x: &CountPath, params: &ModelParams) -> Result<CoefficientTable> {
    compute_coefficients_with(x, params, Exec::default())
}

pub fn compute_coefficients_with(
    x: &CountPath,
    params: &ModelParams,
    exec: Exec,
) -> Result<CoefficientTable> {
    params.check_horizon(x.horizon())?;
    let jumps_desc = descending_jumps(x);
    let kernel = kernel_integrals(&jumps_desc, params);
    let (ln_c, route) = match scaled_table(&kernel) {
        Some(ln_c) => (ln_c, TableRoute::Scaled),
        None => (log_table(&kernel, exec), TableRoute::LogDomain),
    };
    Ok(CoefficientTable {
        jumps_desc,
        kernel,
        ln_c,
        route,
    })
}

/// Forces one route; used to cross-check the two against each other.
pub fn compute_coefficients_route(
    x: &CountPath,
    params: &ModelParams,
    route: TableRoute,
    exec: Exec,
) -> Result<Option<CoefficientTable>> {
    params.check_horizon(x.horizon())?;
    let jumps_desc = descending_jumps(x);
    let kernel = kernel_integrals(&jumps_desc, params);
    let ln_c = match route {
        TableRoute::Scaled => match scaled_table(&kernel) {
            Some(t) => t,
            None => return Ok(None),
        },
        TableRoute::LogDomain => log_table(&kernel, exec),
    };
    Ok(Some(CoefficientTable {
        jumps_desc,
        kernel,
        ln_c,
        route,
    }))
}

fn scaled_applicable(kernel: &[f64]) -> bool {
    let lo = 2f64.powi(-SCALED_KERNEL_RANGE);
    let hi = 2f64.powi(SCALED_KERNEL_RANGE);
    kernel.len() <= SCALED_MAX_M && kernel.iter().all(|&a| a == 0.0 || (lo..=hi).contains(&a))
}

/// Binary exponent `e` with `2^e ≤ v < 2^(e+1)` for finite positive `v`.
fn binary_exponent(v: f64) -> i32 {
    let bits = v.to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i32;
    if raw == 0 {
        // subnormal
        -1023 - (bits & ((1u64 << 52) - 1)).leading_zeros() as i32 + 12
    } else {
        raw - 1023
    }
}

fn pascal(n_max: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mut row = vec![1.0; n + 1];
        for k in 1..n {
            row[k] = rows[n - 1][k - 1] + rows[n - 1][k];
        }
        rows.push(row);
    }
    rows
}

/// Scaled-float route. Returns `None` whenever some row would need more than
/// the exact dynamic range, in which case the caller switches to logs.
fn scaled_table(kernel: &[f64]) -> Option<Vec<f64>> {
    if !scaled_applicable(kernel) {
        return None;
    }
    let big_m = kernel.len();
    let binom = pascal(big_m.saturating_sub(1));
    let floor = 2f64.powi(SCALED_FLOOR_EXP);

    let mut ln_c = Vec::with_capacity(row_offset(big_m + 1));
    ln_c.push(0.0);
    // row m-1 as mantissas times 2^scale
    let mut prev = vec![1.0_f64];
    let mut scale: i32 = 0;
    let ln2 = std::f64::consts::LN_2;

    for m in 1..=big_m {
        let a = kernel[m - 1];
        let mut row = vec![0.0; m + 1];
        row[0] = prev[0];
        for j in 1..=m {
            let mut s = 0.0;
            for i in 0..j {
                s += prev[i] * binom[m - 1 - i][j - 1 - i];
            }
            row[j] = a * s + prev.get(j).copied().unwrap_or(0.0);
        }
        let max = row.iter().copied().fold(0.0, f64::max);
        let shift = binary_exponent(max);
        let factor = 2f64.powi(-shift);
        for v in &mut row {
            *v *= factor;
            if *v != 0.0 && *v < floor {
                return None;
            }
        }
        scale += shift;
        for &v in &row {
            ln_c.push(if v == 0.0 {
                f64::NEG_INFINITY
            } else {
                v.ln() + scale as f64 * ln2
            });
        }
        prev = row;
    }
    Some(ln_c)
}

/// `ln k!` for `k = 0..=n`, compensated summation.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    out.push(0.0);
    for k in 1..=n {
        let y = (k as f64).ln() - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        out.push(sum);
    }
    out
}

/// Log-space route. Each row's entries are independent given the previous
/// row, so wide rows are split across threads.
fn log_table(kernel: &[f64], exec: Exec) -> Vec<f64> {
    let big_m = kernel.len();
    let lf = ln_factorials(big_m);
    let ln_binom = |n: usize, k: usize| lf[n] - lf[k] - lf[n - k];

    let mut ln_c = Vec::with_capacity(row_offset(big_m + 1));
    ln_c.push(0.0);
    let mut prev: Vec<f64> = vec![0.0];
    for m in 1..=big_m {
        let la = kernel[m - 1].ln();
        let prev_ref = &prev;
        let entry = |j: usize| -> f64 {
            let carried = prev_ref.get(j).copied().unwrap_or(f64::NEG_INFINITY);
            if j == 0 {
                return carried;
            }
            if la == f64::NEG_INFINITY {
                return carried;
            }
            let terms = (0..j).map(|i| prev_ref[i] + ln_binom(m - 1 - i, j - 1 - i));
            log_add(carried, la + log_sum_exp(terms))
        };
        let row = par::map_range_min(exec, m + 1, PAR_MIN_ROW, entry);
        ln_c.extend_from_slice(&row);
        prev = row;
    }
    ln_c
}

/// Log marginal likelihood and its two factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalResult {
    pub loglik: f64,
    /// `log Σ_j c_j w^j β₀^(M-j)`.
    pub polynomial_term_log: f64,
    /// `−β₀T − ∫₀ᵀ λ`.
    pub exponent_term: f64,
    pub jumps: usize,
}

impl MarginalResult {
    fn assemble(poly_log: f64, params: &ModelParams, jumps: usize) -> Self {
        let horizon = params.horizon();
        let exponent = -params.beta0() * horizon
            - params.gamma().lambda_integral(params.w(), horizon);
        let loglik = if poly_log == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            poly_log + exponent
        };
        MarginalResult {
            loglik,
            polynomial_term_log: poly_log,
            exponent_term: exponent,
            jumps,
        }
    }

    pub fn likelihood(&self) -> f64 {
        self.loglik.exp()
    }
}

/// `log p_X(x)` through the coefficient table.
pub fn marginal_loglik(x: &CountPath, params: &ModelParams) -> Result<MarginalResult> {
    marginal_loglik_with(x, params, Exec::default())
}

pub fn marginal_loglik_with(
    x: &CountPath,
    params: &ModelParams,
    exec: Exec,
) -> Result<MarginalResult> {
    let table = compute_coefficients_with(x, params, exec)?;
    let poly = table.polynomial_log(params.beta0(), params.w());
    Ok(MarginalResult::assemble(poly, params, x.len()))
}

/// `log p_X(x)` without materializing the table, in `O(M²)`.
///
/// Writing `D_m(b) = Σ_j c_j^(m) w^j b^(m-j)`, the recursion for the
/// coefficients is equivalent to
///
/// ```text
/// D_m(b) = b · D_{m-1}(b) + w · A_m · D_{m-1}(b + w),
/// ```
///
/// so the polynomial factor `D_M(β₀)` only needs `D_m` on the lattice
/// `β₀ + k·w`, `k ≤ M − m`. Every term is nonnegative, so the sweep runs in
/// extended-exponent floats with no cancellation.
pub fn marginal_loglik_lattice(x: &CountPath, params: &ModelParams) -> Result<MarginalResult> {
    params.check_horizon(x.horizon())?;
    let jumps_desc = descending_jumps(x);
    let kernel = kernel_integrals(&jumps_desc, params);
    let (beta0, w) = (params.beta0(), params.w());
    let big_m = kernel.len();

    let mut lattice = vec![Wide::ONE; big_m + 1];
    for (m, &a) in kernel.iter().enumerate() {
        let up = w * a;
        let live = big_m - m; // entries 0..live survive this step
        for k in 0..live {
            let stay = lattice[k].scale(beta0 + k as f64 * w);
            let climb = lattice[k + 1].scale(up);
            lattice[k] = stay.add(climb);
        }
    }
    Ok(MarginalResult::assemble(lattice[0].ln(), params, big_m))
}

/// Nonnegative float with an extra exponent in units of `2^256`.
#[derive(Debug, Clone, Copy)]
struct Wide {
    mant: f64,
    exp: i32,
}

const WIDE_STEP: f64 = 1.157_920_892_373_162e77; // 2^256
const WIDE_STEP_INV: f64 = 8.636_168_555_094_445e-78; // 2^-256

impl Wide {
    const ONE: Wide = Wide { mant: 1.0, exp: 0 };

    fn normalize(mut self) -> Self {
        if self.mant == 0.0 {
            self.exp = 0;
            return self;
        }
        while self.mant >= WIDE_STEP {
            self.mant *= WIDE_STEP_INV;
            self.exp += 1;
        }
        while self.mant < WIDE_STEP_INV {
            self.mant *= WIDE_STEP;
            self.exp -= 1;
        }
        self
    }

    fn scale(self, factor: f64) -> Self {
        Wide {
            mant: self.mant * factor,
            exp: self.exp,
        }
        .normalize()
    }

    fn add(self, other: Self) -> Self {
        if self.mant == 0.0 {
            return other;
        }
        if other.mant == 0.0 {
            return self;
        }
        let (hi, lo) = if self.exp >= other.exp {
            (self, other)
        } else {
            (other, self)
        };
        let gap = hi.exp - lo.exp;
        let lo_mant = match gap {
            0 => lo.mant,
            1 => lo.mant * WIDE_STEP_INV,
            2 => lo.mant * WIDE_STEP_INV * WIDE_STEP_INV,
            _ => 0.0,
        };
        Wide {
            mant: hi.mant + lo_mant,
            exp: hi.exp,
        }
        .normalize()
    }

    fn ln(self) -> f64 {
        if self.mant == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.mant.ln() + self.exp as f64 * 256.0 * std::f64::consts::LN_2
        }
    }
}

/// Element-wise [`marginal_loglik`], order preserved.
pub fn batch_loglik(paths: &[CountPath], params: &ModelParams) -> Result<Vec<MarginalResult>> {
    batch_loglik_with(paths, params, Exec::default())
}

pub fn batch_loglik_with(
    paths: &[CountPath],
    params: &ModelParams,
    exec: Exec,
) -> Result<Vec<MarginalResult>> {
    // rows are evaluated sequentially inside; parallelism is across paths
    let results = par::map_slice(exec, paths, |x| {
        marginal_loglik_with(x, params, Exec::Sequential)
    });
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Batch {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}
