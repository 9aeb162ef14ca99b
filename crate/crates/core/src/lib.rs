//! Marginalized Cox process toolkit.
//!
//! A count process `X` on `[0, T]` runs at rate `β₀ + w·Y(t)`, where the latent
//! `Y` is a non-homogeneous Poisson process with polynomial intensity `γ(t)`.
//! Integrating `Y` out leaves a closed-form likelihood for `X` whose polynomial
//! factor is built from a triangular coefficient recursion.
//!
//! Modules:
//!
//! * [`intensity`]: polynomial `γ`, its integral `Γ`, `Γ⁻¹`, and the
//!   exponentially discounted kernel integrals.
//! * [`paths`]: count paths, model parameters and the adaptation transform for
//!   arbitrary count series.
//! * [`simulator`]: exact simulation of `(X, Y)` and the conditional likelihood.
//! * [`marginal`]: the coefficient table and the marginal log-likelihood.
//! * [`oracles`]: grid forward filter, discrete coefficient recursion and a
//!   Monte Carlo estimator, all independent of [`marginal`].
//! * [`inference`]: Metropolis–Hastings over `γ`'s coefficients, simplex
//!   maximum likelihood and posterior summaries.
//!
//! Data-parallel loops (Monte Carlo replicas, batch evaluation, wide table rows)
//! go through [`par`], which uses rayon when the `parallel` feature is on and
//! runs sequentially otherwise.

pub mod error;
pub mod inference;
pub mod intensity;
pub mod marginal;
pub mod oracles;
pub mod par;
pub mod paths;
pub mod simulator;

pub use error::{Error, Result};
pub use intensity::PolyIntensity;
pub use marginal::{marginal_loglik, CoefficientTable, MarginalResult};
pub use paths::{CountPath, ModelParams};
pub use simulator::{simulate, LatentPath, SimResult};
