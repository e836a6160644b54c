//! Bayesian hierarchical spatio-temporal modelling of censored, heavy-tailed,
//! skewed panel data — daily precipitation being the motivating case.
//!
//! The observation at station s and time t is `D_t(s) = max(Y_t(s), 0)` for a
//! latent field Y with regression mean, AR(1) temporal errors, ARCH volatility
//! and multivariate generalised-hyperbolic innovations whose spatial
//! correlation is Matérn. Fitting is blockwise random-walk Metropolis–Hastings
//! with data augmentation of the censored/missing cells; products are
//! posterior archives, spatial/temporal predictive ensembles and risk
//! statistics (return periods, spell durations, variograms, Q-Q tables).
//!
//! Module map, bottom up:
//! - [`special`]: fractional-order modified Bessel K in log space, log-gamma.
//! - [`gig`], [`gh`]: generalised inverse Gaussian and generalised hyperbolic
//!   laws — densities, samplers, moments, standardization, conditioning.
//! - [`spatial`]: station geometry, Matérn correlation, Cholesky machinery.
//! - [`model`]: the generative hierarchy, its likelihood and simulator.
//! - [`inference`]: priors, the MH kernel with augmentation, chains, R̂.
//! - [`prediction`]: out-of-sample spatial ensembles and one-step forecasts.
//! - [`risk`]: return curves, durations, counts, variograms, Q-Q pairs.
//! - [`io`]: CSV/JSON ingestion and persistence, run configs and manifests.

pub mod error;
pub mod gh;
pub mod gig;
pub mod inference;
pub mod io;
pub(crate) mod linalg;
pub mod model;
pub mod prediction;
pub mod risk;
pub mod spatial;
pub mod special;

pub use error::{Error, Result};
