//! Exact and finite-shot evaluation of RX-layer parameterized circuits, the
//! optimizers that train them from measurement counts, and the hypothesis-testing
//! tools that certify when those counts carry no information about the parameters.
//!
//! Module map:
//!
//! - [`circuitsim`]: product-state and dense-statevector simulation of the RX layer.
//! - [`measurement`]: finite-outcome POVMs, exact outcome distributions, seeded
//!   multinomial shot sampling.
//! - [`estimators`]: post-processing maps from shot counts to scalar estimates.
//! - [`optimizers`]: gradient descent, natural gradient, CVaR, rescaled-shift and
//!   network-initialised training loops.
//! - [`hypotest`]: binary hypothesis testing over finite distributions.
//! - [`diagnostics`]: concentration measurement, guideline checks, random-walk
//!   statistics and PCA projections of trajectories.

pub mod circuitsim;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod hypotest;
pub mod measurement;
pub mod optimizers;
pub mod rng;

pub use error::{Error, Result};
