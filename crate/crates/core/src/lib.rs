//! Coupled bootstrap (CB) risk estimation for the Gaussian normal means problem.
//!
//! The crate is organised around the data flow of a risk-estimation study:
//!
//! * [`model`] generates data vectors and coupled bootstrap draw sets,
//! * [`predictors`] implements the prediction rules `g` whose risk is estimated,
//! * [`estimators`] implements CB, Breiman-Ye, Efron, SURE and the degrees of
//!   freedom estimators,
//! * [`analysis`] holds Monte Carlo oracles and closed-form probes,
//! * [`harness`] reproduces the simulation experiments and writes CSV tables.
//!
//! Monte Carlo loops are data parallel over replications through [`par`]. Every
//! replication owns its own random substream, so results do not depend on the
//! number of worker threads (or on whether the `parallel` feature is enabled).

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod par;
pub mod predictors;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use model::{CoupledDrawSet, NormalModel, StructuredNormalModel};
pub use predictors::{DesignContext, Predictor};
pub use rng::RngSeed;
