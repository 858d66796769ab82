//! Volume sampling of row subsets for least-squares and ridge regression.
//!
//! * [`sampling`]: reverse iterative samplers (`RegVol`, `FastRegVol`) and the
//!   leverage-score i.i.d. baseline.
//! * [`regression`]: subsampled estimators, losses and error metrics.
//! * [`oracle`]: exact enumeration of subset laws and the identity catalog.
//! * [`cli`]: dataset parsing and the `volsample` command front end.

// `!(a > b)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod oracle;
pub mod regression;
pub mod sampling;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use regression::{Estimator, NoiseModel, RegressionProblem};
pub use sampling::{Algorithm, SamplerConfig, SubsetSample};
