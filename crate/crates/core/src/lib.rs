//! Empirical-Bayes variable selection for linear regression with many more
//! candidate predictors than observations.
//!
//! Candidate ("putative") columns enter the model through three-valued
//! indicators with a multinomial prior and a shared normal random effect.
//! Hyperparameters are estimated by an approximate EM algorithm that only
//! ever factors an L x L matrix, L being the number of active columns.
//!
//! - [`model`]: data, parameters, latent state, low-rank covariance and likelihood
//! - [`em`]: E-step, M-step and the fitting loop
//! - [`selection`]: threshold, greedy and weighted strategies, correlation guard
//! - [`preprocess`]: range rescaling, z-scores and log-ratio transform
//! - [`diagnostics`]: OLS refit, AIC, R², VIF and t-tests
//! - [`lasso`]: coordinate-descent LASSO with repeated cross-validation
//! - [`restart`]: repeated weighted runs, best model by AIC
//! - [`sim`]: the correlated-groups simulation study
//! - [`io`] and [`columns`]: CSV ingestion, column stores and result files

pub mod columns;
pub mod diagnostics;
pub mod em;
pub mod error;
pub mod io;
pub mod lasso;
mod linalg;
pub mod model;
pub mod preprocess;
pub mod restart;
pub mod rng;
pub mod selection;
pub mod sim;

pub use columns::{ColumnSource, FileColumns, InMemoryColumns};
pub use em::{run_em, EmConfig, FitResult, IterationTrace, Strategy};
pub use error::{Error, Result};
pub use linalg::pearson;
pub use model::{Dataset, LatentState, ModelParams};
pub use restart::{fit_with_restarts, RestartFit};
