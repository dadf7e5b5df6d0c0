//! Degrees of freedom, Stein's unbiased risk estimate and Monte Carlo validation for
//! spectral estimators of low-rank matrices under Gaussian noise.
//!
//! The `parallel` feature (default) runs replicate loops on rayon; without it every
//! loop runs sequentially. Both modes give bit-identical results.

pub mod density;
pub mod df;
pub mod error;
pub mod exec;
pub mod io;
pub mod oracle;
pub mod penalty;
pub mod regression;
pub mod rng;
pub mod simlab;
pub mod spectral;

pub use error::{Error, Result};
pub use exec::Exec;
pub use penalty::{Penalty, PenaltySpec};
pub use spectral::{Mat, Spectrum, SvdDecomposition};
pub use density::{DensityProvider, MarginalDensity};
pub use df::{DfComponents, DfEstimate};
pub use oracle::{McConfig, McResult};
pub use simlab::{ExperimentConfig, ExperimentResult};
