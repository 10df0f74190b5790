pub mod dense;
pub mod domain;
pub mod engine;
pub mod error;
pub mod fbt;
pub mod inference;
pub mod kernel;
pub mod lattice;
mod special;

pub use special::{norm_ccdf, norm_cdf, norm_inv_ccdf, norm_inv_cdf, student_t_cdf, student_t_quantile};

pub use domain::{IntegrandDef, Transform};
pub use engine::{integrate, integrate_generic, CubatureOptions, CubatureResult};
pub use error::{Error, Result};
pub use fbt::{FbtState, Precision};
pub use inference::{Criterion, FitResult, Quantile, SearchInterval};
pub use kernel::KernelSpec;
pub use lattice::{GeneratingVector, LatticeConfig, NodeSet};
