//! Mixed-variable Gaussian process surrogate.

pub mod fit;
pub mod kernel;
pub mod model;

pub use fit::fit_hyperparameters;
pub use kernel::{features, k_mixed, CategoricalMode, CompiledKernel, KernelConfig};
pub use model::{gram_min_eigenvalue, GpError, GpModel};
