//! Learnable orthonormal wavelet filter banks.
//!
//! The discrete wavelet transform is treated as a linear, bias-free network
//! whose layers all share one set of `N_filt` low-pass taps. A sparsity
//! objective on the transform output is back-propagated onto those taps and
//! the orthonormality conditions enter the objective as quadratic penalties.

pub mod backprop;
pub mod dataio;
pub mod dwt;
pub mod error;
pub mod filter_bank;
pub mod objective;
pub mod trainer;

pub use dataio::{Dataset, GenKind, GenParams, Layout};
pub use dwt::{Signal, WaveletCoefficients};
pub use error::{Error, Result};
pub use filter_bank::{ConditionReport, FilterBank};
pub use objective::CostBreakdown;
pub use trainer::{CostMap, GridSpec, TrainConfig, TrainHistory};
