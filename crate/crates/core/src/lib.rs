//! Transductive SVMs with recursive feature elimination (TSVM-RFE), the
//! GLAD genetic-algorithm baseline, and the cross-validation harness used to
//! compare them on gene-expression data.
//!
//! Module map:
//!
//! - [`data`]: ingestion, standardization and the Pearson pre-filter.
//! - [`kernel`]: masked kernels, Gram matrices and the Gram cache.
//! - [`svm`]: the inductive soft-margin SVM and its dual solver.
//! - [`tsvm`]: label-switching transductive SVM with penalty annealing.
//! - [`rfe`]: feature weights, pruning schedules and the RFE driver.
//! - [`glad`]: LDA/k-means scoring and the genetic search.
//! - [`eval`]: fold plans, cross-validation, paired t-tests, curves and tables.
//! - [`synth`]: two-Gaussian generators with known informative features.

pub mod data;
pub mod eval;
pub mod glad;
pub mod kernel;
pub mod mask;
pub mod rfe;
pub mod svm;
pub mod synth;
pub mod tsvm;

pub use data::{Dataset, Label};
pub use kernel::{Kernel, KernelKind};
pub use mask::FeatureMask;
pub use svm::{SvmModel, SvmParams};
