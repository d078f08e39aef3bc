//! Multiscale Laplacian graph kernels.
//!
//! The crate computes the Feature-space Laplacian Graph (FLG) kernel and the
//! Multiscale Laplacian Graph (MLG) kernel between labeled graphs. Two
//! evaluation routes are provided:
//!
//! - [`exact`]: on-demand recursion over nested neighborhoods with a shared
//!   memo table and weak subgraph deduplication. Meant for verification on
//!   small inputs.
//! - [`linearized`]: level-by-level Nyström-style projection onto a small
//!   sampled basis, which turns every kernel evaluation into small dense
//!   linear algebra. This is the production path.
//!
//! Around the kernels sit TU-format dataset loading ([`dataset`]), a
//! precomputed-kernel SVM with the cross-validation protocol ([`svm`]),
//! Gram matrix files ([`gram`]) and a property check suite ([`check`]).

pub mod check;
pub mod dataset;
pub mod error;
pub mod exact;
pub mod flg;
pub mod gram;
pub mod graph;
pub mod linearized;
pub mod spd;
pub mod svm;

pub use error::{Error, Result};
