//! Two-dimensional PCA for matrix-shaped samples: classic 2DPCA, the
//! generalized Ls/Lp family, and its class-weighted relaxation, together with
//! dataset loaders, a weighted nearest-neighbour classifier, reconstruction
//! metrics and an experiment harness.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lp;
pub mod model_io;
pub mod pca2d;
pub mod recognition;
pub mod relaxed;

pub use error::{Error, Result};
pub use linalg::Mat;
