//! Training-free few-shot adaptation of a frozen linear classifier with kernel
//! methods: cache (Nadaraya-Watson) estimators, proximal local linear
//! regression, Mahalanobis-metric kernels and proximal kernel ridge
//! regression, plus random Fourier feature compression.
//!
//! Everything operates on precomputed, L2-normalized feature vectors stored
//! in FSF files (see [`featurestore`]).

pub mod adapters;
pub mod error;
pub mod featurestore;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod spectral;

pub use error::{Error, Result};
