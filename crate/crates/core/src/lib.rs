//! Spectral analysis and shaping of spatio-temporal latent tensors.

pub mod cli;
pub mod correlation;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod masking;
pub mod npy;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod spectrum;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::{Dtype, Scalar};
pub use eigen::{EigenSpectrum, SymMatrix};
pub use tensor::{Dims, LatentBatch, LatentTensor};

pub type LatentTensorF32 = LatentTensor<f32>;
pub type LatentTensorF64 = LatentTensor<f64>;
pub type LatentBatchF32 = LatentBatch<f32>;
pub type LatentBatchF64 = LatentBatch<f64>;
pub type SymMatrixF32 = SymMatrix<f32>;
pub type SymMatrixF64 = SymMatrix<f64>;
pub type EigenSpectrumF32 = EigenSpectrum<f32>;
pub type EigenSpectrumF64 = EigenSpectrum<f64>;
