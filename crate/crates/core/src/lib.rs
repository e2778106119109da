//! Frequency-balancing token mixing for vision backbones.
//!
//! The crate provides the spectral pooling filter (a circular low band scaled
//! by `λ_b` and its complement by `1 − λ_b`), the SPG and SPAM mixers built
//! on it, four-stage SPANet-S/M/B graphs with parameter and FLOP accounting,
//! spectral diagnostics for feature maps, and the image, tensor and weight
//! file formats used by the `spanet` command-line tool.

// negated float comparisons are used to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod fft;
pub mod init;
pub mod io;
pub mod mixer;
pub mod model;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
pub use mixer::{spam_forward, spg_forward, SpamConfig, SpamWeights, SpgConfig};
pub use model::{build_config, count_flops, count_params, init_weights, SpaNet, SpaNetConfig, Variant, WeightStore};
pub use spectral::{FilterMask, Plane, Spectrum};
pub use tensor::{ConvKernel, NormParams, Tensor};
