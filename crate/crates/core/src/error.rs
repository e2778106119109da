use thiserror::Error;

use crate::io::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected:?} but found {found:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("{op}: channel mismatch, expected {expected} but found {found}")]
    ChannelMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("cannot split {channels} channels into {groups} groups")]
    Indivisible { channels: usize, groups: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The inverse transform left an imaginary part larger than the allowed
    /// bound, which means the spectral mask was not conjugate symmetric.
    #[error("imaginary residual {residual:e} exceeds bound {bound:e}")]
    ImaginaryResidual { residual: f64, bound: f64 },

    #[error("unknown model variant `{0}` (expected S, M or B)")]
    UnknownVariant(String),

    #[error("missing weight `{0}`")]
    MissingWeight(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
