//! Score-Softmax classification toolkit.
//!
//! The crate provides:
//!
//! * [`tensor`]: a small dense tensor type with a reverse-mode tape,
//! * [`heads`]: the vanilla softmax head and the grouped Score-Softmax head
//!   with its score table, weighted class scores and score loss,
//! * [`dgss`]: dynamic Gaussian smoothing supervision targets,
//! * [`fusion`]: Gaussian and additive fusion of score matrices,
//! * [`train`]: a multilayer perceptron, Adam and the training loop,
//! * [`data`]: the synthetic noise-trap benchmark, input attacks and IDX loading,
//! * [`eval`]: accuracy, confusion matrices, ROC/PR curves and decline tables.

pub mod data;
pub mod dgss;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod gradcheck;
pub mod heads;
pub mod rng;
pub mod tensor;
pub mod train;

mod io;

pub use crate::dgss::{DgssConfig, SupervisionMatrix};
pub use crate::error::{Error, Result};
pub use crate::heads::{ClassScores, ScoreMatrix, ScoreTable};
pub use crate::rng::RngState;
pub use crate::tensor::{Tape, Tensor, Var};

/// Stable SHA-256 hex digest of a value's canonical (sorted-key) JSON form.
pub fn config_hash<T: serde::Serialize>(value: &T) -> Result<String> {
    use sha2::{Digest, Sha256};
    let canonical = serde_json::to_string(&serde_json::to_value(value)?)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
