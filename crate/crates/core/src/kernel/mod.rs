//! Dense `f64` arrays, a tape-based reverse-mode differentiator, Xavier
//! initialization, Adam, finite-difference gradient checks and a binary
//! checkpoint format.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod init;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gradcheck::{check_gradients, compare_gradients, relative_error};
pub use graph::{Gradients, Graph, Var};
pub use init::xavier_init;
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {0:?} has a zero extent")]
    ZeroExtent(Vec<usize>),
    #[error("index {index} out of range for {rows} rows in {op}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        rows: usize,
    },
    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}
