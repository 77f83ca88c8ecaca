//! The hierarchical preconditioner: packed factor storage, the apply chain
//! and a dense assembly oracle.

mod apply;
mod checkpoint;
mod dense;
mod tensor;

pub use apply::{apply, apply_into, ApplyWorkspace, FactorApplier};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC};
pub use dense::{apply_transposed_tiles_check, assemble_dense};
pub use tensor::{init_factors, FactorTensor, InitMode};
