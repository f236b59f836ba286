//! Per-block estimation of the primary quantization steps.
//!
//! A 64x64 window slides over the image with stride 8 and each window's
//! estimate of the first `nc` zig-zag steps is written at the position of the
//! window's block (3,3). Three interchangeable backends produce the estimates.

mod classical;
mod estimate;
mod tensor;

pub use classical::{
    classical_estimate_window, lattice_estimate, periodicity_argmax, periodicity_score, ClassicalParams, LatticeModel,
};
pub use estimate::{estimate_tensor, EstimatorBackend, TensorOptions, CENTRAL_BLOCK, WINDOW};
pub use tensor::{read_tensor, write_tensor, Q1Tensor, TensorSidecar, DEFAULT_NC, MAGIC};
