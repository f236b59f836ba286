//! Synthetic tampered and pristine double-JPEG fixtures with ground truth.

#[cfg(feature = "io")]
pub mod batch;
mod forge;
mod recipe;
mod synth;

pub use forge::{block_labels, forge, tensor_labels, ForgedSample};
pub use recipe::{
    min_separation, sample_recipe, BoundingBox, ForgeMode, ForgeRecipe, Quality, SamplingRule, TamperType,
    BACKGROUND_QFS, BOX_SIDES, DEFAULT_QF2, MARGIN_LEAD, MARGIN_TRAIL, QF_SET,
};
pub use synth::{parse_synthetic_source, synthetic_image, NOISE_SIGMA};
