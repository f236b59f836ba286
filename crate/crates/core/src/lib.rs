//! Detection, localization and donor attribution of spliced regions in
//! double-compressed JPEG images, from per-block estimates of the primary
//! quantization table.

#[cfg(feature = "io")]
pub mod bench;
pub mod cluster;
pub mod error;
pub mod forge;
pub mod grid;
#[cfg(feature = "io")]
pub mod io;
pub mod jpeg;
pub mod metrics;
pub mod pipeline;
pub mod q1;
pub mod refine;

pub use error::{Error, Result};
pub use grid::LabelGrid;
