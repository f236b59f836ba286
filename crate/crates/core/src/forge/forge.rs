use super::recipe::{BoundingBox, ForgeMode, ForgeRecipe};
use crate::error::{Error, Result};
use crate::grid::LabelGrid;
use crate::jpeg::{compress_once, GridShift, LumaImage};
use crate::metrics::GroundTruth;
use crate::q1::{Q1Tensor, CENTRAL_BLOCK, DEFAULT_NC};

#[derive(Clone, Debug, PartialEq)]
pub struct ForgedSample {
    /// Final, double-compressed image.
    pub image: LumaImage,
    pub gt: GroundTruth,
    pub recipe: ForgeRecipe,
    pub oracle_tensor: Q1Tensor,
}

/// Region of every 8x8 block, decided by where the block center falls.
pub fn block_labels(rows: usize, cols: usize, boxes: &[BoundingBox]) -> LabelGrid {
    let (br, bc) = (rows / 8, cols / 8);
    let mut g = LabelGrid::new(br, bc);
    for by in 0..br {
        for bx in 0..bc {
            let (cy, cx) = (by * 8 + 4, bx * 8 + 4);
            if let Some(i) = boxes.iter().position(|b| b.contains(cy, cx)) {
                g.set(by, bx, i as u8 + 1);
            }
        }
    }
    g
}

/// Block labels sampled at the central block of every estimation window.
pub fn tensor_labels(blocks: &LabelGrid) -> LabelGrid {
    let rows = blocks.rows().saturating_sub(7);
    let cols = blocks.cols().saturating_sub(7);
    let mut g = LabelGrid::new(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            g.set(i, j, blocks.get(i + CENTRAL_BLOCK, j + CENTRAL_BLOCK));
        }
    }
    g
}

/// Builds one tampered (or pristine, k = 1) image: the background and each
/// donor get their own first compression, donor crops are pasted at their
/// boxes, and the composite is compressed once more on the aligned grid.
pub fn forge(src: &LumaImage, donors: &[LumaImage], recipe: &ForgeRecipe) -> Result<ForgedSample> {
    let (rows, cols) = (src.rows(), src.cols());
    if rows < 64 || cols < 64 {
        return Err(Error::invalid(format!(
            "source {rows}x{cols} smaller than one 64x64 window"
        )));
    }
    recipe.validate(rows, cols)?;
    if donors.len() != recipe.k - 1 {
        return Err(Error::invalid(format!("{} donors for k = {}", donors.len(), recipe.k)));
    }
    let mats = recipe.region_matrices()?;
    let q2 = recipe.qf2.matrix()?;

    let mut composite = compress_once(src, &mats[0], recipe.shifts[0])?;
    for (i, donor) in donors.iter().enumerate() {
        let r = i + 1;
        let b = recipe.boxes[i];
        let (oy, ox) = recipe.crop_origin(i);
        if oy + b.h > donor.rows() || ox + b.w > donor.cols() {
            return Err(Error::invalid(format!(
                "region {r}: crop {}x{} at ({oy},{ox}) outside donor {}x{}",
                b.h,
                b.w,
                donor.rows(),
                donor.cols()
            )));
        }
        let fg = match recipe.mode {
            ForgeMode::DjpegVsDjpeg => compress_once(donor, &mats[r], recipe.shifts[r])?,
            ForgeMode::DjpegVsSjpeg => donor.clone(),
        };
        for y in 0..b.h {
            for x in 0..b.w {
                composite.set(b.top + y, b.left + x, fg.get(oy + y, ox + x));
            }
        }
    }
    let image = compress_once(&composite, &q2, GridShift::ALIGNED)?;

    // a region compressed only once carries the final matrix as its history
    let region_q1 = match recipe.mode {
        ForgeMode::DjpegVsDjpeg => mats,
        ForgeMode::DjpegVsSjpeg => std::iter::once(mats[0].clone())
            .chain(std::iter::repeat(q2).take(recipe.k - 1))
            .collect(),
    };
    let labels = tensor_labels(&block_labels(rows, cols, &recipe.boxes));
    let gt = GroundTruth::new(labels, recipe.k, region_q1)?;
    let oracle_tensor = gt.oracle_tensor(DEFAULT_NC);
    Ok(ForgedSample {
        image,
        gt,
        recipe: recipe.clone(),
        oracle_tensor,
    })
}
