use std::path::PathBuf;

use super::classical::{estimate_blocks, ClassicalParams};
use super::tensor::{read_tensor, Q1Tensor, DEFAULT_NC};
use crate::error::{Error, Result};
use crate::jpeg::{block_coefficients, Block, GridShift, LumaImage};
use crate::metrics::GroundTruth;

/// Side of the square estimation window, in pixels.
pub const WINDOW: usize = 64;
/// Window-local block (row, col) that receives the window's estimate.
pub const CENTRAL_BLOCK: usize = 3;

/// Source of per-window primary-step estimates.
#[derive(Clone, Debug)]
pub enum EstimatorBackend {
    /// Ground truth of a forged sample; every block gets its region's steps.
    Oracle(GroundTruth),
    /// DCT-histogram periodicity on the aligned grid.
    Classical(ClassicalParams),
    /// Tensor produced elsewhere, read from a `Q1T1` file.
    External(PathBuf),
}

impl EstimatorBackend {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorBackend::Oracle(_) => "oracle",
            EstimatorBackend::Classical(_) => "classical",
            EstimatorBackend::External(_) => "external",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorOptions {
    pub nc: usize,
    /// Mirror-pad the border so every block of the image gets an estimate.
    pub mirror_pad: bool,
}

impl Default for TensorOptions {
    fn default() -> Self {
        Self {
            nc: DEFAULT_NC,
            mirror_pad: false,
        }
    }
}

fn padded(img: &LumaImage) -> LumaImage {
    let (lead, trail) = (CENTRAL_BLOCK * 8, (8 - CENTRAL_BLOCK - 1) * 8);
    let (rows, cols) = (img.rows() + lead + trail, img.cols() + lead + trail);
    let fold = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut j = i;
        while j < 0 || j >= n {
            j = if j < 0 { -1 - j } else { 2 * n - 1 - j };
        }
        j as usize
    };
    let mut data = Vec::with_capacity(rows * cols);
    for y in 0..rows {
        let sy = fold(y as isize - lead as isize, img.rows());
        for x in 0..cols {
            data.push(img.get(sy, fold(x as isize - lead as isize, img.cols())));
        }
    }
    LumaImage::new(rows, cols, data).expect("padding keeps multiples of 8")
}

/// Builds the Q1 tensor of `img` with the chosen backend.
pub fn estimate_tensor(img: &LumaImage, backend: &EstimatorBackend, opts: &TensorOptions) -> Result<Q1Tensor> {
    if opts.nc == 0 || opts.nc > 64 {
        return Err(Error::invalid(format!("nc = {} outside 1..=64", opts.nc)));
    }
    let source = if opts.mirror_pad { padded(img) } else { img.clone() };
    let (rows, cols) = Q1Tensor::expected_dims(source.rows(), source.cols()).ok_or_else(|| {
        Error::invalid(format!(
            "image {}x{} is smaller than one {WINDOW}x{WINDOW} window",
            img.rows(),
            img.cols()
        ))
    })?;

    match backend {
        EstimatorBackend::Oracle(gt) => {
            if (gt.labels.rows(), gt.labels.cols()) != (rows, cols) {
                return Err(Error::DimensionMismatch {
                    expected: format!("{rows}x{cols} ground-truth grid"),
                    found: format!("{}x{}", gt.labels.rows(), gt.labels.cols()),
                });
            }
            Ok(gt.oracle_tensor(opts.nc))
        }
        EstimatorBackend::External(path) => {
            let t = read_tensor(path)?;
            if t.shape() != (rows, cols, opts.nc) {
                let (r, c, n) = t.shape();
                return Err(Error::DimensionMismatch {
                    expected: format!("{rows}x{cols}x{} for {}", opts.nc, path.display()),
                    found: format!("{r}x{c}x{n}"),
                });
            }
            Ok(t)
        }
        EstimatorBackend::Classical(params) => {
            params.validate()?;
            let mut t = Q1Tensor::zeros(rows, cols, opts.nc);
            let nc = opts.nc;
            // windows sit on the block grid, so block transforms are shared
            let blocks = block_coefficients(&source, GridShift::ALIGNED);
            let per_row = source.cols() / 8;
            let side = WINDOW / 8;
            let fill_row = |i: usize, row: &mut [f32]| -> Result<()> {
                let mut win: Vec<&Block> = Vec::with_capacity(side * side);
                for j in 0..cols {
                    win.clear();
                    for a in 0..side {
                        let start = (i + a) * per_row + j;
                        win.extend(&blocks[start..start + side]);
                    }
                    let est = estimate_blocks(&win, params, nc);
                    for (dst, v) in row[j * nc..(j + 1) * nc].iter_mut().zip(est) {
                        *dst = v.round() as f32;
                    }
                }
                Ok(())
            };
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                let rows_mut: Vec<&mut [f32]> = t.rows_mut().collect();
                rows_mut
                    .into_par_iter()
                    .enumerate()
                    .try_for_each(|(i, row)| fill_row(i, row))?;
            }
            #[cfg(not(feature = "parallel"))]
            for (i, row) in t.rows_mut().enumerate() {
                fill_row(i, row)?;
            }
            Ok(t)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LabelGrid;
    use crate::jpeg::quality_to_matrix;

    #[test]
    fn tensor_shape_for_512() {
        assert_eq!(Q1Tensor::expected_dims(512, 512), Some((57, 57)));
        assert_eq!(Q1Tensor::expected_dims(64, 64), Some((1, 1)));
        assert_eq!(Q1Tensor::expected_dims(56, 512), None);
    }

    #[test]
    fn small_image_rejected() {
        let img = LumaImage::constant(56, 64, 0.0).unwrap();
        let be = EstimatorBackend::Classical(ClassicalParams::new(quality_to_matrix(90).unwrap()));
        assert!(estimate_tensor(&img, &be, &TensorOptions::default()).is_err());
    }

    #[test]
    fn oracle_matches_region_steps() {
        let mut labels = LabelGrid::new(5, 5);
        labels.set(2, 2, 1);
        let gt = GroundTruth::new(
            labels,
            2,
            vec![quality_to_matrix(95).unwrap(), quality_to_matrix(65).unwrap()],
        )
        .unwrap();
        let img = LumaImage::constant(96, 96, 0.0).unwrap();
        let t = estimate_tensor(&img, &EstimatorBackend::Oracle(gt), &TensorOptions::default()).unwrap();
        assert_eq!(t.shape(), (5, 5, 15));
        let want: Vec<f32> = quality_to_matrix(65)
            .unwrap()
            .zigzag_prefix(15)
            .iter()
            .map(|&v| v as f32)
            .collect();
        assert_eq!(t.vector(2, 2), &want[..]);
        assert_ne!(t.vector(0, 0), &want[..]);
    }

    #[test]
    fn mirror_pad_covers_every_block() {
        let img = LumaImage::constant(64, 80, 5.0).unwrap();
        let be = EstimatorBackend::Classical(ClassicalParams::new(quality_to_matrix(90).unwrap()));
        let opts = TensorOptions {
            mirror_pad: true,
            ..Default::default()
        };
        let t = estimate_tensor(&img, &be, &opts).unwrap();
        assert_eq!((t.rows(), t.cols()), (8, 10));
    }

    #[test]
    fn external_dims_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.q1t");
        super::super::write_tensor(&Q1Tensor::zeros(3, 3, 15), &p, "t").unwrap();
        let img = LumaImage::constant(80, 80, 0.0).unwrap();
        let ok = estimate_tensor(&img, &EstimatorBackend::External(p.clone()), &TensorOptions::default());
        assert_eq!(ok.unwrap().shape(), (3, 3, 15));
        let img = LumaImage::constant(96, 80, 0.0).unwrap();
        let err = estimate_tensor(&img, &EstimatorBackend::External(p), &TensorOptions::default()).unwrap_err();
        assert!(err.to_string().contains("5x3x15"), "{err}");
        assert!(err.to_string().contains("3x3x15"), "{err}");
    }
}
