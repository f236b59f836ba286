use serde::{Deserialize, Serialize};

use super::dct::{forward_dct, inverse_dct, Block};
use super::quant::QuantMatrix;
use crate::error::{Error, Result};

/// Offset of a compression grid relative to the image origin, in pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "(u8, u8)", into = "(u8, u8)")]
pub struct GridShift {
    r: u8,
    c: u8,
}

impl GridShift {
    pub const ALIGNED: GridShift = GridShift { r: 0, c: 0 };

    pub fn new(r: u8, c: u8) -> Result<Self> {
        if r > 7 || c > 7 {
            return Err(Error::invalid(format!("grid shift ({r},{c}) outside 0..=7")));
        }
        Ok(Self { r, c })
    }

    pub fn r(&self) -> usize {
        self.r as usize
    }

    pub fn c(&self) -> usize {
        self.c as usize
    }

    pub fn is_aligned(&self) -> bool {
        self.r == 0 && self.c == 0
    }
}

impl TryFrom<(u8, u8)> for GridShift {
    type Error = Error;
    fn try_from((r, c): (u8, u8)) -> Result<Self> {
        GridShift::new(r, c)
    }
}

impl From<GridShift> for (u8, u8) {
    fn from(s: GridShift) -> Self {
        (s.r, s.c)
    }
}

/// Level-shifted luminance plane (nominal range -128..127) whose sides are
/// multiples of 8.
#[derive(Clone, Debug, PartialEq)]
pub struct LumaImage {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl LumaImage {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || rows % 8 != 0 || cols % 8 != 0 {
            return Err(Error::invalid(format!(
                "image {rows}x{cols} is not a non-empty multiple of 8"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{} samples", rows * cols),
                found: format!("{} samples", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    /// Builds from 8-bit samples, cropping the bottom/right edge to a
    /// multiple of 8.
    pub fn from_u8_cropped(rows: usize, cols: usize, samples: &[u8]) -> Result<Self> {
        if samples.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{} samples", rows * cols),
                found: format!("{} samples", samples.len()),
            });
        }
        let (r8, c8) = (rows / 8 * 8, cols / 8 * 8);
        let mut data = Vec::with_capacity(r8 * c8);
        for y in 0..r8 {
            data.extend(samples[y * cols..y * cols + c8].iter().map(|&v| v as f64 - 128.0));
        }
        Self::new(r8, c8, data)
    }

    /// Samples shifted back to 0..=255 and rounded.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v + 128.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.cols + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.cols + x] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copy of the `h`x`w` region at (`top`, `left`); `h` and `w` must be
    /// multiples of 8.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<LumaImage> {
        if top + h > self.rows || left + w > self.cols {
            return Err(Error::invalid(format!(
                "crop {h}x{w} at ({top},{left}) exceeds {}x{}",
                self.rows, self.cols
            )));
        }
        let mut data = Vec::with_capacity(h * w);
        for y in top..top + h {
            data.extend_from_slice(&self.data[y * self.cols + left..y * self.cols + left + w]);
        }
        LumaImage::new(h, w, data)
    }

    fn block(&self, by: usize, bx: usize) -> Block {
        let mut b = [0.0; 64];
        for y in 0..8 {
            let row = (by * 8 + y) * self.cols + bx * 8;
            b[y * 8..y * 8 + 8].copy_from_slice(&self.data[row..row + 8]);
        }
        b
    }
}

/// Reflects an index into `0..n` (half-sample symmetric).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -1 - i
    } else if i >= n {
        2 * n - 1 - i
    } else {
        i
    };
    j.clamp(0, n - 1) as usize
}

/// Image translated so the grid origin at `shift` lands on (0,0); the
/// bottom/right strip vacated by the translation is mirror-padded.
fn shifted(img: &LumaImage, shift: GridShift) -> LumaImage {
    if shift.is_aligned() {
        return img.clone();
    }
    let (rows, cols) = (img.rows, img.cols);
    let mut data = Vec::with_capacity(rows * cols);
    for y in 0..rows {
        let sy = reflect((y + shift.r()) as isize, rows);
        for x in 0..cols {
            data.push(img.get(sy, reflect((x + shift.c()) as isize, cols)));
        }
    }
    LumaImage { rows, cols, data }
}

fn unshifted(img: &LumaImage, shift: GridShift) -> LumaImage {
    if shift.is_aligned() {
        return img.clone();
    }
    let (rows, cols) = (img.rows, img.cols);
    let mut data = Vec::with_capacity(rows * cols);
    for y in 0..rows {
        let sy = reflect(y as isize - shift.r() as isize, rows);
        for x in 0..cols {
            data.push(img.get(sy, reflect(x as isize - shift.c() as isize, cols)));
        }
    }
    LumaImage { rows, cols, data }
}

/// Blockwise DCT coefficients on the grid with origin at `shift`, row-major
/// over blocks. Blocks touching the mirror-padded strip are included.
pub fn block_coefficients(img: &LumaImage, shift: GridShift) -> Vec<Block> {
    let work = shifted(img, shift);
    let (br, bc) = (work.rows / 8, work.cols / 8);
    let mut out = Vec::with_capacity(br * bc);
    for by in 0..br {
        for bx in 0..bc {
            out.push(forward_dct(&work.block(by, bx)));
        }
    }
    out
}

/// One JPEG compression pass simulated in the pixel domain: quantize every
/// block on the grid at `shift` by `q`, reconstruct, and store as clipped
/// integers.
pub fn compress_once(img: &LumaImage, q: &QuantMatrix, shift: GridShift) -> Result<LumaImage> {
    if img.rows % 8 != 0 || img.cols % 8 != 0 {
        return Err(Error::invalid("image sides must be multiples of 8"));
    }
    let mut work = shifted(img, shift);
    let (br, bc) = (work.rows / 8, work.cols / 8);
    for by in 0..br {
        for bx in 0..bc {
            let mut coefs = forward_dct(&work.block(by, bx));
            for (i, c) in coefs.iter_mut().enumerate() {
                let s = q.step(i) as f64;
                *c = (*c / s).round() * s;
            }
            let pix = inverse_dct(&coefs);
            for y in 0..8 {
                for x in 0..8 {
                    let v = pix[y * 8 + x].round().clamp(-128.0, 127.0);
                    work.set(by * 8 + y, bx * 8 + x, v);
                }
            }
        }
    }
    Ok(unshifted(&work, shift))
}

/// First pass with (`q1`, `shift1`), second pass with `q2` on the aligned
/// grid.
pub fn double_compress(img: &LumaImage, q1: &QuantMatrix, shift1: GridShift, q2: &QuantMatrix) -> Result<LumaImage> {
    let first = compress_once(img, q1, shift1)?;
    compress_once(&first, q2, GridShift::ALIGNED)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jpeg::quality_to_matrix;
    use rand::{Rng, SeedableRng};

    fn noise_image(rows: usize, cols: usize, seed: u64) -> LumaImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-90.0..90.0f64).round())
            .collect();
        LumaImage::new(rows, cols, data).unwrap()
    }

    #[test]
    fn unit_quantizer_is_near_identity() {
        let img = noise_image(64, 64, 1);
        let out = compress_once(&img, &QuantMatrix::uniform(1).unwrap(), GridShift::ALIGNED).unwrap();
        for (a, b) in img.as_slice().iter().zip(out.as_slice()) {
            assert!((a - b).abs() <= 1.0);
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = LumaImage::constant(32, 32, 37.0).unwrap();
        let q = quality_to_matrix(50).unwrap();
        let out = compress_once(&img, &q, GridShift::ALIGNED).unwrap();
        // DC = 8 * 37 = 296, step 16 -> 18 * 16 = 288 -> pixel 36
        let expected = ((8.0f64 * 37.0 / 16.0).round() * 16.0 / 8.0).round();
        assert!(out.as_slice().iter().all(|&v| v == expected));
    }

    #[test]
    fn recompression_leaves_step_multiples() {
        let img = noise_image(64, 64, 2);
        let q = quality_to_matrix(75).unwrap();
        let once = compress_once(&img, &q, GridShift::ALIGNED).unwrap();
        let twice = compress_once(&once, &q, GridShift::ALIGNED).unwrap();
        let coefs = block_coefficients(&twice, GridShift::ALIGNED);
        assert_eq!(coefs.len(), 64);
        let mut off_lattice = 0;
        for blk in &coefs {
            for (i, c) in blk.iter().enumerate() {
                let s = q.step(i) as f64;
                let d = (c / s - (c / s).round()).abs() * s;
                // pixel rounding noise only
                if d > 1.5 {
                    off_lattice += 1;
                }
            }
        }
        assert_eq!(off_lattice, 0);
    }

    #[test]
    fn same_matrix_twice_is_stable() {
        let img = noise_image(64, 64, 3);
        let q = quality_to_matrix(90).unwrap();
        let dj = double_compress(&img, &q, GridShift::ALIGNED, &q).unwrap();
        let third = compress_once(&dj, &q, GridShift::ALIGNED).unwrap();
        let a = block_coefficients(&dj, GridShift::ALIGNED);
        let b = block_coefficients(&third, GridShift::ALIGNED);
        for (ba, bb) in a.iter().zip(&b) {
            for (i, (x, y)) in ba.iter().zip(bb.iter()).enumerate() {
                let s = q.step(i) as f64;
                assert!(((x / s).round() - (y / s).round()).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn shift_round_trip_restores_interior() {
        let img = noise_image(48, 40, 4);
        let s = GridShift::new(3, 5).unwrap();
        let back = unshifted(&shifted(&img, s), s);
        for y in s.r()..48 {
            for x in s.c()..40 {
                assert_eq!(img.get(y, x), back.get(y, x));
            }
        }
    }

    #[test]
    fn rejects_bad_shift_and_dims() {
        assert!(GridShift::new(8, 0).is_err());
        assert!(LumaImage::new(12, 16, vec![0.0; 12 * 16]).is_err());
        assert!(LumaImage::new(16, 16, vec![0.0; 10]).is_err());
    }
}
