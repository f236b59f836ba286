use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NC: usize = 15;
pub const MAGIC: &[u8; 4] = b"Q1T1";
const HEADER_LEN: usize = 16;

/// Field of estimated primary quantization steps, one `nc`-vector per block
/// of the `rows`x`cols` analysis grid. Values are kept as produced by the
/// backend and rounded on read-out.
#[derive(Clone, Debug, PartialEq)]
pub struct Q1Tensor {
    rows: usize,
    cols: usize,
    nc: usize,
    stride: usize,
    data: Vec<f32>,
}

impl Q1Tensor {
    pub fn zeros(rows: usize, cols: usize, nc: usize) -> Self {
        Self {
            rows,
            cols,
            nc,
            stride: 8,
            data: vec![0.0; rows * cols * nc],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, nc: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols * nc {
            return Err(Error::DimensionMismatch {
                expected: format!("{rows}x{cols}x{nc}"),
                found: format!("{} values", data.len()),
            });
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!(
                "tensor entry {v} is not a finite non-negative value"
            )));
        }
        Ok(Self {
            rows,
            cols,
            nc,
            stride: 8,
            data,
        })
    }

    /// Grid of window positions for an `image_rows`x`image_cols` input.
    pub fn expected_dims(image_rows: usize, image_cols: usize) -> Option<(usize, usize)> {
        if image_rows < 64 || image_cols < 64 {
            return None;
        }
        Some((image_rows / 8 - 7, image_cols / 8 - 7))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.nc)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn vector(&self, i: usize, j: usize) -> &[f32] {
        let o = (i * self.cols + j) * self.nc;
        &self.data[o..o + self.nc]
    }

    pub fn set_vector(&mut self, i: usize, j: usize, v: &[f32]) {
        let o = (i * self.cols + j) * self.nc;
        self.data[o..o + self.nc].copy_from_slice(&v[..self.nc]);
    }

    pub(crate) fn rows_mut(&mut self) -> std::slice::ChunksMut<'_, f32> {
        let n = self.cols * self.nc;
        self.data.chunks_mut(n)
    }

    /// Element-wise rounded vector as used by the clustering stage.
    pub fn rounded_vector(&self, i: usize, j: usize) -> Vec<f64> {
        self.vector(i, j).iter().map(|&v| (v as f64).round()).collect()
    }

    /// Values of one zig-zag band as a `rows`x`cols` plane.
    pub fn band(&self, v: usize) -> Vec<f32> {
        self.data.iter().skip(v).step_by(self.nc).copied().collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        for d in [self.rows, self.cols, self.nc] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Format {
                field: "magic",
                reason: format!("file truncated at {} bytes", bytes.len()),
            });
        }
        let magic = &bytes[..4];
        if magic != MAGIC {
            let reason = if &magic[..3] == b"Q1T" {
                format!("unsupported version {:?}", magic[3] as char)
            } else {
                format!("bad magic {magic:?}")
            };
            return Err(Error::Format { field: "magic", reason });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format {
                field: "header",
                reason: format!("header truncated at {} bytes", bytes.len()),
            });
        }
        let dim = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (rows, cols, nc) = (dim(4), dim(8), dim(12));
        let count = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(nc))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format {
                field: "dims",
                reason: format!("{rows}x{cols}x{nc} overflows"),
            })?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != count {
            return Err(Error::Format {
                field: "data",
                reason: format!("expected {count} bytes for {rows}x{cols}x{nc}, found {}", body.len()),
            });
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            rows,
            cols,
            nc,
            stride: 8,
            data,
        })
    }
}

/// JSON metadata stored next to a tensor file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorSidecar {
    pub stride: usize,
    pub window: usize,
    pub source: String,
    pub rounded: bool,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the binary tensor and its `<path>.json` sidecar.
pub fn write_tensor(t: &Q1Tensor, path: &Path, source: &str) -> Result<()> {
    fs::write(path, t.to_bytes()).map_err(|e| Error::io(path, e))?;
    let sidecar = TensorSidecar {
        stride: t.stride,
        window: 64,
        source: source.to_string(),
        rounded: t.data.iter().all(|v| v.fract() == 0.0),
    };
    let sp = sidecar_path(path);
    fs::write(&sp, serde_json::to_vec_pretty(&sidecar)?).map_err(|e| Error::io(sp, e))
}

/// Reads a tensor file; the sidecar, when present, supplies the stride.
pub fn read_tensor(path: &Path) -> Result<Q1Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut t = Q1Tensor::from_bytes(&bytes)?;
    if let Ok(meta) = fs::read(sidecar_path(path)) {
        let meta: TensorSidecar = serde_json::from_slice(&meta)?;
        t.stride = meta.stride;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn file_size_for_512_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.q1t");
        let t = Q1Tensor::zeros(57, 57, 15);
        write_tensor(&t, &p, "test").unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 194_956);
        assert_eq!(read_tensor(&p).unwrap(), t);
        assert!(sidecar_path(&p).exists());
    }

    #[test]
    fn old_version_is_rejected() {
        let mut b = Q1Tensor::zeros(1, 1, 1).to_bytes();
        b[3] = b'0';
        let err = Q1Tensor::from_bytes(&b).unwrap_err().to_string();
        assert!(err.contains("unsupported version"), "{err}");
        assert!(err.contains("magic"));
    }

    #[test]
    fn truncation_names_field() {
        let b = Q1Tensor::zeros(2, 2, 3).to_bytes();
        let err = Q1Tensor::from_bytes(&b[..b.len() - 1]).unwrap_err().to_string();
        assert!(err.contains("`data`"), "{err}");
        let err = Q1Tensor::from_bytes(&b[..10]).unwrap_err().to_string();
        assert!(err.contains("`header`"), "{err}");
    }

    #[test]
    fn huge_dims_overflow() {
        let mut b = MAGIC.to_vec();
        for _ in 0..3 {
            b.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        let err = Q1Tensor::from_bytes(&b).unwrap_err();
        assert!(matches!(
            err,
            Error::Format {
                field: "dims" | "data",
                ..
            }
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_tensor(Path::new("/nonexistent/x.q1t")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn bytes_round_trip(rows in 1usize..6, cols in 1usize..6, nc in 1usize..16, seed in any::<u64>()) {
            let n = rows * cols * nc;
            let data: Vec<f32> = (0..n).map(|i| ((seed.wrapping_mul(i as u64 + 1) >> 40) as f32) / 7.0).collect();
            let t = Q1Tensor::from_vec(rows, cols, nc, data).unwrap();
            prop_assert_eq!(Q1Tensor::from_bytes(&t.to_bytes()).unwrap(), t);
        }
    }
}
