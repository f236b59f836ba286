use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// IJG base luminance table (quality 50), natural row-major order.
pub const BASE_LUMINANCE: [[u16; 8]; 8] = [
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
];

/// Natural (row-major) index of the n-th coefficient in zig-zag order.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21,
    28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54,
    47, 55, 62, 63,
];

/// An 8x8 table of quantization steps, each in `1..=255`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawQuantMatrix", into = "RawQuantMatrix")]
pub struct QuantMatrix {
    steps: [[u16; 8]; 8],
    label: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RawQuantMatrix {
    steps: Vec<Vec<u16>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl TryFrom<RawQuantMatrix> for QuantMatrix {
    type Error = Error;

    fn try_from(raw: RawQuantMatrix) -> Result<Self> {
        if raw.steps.len() != 8 || raw.steps.iter().any(|row| row.len() != 8) {
            return Err(Error::invalid("quantization matrix must be 8 rows of 8 steps"));
        }
        let mut steps = [[0u16; 8]; 8];
        for (dst, src) in steps.iter_mut().zip(&raw.steps) {
            dst.copy_from_slice(src);
        }
        let mut m = QuantMatrix::new(steps)?;
        m.label = raw.label;
        Ok(m)
    }
}

impl From<QuantMatrix> for RawQuantMatrix {
    fn from(m: QuantMatrix) -> Self {
        RawQuantMatrix {
            steps: m.steps.iter().map(|r| r.to_vec()).collect(),
            label: m.label,
        }
    }
}

impl QuantMatrix {
    pub fn new(steps: [[u16; 8]; 8]) -> Result<Self> {
        if let Some(bad) = steps.iter().flatten().find(|&&s| !(1..=255).contains(&s)) {
            return Err(Error::invalid(format!("quantization step {bad} outside 1..=255")));
        }
        Ok(Self { steps, label: None })
    }

    /// A matrix with every step equal to `step`.
    pub fn uniform(step: u16) -> Result<Self> {
        Self::new([[step; 8]; 8])
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn steps(&self) -> &[[u16; 8]; 8] {
        &self.steps
    }

    /// Step for natural index `idx = row * 8 + col`.
    #[inline]
    pub fn step(&self, idx: usize) -> u16 {
        self.steps[idx / 8][idx % 8]
    }

    /// All 64 steps in zig-zag order.
    pub fn zigzag(&self) -> [u16; 64] {
        let mut out = [0u16; 64];
        for (dst, &nat) in out.iter_mut().zip(ZIGZAG.iter()) {
            *dst = self.step(nat);
        }
        out
    }

    /// The first `n` zig-zag steps as reals, the estimation target.
    pub fn zigzag_prefix(&self, n: usize) -> Vec<f64> {
        self.zigzag()[..n.min(64)].iter().map(|&s| s as f64).collect()
    }

    /// Same step table, ignoring the label.
    pub fn same_steps(&self, other: &QuantMatrix) -> bool {
        self.steps == other.steps
    }
}

/// IJG quality scaling of the base luminance table.
pub fn quality_to_matrix(qf: u8) -> Result<QuantMatrix> {
    if !(1..=100).contains(&qf) {
        return Err(Error::invalid(format!("quality factor {qf} outside 1..=100")));
    }
    let qf = qf as u32;
    let scale = if qf < 50 { 5000 / qf } else { 200 - 2 * qf };
    let mut steps = [[0u16; 8]; 8];
    for (dst, src) in steps.iter_mut().flatten().zip(BASE_LUMINANCE.iter().flatten()) {
        let s = (*src as u32 * scale + 50) / 100;
        *dst = s.clamp(1, 255) as u16;
    }
    Ok(QuantMatrix {
        steps,
        label: Some(format!("QF={qf}")),
    })
}
