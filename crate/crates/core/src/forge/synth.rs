//! Procedural stand-ins for camera images: a smooth random field with
//! edges plus sensor-like noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::jpeg::LumaImage;

/// Standard deviation of the per-pixel noise, in grey levels.
pub const NOISE_SIGMA: f64 = 20.0;

pub fn synthetic_image(seed: u64, rows: usize, cols: usize) -> Result<LumaImage> {
    if rows == 0 || cols == 0 || rows % 8 != 0 || cols % 8 != 0 {
        return Err(Error::invalid(format!(
            "synthetic image {rows}x{cols} must have sides multiple of 8"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let amp = rng.gen_range(5.0..14.0);
            let fy = rng.gen_range(0.002..0.03) * std::f64::consts::TAU;
            let fx = rng.gen_range(0.002..0.03) * std::f64::consts::TAU;
            (amp, fy, fx, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    // a few flat-shaded half-planes give the field edges
    let edges: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let theta = rng.gen_range(0.0..std::f64::consts::PI);
            let off = rng.gen_range(0.0..(rows + cols) as f64 / 2.0);
            (theta.cos(), theta.sin(), off, rng.gen_range(-15.0..15.0))
        })
        .collect();
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("positive sigma");
    let mut data = Vec::with_capacity(rows * cols);
    for y in 0..rows {
        for x in 0..cols {
            let (yf, xf) = (y as f64, x as f64);
            let mut v: f64 = waves
                .iter()
                .map(|&(a, fy, fx, ph)| a * (fy * yf + fx * xf + ph).sin())
                .sum();
            for &(cy, cx, off, step) in &edges {
                if cy * yf + cx * xf > off {
                    v += step;
                }
            }
            v += noise.sample(&mut rng);
            data.push(v.round().clamp(-128.0, 127.0));
        }
    }
    LumaImage::new(rows, cols, data)
}

/// Parses `synth:SEED:HxW`.
pub fn parse_synthetic_source(spec: &str) -> Option<Result<(u64, usize, usize)>> {
    let rest = spec.strip_prefix("synth:")?;
    let parsed = (|| {
        let (seed, dims) = rest.split_once(':')?;
        let (h, w) = dims.split_once('x')?;
        Some((seed.parse().ok()?, h.parse().ok()?, w.parse().ok()?))
    })();
    Some(parsed.ok_or_else(|| Error::invalid(format!("malformed synthetic source `{spec}`, expected synth:SEED:HxW"))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = synthetic_image(4, 64, 72).unwrap();
        assert_eq!(a, synthetic_image(4, 64, 72).unwrap());
        assert_ne!(a, synthetic_image(5, 64, 72).unwrap());
        let clipped = a.as_slice().iter().filter(|v| v.abs() >= 127.0).count();
        assert!(clipped * 1000 < a.as_slice().len());
    }

    #[test]
    fn source_specs() {
        assert_eq!(
            parse_synthetic_source("synth:7:256x128").unwrap().unwrap(),
            (7, 256, 128)
        );
        assert!(parse_synthetic_source("synth:7:256").unwrap().is_err());
        assert!(parse_synthetic_source("photo.png").is_none());
    }
}
