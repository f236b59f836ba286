use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jpeg::{block_coefficients, Block, GridShift, LumaImage, QuantMatrix, ZIGZAG};

/// Settings of the histogram-periodicity estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalParams {
    /// Matrix of the last compression.
    pub q2: QuantMatrix,
    /// Largest candidate step.
    pub qmax: u16,
    pub include_dc: bool,
    pub include_ac: bool,
    #[serde(default)]
    pub model: LatticeModel,
}

/// Noise model of [`lattice_estimate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeModel {
    /// Probability that a level ignores the candidate lattice.
    pub outlier_mass: f64,
    /// Log-likelihood lead over `q = 1` a coarser step must earn.
    pub min_log_ratio: f64,
    /// Fewer non-zero levels than this carry no usable periodicity.
    pub min_nonzero: usize,
}

impl Default for LatticeModel {
    fn default() -> Self {
        Self {
            outlier_mass: 0.1,
            min_log_ratio: 8.0,
            min_nonzero: 3,
        }
    }
}

impl ClassicalParams {
    pub fn new(q2: QuantMatrix) -> Self {
        Self {
            q2,
            qmax: 24,
            include_dc: true,
            include_ac: true,
            model: LatticeModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.qmax < 2 {
            return Err(Error::invalid("classical estimator needs qmax >= 2"));
        }
        let m = &self.model;
        if !(0.0..1.0).contains(&m.outlier_mass) || m.outlier_mass == 0.0 || !(m.min_log_ratio >= 0.0) {
            return Err(Error::invalid(
                "lattice model needs outlier_mass in (0,1) and min_log_ratio >= 0",
            ));
        }
        Ok(())
    }
}

/// Periodicity score of `coeffs` against the lattice `q Z`: each coefficient
/// contributes `max(0, 1 - 2d/q)` where `d` is its distance to the nearest
/// multiple of `q`.
pub fn periodicity_score(coeffs: &[f64], q: u16) -> f64 {
    let q = q as f64;
    coeffs
        .iter()
        .map(|&c| {
            let d = (c - q * (c / q).round()).abs();
            (1.0 - 2.0 * d / q).max(0.0)
        })
        .sum()
}

/// Candidate in `1..=qmax` with the best [`periodicity_score`]; ties go to
/// the smaller step.
pub fn periodicity_argmax(coeffs: &[f64], qmax: u16) -> u16 {
    let mut best = (1u16, f64::NEG_INFINITY);
    for q in 1..=qmax.max(1) {
        let s = periodicity_score(coeffs, q);
        if s > best.1 + 1e-9 {
            best = (q, s);
        }
    }
    best.0
}

// Rounding noise of the stored pixels, in DCT units, tolerated when mapping
// a first-pass lattice point through the second quantizer.
const LATTICE_SLACK: f64 = 0.6;

/// Estimates the first-pass step from the integer levels `round(y / q2)`
/// observed at one frequency of an aligned double compression.
///
/// A candidate `q` predicts that levels only take values in
/// `{ round((q m + t) / q2) }` for integer `m` and small rounding slack `t`.
/// Candidates are ranked by the likelihood of the non-zero levels under a
/// uniform draw from the predicted set mixed with a small uniform outlier
/// term, so the sparsest set that explains the data wins. Candidates whose
/// sets cover every integer (including all `q <= q2`) tie, and ties go to
/// the smaller step. A winner that does not beat `q = 1` by
/// `model.min_log_ratio` falls back to 1.
pub fn lattice_estimate(levels: &[i64], q2: u16, qmax: u16, model: &LatticeModel) -> u16 {
    let nz: Vec<i64> = levels.iter().copied().filter(|&l| l != 0).collect();
    if nz.len() < model.min_nonzero.max(1) {
        return 1;
    }
    let hi = nz.iter().map(|l| l.abs()).max().unwrap() + 1;
    let width = (2 * hi + 1) as usize;
    let q2f = q2 as f64;
    let mut reach = vec![false; width];
    let mut best = (1u16, f64::NEG_INFINITY);
    let mut ll_one = 0.0;
    for q in 1..=qmax.max(1) {
        if q > 1 && q <= q2 {
            // steps no coarser than q2 reach every level, same as q = 1
            continue;
        }
        reach.iter_mut().for_each(|r| *r = false);
        let qf = q as f64;
        let m_max = ((hi as f64 + 1.0) * q2f / qf).ceil() as i64 + 1;
        for m in -m_max..=m_max {
            for t in [-LATTICE_SLACK, 0.0, LATTICE_SLACK] {
                let l = ((qf * m as f64 + t) / q2f).round() as i64;
                if l.abs() <= hi {
                    reach[(l + hi) as usize] = true;
                }
            }
        }
        let support = reach.iter().filter(|&&r| r).count() as f64;
        let inside = ((1.0 - model.outlier_mass) / support).ln();
        let outside = (model.outlier_mass / width as f64).ln();
        let ll: f64 = nz
            .iter()
            .map(|&l| if reach[(l + hi) as usize] { inside } else { outside })
            .sum();
        if q == 1 {
            ll_one = ll;
        }
        if ll > best.1 + 1e-9 {
            best = (q, ll);
        }
    }
    if best.1 - ll_one < model.min_log_ratio {
        1
    } else {
        best.0
    }
}

/// Classical estimate of the first `nc` zig-zag steps of one aligned 64x64
/// window, given the matrix of the last compression.
pub fn classical_estimate_window(window: &LumaImage, params: &ClassicalParams, nc: usize) -> Result<Vec<f64>> {
    if window.rows() != 64 || window.cols() != 64 {
        return Err(Error::invalid(format!(
            "classical window must be 64x64, got {}x{}",
            window.rows(),
            window.cols()
        )));
    }
    params.validate()?;
    let blocks = block_coefficients(window, GridShift::ALIGNED);
    let refs: Vec<&Block> = blocks.iter().collect();
    Ok(estimate_blocks(&refs, params, nc))
}

/// Estimate from the aligned-grid DCT blocks of one window.
pub(crate) fn estimate_blocks(blocks: &[&Block], params: &ClassicalParams, nc: usize) -> Vec<f64> {
    let mut levels = Vec::with_capacity(blocks.len());
    let mut out = Vec::with_capacity(nc);
    for (v, &nat) in ZIGZAG.iter().take(nc).enumerate() {
        let wanted = if v == 0 { params.include_dc } else { params.include_ac };
        if !wanted {
            out.push(0.0);
            continue;
        }
        let s2 = params.q2.step(nat);
        levels.clear();
        levels.extend(blocks.iter().map(|b| (b[nat] / s2 as f64).round() as i64));
        out.push(lattice_estimate(&levels, s2, params.qmax, &params.model) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jpeg::{double_compress, quality_to_matrix};
    use rand::{Rng, SeedableRng};

    /// Independent brute-force score table.
    fn score_table(coeffs: &[f64], qmax: u16) -> Vec<f64> {
        (1..=qmax)
            .map(|q| {
                let q = q as f64;
                let mut total = 0.0;
                for &c in coeffs {
                    let mut d = f64::INFINITY;
                    let mut k = (c / q).floor() - 1.0;
                    while k <= (c / q).ceil() + 1.0 {
                        d = d.min((c - k * q).abs());
                        k += 1.0;
                    }
                    total += f64::max(0.0, 1.0 - 2.0 * d / q);
                }
                total
            })
            .collect()
    }

    #[test]
    fn multiples_of_seven_with_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let coeffs: Vec<f64> = (0..64)
            .map(|_| 7.0 * rng.gen_range(-6i32..=6) as f64 + rng.gen_range(-0.99..0.99))
            .collect();
        let table = score_table(&coeffs, 20);
        let oracle = 1 + table
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |b, (i, &s)| if s > b.1 + 1e-9 { (i, s) } else { b },
            )
            .0 as u16;
        assert_eq!(oracle, 7);
        assert_eq!(periodicity_argmax(&coeffs, 20), 7);
        for q in 1..=20u16 {
            assert!((periodicity_score(&coeffs, q) - table[q as usize - 1]).abs() < 1e-9);
        }
    }

    /// Likelihood search without shortcuts.
    fn lattice_reference(levels: &[i64], q2: u16, qmax: u16, model: &LatticeModel) -> u16 {
        let nz: Vec<i64> = levels.iter().copied().filter(|&l| l != 0).collect();
        if nz.len() < model.min_nonzero {
            return 1;
        }
        let hi = nz.iter().map(|l| l.abs()).max().unwrap() + 1;
        let width = (2 * hi + 1) as f64;
        let reachable = |q: f64, l: i64| {
            (-2000..=2000).any(|m: i64| {
                [-0.6, 0.0, 0.6]
                    .iter()
                    .any(|t| ((q * m as f64 + t) / q2 as f64).round() as i64 == l)
            })
        };
        let lls: Vec<f64> = (1..=qmax)
            .map(|q| {
                let q = q as f64;
                let support = (-hi..=hi).filter(|&l| reachable(q, l)).count() as f64;
                nz.iter()
                    .map(|&l| {
                        if reachable(q, l) {
                            ((1.0 - model.outlier_mass) / support).ln()
                        } else {
                            (model.outlier_mass / width).ln()
                        }
                    })
                    .sum()
            })
            .collect();
        let mut best = 0;
        for (i, &ll) in lls.iter().enumerate() {
            if ll > lls[best] + 1e-9 {
                best = i;
            }
        }
        if lls[best] - lls[0] < model.min_log_ratio {
            1
        } else {
            best as u16 + 1
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn lattice_matches_reference(
            q1 in 1u16..20,
            q2 in 1u16..6,
            ms in proptest::collection::vec(-8i64..=8, 10..64),
            noise in proptest::collection::vec(-3i64..=3, 0..6),
            ratio in 0.0f64..6.0,
        ) {
            let mut levels: Vec<i64> = ms
                .iter()
                .map(|&m| ((q1 as f64 * m as f64) / q2 as f64).round() as i64)
                .collect();
            levels.extend(noise);
            let model = LatticeModel { min_log_ratio: ratio, ..LatticeModel::default() };
            proptest::prop_assert_eq!(
                lattice_estimate(&levels, q2, 20, &model),
                lattice_reference(&levels, q2, 20, &model)
            );
        }
    }

    #[test]
    fn all_zero_ties_to_one() {
        let z = vec![0.0; 64];
        assert_eq!(periodicity_score(&z, 1), 64.0);
        assert_eq!(periodicity_score(&z, 13), 64.0);
        assert_eq!(periodicity_argmax(&z, 20), 1);
        assert_eq!(lattice_estimate(&[0; 64], 3, 20, &LatticeModel::default()), 1);
    }

    #[test]
    fn divisors_tie_on_exact_multiples() {
        let c: Vec<f64> = (-8..8).map(|k| 4.0 * k as f64).collect();
        for q in [1, 2, 4] {
            assert_eq!(periodicity_score(&c, q), c.len() as f64);
        }
        assert_eq!(periodicity_argmax(&c, 20), 1);
    }

    #[test]
    fn lattice_recovers_coarse_first_step() {
        // levels of x = 11 m requantized with step 3
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let levels: Vec<i64> = (0..64)
            .map(|_| {
                let m = rng.gen_range(-9i64..=9);
                ((11 * m) as f64 / 3.0 + rng.gen_range(-0.05..0.05)).round() as i64
            })
            .collect();
        assert_eq!(lattice_estimate(&levels, 3, 24, &LatticeModel::default()), 11);
    }

    #[test]
    fn lattice_prime_step_without_divisors() {
        // q* = 7 has no divisor > 1 in range, so the estimate is exact
        let levels: Vec<i64> = (-10..=10).map(|m| ((7 * m) as f64 / 2.0).round() as i64).collect();
        assert_eq!(lattice_estimate(&levels, 2, 20, &LatticeModel::default()), 7);
    }

    #[test]
    fn window_must_be_64() {
        let img = LumaImage::constant(32, 32, 0.0).unwrap();
        let p = ClassicalParams::new(quality_to_matrix(90).unwrap());
        assert!(classical_estimate_window(&img, &p, 15).is_err());
        let mut bad = p.clone();
        bad.qmax = 1;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn aligned_double_compression_window() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let data = (0..64 * 64).map(|_| rng.gen_range(-60.0..60.0f64).round()).collect();
        let img = LumaImage::new(64, 64, data).unwrap();
        let q1 = quality_to_matrix(65).unwrap();
        let q2 = quality_to_matrix(90).unwrap();
        let dj = double_compress(&img, &q1, GridShift::ALIGNED, &q2).unwrap();
        let est = classical_estimate_window(&dj, &ClassicalParams::new(q2), 15).unwrap();
        let truth = q1.zigzag_prefix(15);
        let hits = est.iter().zip(&truth).filter(|(a, b)| a == b).count();
        assert!(hits >= 12, "{est:?} vs {truth:?}");
    }
}
