//! Localization (MCC), attribution (NMI) and detection scoring, all at block
//! resolution.

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterMap;
use crate::error::{Error, Result};
use crate::grid::LabelGrid;
use crate::jpeg::QuantMatrix;
use crate::q1::Q1Tensor;

/// True class of every analysis block plus the first-pass matrix of each
/// class (class 0 is the background).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: LabelGrid,
    pub k: usize,
    pub region_q1: Vec<QuantMatrix>,
}

impl GroundTruth {
    pub fn new(labels: LabelGrid, k: usize, region_q1: Vec<QuantMatrix>) -> Result<Self> {
        if region_q1.len() != k {
            return Err(Error::invalid(format!(
                "{} region matrices for k = {k}",
                region_q1.len()
            )));
        }
        if let Some(&bad) = labels.as_slice().iter().find(|&&l| l as usize >= k) {
            return Err(Error::invalid(format!("label {bad} not below k = {k}")));
        }
        if !labels.is_empty() && !labels.as_slice().contains(&0) {
            return Err(Error::invalid("ground truth has no background block"));
        }
        Ok(Self { labels, k, region_q1 })
    }

    /// Tensor holding each block's class matrix, zig-zag prefix of length `nc`.
    pub fn oracle_tensor(&self, nc: usize) -> Q1Tensor {
        let prefixes: Vec<Vec<f32>> = self
            .region_q1
            .iter()
            .map(|q| q.zigzag_prefix(nc).iter().map(|&v| v as f32).collect())
            .collect();
        let mut t = Q1Tensor::zeros(self.labels.rows(), self.labels.cols(), nc);
        for i in 0..self.labels.rows() {
            for j in 0..self.labels.cols() {
                t.set_vector(i, j, &prefixes[self.labels.get(i, j) as usize]);
            }
        }
        t
    }
}

/// Binary confusion counts; any non-zero label is the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn between(truth: &LabelGrid, pred: &LabelGrid) -> Result<Self> {
        truth.same_shape(pred)?;
        let mut c = ConfusionCounts::default();
        for (&t, &p) in truth.as_slice().iter().zip(pred.as_slice()) {
            match (t != 0, p != 0) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Matthews correlation; a zero factor in the denominator makes the
    /// denominator 1.
    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (self.tp as f64, self.tn as f64, self.fp as f64, self.fn_ as f64);
        let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
        let denom = if factors.iter().any(|&f| f == 0.0) {
            1.0
        } else {
            factors.iter().product::<f64>().sqrt()
        };
        (tp * tn - fp * fn_) / denom
    }
}

pub fn mcc_labels(truth: &LabelGrid, pred: &LabelGrid) -> Result<f64> {
    Ok(ConfusionCounts::between(truth, pred)?.mcc())
}

/// Normalized mutual information `2 I(y;c) / (H(y) + H(c))` with natural
/// logarithms; two constant maps score 1.
pub fn nmi_labels(truth: &LabelGrid, pred: &LabelGrid) -> Result<f64> {
    truth.same_shape(pred)?;
    let n = truth.len() as f64;
    if truth.is_empty() {
        return Ok(1.0);
    }
    let ny = truth.as_slice().iter().copied().max().unwrap_or(0) as usize + 1;
    let nc = pred.as_slice().iter().copied().max().unwrap_or(0) as usize + 1;
    let mut joint = vec![0u64; ny * nc];
    let mut py = vec![0u64; ny];
    let mut pc = vec![0u64; nc];
    for (&y, &c) in truth.as_slice().iter().zip(pred.as_slice()) {
        joint[y as usize * nc + c as usize] += 1;
        py[y as usize] += 1;
        pc[c as usize] += 1;
    }
    // Terms are built from exact integer ratios and summed in sorted order,
    // so a perfect clustering gives I = H(y) = H(c) bit for bit.
    let sorted_sum = |mut terms: Vec<f64>| -> f64 {
        terms.sort_by(f64::total_cmp);
        terms.iter().sum()
    };
    let ni = truth.len() as u128;
    let entropy = |counts: &[u64]| -> f64 {
        sorted_sum(
            counts
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| c as f64 / n * (ni as f64 / c as f64).ln())
                .collect(),
        )
    };
    let (hy, hc) = (entropy(&py), entropy(&pc));
    if hy + hc == 0.0 {
        return Ok(1.0);
    }
    let mut terms = Vec::new();
    for (i, row) in joint.chunks(nc).enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij == 0 {
                continue;
            }
            let ratio = (ni * nij as u128) as f64 / (py[i] as u128 * pc[j] as u128) as f64;
            terms.push(nij as f64 / n * ratio.ln());
        }
    }
    let mi = sorted_sum(terms);
    Ok((2.0 * mi / (hy + hc)).clamp(0.0, 1.0))
}

pub fn mcc(gt: &GroundTruth, m: &ClusterMap) -> Result<f64> {
    mcc_labels(&gt.labels, &m.labels)
}

pub fn nmi(gt: &GroundTruth, m: &ClusterMap) -> Result<f64> {
    nmi_labels(&gt.labels, &m.labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Pristine,
    Tampered,
}

/// Tampered iff more than one cluster survives refinement.
pub fn detect(k_r: usize) -> Decision {
    if k_r > 1 {
        Decision::Tampered
    } else {
        Decision::Pristine
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRates {
    /// Absent when no tampered image was evaluated.
    pub tpr: Option<f64>,
    /// Absent when no pristine image was evaluated.
    pub fpr: Option<f64>,
    pub accuracy: f64,
}

/// Rates over `(true k, decision)` pairs.
pub fn aggregate(results: &[(usize, Decision)]) -> Result<DetectionRates> {
    if results.is_empty() {
        return Err(Error::invalid("no results to aggregate"));
    }
    let (mut pos, mut tp, mut neg, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for &(k, d) in results {
        let flagged = d == Decision::Tampered;
        if k > 1 {
            pos += 1;
            tp += flagged as usize;
        } else {
            neg += 1;
            fp += flagged as usize;
        }
    }
    let rate = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok(DetectionRates {
        tpr: rate(tp, pos),
        fpr: rate(fp, neg),
        accuracy: (tp + neg - fp) as f64 / results.len() as f64,
    })
}

/// Per-image metric record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub mcc: f64,
    pub nmi: f64,
    pub k_true: usize,
    pub k_hat: usize,
    pub k_r: usize,
    pub decision: Decision,
}

/// Which tampered images enter the mean MCC/NMI.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MccAveraging {
    /// Only images declared tampered (the paper's convention).
    #[default]
    DetectedOnly,
    /// Every tampered image; missed ones score 0.
    UndetectedAsZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSummary {
    /// Truly tampered images seen.
    pub tampered: usize,
    /// Of those, declared tampered.
    pub detected: usize,
    pub mean_mcc: Option<f64>,
    pub mean_nmi: Option<f64>,
    pub averaging: MccAveraging,
}

/// Mean localization and attribution scores over the tampered images.
pub fn summarize_localization(records: &[MetricRecord], averaging: MccAveraging) -> LocalizationSummary {
    let tampered: Vec<&MetricRecord> = records.iter().filter(|r| r.k_true > 1).collect();
    let detected = tampered.iter().filter(|r| r.decision == Decision::Tampered).count();
    let pool: Vec<(f64, f64)> = tampered
        .iter()
        .filter_map(|r| match (averaging, r.decision) {
            (_, Decision::Tampered) => Some((r.mcc, r.nmi)),
            (MccAveraging::UndetectedAsZero, Decision::Pristine) => Some((0.0, 0.0)),
            (MccAveraging::DetectedOnly, Decision::Pristine) => None,
        })
        .collect();
    let mean =
        |f: fn(&(f64, f64)) -> f64| (!pool.is_empty()).then(|| pool.iter().map(f).sum::<f64>() / pool.len() as f64);
    LocalizationSummary {
        tampered: tampered.len(),
        detected,
        mean_mcc: mean(|p| p.0),
        mean_nmi: mean(|p| p.1),
        averaging,
    }
}
