use serde::{Deserialize, Serialize};

use super::eigen::{top_eigenpairs, EigenPairs, KrylovOptions, SymmetricOperator};
use super::graph::SimilarityGraph;
use super::kmeans::{kmeans, KMeansConfig};
use crate::error::{Error, Result};
use crate::grid::LabelGrid;

/// Most clusters the engine will ever produce.
pub const MAX_CLUSTERS: usize = 4;
/// Laplacian eigenvalues reported for the eigengap.
pub const EIGENGAP_COUNT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Preliminary,
    Refined,
}

/// Block-resolution tampering map; label 0 is the background.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterMap {
    pub labels: LabelGrid,
    pub k: usize,
    pub provenance: Provenance,
}

impl ClusterMap {
    pub fn background(rows: usize, cols: usize) -> Self {
        Self {
            labels: LabelGrid::new(rows, cols),
            k: 1,
            provenance: Provenance::Preliminary,
        }
    }

    /// Wraps a label field, counting its distinct labels.
    pub fn from_labels(labels: LabelGrid, provenance: Provenance) -> Self {
        let k = labels.distinct().len().max(1);
        Self { labels, k, provenance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigengapReport {
    /// Smallest eigenvalues of the normalized Laplacian, ascending.
    pub eigenvalues: Vec<f64>,
    /// `eigenvalues[i + 1] - eigenvalues[i]`.
    pub gaps: Vec<f64>,
    pub k_hat: usize,
}

impl SymmetricOperator for SimilarityGraph {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.normalized_apply(x, y)
    }

    fn to_dense(&self) -> Vec<f64> {
        self.normalized_dense()
    }
}

/// Spectrum of the normalized symmetric Laplacian `I - D^-1/2 S D^-1/2`:
/// the `m` smallest eigenvalues ascending, with their eigenvectors.
pub fn laplacian_spectrum(g: &SimilarityGraph, m: usize, seed: u64) -> Result<EigenPairs> {
    let opts = KrylovOptions {
        seed,
        ..KrylovOptions::default()
    };
    let mut pairs = top_eigenpairs(g, m, &opts)?;
    pairs.values.iter_mut().for_each(|v| *v = 1.0 - *v);
    Ok(pairs)
}

/// Index (1-based) of the largest gap among the first `k_max` gaps; ties go
/// to the smaller index.
pub fn eigengap_k(eigenvalues: &[f64], k_max: usize) -> usize {
    let mut best = (1, f64::NEG_INFINITY);
    for (i, w) in eigenvalues.windows(2).take(k_max).enumerate() {
        let gap = w[1] - w[0];
        if gap > best.1 + 1e-12 {
            best = (i + 1, gap);
        }
    }
    best.0
}

/// Number of clusters from the eigengap of the Laplacian spectrum, or the
/// externally supplied `override_k`.
pub fn estimate_k(g: &SimilarityGraph, k_max: usize, override_k: Option<usize>) -> Result<(usize, EigengapReport)> {
    if !(2..=MAX_CLUSTERS).contains(&k_max) {
        return Err(Error::invalid(format!("k_max = {k_max} outside 2..={MAX_CLUSTERS}")));
    }
    if let Some(k) = override_k {
        if !(1..=k_max).contains(&k) {
            return Err(Error::invalid(format!("k override {k} outside 1..={k_max}")));
        }
        return Ok((
            k,
            EigengapReport {
                eigenvalues: Vec::new(),
                gaps: Vec::new(),
                k_hat: k,
            },
        ));
    }
    let pairs = laplacian_spectrum(g, EIGENGAP_COUNT, 0)?;
    let eigenvalues = pairs.values;
    let gaps: Vec<f64> = eigenvalues.windows(2).map(|w| w[1] - w[0]).collect();
    let k_hat = if eigenvalues.len() < 2 {
        1
    } else {
        eigengap_k(&eigenvalues, k_max)
    };
    Ok((
        k_hat,
        EigengapReport {
            eigenvalues,
            gaps,
            k_hat,
        },
    ))
}

/// Spreads node assignments over the full block grid (nearest retained
/// node for subsampled graphs) and relabels by decreasing cluster size,
/// equal sizes ordered by increasing mean DC step.
fn canonical_map(g: &SimilarityGraph, assignment: &[usize], k: usize) -> ClusterMap {
    let (rows, cols) = g.grid();
    let s = g.subsample();
    let kept_cols = cols.div_ceil(s);
    let kept_rows = rows.div_ceil(s);
    let mut raw = vec![0usize; rows * cols];
    for i in 0..rows {
        let ni = ((i + s / 2) / s).min(kept_rows - 1);
        for j in 0..cols {
            let nj = ((j + s / 2) / s).min(kept_cols - 1);
            raw[i * cols + j] = assignment[ni * kept_cols + nj];
        }
    }
    let mut size = vec![0usize; k];
    raw.iter().for_each(|&a| size[a] += 1);
    let mut dc = vec![0.0; k];
    let mut members = vec![0usize; k];
    for (node, &a) in assignment.iter().enumerate() {
        dc[a] += g.features()[node].first().copied().unwrap_or(0.0);
        members[a] += 1;
    }
    let mean_dc: Vec<f64> = (0..k)
        .map(|c| {
            if members[c] > 0 {
                dc[c] / members[c] as f64
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..k).filter(|&c| size[c] > 0).collect();
    order.sort_by(|&a, &b| {
        size[b]
            .cmp(&size[a])
            .then(mean_dc[a].total_cmp(&mean_dc[b]))
            .then(a.cmp(&b))
    });
    let mut relabel = vec![0u8; k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new as u8;
    }
    let labels = LabelGrid::from_vec(rows, cols, raw.iter().map(|&a| relabel[a]).collect()).expect("grid size");
    ClusterMap {
        labels,
        k: order.len(),
        provenance: Provenance::Preliminary,
    }
}

fn check_k(g: &SimilarityGraph, k: usize) -> Result<()> {
    if !(1..=MAX_CLUSTERS).contains(&k) {
        return Err(Error::invalid(format!("k = {k} outside 1..={MAX_CLUSTERS}")));
    }
    if k > g.n() {
        return Err(Error::invalid(format!("k = {k} exceeds {} nodes", g.n())));
    }
    Ok(())
}

/// Normalized spectral clustering: k-means on the row-normalized embedding
/// of the `k` smallest Laplacian eigenvectors.
pub fn spectral_cluster(g: &SimilarityGraph, k: usize, seed: u64) -> Result<ClusterMap> {
    check_k(g, k)?;
    let (rows, cols) = g.grid();
    if k == 1 {
        return Ok(ClusterMap::background(rows, cols));
    }
    let pairs = laplacian_spectrum(g, k, seed)?;
    let points: Vec<Vec<f64>> = (0..g.n())
        .map(|i| {
            let row: Vec<f64> = pairs.vectors.iter().map(|v| v[i]).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|x| x / norm).collect()
            } else {
                row
            }
        })
        .collect();
    let cfg = KMeansConfig {
        seed,
        ..KMeansConfig::default()
    };
    let result = kmeans(&points, k, &cfg);
    Ok(canonical_map(g, &result.assignment, k))
}

/// Baseline: k-means straight on the step vectors.
pub fn kmeans_cluster(g: &SimilarityGraph, k: usize, seed: u64) -> Result<ClusterMap> {
    check_k(g, k)?;
    let (rows, cols) = g.grid();
    if k == 1 {
        return Ok(ClusterMap::background(rows, cols));
    }
    let cfg = KMeansConfig {
        seed,
        ..KMeansConfig::default()
    };
    let result = kmeans(g.features(), k, &cfg);
    Ok(canonical_map(g, &result.assignment, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::graph::{build_graph, GraphConfig};
    use crate::q1::Q1Tensor;

    fn two_region(rows: usize, cols: usize) -> Q1Tensor {
        let mut t = Q1Tensor::zeros(rows, cols, 3);
        for i in 0..rows {
            for j in 0..cols {
                let v = if j >= cols - 3 {
                    [9.0, 7.0, 7.0]
                } else {
                    [2.0, 1.0, 1.0]
                };
                t.set_vector(i, j, &v);
            }
        }
        t
    }

    #[test]
    fn disconnected_components_give_k2() {
        let g = build_graph(&two_region(6, 8), &GraphConfig::default()).unwrap();
        let (k, rep) = estimate_k(&g, 4, None).unwrap();
        assert_eq!(k, 2);
        assert!(rep.eigenvalues[0].abs() < 1e-8 && rep.eigenvalues[1].abs() < 1e-8);
        assert!(rep.eigenvalues[2] > 0.5);
        assert_eq!(rep.gaps.len(), rep.eigenvalues.len() - 1);
    }

    #[test]
    fn uniform_graph_gives_k1() {
        let mut t = Q1Tensor::zeros(5, 5, 2);
        for i in 0..5 {
            for j in 0..5 {
                t.set_vector(i, j, &[3.0, 2.0]);
            }
        }
        let g = build_graph(&t, &GraphConfig::default()).unwrap();
        assert_eq!(estimate_k(&g, 4, None).unwrap().0, 1);
    }

    #[test]
    fn override_and_bounds() {
        let g = build_graph(&two_region(4, 6), &GraphConfig::default()).unwrap();
        assert_eq!(estimate_k(&g, 4, Some(3)).unwrap().0, 3);
        assert!(estimate_k(&g, 4, Some(5)).is_err());
        assert!(estimate_k(&g, 4, Some(0)).is_err());
        assert!(estimate_k(&g, 5, None).is_err());
        assert!(spectral_cluster(&g, 5, 0).is_err());
    }

    #[test]
    fn eigengap_tie_goes_low() {
        assert_eq!(eigengap_k(&[0.0, 1.0, 2.0, 3.0], 3), 1);
        assert_eq!(eigengap_k(&[0.0, 0.0, 0.0, 0.9, 1.0], 4), 3);
        assert_eq!(eigengap_k(&[0.0, 0.1, 0.2, 0.3, 0.4, 5.0], 4), 1);
    }

    #[test]
    fn two_regions_recovered_with_background_largest() {
        let g = build_graph(&two_region(6, 8), &GraphConfig::default()).unwrap();
        let m = spectral_cluster(&g, 2, 1).unwrap();
        assert_eq!(m.k, 2);
        for i in 0..6 {
            for j in 0..8 {
                assert_eq!(m.labels.get(i, j), (j >= 5) as u8);
            }
        }
        let base = kmeans_cluster(&g, 2, 1).unwrap();
        assert_eq!(base.labels, m.labels);
    }

    #[test]
    fn k1_is_all_background() {
        let g = build_graph(&two_region(3, 4), &GraphConfig::default()).unwrap();
        let m = spectral_cluster(&g, 1, 0).unwrap();
        assert_eq!(m.k, 1);
        assert!(m.labels.as_slice().iter().all(|&l| l == 0));
        assert_eq!(m.provenance, Provenance::Preliminary);
    }

    #[test]
    fn equal_sizes_ordered_by_dc() {
        let mut t = Q1Tensor::zeros(2, 4, 2);
        for i in 0..2 {
            for j in 0..4 {
                t.set_vector(i, j, &if j < 2 { [12.0, 1.0] } else { [3.0, 1.0] });
            }
        }
        let g = build_graph(&t, &GraphConfig::default()).unwrap();
        let m = spectral_cluster(&g, 2, 0).unwrap();
        assert_eq!(m.labels.get(0, 2), 0);
        assert_eq!(m.labels.get(0, 0), 1);
    }

    #[test]
    fn subsampled_labels_propagate() {
        let cfg = GraphConfig {
            subsample: 2,
            ..Default::default()
        };
        let g = build_graph(&two_region(8, 12), &cfg).unwrap();
        let m = spectral_cluster(&g, 2, 0).unwrap();
        assert_eq!((m.labels.rows(), m.labels.cols()), (8, 12));
        assert_eq!(m.labels.get(3, 0), 0);
        assert_eq!(m.labels.get(3, 11), 1);
    }
}
