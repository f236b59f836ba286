use crate::error::{Error, Result};
use crate::q1::Q1Tensor;

/// Graph construction settings.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphConfig {
    pub sigma: f64,
    /// Keep every `subsample`-th block along both axes.
    pub subsample: usize,
    /// Divide each frequency by its standard deviation over the tensor.
    pub scale_features: bool,
    /// Neighbors kept per node on the sparse path.
    pub knn: usize,
    /// Largest node count stored as a dense matrix.
    pub dense_limit: usize,
}

impl GraphConfig {
    pub fn with_sigma(sigma: f64) -> Self {
        Self {
            sigma,
            ..Self::default()
        }
    }
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            sigma: 0.6,
            subsample: 1,
            scale_features: false,
            knn: 64,
            dense_limit: 4096,
        }
    }
}

/// Compressed sparse rows of a symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub offsets: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Weights {
    Dense(Vec<f64>),
    Sparse(CsrMatrix),
}

/// Gaussian-kernel similarity graph over the (possibly subsampled) blocks of
/// a Q1 tensor.
#[derive(Clone, Debug)]
pub struct SimilarityGraph {
    n: usize,
    weights: Weights,
    sigma: f64,
    node_index: Vec<(usize, usize)>,
    features: Vec<Vec<f64>>,
    grid: (usize, usize),
    subsample: usize,
    inv_sqrt_degree: Vec<f64>,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gaussian kernel `exp(-d2 / (2 sigma^2))`.
#[inline]
pub fn kernel(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}

fn scaled(features: &mut [Vec<f64>]) {
    let Some(dim) = features.first().map(Vec::len) else {
        return;
    };
    let n = features.len() as f64;
    for v in 0..dim {
        let mean = features.iter().map(|f| f[v]).sum::<f64>() / n;
        let var = features.iter().map(|f| (f[v] - mean).powi(2)).sum::<f64>() / n;
        if var > 0.0 {
            let sd = var.sqrt();
            features.iter_mut().for_each(|f| f[v] /= sd);
        }
    }
}

fn dense_rows(features: &[Vec<f64>], sigma: f64) -> Vec<f64> {
    let n = features.len();
    let mut w = vec![0.0; n * n];
    let fill = |i: usize, row: &mut [f64]| {
        for (j, out) in row.iter_mut().enumerate() {
            *out = if i == j {
                1.0
            } else {
                kernel(sq_dist(&features[i], &features[j]), sigma)
            };
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        w.par_chunks_mut(n).enumerate().for_each(|(i, row)| fill(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    w.chunks_mut(n).enumerate().for_each(|(i, row)| fill(i, row));
    w
}

fn knn_sparse(features: &[Vec<f64>], sigma: f64, knn: usize) -> CsrMatrix {
    let n = features.len();
    let neighbors = |i: usize| -> Vec<(usize, f64)> {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (sq_dist(&features[i], &features[j]), j))
            .collect();
        let keep = knn.min(d.len());
        if keep < d.len() {
            d.select_nth_unstable_by(keep, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(keep);
        }
        d.into_iter().map(|(d2, j)| (j, kernel(d2, sigma))).collect()
    };
    #[cfg(feature = "parallel")]
    let lists: Vec<Vec<(usize, f64)>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(neighbors).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let lists: Vec<Vec<(usize, f64)>> = (0..n).map(neighbors).collect();

    // symmetrize by union
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, list) in lists.into_iter().enumerate() {
        for (j, w) in list {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
    }
    let mut offsets = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    offsets.push(0);
    for (i, mut row) in adj.into_iter().enumerate() {
        row.push((i, 1.0));
        row.sort_by(|a, b| a.0.cmp(&b.0));
        row.dedup_by_key(|e| e.0);
        for (j, w) in row {
            indices.push(j);
            values.push(w);
        }
        offsets.push(indices.len());
    }
    CsrMatrix {
        offsets,
        indices,
        values,
    }
}

/// Builds the similarity graph of `t` with edge weights
/// `exp(-|q_i - q_j|^2 / (2 sigma^2))` over the rounded step vectors.
pub fn build_graph(t: &Q1Tensor, cfg: &GraphConfig) -> Result<SimilarityGraph> {
    if !(cfg.sigma > 0.0) || !cfg.sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive, got {}", cfg.sigma)));
    }
    if cfg.subsample == 0 {
        return Err(Error::invalid("subsample stride must be at least 1"));
    }
    if t.rows() == 0 || t.cols() == 0 || t.nc() == 0 {
        return Err(Error::invalid("empty Q1 tensor"));
    }
    let mut node_index = Vec::new();
    let mut features = Vec::new();
    for i in (0..t.rows()).step_by(cfg.subsample) {
        for j in (0..t.cols()).step_by(cfg.subsample) {
            node_index.push((i, j));
            features.push(t.rounded_vector(i, j));
        }
    }
    let raw = features.clone();
    if cfg.scale_features {
        scaled(&mut features);
    }
    let n = features.len();
    let weights = if n <= cfg.dense_limit {
        Weights::Dense(dense_rows(&features, cfg.sigma))
    } else {
        Weights::Sparse(knn_sparse(&features, cfg.sigma, cfg.knn.max(1)))
    };
    let degree: Vec<f64> = match &weights {
        Weights::Dense(w) => w.chunks(n).map(|r| r.iter().sum()).collect(),
        Weights::Sparse(s) => (0..n)
            .map(|i| s.values[s.offsets[i]..s.offsets[i + 1]].iter().sum())
            .collect(),
    };
    Ok(SimilarityGraph {
        n,
        weights,
        sigma: cfg.sigma,
        node_index,
        features: raw,
        grid: (t.rows(), t.cols()),
        subsample: cfg.subsample,
        inv_sqrt_degree: degree.iter().map(|d| 1.0 / d.sqrt()).collect(),
    })
}

impl SimilarityGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.weights, Weights::Dense(_))
    }

    pub fn node_index(&self) -> &[(usize, usize)] {
        &self.node_index
    }

    /// Unscaled rounded step vector of each node.
    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    /// Dimensions of the full block grid the nodes were drawn from.
    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn subsample(&self) -> usize {
        self.subsample
    }

    /// Edge weight between nodes `i` and `j` (0 for pruned edges).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match &self.weights {
            Weights::Dense(w) => w[i * self.n + j],
            Weights::Sparse(s) => {
                let row = &s.indices[s.offsets[i]..s.offsets[i + 1]];
                row.binary_search(&j).map(|p| s.values[s.offsets[i] + p]).unwrap_or(0.0)
            }
        }
    }

    /// `y = D^-1/2 S D^-1/2 x`, the normalized adjacency whose spectrum is
    /// `1 - spectrum(L_sym)`.
    pub fn normalized_apply(&self, x: &[f64], y: &mut [f64]) {
        let d = &self.inv_sqrt_degree;
        let xs: Vec<f64> = x.iter().zip(d).map(|(a, b)| a * b).collect();
        match &self.weights {
            Weights::Dense(w) => {
                for (i, (out, row)) in y.iter_mut().zip(w.chunks(self.n)).enumerate() {
                    let s: f64 = row.iter().zip(&xs).map(|(a, b)| a * b).sum();
                    *out = s * d[i];
                }
            }
            Weights::Sparse(s) => {
                for (i, out) in y.iter_mut().enumerate() {
                    let (a, b) = (s.offsets[i], s.offsets[i + 1]);
                    let acc: f64 = s.indices[a..b]
                        .iter()
                        .zip(&s.values[a..b])
                        .map(|(&j, &w)| w * xs[j])
                        .sum();
                    *out = acc * d[i];
                }
            }
        }
    }

    /// Dense normalized adjacency, for small graphs and tests.
    pub fn normalized_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = self.weight(i, j) * self.inv_sqrt_degree[i] * self.inv_sqrt_degree[j];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Vec<f32>) -> Q1Tensor {
        let nc = f(0, 0).len();
        let mut t = Q1Tensor::zeros(rows, cols, nc);
        for i in 0..rows {
            for j in 0..cols {
                t.set_vector(i, j, &f(i, j));
            }
        }
        t
    }

    #[test]
    fn identical_vectors_weigh_one() {
        let t = tensor(2, 2, |_, _| vec![3.0, 4.0]);
        let g = build_graph(&t, &GraphConfig::default()).unwrap();
        assert_eq!(g.weight(0, 3), 1.0);
        assert_eq!(g.weight(2, 2), 1.0);
    }

    #[test]
    fn kernel_at_two_sigma_squared() {
        assert!((kernel(0.72, 0.6) - 0.3679).abs() < 1e-4);
        // |(1,1) - (0,0)|^2 = 2 = 2 sigma^2 for sigma = 1
        let t = tensor(1, 2, |_, j| vec![j as f32; 2]);
        let g = build_graph(&t, &GraphConfig::with_sigma(1.0)).unwrap();
        assert!((g.weight(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn cross_region_weights_vanish() {
        let t = tensor(4, 6, |_, j| vec![if j < 3 { 10.0 } else { 5.0 }; 15]);
        let g = build_graph(&t, &GraphConfig::with_sigma(0.6)).unwrap();
        let mut max_cross: f64 = 0.0;
        for a in 0..g.n() {
            for b in 0..g.n() {
                if (g.node_index()[a].1 < 3) != (g.node_index()[b].1 < 3) {
                    max_cross = max_cross.max(g.weight(a, b));
                }
            }
        }
        assert!(max_cross < 1e-10);
    }

    #[test]
    fn symmetric_unit_diagonal() {
        let t = tensor(5, 5, |i, j| vec![(i % 3) as f32, (j % 2) as f32, 1.0]);
        for dense_limit in [4096, 4] {
            let cfg = GraphConfig {
                dense_limit,
                knn: 6,
                ..Default::default()
            };
            let g = build_graph(&t, &cfg).unwrap();
            assert_eq!(g.is_dense(), dense_limit > 25);
            for i in 0..g.n() {
                assert_eq!(g.weight(i, i), 1.0);
                for j in 0..g.n() {
                    let w = g.weight(i, j);
                    assert_eq!(w, g.weight(j, i));
                    assert!((0.0..=1.0).contains(&w));
                }
            }
        }
    }

    #[test]
    fn bad_parameters() {
        let t = Q1Tensor::zeros(2, 2, 3);
        assert!(build_graph(&t, &GraphConfig::with_sigma(0.0)).is_err());
        assert!(build_graph(&t, &GraphConfig::with_sigma(-1.0)).is_err());
        let cfg = GraphConfig {
            subsample: 0,
            ..Default::default()
        };
        assert!(build_graph(&t, &cfg).is_err());
        assert!(build_graph(&Q1Tensor::zeros(0, 0, 3), &GraphConfig::default()).is_err());
    }

    #[test]
    fn subsample_and_scaling() {
        let t = tensor(5, 4, |i, _| vec![i as f32 * 2.0, 7.0]);
        let cfg = GraphConfig {
            subsample: 2,
            scale_features: true,
            ..Default::default()
        };
        let g = build_graph(&t, &cfg).unwrap();
        assert_eq!(g.n(), 6);
        assert_eq!(g.node_index()[2], (2, 0));
        assert_eq!(g.features()[2], vec![4.0, 7.0]);
    }

    #[test]
    fn sparse_apply_matches_dense() {
        let t = tensor(6, 6, |i, j| vec![((i * 7 + j * 3) % 5) as f32, (i % 2) as f32]);
        let cfg = GraphConfig {
            dense_limit: 0,
            knn: 8,
            ..Default::default()
        };
        let g = build_graph(&t, &cfg).unwrap();
        let m = g.normalized_dense();
        let x: Vec<f64> = (0..g.n()).map(|i| (i as f64).sin()).collect();
        let mut y = vec![0.0; g.n()];
        g.normalized_apply(&x, &mut y);
        for i in 0..g.n() {
            let want: f64 = (0..g.n()).map(|j| m[i * g.n() + j] * x[j]).sum();
            assert!((want - y[i]).abs() < 1e-12);
        }
    }
}
