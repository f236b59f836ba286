//! Largest eigenpairs of a symmetric operator.
//!
//! Small problems are solved densely. Larger ones use a block Krylov
//! (block Lanczos with full reorthogonalization) iteration followed by
//! Rayleigh-Ritz, so repeated eigenvalues up to the block size are resolved.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A real symmetric linear operator.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut m = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                m[i * n + j] = col[i];
            }
        }
        m
    }
}

/// Eigenvalues in descending order with matching unit eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// Krylov blocks used (0 on the dense path).
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct KrylovOptions {
    pub extra_block: usize,
    pub max_dim: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            extra_block: 6,
            max_dim: 900,
            tol: 1e-8,
            seed: 0x5eed,
        }
    }
}

/// Problems up to this size go straight to a dense solver.
pub const DENSE_EIG_LIMIT: usize = 256;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(b, a)| *b += alpha * a);
}

/// All-pairs dense solve; returns the `m` largest.
pub fn dense_top(mat: &[f64], n: usize, m: usize) -> EigenPairs {
    let a = DMatrix::from_row_slice(n, n, mat);
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let take = m.min(n);
    EigenPairs {
        values: order[..take].iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: order[..take]
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect(),
        iterations: 0,
    }
}

/// Block Krylov estimate of the `m` largest eigenpairs.
pub fn krylov_top<O: SymmetricOperator + ?Sized>(op: &O, m: usize, opts: &KrylovOptions) -> Result<EigenPairs> {
    let n = op.dim();
    let m = m.min(n);
    let b = (m + opts.extra_block).min(n);
    let max_dim = opts.max_dim.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut images: Vec<Vec<f64>> = Vec::new();
    // projected matrix, grown one row/column at a time
    let mut proj: Vec<Vec<f64>> = Vec::new();
    let mut block: Vec<Vec<f64>> = (0..b)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut iterations = 0;

    let residual = loop {
        let mut added = 0;
        for mut x in block.drain(..) {
            if basis.len() >= max_dim {
                break;
            }
            let norm0 = dot(&x, &x).sqrt();
            if norm0 == 0.0 {
                continue;
            }
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &x);
                    axpy(-c, v, &mut x);
                }
            }
            let nx = dot(&x, &x).sqrt();
            if nx <= 1e-10 * norm0 {
                continue;
            }
            x.iter_mut().for_each(|v| *v /= nx);
            let mut mx = vec![0.0; n];
            op.apply(&x, &mut mx);
            let row: Vec<f64> = basis.iter().map(|v| dot(v, &mx)).collect();
            for (r, val) in proj.iter_mut().zip(&row) {
                r.push(*val);
            }
            let mut own = row;
            own.push(dot(&x, &mx));
            proj.push(own);
            basis.push(x);
            images.push(mx);
            added += 1;
        }
        iterations += 1;
        let d = basis.len();
        let exhausted = added == 0 || d >= max_dim;

        let t = DMatrix::from_fn(d, d, |i, j| 0.5 * (proj[i][j] + proj[j][i]));
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
        let take = m.min(d);
        let mut values = Vec::with_capacity(take);
        let mut vectors = Vec::with_capacity(take);
        let mut worst: f64 = 0.0;
        for &idx in &order[..take] {
            let theta = eig.eigenvalues[idx];
            let y = eig.eigenvectors.column(idx);
            let mut u = vec![0.0; n];
            let mut mu = vec![0.0; n];
            for (k, &yk) in y.iter().enumerate() {
                axpy(yk, &basis[k], &mut u);
                axpy(yk, &images[k], &mut mu);
            }
            let res = mu
                .iter()
                .zip(&u)
                .map(|(a, b)| (a - theta * b).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(res);
            let nu = dot(&u, &u).sqrt();
            u.iter_mut().for_each(|v| *v /= nu);
            values.push(theta);
            vectors.push(u);
        }
        if take == m && (worst <= opts.tol || (added == 0 && d >= m) || d == n) {
            return Ok(EigenPairs {
                values,
                vectors,
                iterations,
            });
        }
        if exhausted {
            break worst;
        }
        // next block: images of the vectors just added
        block = images[d - added..].to_vec();
    };
    Err(Error::NonConvergence { iterations, residual })
}

/// `m` largest eigenpairs, dense for small operators and Krylov otherwise.
pub fn top_eigenpairs<O: SymmetricOperator + ?Sized>(op: &O, m: usize, opts: &KrylovOptions) -> Result<EigenPairs> {
    let n = op.dim();
    if n <= DENSE_EIG_LIMIT {
        return Ok(dense_top(&op.to_dense(), n, m));
    }
    krylov_top(op, m, opts)
}
