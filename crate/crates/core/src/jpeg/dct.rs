use std::f64::consts::PI;
use std::sync::OnceLock;

/// One 8x8 block, row-major.
pub type Block = [f64; 64];

/// basis[u][n] = alpha(u) * cos((2n + 1) u pi / 16)
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let alpha = if u == 0 {
                (1.0f64 / 8.0).sqrt()
            } else {
                (2.0f64 / 8.0).sqrt()
            };
            for (n, v) in row.iter_mut().enumerate() {
                *v = alpha * ((2 * n + 1) as f64 * u as f64 * PI / 16.0).cos();
            }
        }
        b
    })
}

/// Orthonormal 2-D type-II DCT of one block.
pub fn forward_dct(block: &Block) -> Block {
    let b = basis();
    let mut tmp = [0.0; 64];
    // rows
    for y in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                s += b[u][x] * block[y * 8 + x];
            }
            tmp[y * 8 + u] = s;
        }
    }
    let mut out = [0.0; 64];
    // columns
    for u in 0..8 {
        for v in 0..8 {
            let mut s = 0.0;
            for y in 0..8 {
                s += b[v][y] * tmp[y * 8 + u];
            }
            out[v * 8 + u] = s;
        }
    }
    out
}

/// Inverse of [`forward_dct`].
pub fn inverse_dct(coefs: &Block) -> Block {
    let b = basis();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for u in 0..8 {
                s += b[u][x] * coefs[v * 8 + u];
            }
            tmp[v * 8 + x] = s;
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for v in 0..8 {
                s += b[v][y] * tmp[v * 8 + x];
            }
            out[y * 8 + x] = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn round_trip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut blk = [0.0; 64];
            for v in blk.iter_mut() {
                *v = rng.gen_range(-128.0..128.0);
            }
            let back = inverse_dct(&forward_dct(&blk));
            for (a, b) in blk.iter().zip(back.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_block_has_only_dc() {
        let c = forward_dct(&[10.0; 64]);
        assert!((c[0] - 80.0).abs() < 1e-9);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn matches_direct_double_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut blk = [0.0; 64];
        for v in blk.iter_mut() {
            *v = rng.gen_range(-50.0..50.0);
        }
        let fast = forward_dct(&blk);
        for v in 0..8 {
            for u in 0..8 {
                let au = if u == 0 { (0.125f64).sqrt() } else { 0.5 };
                let av = if v == 0 { (0.125f64).sqrt() } else { 0.5 };
                let mut s = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        s += blk[y * 8 + x]
                            * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos()
                            * ((2 * y + 1) as f64 * v as f64 * PI / 16.0).cos();
                    }
                }
                assert!((fast[v * 8 + u] - au * av * s).abs() < 1e-9);
            }
        }
    }
}
