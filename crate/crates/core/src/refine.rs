//! Morphological refinement of a preliminary tampering map.
//!
//! Every foreground cluster is eroded to seeds, the seeds are grown back
//! inside their own cluster, then grown further into foreground blocks no
//! one has claimed. Clusters without seeds disappear.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterMap, Provenance};
use crate::grid::LabelGrid;

/// Disk under the city-block metric; radius 1 is the 4-connected cross.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    radius: usize,
    offsets: Vec<(isize, isize)>,
}

impl StructuringElement {
    pub fn disk(radius: usize) -> Self {
        let r = radius.max(1) as isize;
        let mut offsets = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if dy.abs() + dx.abs() <= r {
                    offsets.push((dy, dx));
                }
            }
        }
        Self {
            radius: r as usize,
            offsets,
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub erosion_iters: usize,
    pub element: StructuringElement,
    pub rng_seed: u64,
    /// Cap on dilation rounds per phase; `None` means rows * cols.
    pub max_dilation_iters: Option<usize>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            erosion_iters: 2,
            element: StructuringElement::disk(1),
            rng_seed: 0,
            max_dilation_iters: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub map: ClusterMap,
    pub k_r: usize,
    /// Preliminary labels whose seeds vanished.
    pub deleted_clusters: Vec<u8>,
    /// Dilation rounds run across both phases.
    pub rounds: usize,
    /// Contested blocks settled by the random draw.
    pub random_ties: usize,
}

/// Number of distinct labels, background included.
pub fn count_labels(m: &ClusterMap) -> usize {
    m.labels.distinct().len()
}

fn neighbors<'a>(
    el: &'a StructuringElement,
    rows: usize,
    cols: usize,
    r: usize,
    c: usize,
) -> impl Iterator<Item = (usize, usize)> + 'a {
    el.offsets.iter().filter_map(move |&(dy, dx)| {
        let (y, x) = (r as isize + dy, c as isize + dx);
        (y >= 0 && x >= 0 && (y as usize) < rows && (x as usize) < cols).then_some((y as usize, x as usize))
    })
}

/// Binary erosion; positions outside the grid do not erode.
fn erode(mask: &[bool], rows: usize, cols: usize, el: &StructuringElement) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = mask[r * cols + c] && neighbors(el, rows, cols, r, c).all(|(y, x)| mask[y * cols + x]);
        }
    }
    out
}

const UNASSIGNED: u8 = u8::MAX;

/// One synchronized dilation round. Every cluster proposes the unassigned
/// blocks adjacent to its region that `allowed` admits; blocks proposed by
/// several clusters are drawn at random among them.
fn dilation_round(
    assigned: &mut [u8],
    rows: usize,
    cols: usize,
    el: &StructuringElement,
    allowed: impl Fn(usize, u8) -> bool,
    rng: &mut ChaCha8Rng,
    ties: &mut usize,
) -> bool {
    let mut claims: Vec<(usize, Vec<u8>)> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let p = r * cols + c;
            if assigned[p] != UNASSIGNED {
                continue;
            }
            let mut who: Vec<u8> = neighbors(el, rows, cols, r, c)
                .map(|(y, x)| assigned[y * cols + x])
                .filter(|&l| l != UNASSIGNED && l != 0 && allowed(p, l))
                .collect();
            who.sort_unstable();
            who.dedup();
            if !who.is_empty() {
                claims.push((p, who));
            }
        }
    }
    let grew = !claims.is_empty();
    for (p, who) in claims {
        assigned[p] = if who.len() == 1 {
            who[0]
        } else {
            *ties += 1;
            who[rng.gen_range(0..who.len())]
        };
    }
    grew
}

/// Erosion followed by the two-phase conditional dilation. Labels are
/// compacted to `0..k_r` keeping the preliminary order.
pub fn refine(m: &ClusterMap, cfg: &RefineConfig) -> RefineOutcome {
    let (rows, cols) = (m.labels.rows(), m.labels.cols());
    let src = m.labels.as_slice();
    let el = &cfg.element;
    let cap = cfg.max_dilation_iters.unwrap_or(rows * cols).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut ties = 0;

    let present = m.labels.distinct();
    let mut assigned: Vec<u8> = src.iter().map(|&l| if l == 0 { 0 } else { UNASSIGNED }).collect();
    let mut survivors = Vec::new();
    let mut deleted = Vec::new();
    for &l in present.iter().filter(|&&l| l != 0) {
        let mut mask: Vec<bool> = src.iter().map(|&v| v == l).collect();
        for _ in 0..cfg.erosion_iters {
            mask = erode(&mask, rows, cols, el);
        }
        if mask.iter().any(|&b| b) {
            survivors.push(l);
            for (a, _) in assigned.iter_mut().zip(&mask).filter(|(_, &b)| b) {
                *a = l;
            }
        } else {
            deleted.push(l);
        }
    }

    let mut rounds = 0;
    // (i) reconstruction inside each cluster's own preliminary mask
    for _ in 0..cap {
        let grew = dilation_round(&mut assigned, rows, cols, el, |p, l| src[p] == l, &mut rng, &mut ties);
        if !grew {
            break;
        }
        rounds += 1;
    }
    // (ii) growth into any foreground block still unassigned
    for _ in 0..cap {
        let grew = dilation_round(&mut assigned, rows, cols, el, |p, _| src[p] != 0, &mut rng, &mut ties);
        if !grew {
            break;
        }
        rounds += 1;
    }

    let mut relabel = [0u8; 256];
    for (new, &old) in survivors.iter().enumerate() {
        relabel[old as usize] = new as u8 + 1;
    }
    let labels: Vec<u8> = assigned
        .iter()
        .map(|&a| {
            if a == UNASSIGNED || a == 0 {
                0
            } else {
                relabel[a as usize]
            }
        })
        .collect();
    let labels = LabelGrid::from_vec(rows, cols, labels).expect("same grid");
    let map = ClusterMap::from_labels(labels, Provenance::Refined);
    let k_r = count_labels(&map);
    RefineOutcome {
        map,
        k_r,
        deleted_clusters: deleted,
        rounds,
        random_ties: ties,
    }
}
