//! Tensor to decision: eigengap, spectral clustering, refinement.

use serde::{Deserialize, Serialize};

use crate::cluster::{
    build_graph, estimate_k, kmeans_cluster, spectral_cluster, ClusterMap, EigengapReport, GraphConfig, MAX_CLUSTERS,
};
use crate::error::{Result, StageContext};
use crate::jpeg::LumaImage;
use crate::metrics::{detect, mcc, nmi, Decision, GroundTruth, MetricRecord};
use crate::q1::{estimate_tensor, EstimatorBackend, Q1Tensor, TensorOptions};
use crate::refine::{refine, RefineConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    #[default]
    Spectral,
    /// k-means on the raw step vectors (ablation baseline).
    KMeans,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Kernel scale for the eigengap pass.
    pub sigma_k: f64,
    /// Kernel scale for clustering when two clusters are expected.
    pub sigma2: f64,
    /// Kernel scale for clustering with three or four clusters.
    pub sigma34: f64,
    pub k_max: usize,
    pub k_override: Option<usize>,
    pub graph: GraphConfig,
    pub method: ClusterMethod,
    pub refine: bool,
    pub refine_cfg: RefineConfig,
    pub tensor: TensorOptions,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sigma_k: 0.6,
            sigma2: 0.6,
            sigma34: 0.15,
            k_max: MAX_CLUSTERS,
            k_override: None,
            graph: GraphConfig::default(),
            method: ClusterMethod::Spectral,
            refine: true,
            refine_cfg: RefineConfig::default(),
            tensor: TensorOptions::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn cluster_sigma(&self, k: usize) -> f64 {
        if k <= 2 {
            self.sigma2
        } else {
            self.sigma34
        }
    }

    /// Per-stage seeds fanned out from the single user seed.
    fn stage_seed(&self, stage: u64) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stage)
    }
}

/// Wall time per stage, in seconds; a stage that did not run reports 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub estimate: f64,
    pub estimate_k: f64,
    pub cluster: f64,
    pub refine: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub tensor: Q1Tensor,
    pub eigengap: EigengapReport,
    pub k_hat: usize,
    /// `None` when the image was declared pristine before clustering.
    pub preliminary: Option<ClusterMap>,
    pub refined: ClusterMap,
    pub k_r: usize,
    pub deleted_clusters: Vec<u8>,
    pub decision: Decision,
    pub timing: StageTiming,
}

/// JSON report of one analyzed image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub image: String,
    pub backend: String,
    pub decision: Decision,
    pub k_hat: usize,
    pub k_r: usize,
    /// Labels present in the refined map.
    pub labels: Vec<u8>,
    /// Written only for tampered images.
    pub map_path: Option<String>,
    pub eigenvalues: Vec<f64>,
    pub gaps: Vec<f64>,
    /// Kernel scale of the clustering pass; absent when it did not run.
    pub sigma: Option<f64>,
    pub seed: u64,
    pub deleted_clusters: Vec<u8>,
    pub metrics: Option<MetricRecord>,
    pub timing: StageTiming,
}

impl AnalysisReport {
    pub fn new(image: &str, backend: &str, a: &Analysis, cfg: &PipelineConfig) -> Self {
        Self {
            image: image.to_string(),
            backend: backend.to_string(),
            decision: a.decision,
            k_hat: a.k_hat,
            k_r: a.k_r,
            labels: a.refined.labels.distinct(),
            map_path: None,
            eigenvalues: a.eigengap.eigenvalues.clone(),
            gaps: a.eigengap.gaps.clone(),
            sigma: a.preliminary.as_ref().map(|_| cfg.cluster_sigma(a.k_hat)),
            seed: cfg.seed,
            deleted_clusters: a.deleted_clusters.clone(),
            metrics: None,
            timing: a.timing,
        }
    }

    /// Scores the refined map against ground truth.
    pub fn score(&mut self, a: &Analysis, gt: &GroundTruth) -> Result<()> {
        self.metrics = Some(MetricRecord {
            mcc: mcc(gt, &a.refined)?,
            nmi: nmi(gt, &a.refined)?,
            k_true: gt.k,
            k_hat: a.k_hat,
            k_r: a.k_r,
            decision: a.decision,
        });
        Ok(())
    }
}

#[cfg(not(target_arch = "wasm32"))]
fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t0 = std::time::Instant::now();
    let out = f();
    (out, t0.elapsed().as_secs_f64())
}

// no monotonic clock on bare wasm
#[cfg(target_arch = "wasm32")]
fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    (f(), 0.0)
}

/// Runs the whole chain on an image.
pub fn analyze_image(img: &LumaImage, backend: &EstimatorBackend, cfg: &PipelineConfig) -> Result<Analysis> {
    let (tensor, t) = timed(|| estimate_tensor(img, backend, &cfg.tensor));
    let mut a = analyze_tensor(tensor.stage("estimate")?, cfg)?;
    a.timing.estimate = t;
    Ok(a)
}

/// Runs everything after estimation on a ready tensor.
pub fn analyze_tensor(tensor: Q1Tensor, cfg: &PipelineConfig) -> Result<Analysis> {
    let mut timing = StageTiming::default();
    let (k_step, t) = timed(|| -> Result<_> {
        let g = build_graph(
            &tensor,
            &GraphConfig {
                sigma: cfg.sigma_k,
                ..cfg.graph.clone()
            },
        )?;
        estimate_k(&g, cfg.k_max, cfg.k_override)
    });
    let (k_hat, eigengap) = k_step.stage("estimate_k")?;
    timing.estimate_k = t;

    let (rows, cols) = (tensor.rows(), tensor.cols());
    if k_hat == 1 {
        return Ok(Analysis {
            tensor,
            eigengap,
            k_hat,
            preliminary: None,
            refined: ClusterMap::background(rows, cols),
            k_r: 1,
            deleted_clusters: Vec::new(),
            decision: Decision::Pristine,
            timing,
        });
    }

    let (prelim, t) = timed(|| -> Result<_> {
        let g = build_graph(
            &tensor,
            &GraphConfig {
                sigma: cfg.cluster_sigma(k_hat),
                ..cfg.graph.clone()
            },
        )?;
        match cfg.method {
            ClusterMethod::Spectral => spectral_cluster(&g, k_hat, cfg.stage_seed(1)),
            ClusterMethod::KMeans => kmeans_cluster(&g, k_hat, cfg.stage_seed(1)),
        }
    });
    let prelim = prelim.stage("cluster")?;
    timing.cluster = t;

    let (refined, k_r, deleted_clusters) = if cfg.refine {
        let rc = RefineConfig {
            rng_seed: cfg.stage_seed(2),
            ..cfg.refine_cfg.clone()
        };
        let (out, t) = timed(|| refine(&prelim, &rc));
        timing.refine = t;
        (out.map, out.k_r, out.deleted_clusters)
    } else {
        let k = prelim.labels.distinct().len();
        (prelim.clone(), k, Vec::new())
    };
    Ok(Analysis {
        tensor,
        eigengap,
        k_hat,
        preliminary: Some(prelim),
        refined,
        k_r,
        deleted_clusters,
        decision: detect(k_r),
        timing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{forge, sample_recipe, synthetic_image, TamperType};

    #[test]
    fn oracle_k3_end_to_end() {
        let src = synthetic_image(11, 384, 384).unwrap();
        let mut r = sample_recipe(5, 3, TamperType::I, 384, 384).unwrap();
        r.qf_background = 85.into();
        r.qf_donors = vec![65.into(), 95.into()];
        for b in &mut r.boxes {
            b.h = 128;
            b.w = 128;
        }
        r.boxes[0].top = 40;
        r.boxes[0].left = 40;
        r.boxes[1].top = 200;
        r.boxes[1].left = 200;
        let s = forge(&src, &[src.clone(), src.clone()], &r).unwrap();
        let a = analyze_image(
            &s.image,
            &EstimatorBackend::Oracle(s.gt.clone()),
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(a.decision, Decision::Tampered);
        assert_eq!((a.k_hat, a.k_r), (3, 3));
        assert_eq!(nmi(&s.gt, &a.refined).unwrap(), 1.0);
        assert_eq!(mcc(&s.gt, &a.refined).unwrap(), 1.0);
    }

    #[test]
    fn pristine_skips_clustering() {
        let src = synthetic_image(1, 256, 256).unwrap();
        let r = sample_recipe(2, 1, TamperType::I, 256, 256).unwrap();
        let s = forge(&src, &[], &r).unwrap();
        let a = analyze_image(
            &s.image,
            &EstimatorBackend::Oracle(s.gt.clone()),
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(a.decision, Decision::Pristine);
        assert!(a.preliminary.is_none());
        assert_eq!((a.timing.cluster, a.timing.refine), (0.0, 0.0));
    }

    #[test]
    fn k_override_forces_clustering() {
        let mut t = Q1Tensor::zeros(10, 10, 2);
        for i in 0..10 {
            for j in 0..10 {
                let v = if j < 5 { [1.0, 1.0] } else { [9.0, 9.0] };
                t.set_vector(i, j, &v);
            }
        }
        let cfg = PipelineConfig {
            k_override: Some(2),
            ..Default::default()
        };
        let a = analyze_tensor(t, &cfg).unwrap();
        assert!(a.eigengap.eigenvalues.is_empty());
        assert_eq!(a.k_r, 2);
    }
}
