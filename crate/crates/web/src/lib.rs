//! Browser bindings: forge a sample and run the pipeline on it, look up
//! quality tables, and refine a hand-drawn cluster map.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use splicetrace::cluster::{ClusterMap, Provenance};
use splicetrace::forge::{forge, synthetic_image, Quality, SamplingRule, TamperType};
use splicetrace::jpeg::quality_to_matrix;
use splicetrace::metrics::{mcc, nmi};
use splicetrace::pipeline::{analyze_image, PipelineConfig};
use splicetrace::q1::{ClassicalParams, EstimatorBackend};
use splicetrace::refine::{refine, RefineConfig};
use splicetrace::LabelGrid;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// The 64 steps of the IJG table for `qf`, row-major.
#[wasm_bindgen]
pub fn quality_matrix(qf: u8) -> Result<Vec<u16>, JsError> {
    let m = quality_to_matrix(qf).map_err(js)?;
    Ok(m.steps().iter().flatten().copied().collect())
}

#[derive(Serialize)]
struct Demo {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
    map_rows: usize,
    map_cols: usize,
    gt: Vec<u8>,
    preliminary: Option<Vec<u8>>,
    refined: Vec<u8>,
    k: usize,
    k_hat: usize,
    k_r: usize,
    decision: String,
    mcc: f64,
    nmi: f64,
    eigenvalues: Vec<f64>,
    qf_background: String,
    qf_donors: Vec<String>,
}

/// Forges a synthetic sample and analyzes it; returns a JSON document with
/// the image, ground truth and maps.
#[wasm_bindgen]
pub fn forge_and_analyze(
    seed: u32,
    k: usize,
    tamper_type: &str,
    size: usize,
    backend: &str,
) -> Result<String, JsError> {
    let t = match tamper_type {
        "I" => TamperType::I,
        "II" => TamperType::II,
        other => return Err(js(format!("unknown tamper type `{other}`"))),
    };
    let seed = seed as u64;
    let recipe = SamplingRule::new(k, t).sample(seed, size, size).map_err(js)?;
    let src = synthetic_image(seed, size, size).map_err(js)?;
    let donors = (1..k as u64)
        .map(|d| synthetic_image(seed.wrapping_mul(31).wrapping_add(d), size, size))
        .collect::<Result<Vec<_>, _>>()
        .map_err(js)?;
    let sample = forge(&src, &donors, &recipe).map_err(js)?;

    let est = match backend {
        "oracle" => EstimatorBackend::Oracle(sample.gt.clone()),
        "classical" => EstimatorBackend::Classical(ClassicalParams::new(recipe.qf2.matrix().map_err(js)?)),
        other => return Err(js(format!("unknown backend `{other}`"))),
    };
    let cfg = PipelineConfig {
        seed,
        ..PipelineConfig::default()
    };
    let a = analyze_image(&sample.image, &est, &cfg).map_err(js)?;
    let label = |q: &Quality| match q {
        Quality::Factor(f) => f.to_string(),
        Quality::Matrix(_) => "matrix".to_string(),
    };
    let demo = Demo {
        rows: sample.image.rows(),
        cols: sample.image.cols(),
        pixels: sample.image.to_u8(),
        map_rows: a.refined.labels.rows(),
        map_cols: a.refined.labels.cols(),
        gt: sample.gt.labels.as_slice().to_vec(),
        preliminary: a.preliminary.as_ref().map(|m| m.labels.as_slice().to_vec()),
        refined: a.refined.labels.as_slice().to_vec(),
        k,
        k_hat: a.k_hat,
        k_r: a.k_r,
        decision: format!("{:?}", a.decision).to_lowercase(),
        mcc: mcc(&sample.gt, &a.refined).map_err(js)?,
        nmi: nmi(&sample.gt, &a.refined).map_err(js)?,
        eigenvalues: a.eigengap.eigenvalues.clone(),
        qf_background: label(&recipe.qf_background),
        qf_donors: recipe.qf_donors.iter().map(label).collect(),
    };
    serde_json::to_string(&demo).map_err(js)
}

/// Erosion plus conditional dilation of a preliminary map given row-major.
#[wasm_bindgen]
pub fn refine_map(
    labels: Vec<u8>,
    rows: usize,
    cols: usize,
    erosion_iters: usize,
    seed: u32,
) -> Result<Vec<u8>, JsError> {
    let grid = LabelGrid::from_vec(rows, cols, labels).map_err(js)?;
    let m = ClusterMap::from_labels(grid, Provenance::Preliminary);
    let cfg = RefineConfig {
        erosion_iters,
        rng_seed: seed as u64,
        ..RefineConfig::default()
    };
    Ok(refine(&m, &cfg).map.labels.into_vec())
}
