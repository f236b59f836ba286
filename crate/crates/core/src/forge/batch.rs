//! Manifest-driven forging of whole fixture sets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::forge::{forge, ForgedSample};
use super::recipe::{ForgeRecipe, Quality, SamplingRule};
use crate::error::{Error, Result};
use crate::io::{load_source, read_json, write_json, write_label_png, write_luma_png};
use crate::jpeg::LumaImage;
use crate::q1::write_tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecipeSource {
    Recipe(ForgeRecipe),
    Rule(SamplingRule),
}

/// One manifest line. Sources are image paths or `synth:SEED:HxW`; without
/// donors, every donor is the source itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub donors: Option<Vec<String>>,
    #[serde(flatten)]
    pub spec: RecipeSource,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub id: String,
    pub status: String,
    pub k: Option<usize>,
    #[serde(rename = "type")]
    pub tamper_type: String,
    pub seed: Option<u64>,
    pub qf_background: String,
    pub qf_donors: String,
    pub source: String,
    pub error: String,
}

/// Seed of sample `index` in a batch seeded with `batch_seed`.
pub fn sample_seed(batch_seed: u64, index: u64) -> u64 {
    // splitmix64 over the pair
    let mut z = batch_seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn quality_label(q: &Quality) -> String {
    match q {
        Quality::Factor(f) => f.to_string(),
        Quality::Matrix(m) => m.label().unwrap_or("matrix").to_string(),
    }
}

/// Resolves sources and recipe of one entry and forges it.
pub fn forge_entry(entry: &ManifestEntry, seed: u64) -> Result<ForgedSample> {
    let src = load_source(&entry.source)?;
    let recipe = match &entry.spec {
        RecipeSource::Recipe(r) => r.clone(),
        RecipeSource::Rule(rule) => rule.sample(rule.seed.unwrap_or(seed), src.rows(), src.cols())?,
    };
    let donors: Vec<LumaImage> = match &entry.donors {
        Some(list) => list.iter().map(|d| load_source(d)).collect::<Result<_>>()?,
        None => vec![src.clone(); recipe.k.saturating_sub(1)],
    };
    forge(&src, &donors, &recipe)
}

/// Writes the sample's image, gt map and JSON, recipe and oracle tensor.
/// The recipe file is itself a manifest entry that rebuilds the sample.
pub fn write_sample(sample: &ForgedSample, entry: &ManifestEntry, id: &str, out: &Path) -> Result<()> {
    write_luma_png(&sample.image, &out.join(format!("{id}.png")))?;
    write_label_png(&sample.gt.labels, &out.join(format!("{id}.gt.png")))?;
    write_json(&sample.gt, &out.join(format!("{id}.gt.json")))?;
    let replay = ManifestEntry {
        id: Some(id.to_string()),
        source: entry.source.clone(),
        donors: entry.donors.clone(),
        spec: RecipeSource::Recipe(sample.recipe.clone()),
    };
    write_json(&replay, &out.join(format!("{id}.recipe.json")))?;
    write_tensor(&sample.oracle_tensor, &out.join(format!("{id}.q1t")), "oracle")
}

fn run_entry(entry: &ManifestEntry, index: usize, batch_seed: u64, out: &Path) -> IndexRow {
    let id = entry.id.clone().unwrap_or_else(|| format!("{index:05}"));
    let mut row = IndexRow {
        id: id.clone(),
        source: entry.source.clone(),
        ..IndexRow::default()
    };
    let result = forge_entry(entry, sample_seed(batch_seed, index as u64))
        .and_then(|s| write_sample(&s, entry, &id, out).map(|_| s));
    match result {
        Ok(s) => {
            let r = &s.recipe;
            row.status = "ok".into();
            row.k = Some(r.k);
            row.tamper_type = format!("{:?}", r.tamper_type);
            row.seed = Some(r.seed);
            row.qf_background = quality_label(&r.qf_background);
            row.qf_donors = r.qf_donors.iter().map(quality_label).collect::<Vec<_>>().join(";");
        }
        Err(e) => {
            row.status = "error".into();
            row.error = e.to_string();
        }
    }
    row
}

/// Forges every manifest entry into `out` and writes `index.csv`. Failing
/// entries are recorded in the index and do not stop the batch.
pub fn forge_batch(manifest: &Path, out: &Path, batch_seed: u64, jobs: usize) -> Result<Vec<IndexRow>> {
    let entries: Vec<ManifestEntry> = read_json(manifest)?;
    forge_entries(&entries, out, batch_seed, jobs)
}

pub fn forge_entries(entries: &[ManifestEntry], out: &Path, batch_seed: u64, jobs: usize) -> Result<Vec<IndexRow>> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let rows = run_all(entries, out, batch_seed, jobs)?;
    let path = out.join("index.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    for r in &rows {
        w.serialize(r)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    }
    if rows.is_empty() {
        w.write_record([
            "id",
            "status",
            "k",
            "type",
            "seed",
            "qf_background",
            "qf_donors",
            "source",
            "error",
        ])
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

#[cfg(feature = "parallel")]
fn run_all(entries: &[ManifestEntry], out: &Path, batch_seed: u64, jobs: usize) -> Result<Vec<IndexRow>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        entries
            .par_iter()
            .enumerate()
            .map(|(i, e)| run_entry(e, i, batch_seed, out))
            .collect()
    }))
}

#[cfg(not(feature = "parallel"))]
fn run_all(entries: &[ManifestEntry], out: &Path, batch_seed: u64, _jobs: usize) -> Result<Vec<IndexRow>> {
    Ok(entries
        .iter()
        .enumerate()
        .map(|(i, e)| run_entry(e, i, batch_seed, out))
        .collect())
}
