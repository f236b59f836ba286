//! Desk-scale versions of the paper's evaluation tables.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::forge::batch::sample_seed;
use crate::forge::{forge, SamplingRule, TamperType};
use crate::io::{load_source, write_label_png};
use crate::metrics::{mcc, nmi, Decision};
use crate::pipeline::{analyze_tensor, ClusterMethod, PipelineConfig};
use crate::q1::{estimate_tensor, ClassicalParams, EstimatorBackend};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    /// Confusion matrix of true k against refined k.
    Kconf,
    LocK2,
    LocK3,
    LocK4,
    /// k-means, spectral clustering, spectral clustering plus refinement.
    Ablation,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Kconf, Suite::LocK2, Suite::LocK3, Suite::LocK4, Suite::Ablation];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Kconf => "kconf",
            Suite::LocK2 => "loc_k2",
            Suite::LocK3 => "loc_k3",
            Suite::LocK4 => "loc_k4",
            Suite::Ablation => "ablation",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown suite `{s}` (kconf, loc_k2, loc_k3, loc_k4, ablation)")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BenchBackend {
    #[default]
    Oracle,
    /// Classical estimator told the recipe's final matrix.
    Classical,
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    /// Samples per table cell.
    pub samples: usize,
    /// Side of the square synthetic sources.
    pub size: usize,
    pub seed: u64,
    pub backend: BenchBackend,
    pub jobs: usize,
    pub pipeline: PipelineConfig,
    /// Source images; empty means synthetic sources.
    pub sources: Vec<String>,
    pub write_maps: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            samples: 4,
            size: 512,
            seed: 0,
            backend: BenchBackend::Oracle,
            jobs: 1,
            pipeline: PipelineConfig::default(),
            sources: Vec::new(),
            write_maps: true,
        }
    }
}

/// Per-sample outcome, one row of `<suite>_samples.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleRecord {
    pub table: String,
    pub row: String,
    pub col: String,
    pub variant: String,
    pub id: String,
    pub k: usize,
    pub k_hat: usize,
    pub k_r: usize,
    pub decision: Decision,
    pub mcc: f64,
    pub nmi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Variant {
    name: &'static str,
    method: ClusterMethod,
    refine: bool,
}

const FULL: Variant = Variant {
    name: "sc_refine",
    method: ClusterMethod::Spectral,
    refine: true,
};
const ABLATION: [Variant; 3] = [
    Variant {
        name: "kmeans",
        method: ClusterMethod::KMeans,
        refine: false,
    },
    Variant {
        name: "sc",
        method: ClusterMethod::Spectral,
        refine: false,
    },
    FULL,
];

/// One forged sample with its table coordinates.
#[derive(Clone, Debug)]
struct Job {
    table: String,
    row: String,
    col: String,
    rule: SamplingRule,
}

/// A table: row labels, column labels, and which jobs fill it.
struct Table {
    name: String,
    corner: String,
    rows: Vec<String>,
    cols: Vec<String>,
}

const LOC_QFS: [u8; 5] = [65, 75, 85, 95, 98];

fn tampered(k: usize, bg: u8, donors: Vec<u8>, side: usize) -> SamplingRule {
    SamplingRule {
        qf_background: Some(bg),
        qf_donors: Some(donors),
        box_side: Some(side),
        ..SamplingRule::new(k, TamperType::II)
    }
}

fn plan(suite: Suite) -> (Vec<Table>, Vec<Job>) {
    let mut tables = Vec::new();
    let mut jobs = Vec::new();
    let qf_cols = |skip: u8| -> Vec<u8> { LOC_QFS.iter().copied().filter(|&q| q != skip).collect() };
    match suite {
        Suite::Kconf => {
            tables.push(Table {
                name: "kconf".into(),
                corner: "k\\k_r".into(),
                rows: (1..=4).map(|k| k.to_string()).collect(),
                cols: (1..=4).map(|k| k.to_string()).collect(),
            });
            for k in 1..=4 {
                for t in [TamperType::I, TamperType::II] {
                    jobs.push(Job {
                        table: "kconf".into(),
                        row: k.to_string(),
                        col: format!("{t:?}"),
                        rule: SamplingRule::new(k, t),
                    });
                }
            }
        }
        Suite::LocK2 => {
            for side in [96usize, 128] {
                let name = format!("loc_k2_{side}");
                let rows = [75u8, 85, 95, 98];
                for bg in rows {
                    for d in LOC_QFS.into_iter().filter(|&d| d != bg) {
                        jobs.push(Job {
                            table: name.clone(),
                            row: bg.to_string(),
                            col: d.to_string(),
                            rule: tampered(2, bg, vec![d], side),
                        });
                    }
                }
                tables.push(Table {
                    name,
                    corner: "qf1\\qf1_2".into(),
                    rows: rows.iter().map(u8::to_string).collect(),
                    cols: LOC_QFS.iter().map(u8::to_string).collect(),
                });
            }
        }
        Suite::LocK3 | Suite::LocK4 => {
            let k = if suite == Suite::LocK3 { 3 } else { 4 };
            for bg in [85u8, 95] {
                let name = format!("{}_qf{bg}", suite.name());
                let axis = qf_cols(bg);
                for &a in &axis {
                    for b in axis.iter().copied().filter(|&b| b != a) {
                        let donors = if k == 3 { vec![a, b] } else { vec![60, a, b] };
                        jobs.push(Job {
                            table: name.clone(),
                            row: a.to_string(),
                            col: b.to_string(),
                            rule: tampered(k, bg, donors, 128),
                        });
                    }
                }
                let corner = if k == 3 { "qf1_2\\qf1_3" } else { "qf1_3\\qf1_4" };
                tables.push(Table {
                    name,
                    corner: corner.into(),
                    rows: axis.iter().map(u8::to_string).collect(),
                    cols: axis.iter().map(u8::to_string).collect(),
                });
            }
        }
        Suite::Ablation => {
            tables.push(Table {
                name: "ablation".into(),
                corner: "method".into(),
                rows: ABLATION.iter().map(|v| v.name.to_string()).collect(),
                cols: vec!["I".into(), "II".into()],
            });
            for t in [TamperType::I, TamperType::II] {
                for k in 2..=4 {
                    jobs.push(Job {
                        table: "ablation".into(),
                        row: String::new(),
                        col: format!("{t:?}"),
                        rule: SamplingRule::new(k, t),
                    });
                }
            }
        }
    }
    (tables, jobs)
}

fn source_specs(opts: &BenchOptions, seed: u64, k: usize) -> (String, Vec<String>) {
    if opts.sources.is_empty() {
        let n = opts.size;
        let src = format!("synth:{seed}:{n}x{n}");
        let donors = (1..k as u64)
            .map(|d| format!("synth:{}:{n}x{n}", sample_seed(seed, d)))
            .collect();
        return (src, donors);
    }
    let pick = |i: u64| opts.sources[(i % opts.sources.len() as u64) as usize].clone();
    (pick(seed), (1..k as u64).map(|d| pick(seed.wrapping_add(d))).collect())
}

fn run_job(job: &Job, index: usize, opts: &BenchOptions, maps: Option<&Path>) -> Result<Vec<SampleRecord>> {
    let seed = sample_seed(opts.seed, index as u64);
    let (src_spec, donor_specs) = source_specs(opts, seed, job.rule.k);
    let src = load_source(&src_spec)?;
    let donors = donor_specs.iter().map(|d| load_source(d)).collect::<Result<Vec<_>>>()?;
    let recipe = job.rule.sample(seed, src.rows(), src.cols())?;
    let sample = forge(&src, &donors, &recipe)?;
    let backend = match opts.backend {
        BenchBackend::Oracle => EstimatorBackend::Oracle(sample.gt.clone()),
        BenchBackend::Classical => EstimatorBackend::Classical(ClassicalParams::new(recipe.qf2.matrix()?)),
    };
    let tensor = estimate_tensor(&sample.image, &backend, &opts.pipeline.tensor)?;
    let variants: &[Variant] = if job.table == "ablation" { &ABLATION } else { &[FULL] };
    let id = format!("{}_{index:05}", job.table);
    let mut out = Vec::with_capacity(variants.len());
    for v in variants {
        let cfg = PipelineConfig {
            method: v.method,
            refine: v.refine,
            seed,
            ..opts.pipeline.clone()
        };
        let a = analyze_tensor(tensor.clone(), &cfg)?;
        if let Some(dir) = maps {
            write_label_png(&a.refined.labels, &dir.join(format!("{id}_{}.png", v.name)))?;
        }
        out.push(SampleRecord {
            table: job.table.clone(),
            row: if job.row.is_empty() {
                v.name.to_string()
            } else {
                job.row.clone()
            },
            col: job.col.clone(),
            variant: v.name.to_string(),
            id: id.clone(),
            k: recipe.k,
            k_hat: a.k_hat,
            k_r: a.k_r,
            decision: a.decision,
            mcc: mcc(&sample.gt, &a.refined)?,
            nmi: nmi(&sample.gt, &a.refined)?,
        });
    }
    Ok(out)
}

#[cfg(feature = "parallel")]
fn run_jobs(jobs: &[(usize, Job)], opts: &BenchOptions, maps: Option<&Path>) -> Result<Vec<Vec<SampleRecord>>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(|(i, j)| run_job(j, *i, opts, maps)).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_jobs(jobs: &[(usize, Job)], opts: &BenchOptions, maps: Option<&Path>) -> Result<Vec<Vec<SampleRecord>>> {
    jobs.iter().map(|(i, j)| run_job(j, *i, opts, maps)).collect()
}

fn fmt_mean(records: &[&SampleRecord], f: impl Fn(&SampleRecord) -> f64) -> String {
    if records.is_empty() {
        "-".into()
    } else {
        format!(
            "{:.3}",
            records.iter().map(|r| f(r)).sum::<f64>() / records.len() as f64
        )
    }
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    w.write_record(header)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.write_record(r)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn table_cells(t: &Table, records: &[SampleRecord], suite: Suite) -> Vec<Vec<String>> {
    t.rows
        .iter()
        .map(|r| {
            let mut line = vec![r.clone()];
            for c in &t.cols {
                let cell = match suite {
                    Suite::Kconf => records
                        .iter()
                        .filter(|x| &x.row == r && x.k_r.to_string() == *c)
                        .count()
                        .to_string(),
                    Suite::Ablation => {
                        let hits: Vec<&SampleRecord> = records
                            .iter()
                            .filter(|x| &x.variant == r && &x.col == c && x.decision == Decision::Tampered)
                            .collect();
                        format!("{}/{}", fmt_mean(&hits, |x| x.mcc), fmt_mean(&hits, |x| x.nmi))
                    }
                    _ => {
                        let cell: Vec<&SampleRecord> = records
                            .iter()
                            .filter(|x| x.table == t.name && &x.row == r && &x.col == c)
                            .collect();
                        if cell.is_empty() {
                            "---".into()
                        } else {
                            let tp: Vec<&SampleRecord> =
                                cell.into_iter().filter(|x| x.decision == Decision::Tampered).collect();
                            format!("{}({})", fmt_mean(&tp, |x| x.mcc), tp.len())
                        }
                    }
                };
                line.push(cell);
            }
            line
        })
        .collect()
}

/// Forges and analyzes the suite's grid, then writes one CSV per table,
/// the per-sample CSV and (optionally) every refined map under `out`.
/// Localization cells read `mean MCC over detected images (detected count)`;
/// ablation cells read `MCC/NMI` over detected images.
pub fn run_bench(suite: Suite, opts: &BenchOptions, out: &Path) -> Result<Vec<PathBuf>> {
    for s in &opts.sources {
        if !Path::new(s).is_file() && !s.starts_with("synth:") {
            return Err(Error::invalid(format!("bench source `{s}` is not a readable file")));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let maps = out.join("maps");
    if opts.write_maps {
        std::fs::create_dir_all(&maps).map_err(|e| Error::io(&maps, e))?;
    }
    let (tables, cells) = plan(suite);
    let mut jobs = Vec::new();
    for rep in 0..opts.samples {
        for (c, job) in cells.iter().enumerate() {
            jobs.push((rep * cells.len() + c, job.clone()));
        }
    }
    let records: Vec<SampleRecord> = run_jobs(&jobs, opts, opts.write_maps.then_some(maps.as_path()))?
        .into_iter()
        .flatten()
        .collect();

    let mut written = Vec::new();
    for t in &tables {
        let path = out.join(format!("{}.csv", t.name));
        let mut header = vec![t.corner.clone()];
        header.extend(t.cols.iter().cloned());
        write_csv(&path, &header, &table_cells(t, &records, suite))?;
        written.push(path);
    }
    let path = out.join(format!("{}_samples.csv", suite.name()));
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    for r in &records {
        w.serialize(r)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    }
    if records.is_empty() {
        let header = [
            "table", "row", "col", "variant", "id", "k", "k_hat", "k_r", "decision", "mcc", "nmi",
        ];
        w.write_record(header)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("loc_k5".parse::<Suite>().is_err());
    }

    #[test]
    fn loc_grids_skip_equal_factors() {
        let (tables, jobs) = plan(Suite::LocK2);
        assert_eq!(tables.len(), 2);
        assert_eq!(jobs.len(), 2 * 4 * 4);
        assert!(jobs.iter().all(|j| j.row != j.col));
        let (_, jobs) = plan(Suite::LocK4);
        assert!(jobs.iter().all(|j| j.rule.qf_donors.as_ref().unwrap()[0] == 60));
    }

    #[test]
    fn zero_samples_gives_header_only_tables() {
        let dir = tempfile::tempdir().unwrap();
        let opts = BenchOptions {
            samples: 0,
            ..Default::default()
        };
        let files = run_bench(Suite::Ablation, &opts, dir.path()).unwrap();
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert!(text.starts_with("method,I,II\n"));
        let samples = std::fs::read_to_string(files.last().unwrap()).unwrap();
        assert_eq!(samples.lines().count(), 1);
    }

    #[test]
    fn missing_source_aborts_before_forging() {
        let dir = tempfile::tempdir().unwrap();
        let opts = BenchOptions {
            sources: vec!["/missing.png".into()],
            ..Default::default()
        };
        assert!(run_bench(Suite::Kconf, &opts, &dir.path().join("b")).is_err());
        assert!(!dir.path().join("b").exists());
    }
}
