use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use splicetrace::bench::{run_bench, BenchBackend, BenchOptions, Suite};
use splicetrace::forge::batch::{forge_batch, forge_entries, sample_seed, IndexRow, ManifestEntry, RecipeSource};
use splicetrace::forge::{SamplingRule, TamperType};
use splicetrace::io::{read_json, read_label_png, read_luma, write_json, write_label_png};
use splicetrace::jpeg::{quality_to_matrix, QuantMatrix};
use splicetrace::metrics::{
    aggregate, mcc_labels, nmi_labels, summarize_localization, Decision, DetectionRates, GroundTruth,
    LocalizationSummary, MccAveraging, MetricRecord,
};
use splicetrace::pipeline::{analyze_image, AnalysisReport, PipelineConfig};
use splicetrace::q1::{ClassicalParams, EstimatorBackend, TensorOptions};
use splicetrace::{Error, LabelGrid};

const EXIT_PRISTINE: u8 = 0;
const EXIT_TAMPERED: u8 = 1;
const EXIT_ERROR: u8 = 2;
const EXIT_BACKEND: u8 = 3;

/// Splicing detection, localization and donor attribution for double-JPEG images.
///
/// `analyze` exits 0 when every image is pristine, 1 when any is tampered,
/// 2 on errors and 3 when the estimator backend cannot be set up.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect, localize and attribute spliced regions.
    Analyze(AnalyzeArgs),
    /// Synthesize forged samples with ground truth.
    Forge(ForgeArgs),
    /// Aggregate metrics over a directory of reports.
    Score(ScoreArgs),
    /// Forge and analyze a table grid, writing CSV tables.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Backend {
    Oracle,
    Classical,
    External,
}

#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    /// Kernel scale when two clusters are expected.
    #[arg(long, default_value_t = 0.6)]
    sigma2: f64,
    /// Kernel scale for three or four clusters.
    #[arg(long, default_value_t = 0.15)]
    sigma34: f64,
    /// Use this cluster count instead of the eigengap estimate.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    k_override: Option<u8>,
    #[arg(long, default_value_t = 2)]
    erosion_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        let mut cfg = PipelineConfig {
            sigma2: self.sigma2,
            sigma34: self.sigma34,
            k_override: self.k_override.map(usize::from),
            seed: self.seed,
            ..PipelineConfig::default()
        };
        cfg.refine_cfg.erosion_iters = self.erosion_iters;
        cfg
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(required = true)]
    images: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Backend::Oracle)]
    backend: Backend,
    /// Q1 tensor for the external backend [default: <stem>.q1t next to the image].
    #[arg(long)]
    tensor: Option<PathBuf>,
    /// Ground truth JSON [default: <stem>.gt.json next to the image, if present].
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Quality factor of the last compression (classical backend).
    #[arg(long, conflicts_with = "q2_matrix")]
    qf2: Option<u8>,
    /// Matrix of the last compression as JSON (classical backend).
    #[arg(long)]
    q2_matrix: Option<PathBuf>,
    /// Mirror-pad borders so every block gets an estimate.
    #[arg(long)]
    mirror_pad: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct ForgeArgs {
    /// JSON manifest; omit to generate synthetic samples with --k.
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "forged")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Number of regions of generated samples (1 = pristine).
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    k: Option<usize>,
    /// Tamper type of generated samples [default: drawn per sample].
    #[arg(long = "type", value_parser = parse_type)]
    tamper_type: Option<TamperType>,
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Side of generated synthetic sources.
    #[arg(long, default_value_t = 512)]
    size: usize,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    results_dir: PathBuf,
    /// Ground truth directory for reports written without metrics.
    #[arg(long)]
    gt_dir: Option<PathBuf>,
    /// Count missed tampered images as MCC = NMI = 0 instead of skipping them.
    #[arg(long)]
    undetected_as_zero: bool,
    /// Summary file [default: <RESULTS_DIR>/score.json].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(value_parser = parse_suite)]
    suite: Suite,
    #[arg(long, default_value = "bench")]
    out: PathBuf,
    /// Samples per table cell.
    #[arg(long, default_value_t = 4)]
    samples: usize,
    #[arg(long, default_value_t = 512)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_enum, default_value_t = Backend::Oracle)]
    backend: Backend,
    /// Source images, comma separated [default: synthetic].
    #[arg(long, value_delimiter = ',')]
    sources: Vec<String>,
    /// Skip writing refined maps.
    #[arg(long)]
    no_maps: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn parse_type(s: &str) -> Result<TamperType, String> {
    match s {
        "I" | "i" | "1" => Ok(TamperType::I),
        "II" | "ii" | "2" => Ok(TamperType::II),
        _ => Err(format!("expected I or II, got `{s}`")),
    }
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Outcome of a command: an exit code plus a message for stderr.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn error(msg: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_ERROR,
            msg: msg.to_string(),
        }
    }
    fn backend(msg: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_BACKEND,
            msg: msg.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::error(e)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn sibling(image: &Path, suffix: &str) -> PathBuf {
    image.with_file_name(format!("{}{suffix}", stem(image)))
}

fn resolve_backend(args: &AnalyzeArgs, image: &Path, gt: Option<&GroundTruth>) -> Result<EstimatorBackend, Failure> {
    match args.backend {
        Backend::Oracle => match gt {
            Some(gt) => Ok(EstimatorBackend::Oracle(gt.clone())),
            None => Err(Failure::backend(format!(
                "oracle backend needs ground truth: pass --gt or create {}",
                sibling(image, ".gt.json").display()
            ))),
        },
        Backend::External => {
            let path = args.tensor.clone().unwrap_or_else(|| sibling(image, ".q1t"));
            if !path.is_file() {
                return Err(Failure::backend(format!(
                    "external backend needs a Q1 tensor file; expected {}",
                    path.display()
                )));
            }
            Ok(EstimatorBackend::External(path))
        }
        Backend::Classical => {
            let q2 = match (&args.qf2, &args.q2_matrix) {
                (Some(qf), _) => quality_to_matrix(*qf).map_err(Failure::backend)?,
                (None, Some(path)) => read_json::<QuantMatrix>(path).map_err(Failure::backend)?,
                (None, None) => {
                    return Err(Failure::backend(
                        "classical backend needs --qf2 <int> or --q2-matrix <json>",
                    ))
                }
            };
            Ok(EstimatorBackend::Classical(ClassicalParams::new(q2)))
        }
    }
}

fn analyze_one(args: &AnalyzeArgs, cfg: &PipelineConfig, image: &Path) -> Result<Decision, Failure> {
    let gt_path = args
        .gt
        .clone()
        .or_else(|| Some(sibling(image, ".gt.json")).filter(|p| p.is_file()));
    let gt: Option<GroundTruth> = match &gt_path {
        Some(p) => Some(read_json(p).map_err(|e| match args.backend {
            Backend::Oracle => Failure::backend(e),
            _ => Failure::error(e),
        })?),
        None => None,
    };
    let backend = resolve_backend(args, image, gt.as_ref())?;
    let img = read_luma(image).map_err(|e| Failure::error(format!("stage `load`: {e}")))?;
    let a = analyze_image(&img, &backend, cfg)?;

    let name = stem(image);
    let mut report = AnalysisReport::new(&image.display().to_string(), backend.name(), &a, cfg);
    if let Some(gt) = &gt {
        report
            .score(&a, gt)
            .map_err(|e| Failure::error(format!("stage `score`: {e}")))?;
    }
    if a.decision == Decision::Tampered {
        let map = args.out.join(format!("{name}.map.png"));
        write_label_png(&a.refined.labels, &map)?;
        report.map_path = Some(map.display().to_string());
    }
    write_json(&report, &args.out.join(format!("{name}.report.json")))?;
    println!(
        "{}\t{:?}\tk_hat={}\tk_r={}",
        image.display(),
        a.decision,
        a.k_hat,
        a.k_r
    );
    Ok(a.decision)
}

fn analyze(args: AnalyzeArgs) -> Result<u8, Failure> {
    std::fs::create_dir_all(&args.out).map_err(|e| Failure::error(format!("{}: {e}", args.out.display())))?;
    let cfg = PipelineConfig {
        tensor: TensorOptions {
            mirror_pad: args.mirror_pad,
            ..TensorOptions::default()
        },
        ..args.pipeline.config()
    };
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<Decision, Failure>)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..args.jobs.clamp(1, args.images.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(image) = args.images.get(i) else { break };
                let r = analyze_one(&args, &cfg, image);
                results.lock().unwrap().push((i, r));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|r| r.0);

    let mut code = EXIT_PRISTINE;
    let mut worst_error = None;
    for (i, r) in results {
        match r {
            Ok(Decision::Tampered) => code = EXIT_TAMPERED,
            Ok(Decision::Pristine) => {}
            Err(f) => {
                eprintln!("{}: {}", args.images[i].display(), f.msg);
                worst_error = Some(worst_error.map_or(f.code, |c: u8| c.max(f.code)));
            }
        }
    }
    Ok(worst_error.unwrap_or(code))
}

fn forge(args: ForgeArgs) -> Result<u8, Failure> {
    let rows: Vec<IndexRow> = match (&args.manifest, args.k) {
        (Some(m), _) => forge_batch(m, &args.out, args.seed, args.jobs.max(1))?,
        (None, Some(k)) => {
            let entries: Vec<ManifestEntry> = (0..args.count)
                .map(|i| ManifestEntry {
                    id: None,
                    source: format!("synth:{}:{}x{}", sample_seed(args.seed, i as u64), args.size, args.size),
                    donors: None,
                    spec: RecipeSource::Rule(SamplingRule {
                        tamper_type: args.tamper_type,
                        ..SamplingRule::new(k, TamperType::I)
                    }),
                })
                .collect();
            forge_entries(&entries, &args.out, args.seed, args.jobs.max(1))?
        }
        (None, None) => return Err(Failure::error("forge needs a manifest or --k")),
    };
    let failed: Vec<&IndexRow> = rows.iter().filter(|r| r.status != "ok").collect();
    for r in &failed {
        eprintln!("{}: {}", r.id, r.error);
    }
    println!(
        "forged {} of {} samples into {}",
        rows.len() - failed.len(),
        rows.len(),
        args.out.display()
    );
    Ok(if failed.is_empty() { 0 } else { EXIT_ERROR })
}

#[derive(Serialize)]
struct ScoreRow {
    image: String,
    k_true: usize,
    k_r: usize,
    decision: Decision,
    mcc: f64,
    nmi: f64,
}

#[derive(Serialize)]
struct ScoreSummary {
    reports: usize,
    localization: LocalizationSummary,
    detection: Option<DetectionRates>,
}

fn rescore(report: &AnalysisReport, report_name: &str, gt_dir: &Path) -> Result<MetricRecord, Error> {
    let gt: GroundTruth = read_json(&gt_dir.join(format!("{report_name}.gt.json")))?;
    let pred = match &report.map_path {
        Some(p) => read_label_png(Path::new(p))?,
        None => LabelGrid::new(gt.labels.rows(), gt.labels.cols()),
    };
    Ok(MetricRecord {
        mcc: mcc_labels(&gt.labels, &pred)?,
        nmi: nmi_labels(&gt.labels, &pred)?,
        k_true: gt.k,
        k_hat: report.k_hat,
        k_r: report.k_r,
        decision: report.decision,
    })
}

fn score(args: ScoreArgs) -> Result<u8, Failure> {
    let dir = &args.results_dir;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::error(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".report.json"))
        .collect();
    paths.sort();

    let mut records = Vec::new();
    let mut rows = Vec::new();
    for p in &paths {
        let report: AnalysisReport = read_json(p)?;
        let name = p
            .file_name()
            .unwrap()
            .to_string_lossy()
            .trim_end_matches(".report.json")
            .to_string();
        let rec = match (&report.metrics, &args.gt_dir) {
            (_, Some(gt_dir)) => rescore(&report, &name, gt_dir)?,
            (Some(m), None) => m.clone(),
            (None, None) => {
                return Err(Failure::error(format!(
                    "{} has no metrics; pass --gt-dir with the ground truth",
                    p.display()
                )))
            }
        };
        rows.push(ScoreRow {
            image: name,
            k_true: rec.k_true,
            k_r: rec.k_r,
            decision: rec.decision,
            mcc: rec.mcc,
            nmi: rec.nmi,
        });
        records.push(rec);
    }

    let averaging = if args.undetected_as_zero {
        MccAveraging::UndetectedAsZero
    } else {
        MccAveraging::DetectedOnly
    };
    let decisions: Vec<(usize, Decision)> = records.iter().map(|r| (r.k_true, r.decision)).collect();
    let summary = ScoreSummary {
        reports: records.len(),
        localization: summarize_localization(&records, averaging),
        detection: (!decisions.is_empty()).then(|| aggregate(&decisions)).transpose()?,
    };
    let out = args.out.unwrap_or_else(|| dir.join("score.json"));
    write_json(&summary, &out)?;

    let csv_path = out.with_extension("csv");
    let mut w =
        csv::Writer::from_path(&csv_path).map_err(|e| Failure::error(format!("{}: {e}", csv_path.display())))?;
    for r in &rows {
        w.serialize(r)
            .map_err(|e| Failure::error(format!("{}: {e}", csv_path.display())))?;
    }
    if rows.is_empty() {
        w.write_record(["image", "k_true", "k_r", "decision", "mcc", "nmi"])
            .map_err(|e| Failure::error(format!("{}: {e}", csv_path.display())))?;
    }
    w.flush()
        .map_err(|e| Failure::error(format!("{}: {e}", csv_path.display())))?;

    let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    println!(
        "{} reports, {}/{} tampered detected, mean MCC {}, mean NMI {}",
        summary.reports,
        summary.localization.detected,
        summary.localization.tampered,
        show(summary.localization.mean_mcc),
        show(summary.localization.mean_nmi)
    );
    Ok(0)
}

fn bench(args: BenchArgs) -> Result<u8, Failure> {
    let backend = match args.backend {
        Backend::Oracle => BenchBackend::Oracle,
        Backend::Classical => BenchBackend::Classical,
        Backend::External => {
            return Err(Failure::backend(
                "bench forges its own samples; use oracle or classical",
            ))
        }
    };
    let opts = BenchOptions {
        samples: args.samples,
        size: args.size,
        seed: args.pipeline.seed,
        backend,
        jobs: args.jobs.max(1),
        pipeline: args.pipeline.config(),
        sources: args.sources,
        write_maps: !args.no_maps,
    };
    for path in run_bench(args.suite, &opts, &args.out)? {
        println!("{}", path.display());
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Forge(a) => forge(a),
        Command::Score(a) => score(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
