use std::path::Path;
use std::process::{Command, Output};

use splicetrace::io::{read_json, read_label_png};
use splicetrace::metrics::Decision;
use splicetrace::pipeline::AnalysisReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splicetrace"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn forge_generated(dir: &Path, k: usize, count: usize) {
    let out = run(bin()
        .args([
            "forge",
            "--k",
            &k.to_string(),
            "--count",
            &count.to_string(),
            "--size",
            "256",
            "--out",
        ])
        .arg(dir));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

const K3_MANIFEST: &str = r#"[{
    "id": "k3",
    "source": "synth:21:384x384",
    "donors": ["synth:22:384x384", "synth:23:384x384"],
    "recipe": {
        "k": 3, "type": "I",
        "qf_background": 85, "qf_donors": [65, 95],
        "boxes": [{"top": 40, "left": 40, "h": 128, "w": 128}, {"top": 200, "left": 200, "h": 128, "w": 128}],
        "shifts": [[0, 0], [3, 5], [6, 1]],
        "seed": 4
    }
}]"#;

#[test]
fn pristine_sample_exits_zero_without_map() {
    let tmp = tempfile::tempdir().unwrap();
    let forged = tmp.path().join("forged");
    forge_generated(&forged, 1, 1);
    let results = tmp.path().join("results");
    let out = run(bin()
        .arg("analyze")
        .arg(forged.join("00000.png"))
        .arg("--out")
        .arg(&results));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: AnalysisReport = read_json(&results.join("00000.report.json")).unwrap();
    assert_eq!(report.decision, Decision::Pristine);
    assert_eq!((report.k_hat, report.k_r), (1, 1));
    assert!(report.map_path.is_none());
    assert!(!results.join("00000.map.png").exists());
    assert_eq!((report.timing.cluster, report.timing.refine), (0.0, 0.0));
}

#[test]
fn k3_sample_is_tampered_with_perfect_attribution() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("m.json");
    std::fs::write(&manifest, K3_MANIFEST).unwrap();
    let forged = tmp.path().join("forged");
    let out = run(bin().arg("forge").arg(&manifest).arg("--out").arg(&forged));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let results = tmp.path().join("results");
    let out = run(bin()
        .arg("analyze")
        .arg(forged.join("k3.png"))
        .arg("--out")
        .arg(&results));
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let report: AnalysisReport = read_json(&results.join("k3.report.json")).unwrap();
    assert_eq!(report.k_r, 3);
    let m = report.metrics.as_ref().unwrap();
    assert_eq!((m.nmi, m.mcc), (1.0, 1.0));

    // report and map agree
    let map = read_label_png(Path::new(report.map_path.as_ref().unwrap())).unwrap();
    assert_eq!(map.distinct(), report.labels);
    assert_eq!(map.distinct().len(), report.k_r);
}

#[test]
fn missing_tensor_exits_three_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let forged = tmp.path().join("forged");
    forge_generated(&forged, 2, 1);
    let expected = tmp.path().join("absent.q1t");
    let out = run(bin()
        .args(["analyze", "--backend", "external", "--tensor"])
        .arg(&expected)
        .arg(forged.join("00000.png"))
        .arg("--out")
        .arg(tmp.path().join("r")));
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains(&expected.display().to_string()));

    // the default location is the image's sibling
    std::fs::remove_file(forged.join("00000.q1t")).unwrap();
    let out = run(bin()
        .args(["analyze", "--backend", "external"])
        .arg(forged.join("00000.png"))
        .arg("--out")
        .arg(tmp.path().join("r")));
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("00000.q1t"));
}

#[test]
fn classical_without_q2_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let forged = tmp.path().join("forged");
    forge_generated(&forged, 1, 1);
    let out = run(bin()
        .args(["analyze", "--backend", "classical"])
        .arg(forged.join("00000.png"))
        .arg("--out")
        .arg(tmp.path().join("r")));
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--qf2"));
}

#[test]
fn unreadable_image_exits_two_with_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let forged = tmp.path().join("forged");
    forge_generated(&forged, 1, 1);
    let fake = forged.join("broken.png");
    std::fs::write(&fake, b"not a png").unwrap();
    let out = run(bin()
        .arg("analyze")
        .arg(&fake)
        .arg("--gt")
        .arg(forged.join("00000.gt.json"))
        .arg("--out")
        .arg(tmp.path().join("r")));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage `load`"));
}

#[test]
fn batch_exit_code_and_score() {
    let tmp = tempfile::tempdir().unwrap();
    let pristine = tmp.path().join("p");
    let tampered = tmp.path().join("t");
    forge_generated(&pristine, 1, 2);
    forge_generated(&tampered, 2, 2);
    // reports are named by stem, so keep the stems distinct
    for ext in ["png", "gt.json"] {
        std::fs::rename(
            pristine.join(format!("00000.{ext}")),
            pristine.join(format!("p0.{ext}")),
        )
        .unwrap();
    }
    let results = tmp.path().join("results");
    let out = run(bin()
        .arg("analyze")
        .arg(pristine.join("p0.png"))
        .arg(tampered.join("00000.png"))
        .arg(tampered.join("00001.png"))
        .args(["--jobs", "2", "--out"])
        .arg(&results));
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(bin().arg("score").arg(&results));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = read_json(&results.join("score.json")).unwrap();
    assert_eq!(summary["reports"], 3);
    assert_eq!(summary["localization"]["tampered"], 2);
    assert!(results.join("score.csv").exists());
}

#[test]
fn forge_batches_are_byte_identical_across_job_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, jobs) in [(&a, "1"), (&b, "4")] {
        let out = run(bin()
            .args([
                "forge", "--k", "2", "--count", "6", "--size", "256", "--seed", "9", "--jobs", jobs, "--out",
            ])
            .arg(dir));
        assert_eq!(code(&out), 0);
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 6 * 6 + 1);
    for n in names {
        assert_eq!(
            std::fs::read(a.join(&n)).unwrap(),
            std::fs::read(b.join(&n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn empty_bench_grid_writes_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["bench", "kconf", "--samples", "0", "--out"])
        .arg(tmp.path()));
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(tmp.path().join("kconf.csv")).unwrap();
    assert!(text.lines().count() >= 1);
    let samples = std::fs::read_to_string(tmp.path().join("kconf_samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1);
}
