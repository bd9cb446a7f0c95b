use std::path::Path;
use std::process::{Command, Output};

fn graphofuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphofuse"))
        .args(args)
        .env("GRAPHOFUSE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, subjects: &str, seed: &str) {
    let out = graphofuse(&["synth", "--subjects", subjects, "--seed", seed, "--out", s(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_then_conditional_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    synth(&d, "40", "7");
    let out = graphofuse(&["--data", s(&d), "--seed", "7", "evaluate", "--mode", "conditional", "--tau", "0.2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(d.join("report.csv")).unwrap();
    assert!(report.starts_with("scope,accuracy,precision,recall,tp,fp,fn,tn\npooled,"));
    assert_eq!(report.lines().count(), 2 + 10);
    assert!(d.join("decisions.csv").exists());
    assert!(d.join("run_manifest.json").exists());
    assert!(d.join("models/fold0_fused.model").exists());
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(graphofuse(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(graphofuse(&["evaluate", "--mode", "majority"]).status.code(), Some(2));
}

#[test]
fn missing_offline_features_is_a_coverage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, "8", "3");
    let out = graphofuse(&["--data", s(d), "extract-online"]);
    assert!(out.status.success());
    let out = graphofuse(&["--data", s(d), "evaluate", "--k", "4"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("CoverageMismatch"), "{err}");
}

#[test]
fn domain_errors_name_their_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let out = graphofuse(&["--data", s(tmp.path()), "ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("MissingFile"));

    let out = graphofuse(&["--data", s(tmp.path()), "evaluate", "--tau", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("InvalidConfig"));
}

/// Stage files on disk give the same report as computing in memory, and a
/// repeated run with the same manifest reproduces the report byte for byte.
#[test]
fn staged_runs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("corpus");
    synth(&d, "12", "5");
    let eval = |out_dir: &Path| {
        let out = graphofuse(&[
            "--data", s(&d), "--output-dir", s(out_dir), "--seed", "5",
            "evaluate", "--mode", "soft-vote", "--k", "3",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (
            std::fs::read(out_dir.join("report.csv")).unwrap(),
            std::fs::read(out_dir.join("run_manifest.json")).unwrap(),
        )
    };
    let a = tmp.path().join("a");
    let (report_a, manifest_a) = eval(&a);
    let (report_again, manifest_again) = eval(&a);
    assert_eq!(manifest_a, manifest_again);
    assert_eq!(report_a, report_again);

    let b = tmp.path().join("b");
    for stage in [&["extract-online"][..], &["rasterize"], &["extract-offline", "--extractor", "zoning"]] {
        let mut args = vec!["--data", s(&d), "--output-dir", s(&b)];
        args.extend_from_slice(stage);
        let out = graphofuse(&args);
        assert!(out.status.success(), "{stage:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(b.join("images").read_dir().unwrap().count() > 0);
    let (report_b, _) = eval(&b);
    assert_eq!(report_a, report_b);
}

#[test]
fn sweep_and_train_write_their_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, "12", "9");
    let out = graphofuse(&["--data", s(d), "sweep-tau", "--taus", "0,0.2,0.4", "--k", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = std::fs::read_to_string(d.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 4);
    assert!(sweep.starts_with("tau,accuracy,precision,recall,trigger_rate\n0,"));

    let out = graphofuse(&["--data", s(d), "train", "--algo", "gbt", "--modality", "online"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("models/online_gbt.model").exists());
}

#[test]
fn embedding_features_feed_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, "8", "2");
    let meta = std::fs::read_to_string(d.join("metadata.csv")).unwrap();
    let mut emb = String::from("# toy vectors\ndim=3\n");
    for (i, line) in meta.lines().skip(1).enumerate() {
        let file = line.split(',').nth(3).unwrap();
        let id = Path::new(file).file_stem().unwrap().to_str().unwrap();
        let dyg = if line.contains(",DYG,") { 1.0 } else { 0.0 };
        emb += &format!("{id} {} {} {}\n", dyg + (i % 3) as f64 * 0.1, (i % 5) as f64, 0.5);
    }
    let path = d.join("emb.txt");
    std::fs::write(&path, emb).unwrap();
    for stage in [
        vec!["extract-online"],
        vec!["extract-offline", "--extractor", "embedding", "--embeddings", s(&path)],
        vec!["evaluate", "--mode", "feature-fusion", "--k", "4"],
    ] {
        let mut args = vec!["--data", s(d)];
        args.extend(stage);
        let out = graphofuse(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let without = graphofuse(&["--data", s(d), "extract-offline", "--extractor", "embedding"]);
    assert_eq!(without.status.code(), Some(1));
}
