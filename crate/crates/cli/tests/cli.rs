use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ensemble-calib"));
    cmd.env_remove("ENSEMBLE_CALIB_THREADS").env_remove("SOURCE_DATE_EPOCH");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Values of the second line of a two-line CSV printout, keyed by header.
fn printed(out: &Output) -> Vec<(String, String)> {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let mut lines = text.lines();
    let head = lines.next().unwrap().split(',').map(String::from);
    let vals = lines.next().unwrap().split(',').map(String::from);
    head.zip(vals).collect()
}

fn value(out: &Output, key: &str) -> String {
    printed(out).into_iter().find(|(k, _)| k == key).unwrap().1
}

#[test]
fn default_study_has_420_rows_and_stable_schema() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "study.cfg", "");
    let out = dir.path().join("out");
    let res = run(&["run-study", "--config", s(&cfg), "--out", s(&out), "--mode", "analytic"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let rows = fs::read_to_string(out.join("rows.csv")).unwrap();
    let mut lines = rows.lines();
    assert_eq!(lines.next().unwrap(), "seed,prior_mean,method,coverage,mean_width,q_used,saturated");
    assert_eq!(lines.count(), 420);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next().unwrap(), "prior_mean,method,mean_coverage,mean_width,n_seeds,n_saturated");
    assert_eq!(lines.count(), 42);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 10);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["complete"], true);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "study.cfg",
        "mode = sampling\nsamples = 2000\nprior_means = -2..2\nseeds = 0..2\n",
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b, &a] {
        let res = run(&["run-study", "--config", s(&cfg), "--out", s(out)]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
    }
    for f in ["rows.csv", "summary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let before = fs::read(a.join("manifest.json")).unwrap();
    let res = run(&["run-study", "--config", s(&cfg), "--out", s(&a)]);
    assert_eq!(code(&res), 0);
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), before);
}

#[test]
fn threads_env_does_not_change_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "study.cfg", "mode = sampling\nsamples = 500\nprior_means = 0, 4\nseeds = 1, 2\n");
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    let r1 = bin().env("ENSEMBLE_CALIB_THREADS", "1").args(["run-study", "--config", s(&cfg), "--out", s(&one)]).output().unwrap();
    let r4 = bin().env("ENSEMBLE_CALIB_THREADS", "4").args(["run-study", "--config", s(&cfg), "--out", s(&four)]).output().unwrap();
    assert_eq!((code(&r1), code(&r4)), (0, 0));
    assert_eq!(fs::read(one.join("rows.csv")).unwrap(), fs::read(four.join("rows.csv")).unwrap());
    let bad = bin().env("ENSEMBLE_CALIB_THREADS", "zero").args(["run-study", "--out", s(&one)]).output().unwrap();
    assert_eq!(code(&bad), 3);
    assert!(stderr(&bad).contains("ENSEMBLE_CALIB_THREADS"));
}

#[test]
fn sampling_extremes_report_saturation() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "study.cfg", "prior_means = -10, 10\n");
    let out = dir.path().join("out");
    let res = run(&["run-study", "--config", s(&cfg), "--out", s(&out), "--seed-list", "0..9"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let rows = fs::read_to_string(out.join("rows.csv")).unwrap();
    assert!(rows.lines().any(|l| l.contains(",calibrated,") && l.ends_with(",true")));
}

#[test]
fn overrides_reach_the_manifest() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let res = run(&[
        "run-study", "--out", s(&out), "--mode", "analytic", "--seed-list", "3,7", "--alpha", "0.2", "--epsilon", "0.1",
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([3, 7]));
    let config = manifest["config"].as_str().unwrap();
    assert!(config.contains("alpha = 0.2\n") && config.contains("epsilon = 0.1\n"));
    let rows = fs::read_to_string(out.join("rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 21 * 2 * 2);
}

#[test]
fn exit_codes_are_distinct() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");

    let bad_alpha = write(dir.path(), "bad.cfg", "alpha = 1.5\n");
    let res = run(&["run-study", "--config", s(&bad_alpha), "--out", s(&out)]);
    assert_eq!(code(&res), 3);
    assert!(stderr(&res).contains("alpha"));

    let unknown = write(dir.path(), "unknown.cfg", "colour = blue\n");
    let res = run(&["run-study", "--config", s(&unknown), "--out", s(&out)]);
    assert_eq!(code(&res), 3);
    assert!(stderr(&res).contains("colour"));

    let res = run(&["run-study", "--config", s(&dir.path().join("missing.cfg")), "--out", s(&out)]);
    assert_eq!(code(&res), 4);

    let samples = write(dir.path(), "samples.csv", "1,2,3\n4,5,6\n");
    let labels = write(dir.path(), "labels.csv", "y\n1\n");
    let res = run(&["calibrate", "--samples", s(&samples), "--labels", s(&labels)]);
    assert_eq!(code(&res), 5);

    let summary = write(dir.path(), "summary.csv", "");
    let res = run(&["plot", "--summary", s(&summary), "--out", s(&out)]);
    assert_eq!(code(&res), 6);

    let res = run(&["run-study", "--bogus"]);
    assert_eq!(code(&res), 2);
}

/// Deterministic standard-normal values from a fixed-seed generator.
fn normals(n: usize, seed: u64) -> Vec<f64> {
    use ensemble_calib::RngStream;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = RngStream::new(seed, 0);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn calibration_files(dir: &Path, m: usize, s_per_row: usize, label_shift: f64) -> (PathBuf, PathBuf) {
    let draws = normals(m * s_per_row, 1);
    let rows: Vec<String> = draws
        .chunks(s_per_row)
        .map(|c| c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        .collect();
    let samples = write(dir, "samples.csv", &(rows.join("\n") + "\n"));
    let labels: Vec<String> = normals(m, 2).iter().map(|v| (v + label_shift).to_string()).collect();
    let labels = write(dir, "labels.csv", &format!("y\n{}\n", labels.join("\n")));
    (samples, labels)
}

#[test]
fn calibrate_standard_normal_oracle() {
    let dir = TempDir::new().unwrap();
    let (samples, labels) = calibration_files(dir.path(), 1000, 1000, 0.0);
    let res = run(&["calibrate", "--samples", s(&samples), "--labels", s(&labels), "--alpha", "0.1"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let q: f64 = value(&res, "q_hat").parse().unwrap();
    assert!((0.035..=0.065).contains(&q), "q_hat = {q}");
    assert_eq!(value(&res, "saturated"), "false");
    assert_eq!(value(&res, "epsilon").parse::<f64>().unwrap(), 0.05);
    let slack: f64 = value(&res, "pac_slack").parse().unwrap();
    assert!((slack - ((2.0f64 * 512.0 / 0.05).ln() / 2000.0).sqrt()).abs() < 1e-12);

    let all = run(&["calibrate", "--samples", s(&samples), "--labels", s(&labels), "--alpha", "0.999999"]);
    assert_eq!(value(&all, "q_hat").parse::<f64>().unwrap(), 0.5);
}

#[test]
fn calibrate_far_labels_saturate() {
    let dir = TempDir::new().unwrap();
    let (samples, labels) = calibration_files(dir.path(), 50, 200, 100.0);
    let res = run(&["calibrate", "--samples", s(&samples), "--labels", s(&labels), "--alpha", "0.1"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(value(&res, "saturated"), "true");
}

#[test]
fn prior_quality_kinds() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "quality.cfg", "mc_reps = 100\ninner_reps = 400\n");
    let get = |kind: &str, extra: &[&str]| {
        let mut args = vec!["prior-quality", "--config", s(&cfg), "--kind", kind];
        args.extend_from_slice(extra);
        let res = run(&args);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
        res
    };
    let avg = get("avg", &["--alpha", "0.1"]);
    let q: f64 = value(&avg, "value").parse().unwrap();
    let se: f64 = value(&avg, "std_error").parse().unwrap();
    assert!((q - 0.9).abs() <= 3.0 * se, "Q = {q} +- {se}");
    assert_eq!(value(&avg, "kind"), "avg");
    let worst: f64 = value(&get("worst", &["--alpha", "0.1"]), "value").parse().unwrap();
    assert!(worst <= q);

    let cfg0 = write(dir.path(), "q0.cfg", "mc_reps = 20\ninner_reps = 50\nquality_threshold = 0\n");
    let res = run(&["prior-quality", "--config", s(&cfg0), "--kind", "prob", "--alpha", "0.99"]);
    assert_eq!(value(&res, "value").parse::<f64>().unwrap(), 1.0);

    let res = run(&["prior-quality", "--kind", "median"]);
    assert_eq!(code(&res), 2);
}

#[test]
fn plot_outputs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let res = run(&["run-study", "--out", s(&out), "--mode", "analytic"]);
    assert_eq!(code(&res), 0);
    let plots = dir.path().join("plots");
    let res = run(&["plot", "--summary", s(&out.join("summary.csv")), "--out", s(&plots)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let coverage = fs::read_to_string(plots.join("coverage.svg")).unwrap();
    let width = fs::read_to_string(plots.join("width.svg")).unwrap();
    assert!(coverage.starts_with("<svg") && width.starts_with("<svg"));
    assert!(coverage.contains("naive") && coverage.contains("calibrated") && coverage.contains("target 0.9"));
    let again = dir.path().join("again");
    run(&["plot", "--summary", s(&out.join("summary.csv")), "--out", s(&again)]);
    assert_eq!(fs::read(again.join("coverage.svg")).unwrap(), coverage.as_bytes());

    let single = write(
        dir.path(),
        "single.csv",
        "prior_mean,method,mean_coverage,mean_width,n_seeds,n_saturated\n0,naive,0.9,10,10,0\n0,calibrated,0.91,9.5,10,0\n",
    );
    assert_eq!(code(&run(&["plot", "--summary", s(&single), "--out", s(&plots)])), 0);

    let broken = write(
        dir.path(),
        "broken.csv",
        "prior_mean,method,mean_coverage,mean_width,n_seeds,n_saturated\n0,naive,0.9,10,10,0\n1,naive,oops,10,10,0\n",
    );
    let res = run(&["plot", "--summary", s(&broken), "--out", s(&plots)]);
    assert_eq!(code(&res), 6);
    assert!(stderr(&res).contains("broken.csv:3"), "{}", stderr(&res));
}
