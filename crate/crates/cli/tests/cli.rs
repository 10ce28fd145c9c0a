use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_synthfair"));
    c.env_remove("SYNTHFAIR_OUT_DIR");
    c
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn prepare_compas(dir: &Path) -> PathBuf {
    let out = dir.join("compas.csv");
    let data = repo().join("data/compas.csv");
    let o = run(&["prepare", "--recipe", "compas", "--in", p(&data), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn prepare_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = repo().join("data/adult.csv");
    let out = dir.path().join("adult.csv");
    let o = run(&["prepare", "--recipe", "adult", "--in", p(&data), "--out", p(&out)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("rows read:    32561"), "{text}");
    assert!(text.contains("n = 32561"), "{text}");
    let lines = std::fs::read_to_string(&out).unwrap().lines().count();
    assert_eq!(lines, 32562);
}

#[test]
fn prepare_bad_path_fails() {
    let o = run(&["prepare", "--recipe", "compas", "--in", "/nonexistent/compas.csv", "--out", "/tmp/x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["prepare", "--recipe", "no-such-recipe", "--in", "x.csv"]);
    assert_eq!(o.status.code(), Some(1));
}

/// Flip count from the label rates of the raw file, restricted to the two
/// race groups the recipe keeps.
fn expected_massage_count() -> usize {
    let mut r = csv::Reader::from_path(repo().join("data/compas.csv")).unwrap();
    let h = r.headers().unwrap().clone();
    let race = h.iter().position(|c| c == "race").unwrap();
    let label = h.iter().position(|c| c == "two_year_recid").unwrap();
    let (mut pos, mut cnt) = ([0usize; 2], [0usize; 2]);
    for rec in r.records() {
        let rec = rec.unwrap();
        let g = match &rec[race] {
            "Caucasian" => 1,
            "African-American" => 0,
            _ => continue,
        };
        cnt[g] += 1;
        pos[g] += usize::from(&rec[label] == "1");
    }
    let n = cnt[0] + cnt[1];
    let gap = pos[1] as f64 / cnt[1] as f64 - pos[0] as f64 / cnt[0] as f64;
    (gap.abs() * cnt[0] as f64 * cnt[1] as f64 / n as f64 - 1e-9).ceil() as usize
}

#[test]
fn prepare_fair_compas_reports_flip_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = repo().join("data/compas.csv");
    let out = dir.path().join("fair.csv");
    let o = run(&["prepare", "--recipe", "compas-fair", "--in", p(&data), "--out", p(&out)]);
    assert!(o.status.success());
    let m = expected_massage_count();
    assert!(m > 0);
    assert!(stdout(&o).contains(&format!("M = {m} (promoted {m}, demoted {m})")), "{}", stdout(&o));
}

#[test]
fn synth_writes_requested_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let prepared = prepare_compas(dir.path());
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = run(&[
            "synth", "--recipe", "compas", "--in", p(&prepared), "--gen", "mwem", "--eps", "5.0", "--n", "4920",
            "--seed", "3", "--out", p(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    assert_eq!(String::from_utf8_lossy(&text).lines().count(), 4921);
    // synthetic output is in label vocabulary and loads back unchanged
    let again = dir.path().join("again.csv");
    let o = run(&["prepare", "--recipe", "compas", "--in", p(&a), "--out", p(&again)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&again).unwrap(), text);
}

#[test]
fn synth_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let prepared = prepare_compas(dir.path());
    let out = dir.path().join("s.csv");
    for (gen, eps) in [("mwem", "0"), ("mwem", "-1"), ("dp-gan", "1.0")] {
        let o = run(&["synth", "--recipe", "compas", "--in", p(&prepared), "--gen", gen, "--eps", eps, "--out", p(&out)]);
        assert_eq!(o.status.code(), Some(1), "{gen} {eps}");
    }
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(run(&["synth"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    let data = repo().join("data/compas.csv");
    let text = format!("dataset = \"compas\"\ndata = \"{}\"\n{body}", p(&data));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn benchmark_lists_every_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "synthesizers = []\nepsilons = [0.0]\nrounds = 0\nseed = 1\n");
    let o = run(&["benchmark", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for key in ["synthesizers", "epsilons", "rounds"] {
        assert!(err.contains(key), "{err}");
    }
}

#[test]
fn dry_run_prints_shipped_grid() {
    let cfg = repo().join("configs/compas-paper.toml");
    let o = run(&["benchmark", "--config", p(&cfg), "--dry-run"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("5 synthesizers x 4 epsilons x 10 rounds = 200 cells"), "{}", stdout(&o));
}

#[test]
fn small_benchmark_writes_reports_under_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "synthesizers = [\"mst\", \"degenerate\"]\nepsilons = [1.0, 5.0]\nrounds = 2\nseed = 9\n\n[classifier]\nepochs = 100\n",
    );
    let o = bin()
        .args(["benchmark", "--config", p(&cfg)])
        .env("SYNTHFAIR_OUT_DIR", dir.path().join("reports"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("reports/exp");
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    // 8 rounds + baseline, 31 metrics + epsilon_spent each
    assert_eq!(results.lines().count(), 1 + 9 * 32);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["rounds"].as_array().unwrap().len(), 8);
    assert_eq!(json["cells"].as_array().unwrap().len(), 5);
    let series = std::fs::read_to_string(out.join("series/r_auc.csv")).unwrap();
    assert_eq!(series.lines().next().unwrap(), "synthesizer,epsilon,mean,std,stderr,count");
    assert_eq!(series.lines().count(), 6);
}
