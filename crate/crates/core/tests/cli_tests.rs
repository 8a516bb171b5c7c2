use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splicereg")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = bin(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Writes `text` to `dir/name` and returns the path.
fn put(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn simulate(dir: &Path, name: &str, extra: &str, seed: u64) -> PathBuf {
    let cfg = put(dir, &format!("{name}.toml"), &format!("generator = \"gamma\"\n{extra}"));
    let out = dir.join(name);
    ok(&["simulate", "--config", &s(&cfg), "--seed", &seed.to_string(), "--out", &s(&out)]);
    out
}

fn report_value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in report:\n{report}"))
        .parse()
        .unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let m = (n - 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - m) * (y - m)).sum();
    let var: f64 = ra.iter().map(|x| (x - m) * (x - m)).sum();
    cov / var
}

#[test]
fn simulate_writes_consistent_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "sim", "n = 1000\n", 1);
    let data = fs::read_to_string(out.join("data.csv")).unwrap();
    let truth = fs::read_to_string(out.join("truth.csv")).unwrap();
    assert_eq!(data.lines().count(), 1001);
    assert_eq!(truth.lines().count(), 1001);
    assert_eq!(data.lines().next().unwrap(), "y,x1,x2,x3");
    assert!(out.join("schema.toml").exists() && out.join("report.txt").exists());
    // recombined truth equals the planted mean exp(x1 - 0.5 x2 + 0.5 x3)
    for (x, t) in csv_rows(&out.join("data.csv")).iter().zip(csv_rows(&out.join("truth.csv"))) {
        let mu = (x[1] - 0.5 * x[2] + 0.5 * x[3]).exp();
        let recombined = 0.9 * t[0] + 0.1 * t[2];
        assert!((recombined - mu).abs() < 1e-9 * mu, "{recombined} vs {mu}");
    }
}

#[test]
fn simulate_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a", "n = 300\n", 5);
    let b = simulate(dir.path(), "b", "n = 300\n", 5);
    let c = simulate(dir.path(), "c", "n = 300\n", 6);
    let read = |p: &Path| fs::read(p.join("data.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn config_errors_exit_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = put(dir.path(), "bad.toml", "generator = \"gamma\"\nlearning_rate = 0.1\n");
    let out = bin(&["simulate", "--config", &s(&cfg), "--out", &s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("learning_rate"), "{err}");

    let out = bin(&["fit-composite", "--out", &s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let out = bin(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

#[test]
fn evaluate_rejects_an_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sim", "n = 50\n", 1);
    let empty = put(dir.path(), "empty.csv", "");
    let cfg = put(
        dir.path(),
        "eval.toml",
        &format!(
            "data = \"{}\"\nschema = \"{}\"\npredictions = \"{}\"\n",
            s(&empty),
            s(&sim.join("schema.toml")),
            s(&sim.join("truth.csv"))
        ),
    );
    let out = bin(&["evaluate", "--config", &s(&cfg), "--out", &s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

fn evaluate_predictions(dir: &Path, sim: &Path, preds: &Path) -> String {
    let cfg = put(
        dir,
        "eval.toml",
        &format!(
            "data = \"{}\"\ntruth = \"{}\"\npredictions = \"{}\"\ntau = 0.9\n",
            s(&sim.join("data.csv")),
            s(&sim.join("truth.csv")),
            s(preds)
        ),
    );
    let out = dir.join("eval");
    ok(&["evaluate", "--config", &s(&cfg), "--out", &s(&out)]);
    fs::read_to_string(out.join("report.txt")).unwrap()
}

#[test]
fn evaluate_separates_truth_from_misspecified_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sim", "n = 20000\n", 2);
    let report = evaluate_predictions(dir.path(), &sim, &sim.join("truth.csv"));
    let cov = report_value(&report, "coverage");
    assert!((cov - 0.9).abs() < 0.01, "{report}");
    let se = report_value(&report, "v_plus_se");
    assert!(report_value(&report, "v_plus").abs() < 3.0 * se, "{report}");
    assert!(report_value(&report, "mre_v") < 1e-9);

    let constant: String = std::iter::once("e_minus,v,e_plus\n".to_string())
        .chain((0..20000).map(|_| "0.5,1,2\n".to_string()))
        .collect();
    let bad = put(dir.path(), "bad.csv", &constant);
    let report = evaluate_predictions(dir.path(), &sim, &bad);
    let cov = report_value(&report, "coverage");
    assert!((cov - 0.9).abs() > 0.1, "{report}");
}

const FAST: &str = "hidden_dims = [10, 5]\nn_starts = 2\nmax_epochs = 200\n";

#[test]
fn additive_and_multiplicative_quantile_heads_agree() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim", "n = 50000\n", 3);
    let mut losses = Vec::new();
    for head in ["additive", "multiplicative"] {
        let cfg = put(
            dir.path(),
            &format!("{head}.toml"),
            &format!("data = \"sim/data.csv\"\nhead = \"{head}\"\nlevels = [0.9]\n{FAST}"),
        );
        let out = dir.path().join(head);
        ok(&["fit-quantiles", "--config", &s(&cfg), "--out", &s(&out)]);
        let report = fs::read_to_string(out.join("report.txt")).unwrap();
        let row: Vec<f64> = report
            .lines()
            .find(|l| l.starts_with("0.900000,"))
            .unwrap()
            .split(',')
            .map(|c| c.parse().unwrap())
            .collect();
        assert!((row[2] - 0.9).abs() < 0.015, "{head}: {report}");
        losses.push(row[1]);
    }
    assert!((losses[0] - losses[1]).abs() < 0.02 * losses[0], "{losses:?}");
}

#[test]
fn different_scores_rank_policies_alike_and_inputs_stay_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sim", "n = 20000\n", 4);
    let before = fs::read(sim.join("data.csv")).unwrap();
    let specs = [
        ("plus", "form = \"revelation_plus\"\nphi_b = 0.0\nphi_plus_b = 0.0\n"),
        ("add", "form = \"additive\"\nphi_minus_b = 2.0\nphi_plus_b = 0.0\n"),
    ];
    let mut means = Vec::new();
    for (name, spec) in specs {
        let cfg = put(
            dir.path(),
            &format!("{name}.toml"),
            &format!("data = \"sim/data.csv\"\ntruth = \"sim/truth.csv\"\n{FAST}{spec}"),
        );
        let out = dir.path().join(name);
        ok(&["fit-composite", "--config", &s(&cfg), "--out", &s(&out)]);
        let rows = csv_rows(&out.join("test_predictions.csv"));
        assert!(rows.iter().all(|r| 0.0 < r[0] && r[0] < r[1] && r[1] < r[2]));
        means.push(rows.iter().map(|r| r[3]).collect::<Vec<f64>>());
    }
    let rho = spearman(&means[0], &means[1]);
    assert!(rho > 0.95, "rank correlation {rho}");
    assert_eq!(fs::read(sim.join("data.csv")).unwrap(), before);
}

#[test]
fn selected_score_file_feeds_a_composite_fit() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim", "n = 4000\n", 7);
    let base = "data = \"sim/data.csv\"\nhidden_dims = [6]\nn_starts = 1\nmax_epochs = 30\n";
    let cfg = put(dir.path(), "select.toml", base);
    let out = dir.path().join("select");
    ok(&["select-phi", "--config", &s(&cfg), "--out", &s(&out)]);
    let score = fs::read_to_string(out.join("score.toml")).unwrap();
    assert!(score.starts_with("form=\""), "{score}");
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("[phi_selection]") && report.contains("chosen form"), "{report}");

    let cfg = put(dir.path(), "fit.toml", &format!("{base}{score}"));
    let fit_out = dir.path().join("fit");
    ok(&["fit-composite", "--config", &s(&cfg), "--out", &s(&fit_out)]);
    let report = fs::read_to_string(fit_out.join("report.txt")).unwrap();
    assert!(report_value(&report, "coverage") > 0.8, "{report}");
    assert!(fit_out.join("model.json").exists() && fit_out.join("trace_start0.csv").exists());

    // the saved model evaluates on new data
    let eval_cfg = put(
        dir.path(),
        "eval_model.toml",
        &format!("data = \"sim/data.csv\"\nmodel = \"{}\"\n", s(&fit_out.join("model.json"))),
    );
    let eval_out = dir.path().join("eval_model");
    ok(&["evaluate", "--config", &s(&eval_cfg), "--out", &s(&eval_out)]);
    let report = fs::read_to_string(eval_out.join("report.txt")).unwrap();
    assert!(report.contains("head=composite_additive"), "{report}");
}
