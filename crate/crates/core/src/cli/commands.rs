use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Command, RunConfig};
use super::report::{num, Report};
use crate::data_io::{
    load_csv, load_csv_with_columns, read_triplets, schema_of, simulate_gamma, simulate_lognormal, split_stratified,
    write_csv, write_triplets, Dataset, FeatureColumn, Schema,
};
use crate::error::{Error, Result};
use crate::identification::{calibration_report, coverage_ratio, CalibrationReport};
use crate::network::{HeadKind, NetworkConfig, NetworkParams, Objective};
use crate::phi_select::{select_composite_spec, PhiSelection};
use crate::scores::{pinball_loss, CompositeTriplet, PhiIndex, ScoreSpec};
use crate::train::{fit, predict_average, to_triplets, FitReport, TrainConfig};

/// Everything needed to predict with a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub network: NetworkConfig,
    pub objective: Objective,
    pub schema: Schema,
    pub columns: Vec<FeatureColumn>,
    pub params: Vec<NetworkParams>,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let model: ModelFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        model.network.validate()?;
        model.objective.check_compatible(&model.network)?;
        for p in &model.params {
            p.check(&model.network)?;
        }
        Ok(model)
    }

    fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn predict(&self, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
        let params: Vec<&NetworkParams> = self.params.iter().collect();
        predict_average(&self.network, &params, dataset)
    }
}

pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    match command {
        Command::Simulate => simulate(cfg, out),
        Command::FitQuantiles => fit_quantiles(cfg, out),
        Command::FitComposite => fit_composite(cfg, out),
        Command::SelectPhi => select_phi(cfg, out),
        Command::Evaluate => evaluate(cfg, out),
    }
}

fn reject_keys(present: &[(&str, bool)], generator: &str) -> Result<()> {
    match present.iter().find(|(_, set)| *set) {
        Some((key, _)) => Err(Error::config(format!("key '{key}' does not apply to generator '{generator}'"))),
        None => Ok(()),
    }
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let generator = cfg.generator.as_deref().unwrap_or("gamma");
    let n = cfg.n.unwrap_or(1000);
    let tau = cfg.tau();
    let seed = cfg.seed();
    let mut report = Report::new(Command::Simulate.name());
    let ds = match generator {
        "gamma" => {
            reject_keys(&[("coeff_m", cfg.coeff_m.is_some()), ("coeff_s", cfg.coeff_s.is_some())], generator)?;
            let coeff = cfg.coeff_mu.clone().unwrap_or_else(|| vec![0.0, 1.0, -0.5, 0.5]);
            let shape = cfg.gamma_shape.unwrap_or(2.0);
            report.kv("coeff_mu", join(&coeff)).kv_num("gamma_shape", shape);
            simulate_gamma(n, seed, &coeff, shape, tau)?
        }
        "lognormal" => {
            reject_keys(
                &[("coeff_mu", cfg.coeff_mu.is_some()), ("gamma_shape", cfg.gamma_shape.is_some())],
                generator,
            )?;
            let m = cfg.coeff_m.clone().unwrap_or_else(|| vec![0.0, 0.5, -0.5]);
            let s = cfg.coeff_s.clone().unwrap_or_else(|| vec![-0.5, 0.5, 0.0]);
            report.kv("coeff_m", join(&m)).kv("coeff_s", join(&s));
            simulate_lognormal(n, seed, &m, &s, tau)?
        }
        other => return Err(Error::config(format!("unknown generator '{other}'"))),
    };
    write_csv(&ds, &out.join("data.csv"))?;
    write_triplets(ds.truth().expect("generators attach truth"), &out.join("truth.csv"))?;
    std::fs::write(out.join("schema.toml"), schema_of(&ds).to_toml_string())?;
    report
        .kv("generator", generator)
        .kv("seed", seed)
        .kv("n", ds.len())
        .kv_num("tau", tau)
        .kv_num("mean_response", mean(ds.responses()));
    report.write(&out.join("report.txt"))
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn schema_path(cfg: &RunConfig, data: &Path) -> PathBuf {
    cfg.schema
        .clone()
        .unwrap_or_else(|| data.parent().unwrap_or(Path::new(".")).join("schema.toml"))
}

fn attach_truth(ds: Dataset, truth: &Option<PathBuf>) -> Result<Dataset> {
    match truth {
        Some(p) => ds.with_truth(read_triplets(p)?),
        None => Ok(ds),
    }
}

/// Learn and test data: either an explicit test file or a stratified split.
fn learn_test(cfg: &RunConfig) -> Result<(Dataset, Dataset, Schema)> {
    let data = RunConfig::require(&cfg.data, "data")?;
    let schema = Schema::load(&schema_path(cfg, data))?;
    let full = attach_truth(load_csv(data, &schema)?, &cfg.truth)?;
    match &cfg.test_data {
        Some(test_path) => {
            if cfg.test_fraction.is_some() {
                return Err(Error::config("test_fraction and test_data are mutually exclusive"));
            }
            let test = load_csv_with_columns(test_path, &schema, full.columns())?;
            Ok((full, attach_truth(test, &cfg.test_truth)?, schema))
        }
        None => {
            if cfg.test_truth.is_some() {
                return Err(Error::config("test_truth requires test_data"));
            }
            let (learn, test) = split_stratified(&full, cfg.test_fraction.unwrap_or(0.1), cfg.seed())?;
            Ok((learn, test, schema))
        }
    }
}

fn write_fit_artifacts(fit: &FitReport, schema: &Schema, columns: &[FeatureColumn], out: &Path, report: &mut Report) -> Result<()> {
    let model = ModelFile {
        network: fit.network.clone(),
        objective: fit.objective.clone(),
        schema: schema.clone(),
        columns: columns.to_vec(),
        params: fit.fitted_params().into_iter().cloned().collect(),
    };
    model.save(&out.join("model.json"))?;
    report.section("starts").row(["start", "seed", "status", "epochs", "best_epoch", "best_val_loss"]);
    for (k, s) in fit.starts.iter().enumerate() {
        let status = if s.params.is_some() { "ok" } else { "failed" };
        report.row([
            k.to_string(),
            s.seed.to_string(),
            status.to_string(),
            s.trace.len().to_string(),
            s.best_epoch.to_string(),
            num(s.best_val_loss),
        ]);
        let mut trace = String::from("epoch,train_loss,val_loss\n");
        for e in &s.trace {
            trace.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
        }
        std::fs::write(out.join(format!("trace_start{k}.csv")), trace)?;
        if let Some(msg) = &s.failure {
            report.kv(&format!("start{k}_diagnostic"), msg.replace('\n', " "));
        }
    }
    Ok(())
}

fn network_config(cfg: &RunConfig, dataset: &Dataset, head: HeadKind, levels: Vec<f64>) -> Result<NetworkConfig> {
    NetworkConfig::new(dataset.width() - 1, cfg.hidden_dims(), head, levels, cfg.seed())
        .map_err(|e| Error::config(e.to_string()))
}

fn quantile_table(report: &mut Report, levels: &[f64], preds: &[Vec<f64>], ys: &[f64]) -> Result<()> {
    report.section("test").row(["level", "pinball_loss", "coverage"]);
    for (j, &tau) in levels.iter().enumerate() {
        let q: Vec<f64> = preds.iter().map(|p| p[j]).collect();
        let loss = q.iter().zip(ys).map(|(&a, &y)| pinball_loss(y, a, tau)).sum::<Result<f64>>()? / ys.len() as f64;
        report.row([num(tau), num(loss), num(coverage_ratio(&q, ys)?)]);
    }
    Ok(())
}

fn check_ordered(preds: &[Vec<f64>]) -> Result<()> {
    for (i, p) in preds.iter().enumerate() {
        if !(p[0] > 0.0) || p.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Numerical(format!("prediction {i} is not strictly ordered and positive: {p:?}")));
        }
    }
    Ok(())
}

fn fit_quantiles(cfg: &RunConfig, out: &Path) -> Result<()> {
    let levels = cfg.levels.clone().unwrap_or_else(|| vec![0.1, 0.5, 0.9]);
    let head = cfg.quantile_head()?;
    let train_cfg = cfg.train_config()?;
    let (learn, test, schema) = learn_test(cfg)?;
    let net = network_config(cfg, &learn, head, levels.clone())?;
    let objective = Objective::Pinball {
        weights: vec![1.0; levels.len()],
        levels: levels.clone(),
    };
    objective.check_compatible(&net)?;
    let fitted = fit(&learn, &net, &train_cfg, &objective)?;
    let preds = fitted.predict(&test)?;
    check_ordered(&preds)?;

    let mut report = Report::new(Command::FitQuantiles.name());
    report
        .kv("head", head.name())
        .kv("levels", levels.iter().map(|t| num(*t)).collect::<Vec<_>>().join(";"))
        .kv("seed", train_cfg.seed)
        .kv("n_learn", learn.len())
        .kv("n_test", test.len())
        .kv("parameters", net.param_count());
    if let Objective::Pinball { weights, .. } = &fitted.objective {
        report.kv("eta_weights", weights.iter().map(|w| num(*w)).collect::<Vec<_>>().join(";"));
    }
    quantile_table(&mut report, &levels, &preds, test.responses())?;
    write_fit_artifacts(&fitted, &schema, learn.columns(), out, &mut report)?;
    report.write(&out.join("report.txt"))
}

fn calibration_section(report: &mut Report, cal: &CalibrationReport, preds: &[CompositeTriplet], test: &Dataset, tau: f64) {
    let mean_y = mean(test.responses());
    let mean_pred = preds.iter().map(|t| t.mean(tau)).sum::<f64>() / preds.len() as f64;
    report
        .section("test")
        .kv("n", cal.n)
        .kv_num("coverage", cal.coverage)
        .kv_num("v_minus", cal.v_minus)
        .kv_num("v_minus_se", cal.v_minus_se)
        .kv_num("v_plus", cal.v_plus)
        .kv_num("v_plus_se", cal.v_plus_se)
        .kv_num("mean_response", mean_y)
        .kv_num("mean_recombined", mean_pred);
    if let Some(truth) = test.truth() {
        let mre = |f: fn(&CompositeTriplet) -> f64| {
            preds.iter().zip(truth).map(|(p, t)| ((f(p) - f(t)) / f(t)).abs()).sum::<f64>() / preds.len() as f64
        };
        report
            .kv_num("mre_e_minus", mre(|t| t.e_minus))
            .kv_num("mre_v", mre(|t| t.v))
            .kv_num("mre_e_plus", mre(|t| t.e_plus));
    }
}

fn spec_lines(report: &mut Report, spec: &ScoreSpec) {
    report.kv("form", spec.form.name()).kv_num("tau", spec.tau).kv_num("g_scale", spec.g_scale);
    for (name, idx) in [("phi", spec.phi), ("phi_minus", spec.phi_minus), ("phi_plus", spec.phi_plus)] {
        if let Some(p) = idx {
            report.kv_num(&format!("{name}_b"), p.b).kv_num(&format!("{name}_c"), p.c);
        }
    }
}

/// Pre-fits a mean and a τ-quantile network on `learn` and runs the variance regressions.
fn run_phi_selection(cfg: &RunConfig, learn: &Dataset, train_cfg: &TrainConfig) -> Result<(ScoreSpec, PhiSelection)> {
    let tau = cfg.tau();
    let mean_phi = PhiIndex::new(cfg.mean_b.unwrap_or(0.0), 2.0).map_err(|e| Error::config(e.to_string()))?;
    let mean_net = network_config(cfg, learn, HeadKind::Mean, vec![])?;
    let mean_obj = Objective::Bregman { phi: mean_phi };
    let fit_mean = |ds: &Dataset| -> Result<Vec<f64>> {
        let fitted = fit(ds, &mean_net, train_cfg, &mean_obj)?;
        Ok(fitted.predict(ds)?.into_iter().map(|p| p[0]).collect())
    };
    let mean_pred = fit_mean(learn)?;
    let q_net = network_config(cfg, learn, HeadKind::MultiQuantileAdditive, vec![tau])?;
    let q_obj = Objective::Pinball {
        levels: vec![tau],
        weights: vec![1.0],
    };
    let q_pred: Vec<f64> = fit(learn, &q_net, train_cfg, &q_obj)?
        .predict(learn)?
        .into_iter()
        .map(|p| p[0])
        .collect();
    select_composite_spec(learn, tau, &mean_pred, &q_pred, fit_mean, cfg.g_scale())
}

fn selection_section(report: &mut Report, sel: &PhiSelection) {
    report.section("phi_selection").row(["claims", "n", "intercept", "slope", "b", "c"]);
    for (name, f) in [("all", sel.all_claims), ("large", sel.large_claims), ("small", sel.small_claims)] {
        report.row([name.to_string(), f.n.to_string(), num(f.intercept), num(f.slope), num(f.b), num(f.c)]);
    }
}

fn has_score_keys(cfg: &RunConfig) -> bool {
    cfg.form.is_some()
        || [cfg.phi_b, cfg.phi_c, cfg.phi_minus_b, cfg.phi_minus_c, cfg.phi_plus_b, cfg.phi_plus_c]
            .iter()
            .any(Option::is_some)
}

fn fit_composite(cfg: &RunConfig, out: &Path) -> Result<()> {
    let train_cfg = cfg.train_config()?;
    let select = cfg.select_phi.unwrap_or(false);
    let explicit = has_score_keys(cfg);
    if select && explicit {
        return Err(Error::config("select_phi = true cannot be combined with explicit score keys"));
    }
    if !select && cfg.mean_b.is_some() {
        return Err(Error::config("mean_b only applies with select_phi = true"));
    }
    let spec_from_config = if select { None } else { Some(cfg.score_spec()?) };
    let (learn, test, schema) = learn_test(cfg)?;
    let mut report = Report::new(Command::FitComposite.name());
    let spec = match spec_from_config {
        Some(spec) => spec,
        None => {
            let (spec, sel) = run_phi_selection(cfg, &learn, &train_cfg)?;
            selection_section(&mut report, &sel);
            report.section("score");
            spec
        }
    };
    spec_lines(&mut report, &spec);
    let tau = spec.tau;
    let net = network_config(cfg, &learn, HeadKind::CompositeAdditive, vec![tau])?;
    let fitted = fit(&learn, &net, &train_cfg, &Objective::Composite { spec })?;
    let raw = fitted.predict(&test)?;
    check_ordered(&raw)?;
    let preds = to_triplets(&raw);
    let cal = calibration_report(&preds, test.responses(), tau)?;
    report
        .kv("seed", train_cfg.seed)
        .kv("n_learn", learn.len())
        .kv("n_test", test.len())
        .kv("parameters", net.param_count());
    calibration_section(&mut report, &cal, &preds, &test, tau);
    write_fit_artifacts(&fitted, &schema, learn.columns(), out, &mut report)?;
    let mut pred_csv = String::from("e_minus,v,e_plus,mean\n");
    for t in &preds {
        pred_csv.push_str(&format!("{},{},{},{}\n", t.e_minus, t.v, t.e_plus, t.mean(tau)));
    }
    std::fs::write(out.join("test_predictions.csv"), pred_csv)?;
    report.write(&out.join("report.txt"))
}

fn select_phi(cfg: &RunConfig, out: &Path) -> Result<()> {
    let explicit = has_score_keys(cfg) || cfg.select_phi.is_some();
    if explicit {
        return Err(Error::config("select-phi determines the score itself; remove form/phi_* keys"));
    }
    let train_cfg = cfg.train_config()?;
    let (learn, _test, _schema) = learn_test(cfg)?;
    let (spec, sel) = run_phi_selection(cfg, &learn, &train_cfg)?;
    let mut report = Report::new(Command::SelectPhi.name());
    report.kv("seed", train_cfg.seed).kv("n_learn", learn.len());
    selection_section(&mut report, &sel);
    report.section("table").raw(&sel.table());
    report.section("score");
    spec_lines(&mut report, &spec);

    let mut score = Report::default();
    score.kv("form", format!("\"{}\"", spec.form.name())).kv("tau", spec.tau).kv("g_scale", spec.g_scale);
    for (name, idx) in [("phi", spec.phi), ("phi_minus", spec.phi_minus), ("phi_plus", spec.phi_plus)] {
        if let Some(p) = idx {
            score.kv(&format!("{name}_b"), p.b).kv(&format!("{name}_c"), p.c);
        }
    }
    score.write(&out.join("score.toml"))?;
    report.write(&out.join("report.txt"))
}

fn evaluate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = RunConfig::require(&cfg.data, "data")?;
    let mut report = Report::new(Command::Evaluate.name());
    match (&cfg.model, &cfg.predictions) {
        (Some(model_path), None) => {
            if cfg.tau.is_some() {
                return Err(Error::config("tau is taken from the model; remove the key"));
            }
            let model = ModelFile::load(model_path)?;
            let schema = match &cfg.schema {
                Some(p) => Schema::load(p)?,
                None => model.schema.clone(),
            };
            let ds = attach_truth(load_csv_with_columns(data, &schema, &model.columns)?, &cfg.truth)?;
            let raw = model.predict(&ds)?;
            check_ordered(&raw)?;
            report.kv("head", model.network.head.name()).kv("n", ds.len());
            match model.network.head {
                HeadKind::CompositeAdditive => {
                    let tau = model.network.levels[0];
                    let preds = to_triplets(&raw);
                    let cal = calibration_report(&preds, ds.responses(), tau)?;
                    report.kv_num("tau", tau);
                    calibration_section(&mut report, &cal, &preds, &ds, tau);
                }
                HeadKind::MultiQuantileAdditive | HeadKind::MultiQuantileMultiplicative => {
                    quantile_table(&mut report, &model.network.levels, &raw, ds.responses())?;
                }
                HeadKind::Mean => {
                    let mu: Vec<f64> = raw.iter().map(|p| p[0]).collect();
                    report.kv_num("mean_response", mean(ds.responses())).kv_num("mean_prediction", mean(&mu));
                }
            }
        }
        (None, Some(pred_path)) => {
            let tau = cfg.tau();
            let schema = Schema::load(&schema_path(cfg, data))?;
            let ds = attach_truth(load_csv(data, &schema)?, &cfg.truth)?;
            let preds = read_triplets(pred_path)?;
            let cal = calibration_report(&preds, ds.responses(), tau)?;
            report.kv("head", "external_triplets").kv("n", ds.len()).kv_num("tau", tau);
            calibration_section(&mut report, &cal, &preds, &ds, tau);
        }
        _ => return Err(Error::config("exactly one of 'model' and 'predictions' is required")),
    }
    report.write(&out.join("report.txt"))
}
