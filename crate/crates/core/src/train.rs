//! Mini-batch adaptive-moment training with validation early stopping and
//! multi-start averaging.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::{stratified_partition, Dataset};
use crate::error::{Error, Result};
use crate::functionals::{empirical_es, empirical_quantile_set};
use crate::identification::{calibration_report, CalibrationReport};
use crate::network::{HeadKind, NetworkConfig, NetworkParams, Objective, Workspace};
use crate::scores::{check_tau, pinball_raw, CompositeTriplet};

/// Weights `η_j` of the levels in a multi-quantile objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaWeights {
    /// Inverse intercept-only pinball loss per level, see [`auto_eta`].
    Auto,
    Fixed(Vec<f64>),
}

/// How head biases are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInit {
    /// Biases reproduce the intercept-only empirical solution on the training split.
    Empirical,
    /// All head biases zero.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub moment_decays: (f64, f64),
    pub n_starts: usize,
    pub val_fraction: f64,
    pub eta_weights: EtaWeights,
    pub seed: u64,
    /// Nesterov-accelerated moment estimate.
    pub nesterov: bool,
    pub head_init: HeadInit,
    /// Freezes all layer weights at zero so that only the head biases are fitted.
    pub intercept_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 512,
            max_epochs: 500,
            patience: 15,
            learning_rate: 1e-3,
            moment_decays: (0.9, 0.999),
            n_starts: 5,
            val_fraction: 0.2,
            eta_weights: EtaWeights::Auto,
            seed: 0,
            nesterov: true,
            head_init: HeadInit::Empirical,
            intercept_only: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("n_starts", self.n_starts),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be at least 1")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        let (b1, b2) = self.moment_decays;
        if !(b1 > 0.0 && b1 < 1.0 && b2 > 0.0 && b2 < 1.0) {
            return Err(Error::config("moment_decays must lie in (0, 1)"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::config("val_fraction must lie in (0, 1)"));
        }
        if let EtaWeights::Fixed(w) = &self.eta_weights {
            if w.is_empty() || w.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::config("eta_weights must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Outcome of one random start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartResult {
    pub seed: u64,
    /// Parameters of the best validation epoch; `None` if the start failed.
    pub params: Option<NetworkParams>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub trace: Vec<EpochRecord>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub network: NetworkConfig,
    /// Objective actually minimized (pinball weights resolved).
    pub objective: Objective,
    pub starts: Vec<StartResult>,
    /// Row indices of the learn data used for validation.
    pub val_indices: Vec<usize>,
    /// Start-averaged predictions on the validation rows.
    pub val_predictions: Vec<Vec<f64>>,
    /// Composite fits only: calibration on the validation rows.
    pub calibration: Option<CalibrationReport>,
}

impl FitReport {
    pub fn fitted_params(&self) -> Vec<&NetworkParams> {
        self.starts.iter().filter_map(|s| s.params.as_ref()).collect()
    }

    /// Start-averaged head outputs for every row of `dataset`.
    pub fn predict(&self, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
        predict_average(&self.network, &self.fitted_params(), dataset)
    }
}

/// Response-scale average of the head outputs of several fitted parameter sets.
pub fn predict_average(cfg: &NetworkConfig, params: &[&NetworkParams], dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    if params.is_empty() {
        return Err(Error::domain("no fitted parameters to predict with"));
    }
    if dataset.width() != cfg.input_dim + 1 {
        return Err(Error::domain(format!(
            "dataset has {} features, model expects {}",
            dataset.width() - 1,
            cfg.input_dim
        )));
    }
    for p in params {
        p.check(cfg)?;
    }
    let mut ws = Workspace::new(cfg);
    let k = cfg.n_heads();
    let inv = 1.0 / params.len() as f64;
    Ok((0..dataset.len())
        .map(|i| {
            let mut acc = vec![0.0; k];
            for p in params {
                for (a, o) in acc.iter_mut().zip(ws.forward(dataset.row(i), &p.values, cfg)) {
                    *a += o;
                }
            }
            acc.iter_mut().for_each(|a| *a *= inv);
            acc
        })
        .collect())
}

/// Converts composite head outputs to triplets.
pub fn to_triplets(outputs: &[Vec<f64>]) -> Vec<CompositeTriplet> {
    outputs
        .iter()
        .map(|o| CompositeTriplet {
            e_minus: o[0],
            v: o[1],
            e_plus: o[2],
        })
        .collect()
}

/// Training/validation partition stratified by response decile.
pub fn split_learn(dataset: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, val) = split_learn_indices(dataset, val_fraction, seed)?;
    Ok((dataset.subset(&train), dataset.subset(&val)))
}

fn split_learn_indices(dataset: &Dataset, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if dataset.len() < 10 {
        return Err(Error::domain(format!("need at least 10 observations, got {}", dataset.len())));
    }
    stratified_partition(dataset.responses(), val_fraction, seed)
}

/// `η_j = 1 / min_a mean L_{τ_j}(y; a)`; levels with zero minimal loss get weight 1.
pub fn auto_eta(responses: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
    if levels.is_empty() {
        return Err(Error::domain("no levels"));
    }
    levels
        .iter()
        .map(|&tau| {
            check_tau(tau)?;
            let q = empirical_quantile_set(responses, tau)?.lower;
            let loss = responses.iter().map(|&y| pinball_raw(y, q, tau)).sum::<f64>() / responses.len() as f64;
            Ok(if loss > 0.0 && loss.is_finite() { 1.0 / loss } else { 1.0 })
        })
        .collect()
}

fn resolve_objective(objective: &Objective, cfg: &TrainConfig, train_responses: &[f64]) -> Result<Objective> {
    match objective {
        Objective::Pinball { levels, .. } => {
            let weights = match &cfg.eta_weights {
                EtaWeights::Auto => auto_eta(train_responses, levels)?,
                EtaWeights::Fixed(w) => {
                    if w.len() != levels.len() {
                        return Err(Error::config(format!(
                            "{} eta_weights for {} levels",
                            w.len(),
                            levels.len()
                        )));
                    }
                    w.clone()
                }
            };
            Ok(Objective::Pinball {
                levels: levels.clone(),
                weights,
            })
        }
        other => Ok(other.clone()),
    }
}

const DIFF_FLOOR: f64 = 1e-6;

/// Head biases reproducing the intercept-only empirical solution.
fn empirical_biases(cfg: &NetworkConfig, ys: &[f64]) -> Result<Vec<f64>> {
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let floor = DIFF_FLOOR * mean;
    let ln_diff = |hi: f64, lo: f64| (hi - lo).max(floor).ln();
    Ok(match cfg.head {
        HeadKind::Mean => vec![mean.ln()],
        HeadKind::MultiQuantileAdditive => {
            let qs = cfg
                .levels
                .iter()
                .map(|&t| Ok(empirical_quantile_set(ys, t)?.lower))
                .collect::<Result<Vec<f64>>>()?;
            let mut out = vec![qs[0].ln()];
            out.extend(qs.windows(2).map(|w| ln_diff(w[1], w[0])));
            out
        }
        HeadKind::MultiQuantileMultiplicative => {
            let qs = cfg
                .levels
                .iter()
                .map(|&t| Ok(empirical_quantile_set(ys, t)?.lower))
                .collect::<Result<Vec<f64>>>()?;
            let k = qs.len();
            let mut out: Vec<f64> = qs
                .windows(2)
                .map(|w| {
                    let r = (w[0] / w[1]).clamp(DIFF_FLOOR, 1.0 - DIFF_FLOOR);
                    (r / (1.0 - r)).ln()
                })
                .collect();
            out.push(qs[k - 1].ln());
            out
        }
        HeadKind::CompositeAdditive => {
            let tau = cfg.levels[0];
            let q = empirical_quantile_set(ys, tau)?.lower;
            let (es_minus, es_plus) = empirical_es(ys, tau)?;
            vec![es_minus.ln(), ln_diff(q, es_minus), ln_diff(es_plus, q)]
        }
    })
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    b1: f64,
    b2: f64,
    nesterov: bool,
}

impl Adam {
    const EPS: f64 = 1e-7;

    fn new(n: usize, cfg: &TrainConfig) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: cfg.learning_rate,
            b1: cfg.moment_decays.0,
            b2: cfg.moment_decays.1,
            nesterov: cfg.nesterov,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], mask: Option<&[bool]>) {
        self.t += 1;
        let c1 = 1.0 - self.b1.powi(self.t);
        let c2 = 1.0 - self.b2.powi(self.t);
        for i in 0..theta.len() {
            if mask.is_some_and(|m| !m[i]) {
                continue;
            }
            let g = grad[i];
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g;
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g;
            let m_hat = if self.nesterov {
                self.b1 * self.m[i] / c1 + (1.0 - self.b1) * g / c1
            } else {
                self.m[i] / c1
            };
            let v_hat = self.v[i] / c2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

fn mean_loss(ws: &mut Workspace, data: &Dataset, rows: &[usize], w: &[f64], cfg: &NetworkConfig, objective: &Objective) -> f64 {
    let total: f64 = rows
        .iter()
        .map(|&i| {
            let out = ws.forward(data.row(i), w, cfg);
            objective.loss(data.responses()[i], out)
        })
        .sum();
    total / rows.len() as f64
}

fn start_seed(seed: u64, start: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(start as u64 + 1)
}

#[allow(clippy::too_many_arguments)]
fn run_start(
    data: &Dataset,
    train: &[usize],
    val: &[usize],
    net: &NetworkConfig,
    cfg: &TrainConfig,
    objective: &Objective,
    biases: &[f64],
    seed: u64,
) -> StartResult {
    let mut params = NetworkParams::init(net, seed);
    let head_cols = net.representation_dim();
    let head_offset = params.head_offset();
    let mask: Option<Vec<bool>> = cfg.intercept_only.then(|| {
        let mut m = vec![false; params.values.len()];
        for k in 0..net.n_heads() {
            m[head_offset + k * head_cols] = true;
        }
        m
    });
    if let Some(m) = &mask {
        for (v, &keep) in params.values.iter_mut().zip(m) {
            if !keep {
                *v = 0.0;
            }
        }
    }
    for (k, &b) in biases.iter().enumerate() {
        let idx = params.head_bias_index(k);
        params.values[idx] = b;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = Workspace::new(net);
    let mut adam = Adam::new(params.values.len(), cfg);
    let mut grad = vec![0.0; params.values.len()];
    let mut order = train.to_vec();
    let mut trace = Vec::new();
    let mut best = (0usize, f64::INFINITY, params.clone());
    let mut since_best = 0;
    let mut failure = None;

    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                loss_sum += ws.accumulate(data.row(i), data.responses()[i], &params.values, net, objective, scale, &mut grad);
            }
            if !grad.iter().all(|g| g.is_finite()) {
                failure = Some(format!("non-finite gradient in epoch {epoch}"));
                break 'epochs;
            }
            adam.step(&mut params.values, &grad, mask.as_deref());
        }
        let train_loss = loss_sum / order.len() as f64;
        let val_loss = mean_loss(&mut ws, data, val, &params.values, net, objective);
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            failure = Some(format!(
                "non-finite loss in epoch {epoch} (train {train_loss}, validation {val_loss})"
            ));
            break;
        }
        trace.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.1 {
            best = (epoch, val_loss, params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (best_epoch, best_val_loss, best_params) = best;
    let params = (failure.is_none() && best_epoch > 0).then_some(best_params);
    StartResult {
        seed,
        failure: if params.is_none() {
            Some(failure.unwrap_or_else(|| "no epoch completed".into()))
        } else {
            failure
        },
        params,
        best_epoch,
        best_val_loss,
        trace,
    }
}

/// Fits `n_starts` networks on a stratified train split of `dataset`, each
/// early-stopped on the validation split, and averages their predictions.
pub fn fit(dataset: &Dataset, net: &NetworkConfig, cfg: &TrainConfig, objective: &Objective) -> Result<FitReport> {
    net.validate()?;
    cfg.validate()?;
    objective.check_compatible(net)?;
    if dataset.width() != net.input_dim + 1 {
        return Err(Error::config(format!(
            "network expects {} features, dataset has {}",
            net.input_dim,
            dataset.width() - 1
        )));
    }
    let (train_idx, val_idx) = split_learn_indices(dataset, cfg.val_fraction, cfg.seed)?;
    let train_ys: Vec<f64> = train_idx.iter().map(|&i| dataset.responses()[i]).collect();
    let objective = resolve_objective(objective, cfg, &train_ys)?;
    objective.check_compatible(net)?;
    let biases = match cfg.head_init {
        HeadInit::Empirical => empirical_biases(net, &train_ys)?,
        HeadInit::Zero => vec![0.0; net.n_heads()],
    };

    let starts: Vec<StartResult> = (0..cfg.n_starts)
        .into_par_iter()
        .map(|s| run_start(dataset, &train_idx, &val_idx, net, cfg, &objective, &biases, start_seed(cfg.seed, s)))
        .collect();
    if starts.iter().all(|s| s.params.is_none()) {
        let reasons: Vec<String> = starts.iter().filter_map(|s| s.failure.clone()).collect();
        return Err(Error::Numerical(format!("all starts failed: {}", reasons.join("; "))));
    }

    let mut report = FitReport {
        network: net.clone(),
        objective,
        starts,
        val_indices: val_idx,
        val_predictions: Vec::new(),
        calibration: None,
    };
    let val = dataset.subset(&report.val_indices);
    report.val_predictions = report.predict(&val)?;
    if net.head == HeadKind::CompositeAdditive {
        let triplets = to_triplets(&report.val_predictions);
        report.calibration = Some(calibration_report(&triplets, val.responses(), net.levels[0])?);
    }
    Ok(report)
}
