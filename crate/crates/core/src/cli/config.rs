//! Flat key-value run configuration.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::network::{HeadKind, NetworkConfig};
use crate::scores::{PhiIndex, ScoreForm, ScoreSpec};
use crate::train::{EtaWeights, HeadInit, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    FitQuantiles,
    FitComposite,
    SelectPhi,
    Evaluate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::FitQuantiles => "fit-quantiles",
            Command::FitComposite => "fit-composite",
            Command::SelectPhi => "select-phi",
            Command::Evaluate => "evaluate",
        }
    }

    fn allowed_keys(self) -> Vec<&'static str> {
        const SIM: &[&str] = &["seed", "generator", "n", "tau", "coeff_mu", "gamma_shape", "coeff_m", "coeff_s"];
        const DATA: &[&str] = &["seed", "data", "schema", "truth", "test_fraction", "test_data", "test_truth"];
        const TRAIN: &[&str] = &[
            "hidden_dims",
            "batch_size",
            "max_epochs",
            "patience",
            "learning_rate",
            "moment_decays",
            "n_starts",
            "val_fraction",
            "nesterov",
            "head_init",
        ];
        const QUANT: &[&str] = &["head", "levels", "eta_weights"];
        const SCORE: &[&str] = &[
            "tau",
            "form",
            "phi_b",
            "phi_c",
            "phi_minus_b",
            "phi_minus_c",
            "phi_plus_b",
            "phi_plus_c",
            "g_scale",
            "select_phi",
            "mean_b",
        ];
        const EVAL: &[&str] = &["seed", "model", "predictions", "tau", "data", "schema", "truth"];
        let groups: &[&[&str]] = match self {
            Command::Simulate => &[SIM],
            Command::Evaluate => &[EVAL],
            Command::FitQuantiles => &[DATA, TRAIN, QUANT],
            Command::FitComposite | Command::SelectPhi => &[DATA, TRAIN, SCORE],
        };
        groups.concat()
    }
}

/// Union of all command keys; which ones apply is checked per command.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    // simulate
    pub generator: Option<String>,
    pub n: Option<usize>,
    pub tau: Option<f64>,
    pub coeff_mu: Option<Vec<f64>>,
    pub gamma_shape: Option<f64>,
    pub coeff_m: Option<Vec<f64>>,
    pub coeff_s: Option<Vec<f64>>,
    // data
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub test_fraction: Option<f64>,
    pub test_data: Option<PathBuf>,
    pub test_truth: Option<PathBuf>,
    // network and training
    pub hidden_dims: Option<Vec<usize>>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub learning_rate: Option<f64>,
    pub moment_decays: Option<[f64; 2]>,
    pub n_starts: Option<usize>,
    pub val_fraction: Option<f64>,
    pub nesterov: Option<bool>,
    pub head_init: Option<HeadInit>,
    // quantiles
    pub head: Option<String>,
    pub levels: Option<Vec<f64>>,
    pub eta_weights: Option<toml::Value>,
    // composite score
    pub form: Option<ScoreForm>,
    pub phi_b: Option<f64>,
    pub phi_c: Option<f64>,
    pub phi_minus_b: Option<f64>,
    pub phi_minus_c: Option<f64>,
    pub phi_plus_b: Option<f64>,
    pub phi_plus_c: Option<f64>,
    pub g_scale: Option<f64>,
    pub select_phi: Option<bool>,
    pub mean_b: Option<f64>,
    // evaluate
    pub model: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

impl RunConfig {
    /// Parses a config for `command`; paths are resolved against `base_dir`.
    pub fn parse(text: &str, command: Command, base_dir: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::config(format!("config: {e}")))?;
        let allowed = command.allowed_keys();
        if let Some(key) = table.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::config(format!("unknown key '{key}' for command {}", command.name())));
        }
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("config: {}", e.message())))?;
        for p in [
            &mut cfg.data,
            &mut cfg.schema,
            &mut cfg.truth,
            &mut cfg.test_data,
            &mut cfg.test_truth,
            &mut cfg.model,
            &mut cfg.predictions,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, command: Command) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text, command, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn require<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T> {
        value.as_ref().ok_or_else(|| Error::config(format!("missing required key '{key}'")))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let eta_weights = match &self.eta_weights {
            None => d.eta_weights.clone(),
            Some(toml::Value::String(s)) if s == "auto" => EtaWeights::Auto,
            Some(toml::Value::Array(items)) => EtaWeights::Fixed(
                items
                    .iter()
                    .map(|v| match v {
                        toml::Value::Float(f) => Ok(*f),
                        toml::Value::Integer(i) => Ok(*i as f64),
                        _ => Err(Error::config("eta_weights must be \"auto\" or a list of numbers")),
                    })
                    .collect::<Result<_>>()?,
            ),
            Some(_) => return Err(Error::config("eta_weights must be \"auto\" or a list of numbers")),
        };
        let cfg = TrainConfig {
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            patience: self.patience.unwrap_or(d.patience),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            moment_decays: self.moment_decays.map(|[a, b]| (a, b)).unwrap_or(d.moment_decays),
            n_starts: self.n_starts.unwrap_or(d.n_starts),
            val_fraction: self.val_fraction.unwrap_or(d.val_fraction),
            eta_weights,
            seed: self.seed(),
            nesterov: self.nesterov.unwrap_or(d.nesterov),
            head_init: self.head_init.unwrap_or(d.head_init),
            intercept_only: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.hidden_dims.clone().unwrap_or_else(NetworkConfig::default_hidden)
    }

    pub fn quantile_head(&self) -> Result<HeadKind> {
        match self.head.as_deref().unwrap_or("additive") {
            "additive" => Ok(HeadKind::MultiQuantileAdditive),
            "multiplicative" => Ok(HeadKind::MultiQuantileMultiplicative),
            other => Err(Error::config(format!(
                "head must be 'additive' or 'multiplicative', got '{other}'"
            ))),
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(0.9)
    }

    pub fn g_scale(&self) -> f64 {
        self.g_scale.unwrap_or(1.0)
    }

    /// Score given explicitly in the config (defaults: revelation_plus with b = 0, c = 2).
    pub fn score_spec(&self) -> Result<ScoreSpec> {
        let idx = |b: Option<f64>, c: Option<f64>, b_default: f64| PhiIndex::new(b.unwrap_or(b_default), c.unwrap_or(2.0));
        let tau = self.tau();
        let g = self.g_scale();
        let phi = || idx(self.phi_b, self.phi_c, 0.0);
        let minus = || idx(self.phi_minus_b, self.phi_minus_c, 2.0);
        let plus = || idx(self.phi_plus_b, self.phi_plus_c, 0.0);
        let form = self.form.unwrap_or(ScoreForm::RevelationPlus);
        let unused: &[(&str, bool)] = match form {
            ScoreForm::Additive => &[("phi_b", self.phi_b.is_some()), ("phi_c", self.phi_c.is_some())],
            ScoreForm::RevelationPlus => &[
                ("phi_minus_b", self.phi_minus_b.is_some()),
                ("phi_minus_c", self.phi_minus_c.is_some()),
            ],
            ScoreForm::RevelationMinus => &[
                ("phi_plus_b", self.phi_plus_b.is_some()),
                ("phi_plus_c", self.phi_plus_c.is_some()),
            ],
        };
        if let Some((key, _)) = unused.iter().find(|(_, set)| *set) {
            return Err(Error::config(format!("key '{key}' is not used by form {}", form.name())));
        }
        let spec = match form {
            ScoreForm::Additive => ScoreSpec::additive(tau, minus()?, plus()?, g),
            ScoreForm::RevelationPlus => ScoreSpec::revelation_plus(tau, phi()?, plus()?, g),
            ScoreForm::RevelationMinus => ScoreSpec::revelation_minus(tau, phi()?, minus()?, g),
        };
        spec.map_err(|e| Error::config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("n = 5\nbogus = 1", Command::Simulate, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        // valid key of another command
        assert!(RunConfig::parse("levels = [0.5]", Command::FitComposite, Path::new(".")).is_err());
        assert!(RunConfig::parse("levels = [0.5]", Command::FitQuantiles, Path::new(".")).is_ok());
    }

    #[test]
    fn type_errors_are_config_errors() {
        let err = RunConfig::parse("n = \"many\"", Command::Simulate, Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let cfg = RunConfig::parse("data = \"d.csv\"", Command::FitQuantiles, Path::new("/tmp/run")).unwrap();
        assert_eq!(cfg.data.unwrap(), PathBuf::from("/tmp/run/d.csv"));
    }

    #[test]
    fn score_defaults_and_conflicts() {
        let cfg = RunConfig::parse("", Command::FitComposite, Path::new(".")).unwrap();
        let spec = cfg.score_spec().unwrap();
        assert_eq!(spec.form, ScoreForm::RevelationPlus);
        let cfg = RunConfig::parse("form = \"additive\"\nphi_b = 1.0", Command::FitComposite, Path::new(".")).unwrap();
        assert!(cfg.score_spec().is_err());
        let cfg = RunConfig::parse("form = \"additive\"\nphi_minus_b = 0.5", Command::FitComposite, Path::new(".")).unwrap();
        assert!(cfg.score_spec().is_err());
    }

    #[test]
    fn eta_weights_forms() {
        let cfg = RunConfig::parse("eta_weights = [1, 2.5]", Command::FitQuantiles, Path::new(".")).unwrap();
        assert_eq!(cfg.train_config().unwrap().eta_weights, EtaWeights::Fixed(vec![1.0, 2.5]));
        let cfg = RunConfig::parse("eta_weights = \"auto\"", Command::FitQuantiles, Path::new(".")).unwrap();
        assert_eq!(cfg.train_config().unwrap().eta_weights, EtaWeights::Auto);
        let cfg = RunConfig::parse("eta_weights = \"sometimes\"", Command::FitQuantiles, Path::new(".")).unwrap();
        assert!(cfg.train_config().is_err());
    }
}
