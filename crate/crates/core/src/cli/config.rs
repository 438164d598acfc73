//! Flat `key=value` experiment configuration.
//!
//! Precedence, lowest first: built-in defaults, the `--config` file, the
//! dedicated flags (`--data`, `--time-col`, ...), then `--set key=value`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::losses::{LikelihoodMode, LossWeights, PairwiseLoss, PairwiseSign};
use crate::model::{Head, ModelConfig};
use crate::synth::{Baseline, RiskModel, SynthConfig};
use crate::training::TrainConfig;

/// Every recognized key with its default, in echo order. An empty default
/// means unset.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("data", ""),
    ("val_data", ""),
    ("test_data", ""),
    ("checkpoint", ""),
    ("grid", ""),
    ("out", "out"),
    ("time_col", "time"),
    ("event_col", "event"),
    ("split", "0.6,0.2,0.2"),
    ("seed", "0"),
    ("k_bins", "20"),
    ("hidden_dim", "32"),
    ("n_blocks", "2"),
    ("dropout", "0.2"),
    ("head", "cat"),
    ("alpha", "1"),
    ("beta", "1"),
    ("gamma", "1"),
    ("sigma", "1"),
    ("rho", "0.5"),
    ("calib_bins", "10"),
    ("likelihood_mode", "prob"),
    ("pairwise_sign", "concordant"),
    ("pairwise", "tapr"),
    ("epochs", "200"),
    ("batch_size", "256"),
    ("lr_init", "0.01"),
    ("momentum", "0"),
    ("weight_decay", "0"),
    ("eval_every", "1"),
    ("n_samples", "1000"),
    ("n_features", "10"),
    ("risk_model", "linear"),
    ("baseline", "exponential"),
    ("censor_rate", "0.4"),
    ("risk_scale", "1"),
];

/// Raw key/value layer before typing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig(BTreeMap<String, String>);

impl Default for RawConfig {
    fn default() -> Self {
        Self(DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
    }
}

impl RawConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !DEFAULTS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        self.0.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).unwrap_or("")
    }

    /// Apply one `key=value` assignment.
    pub fn assign(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
        self.set(k.trim(), v)
    }

    /// Layer the assignments of a config file on top of `self`. `#` starts
    /// a comment; blank lines are skipped.
    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.assign(line)
                .map_err(|e| Error::Config(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.merge_text(&text, &path.display().to_string())
    }

    /// Resolved echo: every key in [`DEFAULTS`] order. Feeding it back via
    /// `--config` reproduces the run.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# resolved configuration\n");
        for (k, _) in DEFAULTS {
            let _ = writeln!(s, "{k}={}", self.get(k));
        }
        s
    }
}

fn parse<T: std::str::FromStr>(raw: &RawConfig, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let v = raw.get(key);
    v.parse::<T>()
        .map_err(|e| Error::Config(format!("`{key}`: cannot parse `{v}`: {e}")))
}

fn path(raw: &RawConfig, key: &str) -> Option<PathBuf> {
    let v = raw.get(key);
    (!v.is_empty()).then(|| PathBuf::from(v))
}

/// Typed view of a [`RawConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub val_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub out: PathBuf,
    pub time_col: String,
    pub event_col: String,
    pub split: (f64, f64, f64),
    pub seed: u64,
    pub k_bins: usize,
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub dropout: f64,
    pub head: Head,
    pub weights: LossWeights,
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let split: Vec<f64> = raw
            .get("split")
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("`split`: `{p}`: {e}")))
            })
            .collect::<Result<_>>()?;
        let split = match split[..] {
            [a, b, c] => (a, b, c),
            _ => return Err(Error::Config("`split` needs three ratios".into())),
        };
        let seed: u64 = parse(raw, "seed")?;
        let weights = LossWeights {
            alpha: parse(raw, "alpha")?,
            beta: parse(raw, "beta")?,
            gamma: parse(raw, "gamma")?,
            sigma: parse(raw, "sigma")?,
            rho: parse(raw, "rho")?,
            g_bins: parse(raw, "calib_bins")?,
            likelihood_mode: parse::<LikelihoodMode>(raw, "likelihood_mode")?,
            pairwise_sign: parse::<PairwiseSign>(raw, "pairwise_sign")?,
            pairwise: parse::<PairwiseLoss>(raw, "pairwise")?,
        };
        let train = TrainConfig {
            epochs: parse(raw, "epochs")?,
            batch_size: parse(raw, "batch_size")?,
            lr_init: parse(raw, "lr_init")?,
            momentum: parse(raw, "momentum")?,
            weight_decay: parse(raw, "weight_decay")?,
            seed,
            eval_every: parse(raw, "eval_every")?,
        };
        let synth = SynthConfig {
            n_samples: parse(raw, "n_samples")?,
            n_features: parse(raw, "n_features")?,
            risk_model: parse::<RiskModel>(raw, "risk_model")?,
            baseline: parse::<Baseline>(raw, "baseline")?,
            target_censor_rate: parse(raw, "censor_rate")?,
            seed,
            risk_scale: parse(raw, "risk_scale")?,
        };
        let cfg = Self {
            data: path(raw, "data"),
            val_data: path(raw, "val_data"),
            test_data: path(raw, "test_data"),
            checkpoint: path(raw, "checkpoint"),
            grid: path(raw, "grid"),
            out: path(raw, "out").unwrap_or_else(|| PathBuf::from("out")),
            time_col: raw.get("time_col").to_string(),
            event_col: raw.get("event_col").to_string(),
            split,
            seed,
            k_bins: parse(raw, "k_bins")?,
            hidden_dim: parse(raw, "hidden_dim")?,
            n_blocks: parse(raw, "n_blocks")?,
            dropout: parse(raw, "dropout")?,
            head: parse::<Head>(raw, "head")?,
            weights,
            train,
            synth,
        };
        cfg.weights.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn model_config(&self, input_dim: usize) -> Result<ModelConfig> {
        let m = ModelConfig {
            input_dim,
            hidden_dim: self.hidden_dim,
            n_blocks: self.n_blocks,
            dropout_rate: self.dropout,
            head: self.head,
            k_bins: self.k_bins,
        };
        m.validate()?;
        Ok(m)
    }
}
