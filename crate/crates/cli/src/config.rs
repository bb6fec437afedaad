//! `key = value` run configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ctg_vae::eval::EvalConfig;
use ctg_vae::model::{ModelConfig, Precision, TrainConfig};
use ctg_vae::pipeline::{InterpretConfig, DEFAULT_SPLIT};
use ctg_vae::preprocess::PreprocessConfig;
use ctg_vae::synth::{Condition, SynthConfig};

/// Everything a command may need. `seed` drives every random stream.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub split: [f64; 3],
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub interpret: InterpretConfig,
    pub sweep_targets: Vec<f64>,
    pub sweep_seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            synth: SynthConfig::default(),
            preprocess: PreprocessConfig::default(),
            split: DEFAULT_SPLIT,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            interpret: InterpretConfig::default(),
            sweep_targets: vec![3.0, 20.0, 50.0, 200.0],
            sweep_seeds: vec![1, 2],
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    v.parse().map_err(|e| anyhow!("{key}: cannot parse `{v}`: {e}"))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse(key, x.trim())).collect()
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn pair(key: &str, v: &str) -> Result<(f64, f64)> {
    match list::<f64>(key, v)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => bail!("{key}: expected two comma-separated numbers, got `{v}`"),
    }
}

fn condition_mix(key: &str, v: &str) -> Result<BTreeMap<Condition, f64>> {
    v.split(',')
        .map(|item| {
            let (c, w) = item
                .split_once(':')
                .ok_or_else(|| anyhow!("{key}: expected tag:weight, got `{item}`"))?;
            Ok((c.trim().parse()?, parse(key, w.trim())?))
        })
        .collect()
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "seed",
    "n_npo_records",
    "n_apo_records",
    "record_minutes",
    "missing_burst_rate",
    "legacy_epoch_fraction",
    "condition_mix",
    "severe_conditions",
    "band_low",
    "band_high",
    "spike_delta",
    "max_missing",
    "trailing_min",
    "min_sd",
    "min_range",
    "split",
    "latent_dim",
    "d_model",
    "token_patch",
    "kl_target_per_dim",
    "tc_target",
    "focal_gamma",
    "learning_rate",
    "batch_size",
    "max_epochs",
    "patience",
    "min_epochs",
    "beta_init",
    "lambda_init",
    "controller_gain",
    "beta_bounds",
    "lambda_bounds",
    "precision",
    "freeze_coefficients",
    "bootstrap",
    "ece_bins",
    "traversal_steps",
    "ica_components",
    "ica_max_iter",
    "ica_tol",
    "sweep_targets",
    "sweep_seeds",
];

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "n_npo_records" => self.synth.n_npo_records = parse(key, v)?,
            "n_apo_records" => self.synth.n_apo_records = parse(key, v)?,
            "record_minutes" => self.synth.record_minutes = parse(key, v)?,
            "missing_burst_rate" => self.synth.missing_burst_rate = parse(key, v)?,
            "legacy_epoch_fraction" => self.synth.legacy_epoch_fraction = parse(key, v)?,
            "condition_mix" => self.synth.condition_mix = condition_mix(key, v)?,
            "severe_conditions" => self.synth.severe_conditions = list(key, v)?,
            "band_low" => self.preprocess.band_low = parse(key, v)?,
            "band_high" => self.preprocess.band_high = parse(key, v)?,
            "spike_delta" => self.preprocess.spike_delta = parse(key, v)?,
            "max_missing" => self.preprocess.max_missing = parse(key, v)?,
            "trailing_min" => self.preprocess.trailing_min = parse(key, v)?,
            "min_sd" => self.preprocess.min_sd = parse(key, v)?,
            "min_range" => self.preprocess.min_range = parse(key, v)?,
            "split" => {
                self.split = list::<f64>(key, v)?
                    .try_into()
                    .map_err(|_| anyhow!("split: expected three comma-separated ratios"))?
            }
            "latent_dim" => self.model.latent_dim = parse(key, v)?,
            "d_model" => self.model.d_model = parse(key, v)?,
            "token_patch" => self.model.token_patch = parse(key, v)?,
            "kl_target_per_dim" => self.model.kl_target_per_dim = parse(key, v)?,
            "tc_target" => self.model.tc_target = parse(key, v)?,
            "focal_gamma" => self.model.focal_gamma = parse(key, v)?,
            "learning_rate" => self.model.learning_rate = parse(key, v)?,
            "batch_size" => self.model.batch_size = parse(key, v)?,
            "max_epochs" => self.train.max_epochs = parse(key, v)?,
            "patience" => self.train.patience = parse(key, v)?,
            "min_epochs" => self.train.min_epochs = parse(key, v)?,
            "beta_init" => self.train.beta_init = parse(key, v)?,
            "lambda_init" => self.train.lambda_init = parse(key, v)?,
            "controller_gain" => self.train.controller_gain = parse(key, v)?,
            "beta_bounds" => self.train.beta_bounds = pair(key, v)?,
            "lambda_bounds" => self.train.lambda_bounds = pair(key, v)?,
            "precision" => {
                self.train.precision = match v {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => bail!("precision: expected f32 or f64, got `{v}`"),
                }
            }
            "freeze_coefficients" => self.train.freeze_coefficients = parse(key, v)?,
            "bootstrap" => self.eval.bootstrap = parse(key, v)?,
            "ece_bins" => self.eval.ece_bins = parse(key, v)?,
            "traversal_steps" => self.interpret.traversal_steps = parse(key, v)?,
            "ica_components" => {
                self.interpret.ica_components = if v == "auto" { None } else { Some(parse(key, v)?) }
            }
            "ica_max_iter" => self.interpret.ica.max_iter = parse(key, v)?,
            "ica_tol" => self.interpret.ica.tol = parse(key, v)?,
            "sweep_targets" => self.sweep_targets = list(key, v)?,
            "sweep_seeds" => self.sweep_seeds = list(key, v)?,
            _ => bail!("unknown configuration key `{key}`"),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "n_npo_records" => self.synth.n_npo_records.to_string(),
            "n_apo_records" => self.synth.n_apo_records.to_string(),
            "record_minutes" => self.synth.record_minutes.to_string(),
            "missing_burst_rate" => self.synth.missing_burst_rate.to_string(),
            "legacy_epoch_fraction" => self.synth.legacy_epoch_fraction.to_string(),
            "condition_mix" => self
                .synth
                .condition_mix
                .iter()
                .map(|(c, w)| format!("{c}:{w}"))
                .collect::<Vec<_>>()
                .join(","),
            "severe_conditions" => join(&self.synth.severe_conditions),
            "band_low" => self.preprocess.band_low.to_string(),
            "band_high" => self.preprocess.band_high.to_string(),
            "spike_delta" => self.preprocess.spike_delta.to_string(),
            "max_missing" => self.preprocess.max_missing.to_string(),
            "trailing_min" => self.preprocess.trailing_min.to_string(),
            "min_sd" => self.preprocess.min_sd.to_string(),
            "min_range" => self.preprocess.min_range.to_string(),
            "split" => join(&self.split),
            "latent_dim" => self.model.latent_dim.to_string(),
            "d_model" => self.model.d_model.to_string(),
            "token_patch" => self.model.token_patch.to_string(),
            "kl_target_per_dim" => self.model.kl_target_per_dim.to_string(),
            "tc_target" => self.model.tc_target.to_string(),
            "focal_gamma" => self.model.focal_gamma.to_string(),
            "learning_rate" => self.model.learning_rate.to_string(),
            "batch_size" => self.model.batch_size.to_string(),
            "max_epochs" => self.train.max_epochs.to_string(),
            "patience" => self.train.patience.to_string(),
            "min_epochs" => self.train.min_epochs.to_string(),
            "beta_init" => self.train.beta_init.to_string(),
            "lambda_init" => self.train.lambda_init.to_string(),
            "controller_gain" => self.train.controller_gain.to_string(),
            "beta_bounds" => format!("{},{}", self.train.beta_bounds.0, self.train.beta_bounds.1),
            "lambda_bounds" => format!("{},{}", self.train.lambda_bounds.0, self.train.lambda_bounds.1),
            "precision" => match self.train.precision {
                Precision::F32 => "f32".into(),
                Precision::F64 => "f64".into(),
            },
            "freeze_coefficients" => self.train.freeze_coefficients.to_string(),
            "bootstrap" => self.eval.bootstrap.to_string(),
            "ece_bins" => self.eval.ece_bins.to_string(),
            "traversal_steps" => self.interpret.traversal_steps.to_string(),
            "ica_components" => self.interpret.ica_components.map_or("auto".into(), |n| n.to_string()),
            "ica_max_iter" => self.interpret.ica.max_iter.to_string(),
            "ica_tol" => self.interpret.ica.tol.to_string(),
            "sweep_targets" => join(&self.sweep_targets),
            "sweep_seeds" => join(&self.sweep_seeds),
            _ => return None,
        })
    }

    /// Applies `key = value` lines; `#` starts a comment. Returns the keys
    /// set.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<Vec<String>> {
        let mut keys = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected `key = value`", i + 1))?;
            self.set(k.trim(), v).with_context(|| format!("{origin}:{}", i + 1))?;
            keys.push(k.trim().to_string());
        }
        Ok(keys)
    }

    /// Defaults, then the file, then `--set` overrides, then `--seed`.
    /// Also returns the keys given explicitly.
    pub fn load(file: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<(Self, BTreeSet<String>)> {
        let mut cfg = Self::default();
        let mut explicit = BTreeSet::new();
        if let Some(p) = file {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            explicit.extend(cfg.apply_text(&text, &p.display().to_string())?);
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| anyhow!("--set expects key=value, got `{o}`"))?;
            cfg.set(k.trim(), v).with_context(|| format!("--set {o}"))?;
            explicit.insert(k.trim().to_string());
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.propagate_seed();
        Ok((cfg, explicit))
    }

    fn propagate_seed(&mut self) {
        self.synth.seed = self.seed;
        self.model.seed = self.seed;
        self.eval.seed = self.seed;
        self.interpret.ica.seed = self.seed;
    }

    /// Full resolved configuration in the input syntax.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            out.push_str(&format!("{k} = {}\n", self.get(k).expect("listed key")));
        }
        out
    }
}
