//! Flat `section.key = value` experiment configuration.
//!
//! One assignment per line; `#` starts a comment. Unknown and repeated keys
//! are rejected. Lists are comma-separated.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hardening::HardeningSpec;
use crate::population::Population;
use crate::suite::VerifyConfig;
use crate::synth::{make_mixture, MixtureConfig};
use crate::train::{Method, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mixture: MixtureConfig,
    /// Population CSV used instead of the generated mixture.
    pub population: Option<PathBuf>,
    pub train: TrainConfig,
    pub verify: VerifyConfig,
    pub compare_methods: Vec<Method>,
    pub compare_seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mixture: MixtureConfig::default(),
            population: None,
            train: TrainConfig::default(),
            verify: VerifyConfig::default(),
            compare_methods: ["UCL", "H-UCL[exp_tilt:1]", "SCL", "H-SCL[exp_tilt:1]"]
                .iter()
                .map(|s| s.parse().expect("built-in method"))
                .collect(),
            compare_seeds: (0..5).collect(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{value}': {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{value}'"))),
    }
}

impl ExperimentConfig {
    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn parse_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            cfg.set(key, value, base_dir)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn set(&mut self, key: &str, v: &str, base_dir: &Path) -> Result<()> {
        let m = &mut self.mixture;
        let t = &mut self.train;
        let vf = &mut self.verify;
        match key {
            "mixture.n_classes" => m.n_classes = parse(key, v)?,
            "mixture.ambient_dim" => m.ambient_dim = parse(key, v)?,
            "mixture.n_per_class" => m.n_per_class = parse(key, v)?,
            "mixture.separation" => m.separation = parse(key, v)?,
            "mixture.noise_sigma" => m.noise_sigma = parse(key, v)?,
            "mixture.seed" => m.seed = parse(key, v)?,
            "data.population" => self.population = Some(base_dir.join(v)),
            "train.method" => t.method = parse(key, v)?,
            "train.epochs" => t.epochs = parse(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.learning_rate" => t.learning_rate = parse(key, v)?,
            "train.gamma" => t.gamma = parse(key, v)?,
            "train.m" => t.m = Some(parse(key, v)?),
            "train.hidden" => t.hidden = parse(key, v)?,
            "train.embed_dim" => t.embed_dim = parse(key, v)?,
            "train.aug_sigma" => t.aug_sigma = parse(key, v)?,
            "train.seed" => t.seed = parse(key, v)?,
            "train.tracked_hardening" => t.tracked_hardening = parse(key, v)?,
            "train.track_losses" => t.track_losses = parse_bool(key, v)?,
            "train.probe_every" => t.probe_every = parse(key, v)?,
            "verify.seed" => vf.seed = parse(key, v)?,
            "verify.gamma" => vf.gamma = parse(key, v)?,
            "verify.max_points" => vf.max_points = parse(key, v)?,
            "verify.tilt_trials" => vf.tilt_trials = parse(key, v)?,
            "verify.decomposition_trials" => vf.decomposition_trials = parse(key, v)?,
            "verify.loss_bound_trials" => vf.loss_bound_trials = parse(key, v)?,
            "verify.counterexample_trials" => vf.counterexample_trials = parse(key, v)?,
            "verify.hardenings" => vf.hardenings = parse_list::<HardeningSpec>(key, v)?,
            "verify.grid_points" => vf.grid_points = parse(key, v)?,
            "compare.methods" => self.compare_methods = parse_list(key, v)?,
            "compare.seeds" => self.compare_seeds = parse_list(key, v)?,
            "output.dir" => self.output_dir = base_dir.join(v),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.population.is_none() {
            self.mixture.validate()?;
        }
        self.train.validate()?;
        if self.verify.max_points < 4 {
            return Err(Error::Config("verify.max_points must be >= 4".into()));
        }
        if self.verify.grid_points < 2 {
            return Err(Error::Config("verify.grid_points must be >= 2".into()));
        }
        crate::geometry::SimilarityParams::new(self.verify.gamma)?;
        if self.compare_methods.is_empty() || self.compare_seeds.is_empty() {
            return Err(Error::Config("compare needs at least one method and one seed".into()));
        }
        Ok(())
    }

    /// The configured population file, or the generated mixture.
    pub fn population(&self) -> Result<Population> {
        match &self.population {
            Some(path) => Population::load_csv(path),
            None => make_mixture(&self.mixture),
        }
    }

    /// Run seed for training and verification.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.verify.seed = seed;
    }
}
