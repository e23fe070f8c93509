//! Mini-batch training of the embedder and linear-probe evaluation.

mod adam;
mod probe;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use probe::{fit_softmax, linear_probe, split_probe, stratified_split, SoftmaxModel, PROBE_TRAIN_FRACTION};

use crate::error::{Error, Result};
use crate::geometry::{Embedder, SimilarityParams};
use crate::hardening::HardeningSpec;
use crate::losses::{embed_pairing, loss_exact, loss_gradient, Batch, BatchLossSpec};
use crate::numeric::{mean_and_std, KahanSum};
use crate::population::{EmbeddedPopulation, NegSamplingSpec, Population, Setting};
use crate::synth::{AugmentConfig, PairMode, PairSampler};
use crate::theory::{assumption_fraction, LOSS_SLACK};

/// Batches smaller than this are dropped.
pub const MIN_BATCH: usize = 4;

/// `exp(l / gamma)` with `l` interpolating linearly from `start` at epoch 1
/// to `end` at the final epoch.
pub fn tau_schedule(start: f64, end: f64, epoch: usize, epochs: usize, gamma: f64) -> Result<f64> {
    if epochs == 0 || epoch == 0 || epoch > epochs {
        return Err(Error::Input(format!("epoch {epoch} outside 1..={epochs}")));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Input(format!("gamma must be positive, got {gamma}")));
    }
    if !(start.is_finite() && end.is_finite()) {
        return Err(Error::Input("schedule endpoints must be finite".into()));
    }
    if epochs == 1 {
        if start != end {
            return Err(Error::ScheduleDegenerate { start, end });
        }
        return Ok((start / gamma).exp());
    }
    let l = start + (epoch - 1) as f64 / (epochs - 1) as f64 * (end - start);
    Ok((l / gamma).exp())
}

/// Hardening in force during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HardeningSchedule {
    Fixed(HardeningSpec),
    /// Threshold hardening with `tau` from [`tau_schedule`].
    Threshold { start: f64, end: f64 },
}

/// A training objective: setting plus hardening schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub setting: Setting,
    pub hardening: HardeningSchedule,
}

impl Method {
    pub fn new(setting: Setting, hardening: HardeningSpec) -> Self {
        Self {
            setting,
            hardening: HardeningSchedule::Fixed(hardening),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.setting == Setting::HCol {
            return Err(Error::Config("Hcol is not a training objective".into()));
        }
        if let HardeningSchedule::Fixed(h) = self.hardening {
            if self.setting.is_hardened() {
                h.validate()?;
            }
        }
        Ok(())
    }

    pub fn hardening_at(&self, epoch: usize, epochs: usize, gamma: f64) -> Result<HardeningSpec> {
        if !self.setting.is_hardened() {
            return Ok(HardeningSpec::Identity);
        }
        match self.hardening {
            HardeningSchedule::Fixed(h) => Ok(h),
            HardeningSchedule::Threshold { start, end } => Ok(HardeningSpec::Threshold {
                tau: tau_schedule(start, end, epoch, epochs, gamma)?,
            }),
        }
    }

    pub fn pair_mode(&self) -> PairMode {
        if self.setting.is_supervised() {
            PairMode::AugmentPlusLabel
        } else {
            PairMode::AugmentOnly
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.setting)?;
        if self.setting.is_hardened() {
            match self.hardening {
                HardeningSchedule::Fixed(h) => write!(f, "[{h}]")?,
                HardeningSchedule::Threshold { start, end } => write!(f, "[tau:{start}:{end}]")?,
            }
        }
        Ok(())
    }
}

/// `UCL`, `SCL`, `H-UCL`, `H-SCL` (exponential tilt, beta 1), or a hardened
/// setting with a bracketed hardening: `H-SCL[exp_tilt:2]`,
/// `H-SCL[threshold:1.5]`, `H-SCL[tau:-0.5:0.1]`.
impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, bracket) = match s.split_once('[') {
            Some((n, rest)) => {
                let inner = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("unclosed bracket in method '{s}'")))?;
                (n.trim(), Some(inner.trim()))
            }
            None => (s, None),
        };
        let setting: Setting = name.parse()?;
        let hardening = match bracket {
            None => HardeningSchedule::Fixed(HardeningSpec::ExpTilt { beta: 1.0 }),
            Some(b) if !setting.is_hardened() => {
                return Err(Error::Config(format!("{setting} takes no hardening, got [{b}]")));
            }
            Some(b) => match b.strip_prefix("tau:") {
                Some(range) => {
                    let (a, z) = range
                        .split_once(':')
                        .ok_or_else(|| Error::Config(format!("tau schedule needs start:end, got '{range}'")))?;
                    let parse = |v: &str| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Config(format!("bad tau endpoint '{v}': {e}")))
                    };
                    HardeningSchedule::Threshold {
                        start: parse(a)?,
                        end: parse(z)?,
                    }
                }
                None => HardeningSchedule::Fixed(b.parse()?),
            },
        };
        let m = Method { setting, hardening };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    /// Negative-term scale; `batch_size - 2` when absent.
    pub m: Option<f64>,
    pub hidden: usize,
    pub embed_dim: usize,
    pub aug_sigma: f64,
    pub seed: u64,
    /// Hardening used for the tracked H-UCL/H-SCL losses and the assumption
    /// fraction when the training setting itself is unhardened.
    pub tracked_hardening: HardeningSpec,
    pub track_losses: bool,
    /// Probe every this many epochs, and always at the last; 0 probes only
    /// at the last epoch.
    pub probe_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::new(Setting::HScl, HardeningSpec::ExpTilt { beta: 1.0 }),
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            gamma: 0.5,
            m: None,
            hidden: 32,
            embed_dim: 8,
            aug_sigma: 0.5,
            seed: 0,
            tracked_hardening: HardeningSpec::ExpTilt { beta: 1.0 },
            track_losses: true,
            probe_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.method.validate()?;
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < MIN_BATCH {
            return Err(Error::Config(format!("batch_size must be >= {MIN_BATCH}")));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        SimilarityParams::new(self.gamma)?;
        if let Some(m) = self.m {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::Config(format!("M must be positive, got {m}")));
            }
        }
        if self.hidden < 1 || self.embed_dim < 2 {
            return Err(Error::Config("need hidden >= 1 and embed_dim >= 2".into()));
        }
        AugmentConfig::new(self.aug_sigma)?;
        self.tracked_hardening.validate()?;
        if let HardeningSchedule::Threshold { start, end } = self.method.hardening {
            tau_schedule(start, end, 1, self.epochs, self.gamma)?;
        }
        Ok(())
    }

    pub fn m_value(&self) -> f64 {
        self.m.unwrap_or((self.batch_size - 2) as f64)
    }

    pub fn init_embedder(&self, input_dim: usize) -> Result<Embedder> {
        Embedder::mlp(input_dim, self.hidden, self.embed_dim, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub loss_ucl: Option<f64>,
    pub loss_scl: Option<f64>,
    pub loss_hucl: Option<f64>,
    pub loss_hscl: Option<f64>,
    pub assumption_fraction: Option<f64>,
    pub probe_accuracy: Option<f64>,
    /// Anchors dropped for lack of in-batch negatives this epoch.
    pub skipped_anchors: usize,
}

pub const HISTORY_HEADER: &str =
    "epoch,train_loss,loss_ucl,loss_scl,loss_hucl,loss_hscl,assumption_fraction,probe_accuracy";

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            cell(self.loss_ucl),
            cell(self.loss_scl),
            cell(self.loss_hucl),
            cell(self.loss_hscl),
            cell(self.assumption_fraction),
            cell(self.probe_accuracy)
        )
    }

    /// Tracked H-SCL loss exceeds H-UCL at an epoch where every defined
    /// anchor satisfies the assumption.
    pub fn loss_bound_violated(&self) -> bool {
        match (self.assumption_fraction, self.loss_hscl, self.loss_hucl) {
            (Some(f), Some(s), Some(u)) => f == 1.0 && s > u + LOSS_SLACK,
            _ => false,
        }
    }
}

pub fn write_history<W: Write>(mut w: W, history: &[EpochRecord]) -> Result<()> {
    writeln!(w, "{HISTORY_HEADER}")?;
    for r in history {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub embedder: Embedder,
}

impl TrainOutcome {
    pub fn final_probe_accuracy(&self) -> Option<f64> {
        self.history.last().and_then(|r| r.probe_accuracy)
    }
}

fn tracked(outcome: Result<f64>, what: &str, epoch: usize) -> Result<Option<f64>> {
    match outcome {
        Ok(v) => Ok(Some(v)),
        Err(e @ Error::EmptySupport { .. }) | Err(e @ Error::UndefinedFraction) => {
            log::warn!("epoch {epoch}: {what} undefined: {e}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn embed_all(e: &Embedder, pop: &Population) -> Result<Vec<Vec<f64>>> {
    pop.points().iter().map(|p| Ok(e.forward(&p.features)?.into_inner())).collect()
}

/// Trains `init` on `pop` under `cfg`.
pub fn train(pop: &Population, cfg: &TrainConfig, init: Embedder) -> Result<TrainOutcome> {
    cfg.validate()?;
    if init.input_dim() != pop.feature_dim() {
        return Err(Error::Shape {
            expected: pop.feature_dim(),
            got: init.input_dim(),
        });
    }
    if pop.len() < MIN_BATCH {
        return Err(Error::Config(format!("population has fewer than {MIN_BATCH} points")));
    }
    let params = SimilarityParams::new(cfg.gamma)?;
    let aug = AugmentConfig::new(cfg.aug_sigma)?;
    let sampler = PairSampler::new(pop, cfg.method.pair_mode(), aug);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    // Frozen evaluation pairing: one same-class augmented positive per anchor.
    let eval_pairs: Vec<(usize, Vec<f64>)> = {
        let eval_sampler = PairSampler::new(pop, PairMode::AugmentPlusLabel, aug);
        let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        eval_rng.set_stream(2);
        (0..pop.len()).map(|a| (a, eval_sampler.positive_for(a, &mut eval_rng))).collect()
    };

    let mut e = init;
    let mut opt = Adam::new(e.param_count(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..pop.len()).collect();
    let labels = pop.labels();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let h = cfg.method.hardening_at(epoch, cfg.epochs, cfg.gamma)?;
        let spec = BatchLossSpec::new(NegSamplingSpec::new(cfg.method.setting, h), cfg.m_value(), params)?.skipping();
        order.shuffle(&mut rng);
        let mut loss_sum = KahanSum::new();
        let mut n_batches = 0usize;
        let mut skipped_anchors = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < MIN_BATCH {
                continue;
            }
            let batch = Batch {
                anchors: chunk.iter().map(|&i| pop.point(i).features.clone()).collect(),
                positives: chunk.iter().map(|&i| sampler.positive_for(i, &mut rng)).collect(),
                labels: chunk.iter().map(|&i| labels[i]).collect(),
            };
            let (value, grads) = match loss_gradient(&e, &batch, &spec) {
                Ok(v) => v,
                Err(Error::BatchComposition { .. }) => {
                    log::warn!("epoch {epoch} batch {b}: no anchor has eligible negatives; batch skipped");
                    skipped_anchors += chunk.len();
                    continue;
                }
                Err(Error::Numerical(detail)) | Err(Error::LayerNumerical { detail, .. }) => {
                    log::error!("epoch {epoch} batch {b}: {detail}");
                    return Err(Error::TrainingAbort { epoch, batch: b });
                }
                Err(other) => return Err(other),
            };
            let g = grads.flatten();
            if !value.value.is_finite() || g.iter().any(|x| !x.is_finite()) {
                return Err(Error::TrainingAbort { epoch, batch: b });
            }
            skipped_anchors += value.skipped.len();
            loss_sum.add(value.value);
            n_batches += 1;
            let mut p = e.flat_params();
            opt.step(&mut p, &g);
            e.set_flat_params(&p)?;
        }
        if n_batches == 0 {
            return Err(Error::Config(format!("epoch {epoch} produced no usable batch")));
        }
        let train_loss = loss_sum.value() / n_batches as f64;

        let mut record = EpochRecord {
            epoch,
            train_loss,
            loss_ucl: None,
            loss_scl: None,
            loss_hucl: None,
            loss_hscl: None,
            assumption_fraction: None,
            probe_accuracy: None,
            skipped_anchors,
        };
        if cfg.track_losses {
            let view = EmbeddedPopulation::new(pop, &e, params)?;
            let pairs = embed_pairing(&e, &eval_pairs)?;
            let th = if cfg.method.setting.is_hardened() { h } else { cfg.tracked_hardening };
            let exact = |setting: Setting, hh: HardeningSpec| {
                loss_exact(&view, &NegSamplingSpec::new(setting, hh), &pairs).map(|r| r.value)
            };
            record.loss_ucl = tracked(exact(Setting::Ucl, HardeningSpec::Identity), "UCL loss", epoch)?;
            record.loss_scl = tracked(exact(Setting::Scl, HardeningSpec::Identity), "SCL loss", epoch)?;
            record.loss_hucl = tracked(exact(Setting::HUcl, th), "H-UCL loss", epoch)?;
            record.loss_hscl = tracked(exact(Setting::HScl, th), "H-SCL loss", epoch)?;
            record.assumption_fraction =
                tracked(assumption_fraction(&view, &th).map(|s| s.fraction), "assumption fraction", epoch)?;
            if record.loss_bound_violated() {
                log::error!(
                    "epoch {epoch}: tracked H-SCL loss {:?} exceeds H-UCL {:?} with the assumption holding everywhere",
                    record.loss_hscl,
                    record.loss_hucl
                );
            }
        }
        let probe_now = epoch == cfg.epochs || (cfg.probe_every > 0 && epoch % cfg.probe_every == 0);
        if probe_now {
            record.probe_accuracy = Some(split_probe(&embed_all(&e, pop)?, &labels, cfg.seed)?);
        }
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}{}",
            record.probe_accuracy.map(|a| format!(", probe {a:.4}")).unwrap_or_default()
        );
        history.push(record);
    }
    Ok(TrainOutcome { history, embedder: e })
}

/// [`train`] from the embedder initialized by `cfg.seed`.
pub fn train_seeded(pop: &Population, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    train(pop, cfg, cfg.init_embedder(pop.feature_dim())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub setting: String,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub n_seeds: usize,
    /// Final probe accuracy per seed, in seed order.
    pub accuracies: Vec<f64>,
}

pub const COMPARISON_HEADER: &str = "setting,mean_acc,std_acc,n_seeds";

impl ComparisonRow {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.setting, self.mean_acc, self.std_acc, self.n_seeds)
    }
}

pub fn write_comparison<W: Write>(mut w: W, rows: &[ComparisonRow]) -> Result<()> {
    writeln!(w, "{COMPARISON_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Final probe accuracy of every method under every seed. Loss tracking is
/// off and the probe only runs after the last epoch.
pub fn run_method_comparison(
    pop: &Population,
    base: &TrainConfig,
    methods: &[Method],
    seeds: &[u64],
) -> Result<Vec<ComparisonRow>> {
    if methods.is_empty() || seeds.is_empty() {
        return Err(Error::Config("comparison needs at least one method and one seed".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..methods.len()).flat_map(|m| seeds.iter().map(move |&s| (m, s))).collect();
    let accs = jobs
        .par_iter()
        .map(|&(m, seed)| {
            let cfg = TrainConfig {
                method: methods[m],
                seed,
                track_losses: false,
                probe_every: 0,
                ..*base
            };
            let out = train_seeded(pop, &cfg)?;
            Ok(out.final_probe_accuracy().expect("last epoch is probed"))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let a = accs[m * seeds.len()..(m + 1) * seeds.len()].to_vec();
            let (mean_acc, std_acc) = mean_and_std(&a);
            ComparisonRow {
                setting: method.to_string(),
                mean_acc,
                std_acc,
                n_seeds: seeds.len(),
                accuracies: a,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_mixture, MixtureConfig};

    #[test]
    fn tau_schedule_examples() {
        let t1 = tau_schedule(-0.5, 0.1, 1, 200, 0.5).unwrap();
        assert!((t1 - (-1f64).exp()).abs() < 1e-15);
        let t200 = tau_schedule(-0.5, 0.1, 200, 200, 0.5).unwrap();
        assert!((t200 - 0.2f64.exp()).abs() < 1e-15);
        for e in 1..=5 {
            assert_eq!(tau_schedule(0.3, 0.3, e, 5, 0.5).unwrap(), 0.6f64.exp());
        }
        assert!(matches!(tau_schedule(0.0, 1.0, 1, 1, 0.5), Err(Error::ScheduleDegenerate { .. })));
        assert!(tau_schedule(0.0, 0.0, 1, 1, 0.5).is_ok());
    }

    #[test]
    fn method_parsing() {
        let m: Method = "H-SCL[tau:-0.5:0.1]".parse().unwrap();
        assert_eq!(m.hardening, HardeningSchedule::Threshold { start: -0.5, end: 0.1 });
        let d: Method = "H-UCL".parse().unwrap();
        assert_eq!(d.hardening, HardeningSchedule::Fixed(HardeningSpec::ExpTilt { beta: 1.0 }));
        for s in ["UCL", "SCL", "H-UCL[exp_tilt:2]", "H-SCL[threshold:1.5]", "H-SCL[tau:-0.5:0.1]"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        assert!("SCL[exp_tilt:1]".parse::<Method>().is_err());
        assert!("Hcol".parse::<Method>().is_err());
        assert!("H-SCL[exp_tilt:-1]".parse::<Method>().is_err());
    }

    fn tiny_mixture() -> Population {
        make_mixture(&MixtureConfig {
            n_classes: 2,
            ambient_dim: 4,
            n_per_class: 12,
            separation: 6.0,
            noise_sigma: 0.5,
            seed: 3,
        })
        .unwrap()
    }

    fn quick(method: &str) -> TrainConfig {
        TrainConfig {
            method: method.parse().unwrap(),
            epochs: 3,
            batch_size: 8,
            hidden: 6,
            embed_dim: 3,
            seed: 5,
            probe_every: 1,
            ..Default::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_weights_and_loss() {
        let pop = tiny_mixture();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            aug_sigma: 0.0,
            batch_size: pop.len(),
            ..quick("UCL")
        };
        let init = cfg.init_embedder(pop.feature_dim()).unwrap();
        let out = train(&pop, &cfg, init.clone()).unwrap();
        assert_eq!(out.embedder, init);
        let l0 = out.history[0].train_loss;
        assert!(out.history.iter().all(|r| (r.train_loss - l0).abs() <= 1e-12));
    }

    #[test]
    fn training_is_deterministic() {
        let pop = tiny_mixture();
        let cfg = quick("H-SCL[exp_tilt:1]");
        let a = train_seeded(&pop, &cfg).unwrap();
        let b = train_seeded(&pop, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.embedder, b.embedder);
        assert!(a.history.iter().all(|r| r.probe_accuracy.is_some() && r.loss_hscl.is_some()));
        let mut csv = Vec::new();
        write_history(&mut csv, &a.history).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
    }

    #[test]
    fn threshold_schedule_trains() {
        let pop = tiny_mixture();
        let out = train_seeded(&pop, &quick("H-SCL[tau:-0.5:0.1]")).unwrap();
        assert_eq!(out.history.len(), 3);
    }

    #[test]
    fn comparison_rows_repeat_for_repeated_methods() {
        let pop = tiny_mixture();
        let methods: Vec<Method> = ["SCL", "SCL", "H-SCL[identity]"].iter().map(|s| s.parse().unwrap()).collect();
        let rows = run_method_comparison(&pop, &quick("UCL"), &methods, &[1, 2]).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].accuracies, rows[1].accuracies);
        assert_eq!(rows[0].accuracies, rows[2].accuracies);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(TrainConfig { batch_size: 3, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig {
            epochs: 1,
            method: "H-SCL[tau:-0.5:0.1]".parse().unwrap(),
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
