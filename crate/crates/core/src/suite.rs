//! Randomized instance generators and the aggregate verification run behind
//! `hscl verify`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize, Embedder, EmbeddingVector, SimilarityParams};
use crate::hardening::{check_hardening_validity, linear_grid, HardeningSpec};
use crate::losses::PositivePair;
use crate::numeric::kahan_sum;
use crate::population::{expected_under, tilt, EmbeddedPopulation, LabeledPoint, Population};
use crate::theory::{
    assumption_fraction, build_counterexample_hardening, check_mixture_step, decomposition_max_residual, verify_loss_bound,
    AssumptionRecord, CounterexampleRecord, LossBoundRecord, DECOMPOSITION_TOLERANCE,
};

/// Independent RNG for trial `index` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A random probability vector with some exact zeros, and a non-negative
/// weight vector with positive mass against it.
pub fn random_tilt_instance<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let n = rng.gen_range(1..=64);
    loop {
        let raw: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.sample::<f64, _>(Exp1) })
            .collect();
        let total = kahan_sum(raw.iter().copied());
        if total == 0.0 {
            continue;
        }
        let p: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
        let rho: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.2) { 0.0 } else { scale * rng.gen::<f64>() })
            .collect();
        if p.iter().zip(&rho).any(|(a, b)| a * b > 0.0) {
            return (p, rho);
        }
    }
}

/// Random labeled population with between 4 and `max_points` points, 2 to
/// 5 classes and either uniform or random base weights.
pub fn random_population<R: Rng>(rng: &mut R, max_points: usize) -> Result<Population> {
    let max_points = max_points.max(4);
    let n = rng.gen_range(4..=max_points);
    let n_classes = rng.gen_range(2..=(n / 2).clamp(2, 5));
    let dim = rng.gen_range(2..=6);
    let points: Vec<LabeledPoint> = (0..n)
        .map(|i| {
            let label = if i < n_classes { i } else { rng.gen_range(0..n_classes) };
            let features = (0..dim).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            LabeledPoint::new(features, label)
        })
        .collect();
    if rng.gen_bool(0.5) {
        Population::uniform(points)
    } else {
        let raw: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1) + 1e-3).collect();
        let total = kahan_sum(raw.iter().copied());
        Population::new(points, raw.iter().map(|w| w / total).collect())
    }
}

/// Random MLP on `input_dim` features with a 2 to 6 dimensional output.
pub fn random_embedder<R: Rng>(rng: &mut R, input_dim: usize) -> Result<Embedder> {
    let hidden = rng.gen_range(2..=8);
    let out = rng.gen_range(2..=6);
    let mut e = Embedder::init(&[input_dim, hidden, out], rng.gen())?;
    // Spread the outputs over the sphere rather than near the bias direction.
    let gain = rng.gen_range(1.0..4.0);
    for layer in e.layers_mut() {
        layer.weights.iter_mut().for_each(|w| *w *= gain);
    }
    Ok(e)
}

/// Identity, exponential tilt with `beta` in `[0.1, 5]`, or a threshold whose
/// log lies in `[-1/gamma, 1/gamma]`.
pub fn random_hardening<R: Rng>(rng: &mut R, params: &SimilarityParams) -> HardeningSpec {
    match rng.gen_range(0..3) {
        0 => HardeningSpec::Identity,
        1 => HardeningSpec::ExpTilt {
            beta: rng.gen_range(0.1..=5.0),
        },
        _ => {
            let b = params.bound();
            HardeningSpec::Threshold {
                tau: rng.gen_range(-b..=b).exp(),
            }
        }
    }
}

/// Embeddings scattered around one random direction per class; `spread` is
/// the isotropic noise scale before projection.
pub fn clustered_embeddings<R: Rng>(rng: &mut R, pop: &Population, dim: usize, spread: f64) -> Result<Vec<EmbeddingVector>> {
    let centers = (0..pop.n_classes())
        .map(|_| random_unit(rng, dim))
        .collect::<Result<Vec<_>>>()?;
    pop.points()
        .iter()
        .map(|p| {
            let c = centers[p.label].coords();
            let v: Vec<f64> = c.iter().map(|x| x + spread * rng.sample::<f64, _>(StandardNormal)).collect();
            normalize(&v).or_else(|_| Ok(centers[p.label].clone()))
        })
        .collect()
}

fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Result<EmbeddingVector> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(u) = normalize(&v) {
            return Ok(u);
        }
    }
}

/// One positive per anchor: a uniformly drawn classmate (possibly the
/// anchor itself), jittered on the sphere.
pub fn supervised_pairing<R: Rng>(rng: &mut R, view: &EmbeddedPopulation<'_>, jitter: f64) -> Vec<PositivePair> {
    let members = view.population().class_members();
    (0..view.len())
        .map(|anchor| {
            let j = *members[view.population().label(anchor)].choose(rng).expect("anchor's class is nonempty");
            let base = &view.embeddings()[j];
            let v: Vec<f64> = base
                .coords()
                .iter()
                .map(|x| x + jitter * rng.sample::<f64, _>(StandardNormal))
                .collect();
            PositivePair {
                anchor,
                positive: normalize(&v).unwrap_or_else(|_| base.clone()),
            }
        })
        .collect()
}

/// A random population, its embeddings and a random hardening.
pub struct Instance {
    pub population: Population,
    pub embeddings: Vec<EmbeddingVector>,
    pub hardening: HardeningSpec,
}

impl Instance {
    pub fn view(&self, params: SimilarityParams) -> Result<EmbeddedPopulation<'_>> {
        EmbeddedPopulation::from_embeddings(&self.population, self.embeddings.clone(), params)
    }
}

/// Embeddings come from tight class clusters when `clustered`, otherwise
/// from a random MLP over the features.
pub fn random_instance<R: Rng>(rng: &mut R, max_points: usize, params: &SimilarityParams, clustered: bool) -> Result<Instance> {
    let population = random_population(rng, max_points)?;
    let embeddings = if clustered {
        let dim = rng.gen_range(2..=6);
        let spread = rng.gen_range(0.0..0.3);
        clustered_embeddings(rng, &population, dim, spread)?
    } else {
        let f = random_embedder(rng, population.feature_dim())?;
        population.points().iter().map(|p| f.forward(&p.features)).collect::<Result<Vec<_>>>()?
    };
    let hardening = random_hardening(rng, params);
    Ok(Instance {
        population,
        embeddings,
        hardening,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub gamma: f64,
    pub max_points: usize,
    pub tilt_trials: usize,
    pub decomposition_trials: usize,
    pub loss_bound_trials: usize,
    pub counterexample_trials: usize,
    /// Hardening functions screened for validity before anything else runs.
    pub hardenings: Vec<HardeningSpec>,
    pub grid_points: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gamma: 0.5,
            max_points: 200,
            tilt_trials: 1000,
            decomposition_trials: 1000,
            loss_bound_trials: 500,
            counterexample_trials: 200,
            hardenings: vec![
                HardeningSpec::Identity,
                HardeningSpec::ExpTilt { beta: 1.0 },
                HardeningSpec::Threshold { tau: 1.0 },
            ],
            grid_points: 1001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityRecord {
    pub hardening: String,
    pub valid: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TiltSummary {
    pub trials: usize,
    pub failures: usize,
    pub max_mass_error: f64,
    pub max_identity_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub trials: usize,
    pub anchors_checked: usize,
    pub failures: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBoundSummary {
    pub trials: usize,
    /// Instances with every anchor satisfying the assumption.
    pub qualifying: usize,
    /// Instances skipped because some anchor had no hard negatives.
    pub undefined: usize,
    pub violations: usize,
    pub mixture_anchors_checked: usize,
    pub mixture_failures: usize,
    pub undefined_anchors: usize,
    pub records: Vec<LossBoundRecord>,
    /// Per-anchor records of the first qualifying instance.
    pub assumption_records: Vec<AssumptionRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSummary {
    pub instances_tried: usize,
    pub applicable_instances: usize,
    pub anchors_checked: usize,
    pub violations: usize,
    pub records: Vec<CounterexampleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub first_failure: Option<String>,
    pub hardening_validity: Vec<ValidityRecord>,
    pub tilt: TiltSummary,
    pub decomposition: DecompositionSummary,
    pub loss_bound: LossBoundSummary,
    pub counterexample: CounterexampleSummary,
    /// Checks on a user-supplied population, if any.
    pub population: Vec<PopulationCheck>,
}

/// Exact checks on a fixed population embedded by a seeded MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationCheck {
    pub hardening: String,
    pub max_residual: f64,
    pub assumption_fraction: Option<f64>,
    pub undefined_anchors: usize,
    /// Absent when some anchor has no hard negatives.
    pub loss_bound: Option<LossBoundRecord>,
    pub counterexample_anchors: usize,
    pub counterexample_violations: usize,
}

impl PopulationCheck {
    pub fn failure(&self) -> Option<String> {
        if self.max_residual > DECOMPOSITION_TOLERANCE {
            return Some(format!("{}: alpha decomposition residual {:e}", self.hardening, self.max_residual));
        }
        if let Some(l) = self.loss_bound.as_ref().filter(|l| l.is_violation()) {
            return Some(format!("{}: l_hscl {} > l_hucl {}", self.hardening, l.l_hscl, l.l_hucl));
        }
        if self.counterexample_violations > 0 {
            return Some(format!("{}: {} counterexample anchors fail", self.hardening, self.counterexample_violations));
        }
        None
    }
}

pub fn check_population(pop: &Population, cfg: &VerifyConfig) -> Result<Vec<PopulationCheck>> {
    let params = SimilarityParams::new(cfg.gamma)?;
    let f = Embedder::mlp(pop.feature_dim(), 32, 8, cfg.seed)?;
    let view = EmbeddedPopulation::new(pop, &f, params)?;
    let mut rng = trial_rng(cfg.seed ^ 0x5eed_0007, 0);
    let pairs = supervised_pairing(&mut rng, &view, 0.05);
    let mut counter = Vec::new();
    for a in 0..view.len() {
        match build_counterexample_hardening(&view, a) {
            Ok(r) => counter.push(r),
            Err(Error::ConstructionInapplicable { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    cfg.hardenings
        .iter()
        .map(|h| {
            let summary = match assumption_fraction(&view, h) {
                Ok(s) => Some(s),
                Err(Error::UndefinedFraction) => None,
                Err(e) => return Err(e),
            };
            let loss_bound = match verify_loss_bound(&view, h, &pairs) {
                Ok(r) => Some(r),
                Err(Error::EmptySupport { .. }) | Err(Error::UndefinedFraction) => None,
                Err(e) => return Err(e),
            };
            Ok(PopulationCheck {
                hardening: h.to_string(),
                max_residual: decomposition_max_residual(&view, h)?,
                assumption_fraction: summary.as_ref().map(|s| s.fraction),
                undefined_anchors: summary.as_ref().map_or(view.len(), |s| s.undefined_anchors.len()),
                loss_bound,
                counterexample_anchors: counter.len(),
                counterexample_violations: counter.iter().filter(|r| !r.holds).count(),
            })
        })
        .collect()
}

/// Checks one tilt instance; returns (mass error, identity error).
pub fn tilt_errors(p: &[f64], rho: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    let r = tilt(p, rho)?;
    let mass_err = (kahan_sum(r.iter().copied()) - 1.0).abs();
    let alpha = kahan_sum(p.iter().zip(rho).map(|(a, b)| a * b));
    let direct = kahan_sum(p.iter().zip(rho).zip(values).map(|((a, b), s)| a * b * s)) / alpha;
    let tilted = expected_under(&r, values)?;
    Ok((mass_err, (tilted - direct).abs() / direct.abs().max(1.0)))
}

fn run_tilt(cfg: &VerifyConfig) -> Result<TiltSummary> {
    let outcomes = (0..cfg.tilt_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(cfg.seed, i as u64);
            let (p, rho) = random_tilt_instance(&mut rng);
            let values: Vec<f64> = (0..p.len()).map(|_| rng.gen_range(-5.0..5.0)).collect();
            tilt_errors(&p, &rho, &values)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut s = TiltSummary {
        trials: outcomes.len(),
        ..Default::default()
    };
    for (m, e) in outcomes {
        s.max_mass_error = s.max_mass_error.max(m);
        s.max_identity_error = s.max_identity_error.max(e);
        if m > 1e-12 || e > 1e-12 {
            s.failures += 1;
        }
    }
    Ok(s)
}

fn run_decomposition(cfg: &VerifyConfig, params: SimilarityParams) -> Result<DecompositionSummary> {
    let outcomes = (0..cfg.decomposition_trials)
        .into_par_iter()
        .map(|i| -> Result<(usize, f64)> {
            let mut rng = trial_rng(cfg.seed ^ 0x5eed_0002, i as u64);
            let inst = random_instance(&mut rng, cfg.max_points, &params, i % 2 == 1)?;
            let view = inst.view(params)?;
            Ok((view.len(), decomposition_max_residual(&view, &inst.hardening)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut s = DecompositionSummary {
        trials: outcomes.len(),
        ..Default::default()
    };
    for (n, r) in outcomes {
        s.anchors_checked += n;
        s.max_residual = s.max_residual.max(r);
        if r > DECOMPOSITION_TOLERANCE {
            s.failures += 1;
        }
    }
    Ok(s)
}

/// Outcome of one loss-bound trial.
pub enum LossBoundTrial {
    /// Some anchor has an empty hard-negative support.
    Undefined,
    Checked {
        record: LossBoundRecord,
        mixture_checked: usize,
        mixture_failures: usize,
        undefined_anchors: usize,
        assumption_records: Vec<AssumptionRecord>,
    },
}

pub fn loss_bound_trial(seed: u64, index: u64, max_points: usize, params: SimilarityParams) -> Result<LossBoundTrial> {
    let mut rng = trial_rng(seed, index);
    // Mostly tight clusters, where the assumption tends to hold everywhere.
    let clustered = index % 4 != 0;
    let inst = random_instance(&mut rng, max_points, &params, clustered)?;
    let view = inst.view(params)?;
    let pairs = supervised_pairing(&mut rng, &view, 0.05);
    let record = match verify_loss_bound(&view, &inst.hardening, &pairs) {
        Ok(r) => r,
        Err(Error::EmptySupport { .. }) | Err(Error::UndefinedFraction) => return Ok(LossBoundTrial::Undefined),
        Err(e) => return Err(e),
    };
    let summary = assumption_fraction(&view, &inst.hardening)?;
    let mut mixture_checked = 0;
    let mut mixture_failures = 0;
    for r in summary.records.iter().filter(|r| r.holds) {
        mixture_checked += 1;
        if !check_mixture_step(&view, r.anchor_index, &inst.hardening)?.holds {
            mixture_failures += 1;
        }
    }
    Ok(LossBoundTrial::Checked {
        record,
        mixture_checked,
        mixture_failures,
        undefined_anchors: summary.undefined_anchors.len(),
        assumption_records: summary.records,
    })
}

fn run_loss_bound(cfg: &VerifyConfig, params: SimilarityParams) -> Result<LossBoundSummary> {
    let outcomes = (0..cfg.loss_bound_trials)
        .into_par_iter()
        .map(|i| loss_bound_trial(cfg.seed ^ 0x5eed_0003, i as u64, cfg.max_points, params))
        .collect::<Result<Vec<_>>>()?;
    let mut s = LossBoundSummary {
        trials: outcomes.len(),
        ..Default::default()
    };
    for t in outcomes {
        match t {
            LossBoundTrial::Undefined => s.undefined += 1,
            LossBoundTrial::Checked {
                record,
                mixture_checked,
                mixture_failures,
                undefined_anchors,
                assumption_records,
            } => {
                s.mixture_anchors_checked += mixture_checked;
                s.mixture_failures += mixture_failures;
                s.undefined_anchors += undefined_anchors;
                if record.hypotheses_met() {
                    s.qualifying += 1;
                    if s.assumption_records.is_empty() {
                        s.assumption_records = assumption_records;
                    }
                }
                if record.is_violation() {
                    s.violations += 1;
                }
                s.records.push(record);
            }
        }
    }
    Ok(s)
}

/// Overlapping clusters, small enough that every anchor can be tried.
pub fn counterexample_instance<R: Rng>(rng: &mut R) -> Result<(Population, Vec<EmbeddingVector>)> {
    let pop = random_population(rng, 40)?;
    let dim = rng.gen_range(2..=4);
    let spread = rng.gen_range(0.3..1.5);
    let emb = clustered_embeddings(rng, &pop, dim, spread)?;
    Ok((pop, emb))
}

/// Every applicable anchor's record for instance `index`, or `None` when
/// the construction applies nowhere.
pub fn counterexample_trial(seed: u64, index: u64, params: SimilarityParams) -> Result<Option<Vec<CounterexampleRecord>>> {
    let mut rng = trial_rng(seed, index);
    let (pop, emb) = counterexample_instance(&mut rng)?;
    let view = EmbeddedPopulation::from_embeddings(&pop, emb, params)?;
    let mut records = Vec::new();
    for a in 0..view.len() {
        match build_counterexample_hardening(&view, a) {
            Ok(r) => records.push(r),
            Err(Error::ConstructionInapplicable { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((!records.is_empty()).then_some(records))
}

fn run_counterexample(cfg: &VerifyConfig, params: SimilarityParams) -> Result<CounterexampleSummary> {
    let mut s = CounterexampleSummary::default();
    let max_tries = 20 * cfg.counterexample_trials.max(1);
    let chunk = cfg.counterexample_trials.max(1);
    let mut next = 0usize;
    while s.applicable_instances < cfg.counterexample_trials && next < max_tries {
        let end = (next + chunk).min(max_tries);
        let outcomes = (next..end)
            .into_par_iter()
            .map(|i| counterexample_trial(cfg.seed ^ 0x5eed_0005, i as u64, params))
            .collect::<Result<Vec<_>>>()?;
        for o in outcomes {
            s.instances_tried += 1;
            if s.applicable_instances == cfg.counterexample_trials {
                break;
            }
            if let Some(records) = o {
                s.applicable_instances += 1;
                s.anchors_checked += records.len();
                s.violations += records.iter().filter(|r| !r.holds).count();
                // Keep one record per instance in the report.
                s.records.push(records[0]);
            }
        }
        next = end;
    }
    Ok(s)
}

/// Runs every check and reports the first failure, if any.
pub fn run_verification(cfg: &VerifyConfig, population: Option<&Population>) -> Result<VerifyReport> {
    let params = SimilarityParams::new(cfg.gamma)?;
    let grid = linear_grid(-params.bound(), params.bound(), cfg.grid_points.max(2));
    let hardening_validity = cfg
        .hardenings
        .iter()
        .map(|h| {
            Ok(ValidityRecord {
                hardening: h.to_string(),
                valid: check_hardening_validity(h, &grid)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut first_failure = hardening_validity
        .iter()
        .find(|v| !v.valid)
        .map(|v| format!("hardening {} is not non-negative and nondecreasing", v.hardening));

    let mut report = VerifyReport {
        seed: cfg.seed,
        passed: false,
        first_failure: None,
        hardening_validity,
        tilt: TiltSummary::default(),
        decomposition: DecompositionSummary::default(),
        loss_bound: LossBoundSummary::default(),
        counterexample: CounterexampleSummary::default(),
        population: Vec::new(),
    };
    if first_failure.is_none() {
        if let Some(pop) = population {
            report.population = check_population(pop, cfg)?;
            first_failure = report.population.iter().find_map(|c| c.failure());
        }
    }
    if first_failure.is_none() {
        report.tilt = run_tilt(cfg)?;
        report.decomposition = run_decomposition(cfg, params)?;
        report.loss_bound = run_loss_bound(cfg, params)?;
        report.counterexample = run_counterexample(cfg, params)?;
        first_failure = if report.tilt.failures > 0 {
            Some(format!("tilt: {} of {} instances off tolerance", report.tilt.failures, report.tilt.trials))
        } else if report.decomposition.failures > 0 {
            Some(format!(
                "alpha decomposition: max residual {:e}",
                report.decomposition.max_residual
            ))
        } else if report.loss_bound.violations > 0 {
            let (i, r) = report
                .loss_bound
                .records
                .iter()
                .enumerate()
                .find(|(_, r)| r.is_violation())
                .expect("a violation was counted");
            Some(format!("loss inequality: record {i} has l_hscl {} > l_hucl {}", r.l_hscl, r.l_hucl))
        } else if report.loss_bound.mixture_failures > 0 {
            Some(format!("mixture step: {} anchors fail", report.loss_bound.mixture_failures))
        } else if report.counterexample.violations > 0 {
            Some(format!("counterexample: {} anchors fail", report.counterexample.violations))
        } else {
            None
        };
    }
    report.passed = first_failure.is_none();
    report.first_failure = first_failure;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let p = SimilarityParams::default();
        let a = random_instance(&mut trial_rng(1, 7), 50, &p, false).unwrap();
        let b = random_instance(&mut trial_rng(1, 7), 50, &p, false).unwrap();
        assert_eq!(a.population, b.population);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.hardening, b.hardening);
    }

    #[test]
    fn random_population_bounds() {
        let mut rng = trial_rng(3, 0);
        for _ in 0..50 {
            let pop = random_population(&mut rng, 30).unwrap();
            assert!((4..=30).contains(&pop.len()));
            assert!(pop.n_classes() >= 2);
        }
    }

    #[test]
    fn small_verification_run_passes() {
        let cfg = VerifyConfig {
            max_points: 30,
            tilt_trials: 50,
            decomposition_trials: 30,
            loss_bound_trials: 30,
            counterexample_trials: 10,
            ..Default::default()
        };
        let r = run_verification(&cfg, None).unwrap();
        assert!(r.passed, "{:?}", r.first_failure);
        assert_eq!(r.counterexample.applicable_instances, 10);
        assert!(r.loss_bound.qualifying > 0);
    }

    #[test]
    fn decreasing_hardening_fails_fast() {
        let cfg = VerifyConfig {
            hardenings: vec![HardeningSpec::ExpTilt { beta: -1.0 }],
            ..Default::default()
        };
        let r = run_verification(&cfg, None).unwrap();
        assert!(!r.passed);
        assert!(r.first_failure.unwrap().contains("exp_tilt:-1"));
        assert_eq!(r.tilt.trials, 0);
    }
}
