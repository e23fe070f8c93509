//! Exact checks of the relationships between the hardened losses: the
//! normalizer decomposition, the collision-vs-hard-negative assumption, the
//! resulting H-SCL <= H-UCL loss inequality, and the threshold construction
//! under which H-SCL is bounded below by UCL.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardening::HardeningSpec;
use crate::losses::{loss_exact, psi_inf, PositivePair};
use crate::population::{
    compute_alphas, expected_exp_similarity, hard_sets, EmbeddedPopulation, NegSamplingSpec, Setting,
};

/// Slack on comparisons between exact expectations.
pub const EXPECTATION_SLACK: f64 = 1e-12;
/// Slack on comparisons between exact losses.
pub const LOSS_SLACK: f64 = 1e-9;
/// Tolerance on the normalizer decomposition, relative to `max(1, alpha_hucl)`.
pub const DECOMPOSITION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionRecord {
    pub anchor_index: usize,
    /// `E_{q_Hcol}[exp g]`
    pub e_hcol: f64,
    /// `E_{q_H-SCL}[exp g]`
    pub e_hscl: f64,
    pub holds: bool,
}

fn spec(setting: Setting, h: &HardeningSpec) -> NegSamplingSpec {
    NegSamplingSpec::new(setting, *h)
}

/// Compares the collision and hard-negative expectations at one anchor.
pub fn check_assumption(view: &EmbeddedPopulation<'_>, anchor: usize, h: &HardeningSpec) -> Result<AssumptionRecord> {
    view.population().check_anchor(anchor)?;
    let undefined = || -> Result<Error> {
        let a = compute_alphas(view, anchor, h)?;
        Ok(Error::UndefinedAssumption {
            anchor,
            alpha_hcol: a.alpha_hcol,
            alpha_hscl: a.alpha_hscl,
        })
    };
    let e_hcol = match expected_exp_similarity(view, anchor, &spec(Setting::HCol, h)) {
        Err(Error::EmptySupport { .. }) => return Err(undefined()?),
        other => other?,
    };
    let e_hscl = match expected_exp_similarity(view, anchor, &spec(Setting::HScl, h)) {
        Err(Error::EmptySupport { .. }) => return Err(undefined()?),
        other => other?,
    };
    Ok(AssumptionRecord {
        anchor_index: anchor,
        e_hcol,
        e_hscl,
        holds: e_hcol >= e_hscl - EXPECTATION_SLACK,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionSummary {
    /// Fraction of defined anchors where the assumption holds.
    pub fraction: f64,
    pub n_defined: usize,
    pub n_holding: usize,
    /// Anchors with an empty collision or hard-negative support.
    pub undefined_anchors: Vec<usize>,
    pub records: Vec<AssumptionRecord>,
}

pub fn assumption_fraction(view: &EmbeddedPopulation<'_>, h: &HardeningSpec) -> Result<AssumptionSummary> {
    let outcomes: Vec<Result<AssumptionRecord>> =
        (0..view.len()).into_par_iter().map(|a| check_assumption(view, a, h)).collect();
    let mut records = Vec::new();
    let mut undefined_anchors = Vec::new();
    for (anchor, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => records.push(r),
            Err(Error::UndefinedAssumption { .. }) => undefined_anchors.push(anchor),
            Err(e) => return Err(e),
        }
    }
    if records.is_empty() {
        return Err(Error::UndefinedFraction);
    }
    let n_holding = records.iter().filter(|r| r.holds).count();
    Ok(AssumptionSummary {
        fraction: n_holding as f64 / records.len() as f64,
        n_defined: records.len(),
        n_holding,
        undefined_anchors,
        records,
    })
}

/// Per-anchor step of the loss inequality: `E_{q_H-UCL}[e^g] >= E_{q_H-SCL}[e^g]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureStepRecord {
    pub anchor_index: usize,
    pub e_hucl: f64,
    pub e_hscl: f64,
    pub holds: bool,
}

pub fn check_mixture_step(view: &EmbeddedPopulation<'_>, anchor: usize, h: &HardeningSpec) -> Result<MixtureStepRecord> {
    let e_hucl = expected_exp_similarity(view, anchor, &spec(Setting::HUcl, h))?;
    let e_hscl = expected_exp_similarity(view, anchor, &spec(Setting::HScl, h))?;
    Ok(MixtureStepRecord {
        anchor_index: anchor,
        e_hucl,
        e_hscl,
        holds: e_hucl >= e_hscl - EXPECTATION_SLACK,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBoundRecord {
    pub l_hucl: f64,
    pub l_hscl: f64,
    pub assumption_fraction: f64,
    pub n_undefined: usize,
    /// `l_hscl <= l_hucl + LOSS_SLACK`
    pub holds: bool,
}

impl LossBoundRecord {
    /// The assumption holds at every defined anchor, so `holds` is guaranteed.
    pub fn hypotheses_met(&self) -> bool {
        self.assumption_fraction == 1.0
    }

    /// A record that contradicts the inequality under its own hypotheses.
    pub fn is_violation(&self) -> bool {
        self.hypotheses_met() && !self.holds
    }
}

/// Exact H-UCL and H-SCL losses over a shared positive pairing.
pub fn verify_loss_bound(
    view: &EmbeddedPopulation<'_>,
    h: &HardeningSpec,
    shared_pairs: &[PositivePair],
) -> Result<LossBoundRecord> {
    let summary = assumption_fraction(view, h)?;
    let l_hucl = loss_exact(view, &spec(Setting::HUcl, h), shared_pairs)?.value;
    let l_hscl = loss_exact(view, &spec(Setting::HScl, h), shared_pairs)?.value;
    Ok(LossBoundRecord {
        l_hucl,
        l_hscl,
        assumption_fraction: summary.fraction,
        n_undefined: summary.undefined_anchors.len(),
        holds: l_hscl <= l_hucl + LOSS_SLACK,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRecord {
    pub anchor_index: usize,
    /// `E_{q_UCL}[exp g]`, used as the threshold.
    pub tau_star: f64,
    pub hardening: HardeningSpec,
    pub e_hscl: f64,
    pub e_ucl: f64,
    /// `psi_inf` under each distribution with the anchor as its own positive.
    pub psi_hscl: f64,
    pub psi_ucl: f64,
    pub holds: bool,
}

/// Threshold hardening at `tau* = E_{q_UCL}[exp g]`; every H-SCL negative
/// then has `exp g >= tau*`, so H-SCL's expectation dominates UCL's.
pub fn build_counterexample_hardening(view: &EmbeddedPopulation<'_>, anchor: usize) -> Result<CounterexampleRecord> {
    view.population().check_anchor(anchor)?;
    let e_ucl = expected_exp_similarity(view, anchor, &NegSamplingSpec::unhardened(Setting::Ucl))?;
    let hardening = HardeningSpec::threshold(e_ucl)?;
    let e_hscl = match expected_exp_similarity(view, anchor, &spec(Setting::HScl, &hardening)) {
        Err(Error::EmptySupport { .. }) => return Err(Error::ConstructionInapplicable { anchor }),
        other => other?,
    };
    let g_self = view.similarity(anchor, anchor);
    let psi_hscl = psi_inf(g_self, e_hscl)?;
    let psi_ucl = psi_inf(g_self, e_ucl)?;
    Ok(CounterexampleRecord {
        anchor_index: anchor,
        tau_star: e_ucl,
        hardening,
        e_hscl,
        e_ucl,
        psi_hscl,
        psi_ucl,
        holds: e_hscl >= e_ucl - EXPECTATION_SLACK && psi_hscl >= psi_ucl - EXPECTATION_SLACK,
    })
}

/// Largest decomposition residual over all anchors.
pub fn decomposition_max_residual(view: &EmbeddedPopulation<'_>, h: &HardeningSpec) -> Result<f64> {
    let residuals = (0..view.len())
        .into_par_iter()
        .map(|a| compute_alphas(view, a, h).map(|r| r.decomposition_residual()))
        .collect::<Result<Vec<_>>>()?;
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// `alpha_hucl = alpha_hscl + alpha_hcol` at every anchor.
pub fn verify_decomposition(view: &EmbeddedPopulation<'_>, h: &HardeningSpec) -> bool {
    matches!(decomposition_max_residual(view, h), Ok(r) if r <= DECOMPOSITION_TOLERANCE)
}

/// The threshold-set form of the normalizers: with `eta = 1(e^g >= tau)`
/// each alpha is the base mass of the matching hard set.
pub fn threshold_alphas_match_sets(view: &EmbeddedPopulation<'_>, anchor: usize, tau: f64) -> Result<bool> {
    let sets = hard_sets(view, anchor, tau)?;
    let alphas = compute_alphas(view, anchor, &HardeningSpec::threshold(tau)?)?;
    let pop = view.population();
    let mass = |s: &[usize]| crate::population::base_mass(pop, s);
    let close = |a: f64, b: f64| (a - b).abs() <= DECOMPOSITION_TOLERANCE;
    Ok(close(alphas.alpha_scl, mass(&sets.scl))
        && close(alphas.alpha_hucl, mass(&sets.hucl))
        && close(alphas.alpha_hscl, mass(&sets.hscl))
        && close(alphas.alpha_hcol, mass(&sets.hcol)))
}
