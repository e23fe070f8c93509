//! Finite labeled sample spaces and the negative-sampling distributions
//! built on them.
//!
//! Every distribution here is a tilt of the base distribution `q_UCL` by a
//! per-anchor weight `rho(x^-) = mask(y(x^-), y(x)) * eta(g(x, x^-))`:
//!
//! | setting | mask             | eta          |
//! |---------|------------------|--------------|
//! | UCL     | 1                | 1            |
//! | SCL     | `y(x^-) != y(x)` | 1            |
//! | H-UCL   | 1                | hardening    |
//! | H-SCL   | `y(x^-) != y(x)` | hardening    |
//! | Hcol    | `y(x^-) == y(x)` | hardening    |
//!
//! The anchor itself belongs to the population and is a candidate
//! negative like any other point.

mod io;
mod sampling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Embedder, EmbeddingVector, SimilarityParams};
use crate::hardening::HardeningSpec;
use crate::numeric::{anchored_weighted_mean, kahan_sum};

pub use sampling::{sample_negative_counts, sample_negatives, sample_negatives_with};

/// Tolerance on the base distribution's total mass.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub features: Vec<f64>,
    pub label: usize,
}

impl LabeledPoint {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

/// Immutable labeled population with its base negative distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    points: Vec<LabeledPoint>,
    base_weights: Vec<f64>,
    n_classes: usize,
}

impl Population {
    /// Population with uniform base weights.
    pub fn uniform(points: Vec<LabeledPoint>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn new(points: Vec<LabeledPoint>, base_weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Input("population is empty".into()));
        }
        if base_weights.len() != points.len() {
            return Err(Error::Shape {
                expected: points.len(),
                got: base_weights.len(),
            });
        }
        let dim = points[0].features.len();
        if dim == 0 {
            return Err(Error::Input("points need at least one feature".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.features.len() != dim {
                return Err(Error::Input(format!(
                    "point {i} has {} features, expected {dim}",
                    p.features.len()
                )));
            }
            if p.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("point {i} has a non-finite feature")));
            }
        }
        if base_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Input("base weights must be finite and non-negative".into()));
        }
        let mass = kahan_sum(base_weights.iter().copied());
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Input(format!("base weights sum to {mass}, not 1")));
        }
        let n_classes = points.iter().map(|p| p.label).max().unwrap() + 1;
        let first = points[0].label;
        if points.iter().all(|p| p.label == first) {
            return Err(Error::Input("population needs at least two distinct labels".into()));
        }
        Ok(Self {
            points,
            base_weights,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &LabeledPoint {
        &self.points[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.points[i].label
    }

    pub fn labels(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.label).collect()
    }

    pub fn base_weights(&self) -> &[f64] {
        &self.base_weights
    }

    /// `max label + 1`.
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.points[0].features.len()
    }

    /// Point indices grouped by label.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.n_classes];
        for (i, p) in self.points.iter().enumerate() {
            members[p.label].push(i);
        }
        members
    }

    pub fn check_anchor(&self, anchor: usize) -> Result<()> {
        if anchor >= self.len() {
            return Err(Error::Input(format!(
                "anchor index {anchor} out of range for a population of {}",
                self.len()
            )));
        }
        Ok(())
    }

    /// Embeds every point through `f`.
    pub fn embed<'a>(&'a self, f: &Embedder, params: SimilarityParams) -> Result<EmbeddedPopulation<'a>> {
        EmbeddedPopulation::new(self, f, params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "UCL")]
    Ucl,
    #[serde(rename = "SCL")]
    Scl,
    #[serde(rename = "H-UCL")]
    HUcl,
    #[serde(rename = "H-SCL")]
    HScl,
    #[serde(rename = "Hcol")]
    HCol,
}

impl Setting {
    pub const ALL: [Setting; 5] = [Setting::Ucl, Setting::Scl, Setting::HUcl, Setting::HScl, Setting::HCol];

    pub fn name(&self) -> &'static str {
        match self {
            Setting::Ucl => "UCL",
            Setting::Scl => "SCL",
            Setting::HUcl => "H-UCL",
            Setting::HScl => "H-SCL",
            Setting::HCol => "Hcol",
        }
    }

    /// Whether the setting uses the hardening function at all.
    pub fn is_hardened(&self) -> bool {
        matches!(self, Setting::HUcl | Setting::HScl | Setting::HCol)
    }

    /// Whether labels are available to the negative sampler.
    pub fn is_supervised(&self) -> bool {
        matches!(self, Setting::Scl | Setting::HScl)
    }

    /// Label mask: does a negative with `neg_label` qualify for an anchor
    /// with `anchor_label`?
    #[inline]
    pub fn admits(&self, anchor_label: usize, neg_label: usize) -> bool {
        match self {
            Setting::Ucl | Setting::HUcl => true,
            Setting::Scl | Setting::HScl => anchor_label != neg_label,
            Setting::HCol => anchor_label == neg_label,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "ucl" => Ok(Setting::Ucl),
            "scl" => Ok(Setting::Scl),
            "h-ucl" | "hucl" => Ok(Setting::HUcl),
            "h-scl" | "hscl" => Ok(Setting::HScl),
            "hcol" | "h-col" => Ok(Setting::HCol),
            _ => Err(Error::Input(format!("unknown setting '{s}'"))),
        }
    }
}

/// Which negative-sampling distribution is in force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegSamplingSpec {
    pub setting: Setting,
    pub hardening: HardeningSpec,
}

impl NegSamplingSpec {
    pub fn new(setting: Setting, hardening: HardeningSpec) -> Self {
        Self { setting, hardening }
    }

    pub fn unhardened(setting: Setting) -> Self {
        Self::new(setting, HardeningSpec::Identity)
    }

    /// The hardening actually applied: UCL and SCL ignore theirs.
    pub fn effective_hardening(&self) -> HardeningSpec {
        if self.setting.is_hardened() {
            self.hardening
        } else {
            HardeningSpec::Identity
        }
    }
}

/// Normalizers of the hardened distributions at one anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaReport {
    pub alpha_scl: f64,
    pub alpha_hucl: f64,
    pub alpha_hscl: f64,
    pub alpha_hcol: f64,
}

impl AlphaReport {
    /// `|alpha_hucl - (alpha_hscl + alpha_hcol)|`, relative to `max(1, alpha_hucl)`.
    pub fn decomposition_residual(&self) -> f64 {
        (self.alpha_hucl - (self.alpha_hscl + self.alpha_hcol)).abs() / self.alpha_hucl.abs().max(1.0)
    }
}

/// A population together with the embedding of every point.
#[derive(Debug, Clone)]
pub struct EmbeddedPopulation<'a> {
    population: &'a Population,
    embeddings: Vec<EmbeddingVector>,
    params: SimilarityParams,
}

impl<'a> EmbeddedPopulation<'a> {
    pub fn new(population: &'a Population, f: &Embedder, params: SimilarityParams) -> Result<Self> {
        let embeddings = population
            .points
            .iter()
            .map(|p| f.forward(&p.features))
            .collect::<Result<Vec<_>>>()?;
        Self::from_embeddings(population, embeddings, params)
    }

    /// Uses caller-supplied embeddings, e.g. hand-placed points on the sphere.
    pub fn from_embeddings(
        population: &'a Population,
        embeddings: Vec<EmbeddingVector>,
        params: SimilarityParams,
    ) -> Result<Self> {
        if embeddings.len() != population.len() {
            return Err(Error::Shape {
                expected: population.len(),
                got: embeddings.len(),
            });
        }
        let d = embeddings[0].dim();
        if let Some(e) = embeddings.iter().find(|e| e.dim() != d) {
            return Err(Error::Shape {
                expected: d,
                got: e.dim(),
            });
        }
        Ok(Self {
            population,
            embeddings,
            params,
        })
    }

    pub fn population(&self) -> &'a Population {
        self.population
    }

    pub fn embeddings(&self) -> &[EmbeddingVector] {
        &self.embeddings
    }

    pub fn params(&self) -> SimilarityParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.population.len()
    }

    pub fn is_empty(&self) -> bool {
        self.population.is_empty()
    }

    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        self.params.kernel(self.embeddings[i].coords(), self.embeddings[j].coords())
    }

    /// `g(anchor, x_j)` for every point `j`.
    pub fn similarity_row(&self, anchor: usize) -> Vec<f64> {
        let a = self.embeddings[anchor].coords();
        self.embeddings.iter().map(|e| self.params.kernel(a, e.coords())).collect()
    }

    /// Similarity of the anchor with an arbitrary embedding (e.g. a positive).
    pub fn similarity_to(&self, anchor: usize, other: &EmbeddingVector) -> Result<f64> {
        crate::geometry::similarity(&self.embeddings[anchor], other, &self.params)
    }
}

/// `r(z) = rho(z) p(z) / alpha` with `alpha = sum rho p`.
pub fn tilt(p: &[f64], rho: &[f64]) -> Result<Vec<f64>> {
    if p.len() != rho.len() {
        return Err(Error::Shape {
            expected: p.len(),
            got: rho.len(),
        });
    }
    if rho.iter().any(|r| r.is_nan() || *r < 0.0) {
        return Err(Error::Input("tilting weights must be non-negative".into()));
    }
    let alpha = kahan_sum(p.iter().zip(rho).map(|(pi, ri)| pi * ri));
    if !alpha.is_finite() {
        return Err(Error::Numerical(format!("tilt normalizer is {alpha}")));
    }
    if alpha <= 0.0 {
        return Err(Error::ZeroMass);
    }
    // A weight that is constant on the support of p leaves p unchanged.
    let mut on_support = p.iter().zip(rho).filter(|(pi, _)| **pi > 0.0).map(|(_, ri)| *ri);
    let first = on_support.next();
    if first.is_some_and(|c| c > 0.0 && on_support.all(|r| r == c)) {
        return Ok(p.to_vec());
    }
    Ok(p.iter().zip(rho).map(|(pi, ri)| ri * pi / alpha).collect())
}

/// `E_{z ~ dist}[values(z)]`.
pub fn expected_under(dist: &[f64], values: &[f64]) -> Result<f64> {
    if dist.len() != values.len() {
        return Err(Error::Shape {
            expected: dist.len(),
            got: values.len(),
        });
    }
    Ok(anchored_weighted_mean(dist, values))
}

pub fn compute_alphas(view: &EmbeddedPopulation<'_>, anchor: usize, h: &HardeningSpec) -> Result<AlphaReport> {
    let pop = view.population();
    pop.check_anchor(anchor)?;
    let y = pop.label(anchor);
    let g = view.similarity_row(anchor);
    let q = pop.base_weights();
    let eta: Vec<f64> = g.iter().map(|&t| h.eta(t)).collect();
    let sum_where = |pred: &dyn Fn(usize) -> bool, weight: &dyn Fn(usize) -> f64| {
        kahan_sum((0..pop.len()).filter(|&j| pred(j)).map(|j| q[j] * weight(j)))
    };
    Ok(AlphaReport {
        alpha_scl: sum_where(&|j| pop.label(j) != y, &|_| 1.0),
        alpha_hucl: sum_where(&|_| true, &|j| eta[j]),
        alpha_hscl: sum_where(&|j| pop.label(j) != y, &|j| eta[j]),
        alpha_hcol: sum_where(&|j| pop.label(j) == y, &|j| eta[j]),
    })
}

/// Per-point tilting weights `mask * eta(g)` for one anchor. When the
/// exponential tilt would overflow, weights are rescaled by a common factor,
/// which leaves the tilted distribution unchanged.
pub fn tilt_weights(view: &EmbeddedPopulation<'_>, anchor: usize, spec: &NegSamplingSpec) -> Result<Vec<f64>> {
    let pop = view.population();
    pop.check_anchor(anchor)?;
    let y = pop.label(anchor);
    let h = spec.effective_hardening();
    let g = view.similarity_row(anchor);
    let admitted = |j: usize| spec.setting.admits(y, pop.label(j));
    if h.needs_log_space(view.params().bound()) {
        let logs: Vec<f64> = g.iter().map(|&t| h.log_eta(t)).collect();
        let shift = (0..pop.len())
            .filter(|&j| admitted(j))
            .map(|j| logs[j])
            .fold(f64::NEG_INFINITY, f64::max);
        return Ok((0..pop.len())
            .map(|j| if admitted(j) { (logs[j] - shift).exp() } else { 0.0 })
            .collect());
    }
    Ok((0..pop.len())
        .map(|j| if admitted(j) { h.eta(g[j]) } else { 0.0 })
        .collect())
}

/// The negative-sampling distribution `q(. | anchor)` for `spec`.
pub fn neg_distribution(view: &EmbeddedPopulation<'_>, anchor: usize, spec: &NegSamplingSpec) -> Result<Vec<f64>> {
    let rho = tilt_weights(view, anchor, spec)?;
    tilt(view.population().base_weights(), &rho).map_err(|e| match e {
        Error::ZeroMass => Error::EmptySupport {
            setting: spec.setting,
            anchor,
        },
        other => other,
    })
}

/// `E_{x^- ~ q(.|anchor)}[exp(g(anchor, x^-))]` under the given setting.
pub fn expected_exp_similarity(view: &EmbeddedPopulation<'_>, anchor: usize, spec: &NegSamplingSpec) -> Result<f64> {
    let dist = neg_distribution(view, anchor, spec)?;
    let exp_g: Vec<f64> = view.similarity_row(anchor).iter().map(|g| g.exp()).collect();
    expected_under(&dist, &exp_g)
}

/// Index sets induced by a similarity threshold at one anchor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardSets {
    /// Points labelled differently from the anchor.
    pub scl: Vec<usize>,
    /// Points with `exp(g) >= tau`.
    pub hucl: Vec<usize>,
    pub hscl: Vec<usize>,
    pub hcol: Vec<usize>,
}

pub fn hard_sets(view: &EmbeddedPopulation<'_>, anchor: usize, tau: f64) -> Result<HardSets> {
    if !(tau > 0.0) {
        return Err(Error::Input(format!("tau must be positive, got {tau}")));
    }
    let pop = view.population();
    pop.check_anchor(anchor)?;
    let y = pop.label(anchor);
    let g = view.similarity_row(anchor);
    let mut sets = HardSets {
        scl: Vec::new(),
        hucl: Vec::new(),
        hscl: Vec::new(),
        hcol: Vec::new(),
    };
    for (j, gj) in g.iter().enumerate() {
        let other = pop.label(j) != y;
        let hard = gj.exp() >= tau;
        if other {
            sets.scl.push(j);
        }
        if hard {
            sets.hucl.push(j);
            if other {
                sets.hscl.push(j);
            } else {
                sets.hcol.push(j);
            }
        }
    }
    Ok(sets)
}

/// `q_UCL(H)`: base mass of an index set.
pub fn base_mass(pop: &Population, set: &[usize]) -> f64 {
    kahan_sum(set.iter().map(|&j| pop.base_weights()[j]))
}
