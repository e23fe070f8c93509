//! InfoNCE losses: the finite-k form, its infinite-negative limit, exact and
//! Monte Carlo population losses, and the in-batch training objective.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, Embedder, EmbeddingVector, Gradients, SimilarityParams};
use crate::numeric::{anchored_mean, kahan_sum, mean_and_std, KahanSum};
use crate::population::{
    neg_distribution, sample_negative_counts, EmbeddedPopulation, NegSamplingSpec,
};

/// `log(1 + exp(-g_pos) * mean_j exp(g_neg_j))`.
pub fn psi_k(g_pos: f64, g_negs: &[f64]) -> Result<f64> {
    if g_negs.is_empty() {
        return Err(Error::Input("psi_k needs at least one negative".into()));
    }
    if g_negs.iter().any(|g| !g.is_finite()) {
        return Err(Error::Input("non-finite negative similarity".into()));
    }
    let exp_negs: Vec<f64> = g_negs.iter().map(|g| g.exp()).collect();
    psi_inf(g_pos, anchored_mean(&exp_negs))
}

/// `log(1 + exp(-g_pos) * mean_exp_neg)`.
pub fn psi_inf(g_pos: f64, mean_exp_neg: f64) -> Result<f64> {
    if !g_pos.is_finite() {
        return Err(Error::Input(format!("positive similarity is {g_pos}")));
    }
    if !(mean_exp_neg.is_finite() && mean_exp_neg > 0.0) {
        return Err(Error::Input(format!(
            "mean exponentiated negative similarity must be positive, got {mean_exp_neg}"
        )));
    }
    Ok(((-g_pos).exp() * mean_exp_neg).ln_1p())
}

/// An anchor together with the embedding of its positive sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivePair {
    pub anchor: usize,
    pub positive: EmbeddingVector,
}

/// Pairs every anchor with itself (the noiseless augmentation).
pub fn self_pairing(view: &EmbeddedPopulation<'_>) -> Vec<PositivePair> {
    view.embeddings()
        .iter()
        .enumerate()
        .map(|(anchor, e)| PositivePair {
            anchor,
            positive: e.clone(),
        })
        .collect()
}

/// Embeds positive feature vectors given as `(anchor, features)`.
pub fn embed_pairing(f: &Embedder, pairs: &[(usize, Vec<f64>)]) -> Result<Vec<PositivePair>> {
    pairs
        .iter()
        .map(|(anchor, x)| {
            Ok(PositivePair {
                anchor: *anchor,
                positive: f.forward(x)?,
            })
        })
        .collect()
}

/// One loss evaluation; `k = None` marks the infinite-negative limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub setting: String,
    pub k: Option<u64>,
    pub value: f64,
    pub stderr: f64,
    pub n_anchor_draws: usize,
    pub seed: Option<u64>,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "setting,k,value,stderr,n_anchor_draws,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.setting,
            self.k.map_or_else(|| "inf".to_string(), |k| k.to_string()),
            self.value,
            self.stderr,
            self.n_anchor_draws,
            self.seed.map(|s| s.to_string()).unwrap_or_default()
        )
    }
}

pub fn write_loss_reports<W: Write>(mut w: W, reports: &[LossReport]) -> Result<()> {
    writeln!(w, "{}", LossReport::CSV_HEADER)?;
    for r in reports {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn spec_label(spec: &NegSamplingSpec) -> String {
    if spec.setting.is_hardened() {
        format!("{}[{}]", spec.setting, spec.hardening)
    } else {
        spec.setting.to_string()
    }
}

fn check_pairing(view: &EmbeddedPopulation<'_>, pairs: &[PositivePair]) -> Result<Vec<usize>> {
    if pairs.is_empty() {
        return Err(Error::Input("positive pairing is empty".into()));
    }
    let mut anchors: Vec<usize> = pairs.iter().map(|p| p.anchor).collect();
    anchors.sort_unstable();
    anchors.dedup();
    if let Some(&bad) = anchors.iter().find(|&&a| a >= view.len()) {
        view.population().check_anchor(bad)?;
    }
    Ok(anchors)
}

/// Per-anchor `E_q[exp g]` for the given anchors, in the same order.
fn anchor_expectations(view: &EmbeddedPopulation<'_>, spec: &NegSamplingSpec, anchors: &[usize]) -> Result<Vec<f64>> {
    anchors
        .par_iter()
        .map(|&a| crate::population::expected_exp_similarity(view, a, spec))
        .collect()
}

/// Exact infinite-negative loss: average of `psi_inf` over the pairing with
/// the inner expectation enumerated over the population.
pub fn loss_exact(view: &EmbeddedPopulation<'_>, spec: &NegSamplingSpec, pairs: &[PositivePair]) -> Result<LossReport> {
    let terms = psi_inf_terms(view, spec, pairs)?;
    Ok(LossReport {
        setting: spec_label(spec),
        k: None,
        value: kahan_sum(terms.iter().copied()) / terms.len() as f64,
        stderr: 0.0,
        n_anchor_draws: pairs.len(),
        seed: None,
    })
}

/// `psi_inf` of every pair, in pairing order.
pub fn psi_inf_terms(view: &EmbeddedPopulation<'_>, spec: &NegSamplingSpec, pairs: &[PositivePair]) -> Result<Vec<f64>> {
    let anchors = check_pairing(view, pairs)?;
    let expectations = anchor_expectations(view, spec, &anchors)?;
    pairs
        .iter()
        .map(|p| {
            let slot = anchors.binary_search(&p.anchor).expect("anchor collected above");
            psi_inf(view.similarity_to(p.anchor, &p.positive)?, expectations[slot])
        })
        .collect()
}

/// Monte Carlo estimate of the finite-k loss: `n_anchor_draws` pairs drawn
/// uniformly from the pairing, each with `k` iid negatives.
pub fn loss_mc(
    view: &EmbeddedPopulation<'_>,
    spec: &NegSamplingSpec,
    pairs: &[PositivePair],
    k: u64,
    n_anchor_draws: usize,
    seed: u64,
) -> Result<LossReport> {
    if k == 0 {
        return Err(Error::Input("k must be at least 1".into()));
    }
    if n_anchor_draws < 2 {
        return Err(Error::Input("need at least two anchor draws for a standard error".into()));
    }
    let anchors = check_pairing(view, pairs)?;
    let per_anchor: Vec<(Vec<f64>, Vec<f64>)> = anchors
        .iter()
        .map(|&a| {
            let dist = neg_distribution(view, a, spec)?;
            let exp_g = view.similarity_row(a).iter().map(|g| g.exp()).collect();
            Ok((dist, exp_g))
        })
        .collect::<Result<_>>()?;
    let g_pos: Vec<f64> = pairs
        .iter()
        .map(|p| view.similarity_to(p.anchor, &p.positive))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n_anchor_draws);
    for _ in 0..n_anchor_draws {
        let i = rng.gen_range(0..pairs.len());
        let slot = anchors.binary_search(&pairs[i].anchor).expect("anchor collected above");
        let (dist, exp_g) = &per_anchor[slot];
        let counts = sample_negative_counts(dist, k, &mut rng)?;
        let mut acc = KahanSum::new();
        for (c, e) in counts.iter().zip(exp_g) {
            if *c > 0 {
                acc.add(*c as f64 * e);
            }
        }
        values.push(psi_inf(g_pos[i], acc.value() / k as f64)?);
    }
    let (mean, sd) = mean_and_std(&values);
    Ok(LossReport {
        setting: spec_label(spec),
        k: Some(k),
        value: mean,
        stderr: sd / (n_anchor_draws as f64).sqrt(),
        n_anchor_draws,
        seed: Some(seed),
    })
}

/// What to do with an anchor that has no eligible in-batch negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissingNegatives {
    Fail,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLossSpec {
    pub sampling: NegSamplingSpec,
    /// Scale on the negative term; positive.
    pub m: f64,
    pub similarity: SimilarityParams,
    pub on_missing: MissingNegatives,
}

impl BatchLossSpec {
    pub fn new(sampling: NegSamplingSpec, m: f64, similarity: SimilarityParams) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Input(format!("M must be positive, got {m}")));
        }
        Ok(Self {
            sampling,
            m,
            similarity,
            on_missing: MissingNegatives::Fail,
        })
    }

    pub fn skipping(mut self) -> Self {
        self.on_missing = MissingNegatives::Skip;
        self
    }
}

/// Raw batch: anchor features, positive-view features and anchor labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLossValue {
    /// Mean over anchors that were not skipped.
    pub value: f64,
    pub per_anchor: Vec<Option<f64>>,
    pub skipped: Vec<usize>,
}

/// Gradients of the batch loss with respect to each view's embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGradients {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
}

/// In-batch objective
/// `mean_i log(1 + M exp(-g(a_i, p_i)) E_i)`,
/// where `E_i = sum_v eta(g_iv) exp(g_iv) / sum_v eta(g_iv)` runs over the
/// eligible views: every anchor and positive view in the batch except the
/// pair `(a_i, p_i)` itself, restricted by label for supervised settings.
/// The self-normalized weights are the in-batch form of tilting the
/// batch's empirical distribution.
pub fn batch_loss(
    anchors: &[EmbeddingVector],
    positives: &[EmbeddingVector],
    labels: &[usize],
    spec: &BatchLossSpec,
) -> Result<BatchLossValue> {
    Ok(batch_terms(anchors, positives, labels, spec, false)?.0)
}

/// [`batch_loss`] together with its gradient in embedding space.
pub fn batch_loss_with_grad(
    anchors: &[EmbeddingVector],
    positives: &[EmbeddingVector],
    labels: &[usize],
    spec: &BatchLossSpec,
) -> Result<(BatchLossValue, EmbeddingGradients)> {
    let (v, g) = batch_terms(anchors, positives, labels, spec, true)?;
    Ok((v, g.expect("gradient requested")))
}

fn batch_terms(
    anchors: &[EmbeddingVector],
    positives: &[EmbeddingVector],
    labels: &[usize],
    spec: &BatchLossSpec,
    want_grad: bool,
) -> Result<(BatchLossValue, Option<EmbeddingGradients>)> {
    let b = anchors.len();
    if b == 0 {
        return Err(Error::Input("batch is empty".into()));
    }
    if positives.len() != b {
        return Err(Error::Shape {
            expected: b,
            got: positives.len(),
        });
    }
    if labels.len() != b {
        return Err(Error::Shape {
            expected: b,
            got: labels.len(),
        });
    }
    let d = anchors[0].dim();
    if let Some(v) = anchors.iter().chain(positives).find(|v| v.dim() != d) {
        return Err(Error::Shape { expected: d, got: v.dim() });
    }
    let gamma = spec.similarity.gamma();
    let h = spec.sampling.effective_hardening();
    let setting = spec.sampling.setting;
    let log_space = h.needs_log_space(spec.similarity.bound());
    let slope = h.log_eta_slope();
    let view = |v: usize| -> &EmbeddingVector { if v < b { &anchors[v] } else { &positives[v - b] } };
    let view_label = |v: usize| labels[v % b];

    let mut per_anchor = vec![None; b];
    let mut skipped = Vec::new();
    let mut grads = want_grad.then(|| EmbeddingGradients {
        anchors: vec![vec![0.0; d]; b],
        positives: vec![vec![0.0; d]; b],
    });
    // (view index, g, weight) scratch for one anchor
    let mut eligible: Vec<(usize, f64, f64)> = Vec::with_capacity(2 * b);
    // First pass: values; gradients need the used-anchor count for scaling.
    let mut cache: Vec<Option<(f64, f64, f64, Vec<(usize, f64, f64)>)>> = vec![None; b];

    for i in 0..b {
        let a = anchors[i].coords();
        eligible.clear();
        for v in 0..2 * b {
            if v == i || v == b + i || !setting.admits(labels[i], view_label(v)) {
                continue;
            }
            let g = dot(a, view(v).coords()) / gamma;
            eligible.push((v, g, 0.0));
        }
        if log_space {
            let shift = eligible.iter().map(|e| h.log_eta(e.1)).fold(f64::NEG_INFINITY, f64::max);
            eligible.iter_mut().for_each(|e| e.2 = (h.log_eta(e.1) - shift).exp());
        } else {
            eligible.iter_mut().for_each(|e| e.2 = h.eta(e.1));
        }
        let total_weight = kahan_sum(eligible.iter().map(|e| e.2));
        if eligible.is_empty() || !(total_weight > 0.0) {
            match spec.on_missing {
                MissingNegatives::Fail => return Err(Error::BatchComposition { anchor: i }),
                MissingNegatives::Skip => {
                    log::debug!("skipping anchor {i}: no eligible in-batch negatives for {setting}");
                    skipped.push(i);
                    continue;
                }
            }
        }
        let expectation = kahan_sum(eligible.iter().map(|e| e.2 * e.1.exp())) / total_weight;
        let g_pos = dot(a, positives[i].coords()) / gamma;
        let u = spec.m * (-g_pos).exp() * expectation;
        let term = u.ln_1p();
        if !term.is_finite() {
            return Err(Error::Numerical(format!("batch loss term for anchor {i} is {term}")));
        }
        per_anchor[i] = Some(term);
        if want_grad {
            cache[i] = Some((u, expectation, total_weight, eligible.clone()));
        }
    }

    let used = b - skipped.len();
    if used == 0 {
        return Err(Error::BatchComposition { anchor: skipped[0] });
    }
    let value = kahan_sum(per_anchor.iter().flatten().copied()) / used as f64;

    if let Some(gr) = grads.as_mut() {
        let c = 1.0 / used as f64;
        for (i, entry) in cache.iter().enumerate() {
            let Some((u, expectation, total_weight, elig)) = entry else { continue };
            let s = u / (1.0 + u);
            let a = anchors[i].coords().to_vec();
            // d/d g_pos
            let dpos = -c * s / gamma;
            for k in 0..d {
                gr.anchors[i][k] += dpos * positives[i].coords()[k];
                gr.positives[i][k] += dpos * a[k];
            }
            // d/d g_iv through the expectation
            let scale = c * s / expectation / total_weight / gamma;
            for &(v, g, w) in elig {
                let eg = g.exp();
                let dg = scale * w * (eg + slope * (eg - expectation));
                if dg == 0.0 {
                    continue;
                }
                let vc = view(v).coords();
                for k in 0..d {
                    gr.anchors[i][k] += dg * vc[k];
                }
                let target = if v < b { &mut gr.anchors[v] } else { &mut gr.positives[v - b] };
                for k in 0..d {
                    target[k] += dg * a[k];
                }
            }
        }
    }

    Ok((
        BatchLossValue {
            value,
            per_anchor,
            skipped,
        },
        grads,
    ))
}

/// Batch loss and its gradient with respect to the embedder's parameters,
/// backpropagated through the sphere projection.
pub fn loss_gradient(e: &Embedder, batch: &Batch, spec: &BatchLossSpec) -> Result<(BatchLossValue, Gradients)> {
    if batch.anchors.is_empty() {
        return Err(Error::Input("batch is empty".into()));
    }
    let anchor_traces = batch.anchors.iter().map(|x| e.forward_trace(x)).collect::<Result<Vec<_>>>()?;
    let positive_traces = batch.positives.iter().map(|x| e.forward_trace(x)).collect::<Result<Vec<_>>>()?;
    let anchors: Vec<EmbeddingVector> = anchor_traces.iter().map(|t| t.output().clone()).collect();
    let positives: Vec<EmbeddingVector> = positive_traces.iter().map(|t| t.output().clone()).collect();
    let (value, dz) = batch_loss_with_grad(&anchors, &positives, &batch.labels, spec)?;
    if !value.value.is_finite() {
        return Err(Error::Numerical(format!("batch loss is {}", value.value)));
    }
    let mut grads = Gradients::zeros_like(e);
    for (t, g) in anchor_traces.iter().zip(&dz.anchors) {
        e.backward(t, g, &mut grads)?;
    }
    for (t, g) in positive_traces.iter().zip(&dz.positives) {
        e.backward(t, g, &mut grads)?;
    }
    Ok((value, grads))
}
