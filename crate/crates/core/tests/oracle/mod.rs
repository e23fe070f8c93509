//! Brute-force reference computations, written against the definitions
//! rather than the library's code paths.

#![allow(dead_code)]

use hscl_core::{EmbeddingVector, HardeningSpec, Population, Setting};

pub fn eta(h: &HardeningSpec, t: f64) -> f64 {
    match *h {
        HardeningSpec::Identity => 1.0,
        HardeningSpec::ExpTilt { beta } => (beta * t).exp(),
        HardeningSpec::Threshold { tau } => {
            if t.exp() >= tau {
                1.0
            } else {
                0.0
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sim(a: &EmbeddingVector, b: &EmbeddingVector, gamma: f64) -> f64 {
    dot(a.coords(), b.coords()) / gamma
}

pub fn sim_row(emb: &[EmbeddingVector], anchor: usize, gamma: f64) -> Vec<f64> {
    emb.iter().map(|e| sim(&emb[anchor], e, gamma)).collect()
}

pub fn admits(setting: Setting, anchor_label: usize, label: usize) -> bool {
    match setting {
        Setting::Ucl | Setting::HUcl => true,
        Setting::Scl | Setting::HScl => label != anchor_label,
        Setting::HCol => label == anchor_label,
    }
}

fn hardened(setting: Setting) -> bool {
    matches!(setting, Setting::HUcl | Setting::HScl | Setting::HCol)
}

/// Tilted mass and `E[e^g]` at one anchor, `None` when the support is empty.
pub struct Tilted {
    pub alpha: f64,
    pub mean_exp: Option<f64>,
}

pub fn tilted(pop: &Population, g: &[f64], anchor: usize, setting: Setting, h: &HardeningSpec) -> Tilted {
    let y = pop.label(anchor);
    let (mut mass, mut num) = (0.0, 0.0);
    for (j, &gj) in g.iter().enumerate() {
        if !admits(setting, y, pop.label(j)) {
            continue;
        }
        let w = pop.base_weights()[j] * if hardened(setting) { eta(h, gj) } else { 1.0 };
        mass += w;
        num += w * gj.exp();
    }
    Tilted {
        alpha: mass,
        mean_exp: (mass > 0.0).then(|| num / mass),
    }
}

pub fn psi(g_pos: f64, mean_exp: f64) -> f64 {
    (1.0 + (-g_pos).exp() * mean_exp).ln()
}

/// Exact infinite-negative loss over a pairing `(anchor, positive embedding)`.
pub fn loss(
    pop: &Population,
    emb: &[EmbeddingVector],
    pairs: &[(usize, EmbeddingVector)],
    setting: Setting,
    h: &HardeningSpec,
    gamma: f64,
) -> Option<f64> {
    let mut total = 0.0;
    for (a, pos) in pairs {
        let g = sim_row(emb, *a, gamma);
        let m = tilted(pop, &g, *a, setting, h).mean_exp?;
        total += psi(sim(&emb[*a], pos, gamma), m);
    }
    Some(total / pairs.len() as f64)
}

/// Per anchor: `Some(holds)` where both collision and hard-negative
/// expectations exist, `None` otherwise.
pub fn assumption(pop: &Population, emb: &[EmbeddingVector], h: &HardeningSpec, gamma: f64, slack: f64) -> Vec<Option<bool>> {
    (0..pop.len())
        .map(|a| {
            let g = sim_row(emb, a, gamma);
            let col = tilted(pop, &g, a, Setting::HCol, h).mean_exp?;
            let hard = tilted(pop, &g, a, Setting::HScl, h).mean_exp?;
            Some(col >= hard - slack)
        })
        .collect()
}

/// In-batch objective over normalized embeddings: for each anchor the
/// eligible negatives are every anchor and positive view except its own
/// pair, label-filtered in supervised settings, importance-weighted by eta.
pub fn batch_loss(
    anchors: &[EmbeddingVector],
    positives: &[EmbeddingVector],
    labels: &[usize],
    setting: Setting,
    h: &HardeningSpec,
    m: f64,
    gamma: f64,
) -> f64 {
    let n = anchors.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mut wsum, mut num) = (0.0, 0.0);
        for j in 0..n {
            if j == i || !admits(setting, labels[i], labels[j]) {
                continue;
            }
            for v in [&anchors[j], &positives[j]] {
                let g = sim(&anchors[i], v, gamma);
                let w = if hardened(setting) { eta(h, g) } else { 1.0 };
                wsum += w;
                num += w * g.exp();
            }
        }
        let g_pos = sim(&anchors[i], &positives[i], gamma);
        total += (1.0 + m * (-g_pos).exp() * num / wsum).ln();
    }
    total / n as f64
}
