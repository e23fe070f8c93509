//! Hard-negative supervised contrastive learning on finite populations:
//! tilted negative-sampling distributions, InfoNCE losses with exact and
//! Monte Carlo evaluation, checks of the loss inequalities between the
//! hardened settings, and a small MLP trainer with a linear-probe readout.

pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod hardening;
pub mod losses;
pub mod numeric;
pub mod population;
pub mod suite;
pub mod synth;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
pub use geometry::{normalize, similarity, Embedder, EmbeddingVector, SimilarityParams};
pub use hardening::{check_hardening_validity, HardeningSpec};
pub use losses::{batch_loss, loss_exact, loss_gradient, loss_mc, psi_inf, psi_k, LossReport, PositivePair};
pub use population::{
    compute_alphas, expected_under, hard_sets, neg_distribution, sample_negatives, tilt, AlphaReport,
    EmbeddedPopulation, LabeledPoint, NegSamplingSpec, Population, Setting,
};
pub use theory::{
    assumption_fraction, build_counterexample_hardening, check_assumption, verify_loss_bound, verify_decomposition,
    AssumptionRecord, LossBoundRecord,
};
