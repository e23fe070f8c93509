mod oracle;

use hscl_core::config::ExperimentConfig;
use hscl_core::suite::{clustered_embeddings, random_instance, random_population, supervised_pairing};
use hscl_core::theory::{build_counterexample_hardening, check_mixture_step};
use hscl_core::train::{linear_probe, Adam};
use hscl_core::{
    compute_alphas, hard_sets, loss_exact, loss_mc, neg_distribution, psi_inf, psi_k, verify_loss_bound,
    EmbeddedPopulation, EmbeddingVector, Error, HardeningSpec, LabeledPoint, NegSamplingSpec, Population,
    PositivePair, Setting, SimilarityParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const GAMMA: f64 = 0.5;

fn params() -> SimilarityParams {
    SimilarityParams::new(GAMMA).unwrap()
}

fn instance(seed: u64, clustered: bool) -> hscl_core::suite::Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_instance(&mut rng, 40, &params(), clustered).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_hardening_degenerates_exactly(seed in any::<u64>(), clustered in any::<bool>()) {
        let inst = instance(seed, clustered);
        let view = inst.view(params()).unwrap();
        for a in 0..view.len() {
            for (hard, plain) in [(Setting::HUcl, Setting::Ucl), (Setting::HScl, Setting::Scl)] {
                let q_h = neg_distribution(&view, a, &NegSamplingSpec::new(hard, HardeningSpec::Identity));
                let q = neg_distribution(&view, a, &NegSamplingSpec::unhardened(plain));
                match (q_h, q) {
                    (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
                    (Err(_), Err(_)) => {}
                    (x, y) => prop_assert!(false, "{:?} vs {:?}", x.is_ok(), y.is_ok()),
                }
            }
        }
    }

    #[test]
    fn decomposition_matches_oracle(seed in any::<u64>(), clustered in any::<bool>()) {
        let inst = instance(seed, clustered);
        let view = inst.view(params()).unwrap();
        for a in 0..view.len() {
            let r = compute_alphas(&view, a, &inst.hardening).unwrap();
            let g = oracle::sim_row(&inst.embeddings, a, GAMMA);
            let hucl = oracle::tilted(&inst.population, &g, a, Setting::HUcl, &inst.hardening).alpha;
            let scale = hucl.max(1.0);
            prop_assert!(r.decomposition_residual() <= 1e-12);
            prop_assert!((r.alpha_hucl - hucl).abs() / scale <= 1e-12);
        }
    }

    #[test]
    fn threshold_hscl_is_restricted_base(seed in any::<u64>(), log_tau in -2.0f64..2.0) {
        let inst = instance(seed, false);
        let view = inst.view(params()).unwrap();
        let tau = log_tau.exp();
        let spec = NegSamplingSpec::new(Setting::HScl, HardeningSpec::Threshold { tau });
        let p = inst.population.base_weights();
        for a in 0..view.len() {
            let sets = hard_sets(&view, a, tau).unwrap();
            match neg_distribution(&view, a, &spec) {
                Ok(q) => {
                    let mass: f64 = sets.hscl.iter().map(|&j| p[j]).sum();
                    for (j, qj) in q.iter().enumerate() {
                        let expected = if sets.hscl.contains(&j) { p[j] / mass } else { 0.0 };
                        prop_assert!((qj - expected).abs() <= 1e-12);
                    }
                }
                Err(Error::EmptySupport { .. }) => prop_assert!(sets.hscl.is_empty()),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }

    #[test]
    fn constant_negatives_give_the_limit(g_pos in -2.0f64..2.0, c in -2.0f64..2.0, k in 1usize..50) {
        prop_assert_eq!(psi_k(g_pos, &vec![c; k]).unwrap(), psi_inf(g_pos, c.exp()).unwrap());
    }

    #[test]
    fn loss_bound_holds_whenever_assumption_holds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 40, &params(), true).unwrap();
        let view = inst.view(params()).unwrap();
        let pairs = supervised_pairing(&mut rng, &view, 0.05);
        if let Ok(r) = verify_loss_bound(&view, &inst.hardening, &pairs) {
            if r.hypotheses_met() {
                prop_assert!(r.l_hscl <= r.l_hucl + 1e-9);
            }
            let flags = oracle::assumption(&inst.population, &inst.embeddings, &inst.hardening, GAMMA, 1e-12);
            for (a, f) in flags.iter().enumerate() {
                if *f == Some(true) {
                    prop_assert!(check_mixture_step(&view, a, &inst.hardening).unwrap().holds);
                }
            }
        }
    }

    #[test]
    fn counterexample_bounds_psi_from_below(seed in any::<u64>(), spread in 0.1f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pop = random_population(&mut rng, 30).unwrap();
        let emb = clustered_embeddings(&mut rng, &pop, 3, spread).unwrap();
        let view = EmbeddedPopulation::from_embeddings(&pop, emb, params()).unwrap();
        for a in 0..view.len() {
            if let Ok(r) = build_counterexample_hardening(&view, a) {
                prop_assert!(r.e_hscl >= r.e_ucl - 1e-12);
                prop_assert!(r.psi_hscl >= r.psi_ucl);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point(params in prop::collection::vec(-5.0f64..5.0, 1..20), steps in 1usize..20) {
        let mut opt = Adam::new(params.len(), 1e-3);
        let mut p = params.clone();
        let zero = vec![0.0; p.len()];
        for _ in 0..steps {
            opt.step(&mut p, &zero);
        }
        prop_assert_eq!(p, params);
    }

    #[test]
    fn config_rejects_unknown_keys(section in "(mixture|train|verify|compare|output|data)", key in "[a-z]{3,12}") {
        let known = [
            "n_classes", "ambient_dim", "n_per_class", "separation", "noise_sigma", "seed", "population",
            "method", "epochs", "batch_size", "learning_rate", "gamma", "hidden", "embed_dim",
            "aug_sigma", "tracked_hardening", "track_losses", "probe_every", "max_points",
            "tilt_trials", "decomposition_trials", "loss_bound_trials", "counterexample_trials",
            "hardenings", "grid_points", "methods", "seeds", "dir", "m",
        ];
        prop_assume!(!known.contains(&key.as_str()));
        let text = format!("{section}.{key} = 1\n");
        prop_assert!(ExperimentConfig::parse_str(&text, std::path::Path::new(".")).is_err());
    }
}

fn random_rotation<R: Rng>(rng: &mut R, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let c = oracle::dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let n = oracle::dot(&v, &v).sqrt();
        if n > 1e-6 {
            basis.push(v.iter().map(|x| x / n).collect());
        }
    }
    basis
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn probe_accuracy_is_rotation_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 4;
        let centers: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        let mut draw = |n: usize| {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for i in 0..n {
                let c = i % 3;
                x.push(centers[c].iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>());
                y.push(c);
            }
            (x, y)
        };
        let (tx, ty) = draw(60);
        let (vx, vy) = draw(30);
        let rot = random_rotation(&mut rng, d);
        let apply = |xs: &[Vec<f64>]| xs.iter().map(|x| rot.iter().map(|r| oracle::dot(r, x)).collect()).collect::<Vec<Vec<f64>>>();
        let plain = linear_probe(&tx, &ty, &vx, &vy).unwrap();
        let rotated = linear_probe(&apply(&tx), &ty, &apply(&vx), &vy).unwrap();
        prop_assert!((plain - rotated).abs() <= 1.0 / vx.len() as f64 + 1e-12);
    }
}

/// Exact finite-k loss by enumerating every ordered k-tuple of negatives.
fn finite_k_reference(view: &EmbeddedPopulation<'_>, spec: &NegSamplingSpec, pairs: &[PositivePair], k: u32) -> f64 {
    let n = view.len();
    let mut total = 0.0;
    for p in pairs {
        let q = neg_distribution(view, p.anchor, spec).unwrap();
        let g = oracle::sim_row(view.embeddings(), p.anchor, GAMMA);
        let g_pos = oracle::sim(&view.embeddings()[p.anchor], &p.positive, GAMMA);
        for code in 0..n.pow(k) {
            let (mut prob, mut sum, mut c) = (1.0, 0.0, code);
            for _ in 0..k {
                let j = c % n;
                c /= n;
                prob *= q[j];
                sum += g[j].exp();
            }
            if prob > 0.0 {
                total += prob * oracle::psi(g_pos, sum / k as f64);
            }
        }
    }
    total / pairs.len() as f64
}

#[test]
fn monte_carlo_is_unbiased_for_finite_k() {
    let points = vec![
        LabeledPoint::new(vec![1.0, 0.0], 0),
        LabeledPoint::new(vec![0.6, 0.8], 0),
        LabeledPoint::new(vec![0.0, 1.0], 1),
        LabeledPoint::new(vec![-0.8, 0.6], 1),
        LabeledPoint::new(vec![-1.0, 0.0], 2),
    ];
    let pop = Population::new(points, vec![0.1, 0.3, 0.2, 0.25, 0.15]).unwrap();
    let emb: Vec<EmbeddingVector> = pop.points().iter().map(|p| hscl_core::normalize(&p.features).unwrap()).collect();
    let view = EmbeddedPopulation::from_embeddings(&pop, emb.clone(), params()).unwrap();
    let pairs: Vec<PositivePair> = emb
        .iter()
        .enumerate()
        .map(|(anchor, e)| PositivePair { anchor, positive: e.clone() })
        .collect();
    let k = 3;
    for spec in [
        NegSamplingSpec::unhardened(Setting::Ucl),
        NegSamplingSpec::new(Setting::HScl, HardeningSpec::ExpTilt { beta: 1.0 }),
    ] {
        let reference = finite_k_reference(&view, &spec, &pairs, k);
        let reps = 200;
        let (mut mean, mut var) = (0.0, 0.0);
        for r in 0..reps {
            let est = loss_mc(&view, &spec, &pairs, k as u64, 50, 1000 + r).unwrap();
            mean += est.value / reps as f64;
            var += est.stderr * est.stderr;
        }
        let combined = var.sqrt() / reps as f64;
        assert!(
            (mean - reference).abs() <= 4.0 * combined,
            "mean {mean} reference {reference} se {combined}"
        );
        // psi is concave in the negative mean, so finitely many negatives never exceed the limit.
        assert!(reference <= loss_exact(&view, &spec, &pairs).unwrap().value + 1e-12);
    }
}
