//! Gaussian-mixture datasets and additive-noise augmentation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{LabeledPoint, Population};

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub n_classes: usize,
    pub ambient_dim: usize,
    pub n_per_class: usize,
    /// Minimum distance between class means; also the radius they are drawn on.
    pub separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            ambient_dim: 16,
            n_per_class: 100,
            separation: 4.0,
            noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl MixtureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config("mixture needs at least 2 classes".into()));
        }
        if self.ambient_dim < 2 {
            return Err(Error::Config("mixture needs ambient_dim >= 2".into()));
        }
        if self.n_per_class < 2 {
            return Err(Error::Config("mixture needs n_per_class >= 2".into()));
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return Err(Error::Config(format!("separation must be positive, got {}", self.separation)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

fn gaussian<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Class means on the sphere of radius `separation`, redrawn until pairwise
/// at least `separation` apart.
pub fn class_means(cfg: &MixtureConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let means: Vec<Vec<f64>> = (0..cfg.n_classes)
            .map(|_| loop {
                let v = gaussian(rng, cfg.ambient_dim, 1.0);
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    break v.iter().map(|x| cfg.separation * x / norm).collect();
                }
            })
            .collect();
        let separated = (0..means.len())
            .all(|i| (0..i).all(|j| distance(&means[i], &means[j]) >= cfg.separation));
        if separated {
            return Ok(means);
        }
    }
    Err(Error::Geometry(format!(
        "could not place {} means pairwise {} apart in {} dimensions after {MAX_PLACEMENT_ATTEMPTS} attempts",
        cfg.n_classes, cfg.separation, cfg.ambient_dim
    )))
}

/// `n_classes * n_per_class` points, class-major, uniform base weights.
pub fn make_mixture(cfg: &MixtureConfig) -> Result<Population> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means = class_means(cfg, &mut rng)?;
    let mut points = Vec::with_capacity(cfg.n_classes * cfg.n_per_class);
    for (label, mean) in means.iter().enumerate() {
        for _ in 0..cfg.n_per_class {
            let noise = gaussian(&mut rng, cfg.ambient_dim, cfg.noise_sigma);
            let x = mean.iter().zip(noise).map(|(m, e)| m + e).collect();
            points.push(LabeledPoint::new(x, label));
        }
    }
    Population::uniform(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub aug_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { aug_sigma: 0.5 }
    }
}

impl AugmentConfig {
    pub fn new(aug_sigma: f64) -> Result<Self> {
        if !(aug_sigma.is_finite() && aug_sigma >= 0.0) {
            return Err(Error::Config(format!("aug_sigma must be >= 0, got {aug_sigma}")));
        }
        Ok(Self { aug_sigma })
    }
}

/// `x` plus isotropic Gaussian noise; returns `x` unchanged when the scale
/// is zero, without consuming randomness.
pub fn augment<R: Rng>(x: &[f64], a: &AugmentConfig, rng: &mut R) -> Vec<f64> {
    if a.aug_sigma == 0.0 {
        return x.to_vec();
    }
    x.iter()
        .map(|v| v + a.aug_sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Positive is an augmentation of the anchor itself.
    AugmentOnly,
    /// Positive is an augmentation of a uniformly drawn classmate.
    AugmentPlusLabel,
}

/// Draws positives for a fixed population.
pub struct PairSampler<'a> {
    population: &'a Population,
    members: Vec<Vec<usize>>,
    mode: PairMode,
    augment: AugmentConfig,
}

impl<'a> PairSampler<'a> {
    pub fn new(population: &'a Population, mode: PairMode, augment: AugmentConfig) -> Self {
        if mode == PairMode::AugmentPlusLabel {
            let members = population.class_members();
            for (label, m) in members.iter().enumerate() {
                if m.len() == 1 {
                    log::warn!("class {label} has a single point; its positives fall back to self-augmentation");
                }
            }
        }
        Self {
            population,
            members: population.class_members(),
            mode,
            augment,
        }
    }

    /// Index of the point whose augmentation becomes the positive.
    pub fn source_for<R: Rng>(&self, anchor: usize, rng: &mut R) -> usize {
        match self.mode {
            PairMode::AugmentOnly => anchor,
            PairMode::AugmentPlusLabel => {
                let class = &self.members[self.population.label(anchor)];
                if class.len() < 2 {
                    anchor
                } else {
                    *class.choose(rng).expect("nonempty class")
                }
            }
        }
    }

    pub fn positive_for<R: Rng>(&self, anchor: usize, rng: &mut R) -> Vec<f64> {
        let src = self.source_for(anchor, rng);
        augment(&self.population.point(src).features, &self.augment, rng)
    }
}

/// A uniformly drawn anchor and its positive feature vector.
pub fn draw_positive_pair<R: Rng>(
    pop: &Population,
    mode: PairMode,
    a: &AugmentConfig,
    rng: &mut R,
) -> Result<(usize, Vec<f64>)> {
    if pop.is_empty() {
        return Err(Error::Input("population is empty".into()));
    }
    let sampler = PairSampler::new(pop, mode, *a);
    let anchor = rng.gen_range(0..pop.len());
    let positive = sampler.positive_for(anchor, rng);
    Ok((anchor, positive))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(sep: f64, sigma: f64, seed: u64) -> MixtureConfig {
        MixtureConfig {
            n_classes: 2,
            ambient_dim: 4,
            n_per_class: 50,
            separation: sep,
            noise_sigma: sigma,
            seed,
        }
    }

    #[test]
    fn zero_noise_collapses_classes_to_means() {
        let pop = make_mixture(&small(3.0, 0.0, 1)).unwrap();
        for class in pop.class_members() {
            let first = &pop.point(class[0]).features;
            assert!(class.iter().all(|&i| &pop.point(i).features == first));
        }
    }

    #[test]
    fn nearest_mean_classifies_well_separated_mixture() {
        let cfg = small(20.0, 0.5, 4);
        let pop = make_mixture(&cfg).unwrap();
        let means = class_means(&cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
        for p in pop.points() {
            let pred = (0..means.len())
                .min_by(|&a, &b| distance(&p.features, &means[a]).total_cmp(&distance(&p.features, &means[b])))
                .unwrap();
            assert_eq!(pred, p.label);
        }
    }

    #[test]
    fn means_are_separated() {
        let cfg = MixtureConfig::default();
        let means = class_means(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for i in 0..means.len() {
            for j in 0..i {
                assert!(distance(&means[i], &means[j]) >= cfg.separation);
            }
        }
    }

    #[test]
    fn impossible_separation_is_geometry_error() {
        // On a circle of radius r at most six points are pairwise r apart.
        let cfg = MixtureConfig {
            n_classes: 3,
            ambient_dim: 2,
            n_per_class: 2,
            separation: 1.0,
            noise_sigma: 0.0,
            seed: 0,
        };
        assert!(make_mixture(&cfg).is_ok());
        let crowded = MixtureConfig { n_classes: 7, ..cfg };
        assert!(matches!(make_mixture(&crowded), Err(Error::Geometry(_))));
    }

    #[test]
    fn mixture_is_reproducible_to_the_byte() {
        let cfg = small(4.0, 1.0, 9);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        make_mixture(&cfg).unwrap().write_csv(&mut a).unwrap();
        make_mixture(&cfg).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(make_mixture(&MixtureConfig { n_classes: 1, ..Default::default() }).is_err());
        assert!(make_mixture(&MixtureConfig { noise_sigma: -1.0, ..Default::default() }).is_err());
        assert!(AugmentConfig::new(-0.1).is_err());
    }

    #[test]
    fn augmentation_mean_and_identity() {
        let x = [1.0, -2.0, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment(&x, &AugmentConfig::new(0.0).unwrap(), &mut rng), x.to_vec());
        let a = AugmentConfig::new(0.5).unwrap();
        let n = 100_000;
        let mut sums = [0.0; 3];
        for _ in 0..n {
            augment(&x, &a, &mut rng).iter().zip(sums.iter_mut()).for_each(|(v, s)| *s += v);
        }
        for (s, x) in sums.iter().zip(x) {
            assert!((s / n as f64 - x).abs() <= 5.0 * 0.5 / (n as f64).sqrt());
        }
        let one = augment(&x, &a, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(one, augment(&x, &a, &mut ChaCha8Rng::seed_from_u64(5)));
    }

    #[test]
    fn augment_only_without_noise_returns_anchor() {
        let pop = make_mixture(&small(4.0, 1.0, 2)).unwrap();
        let a = AugmentConfig::new(0.0).unwrap();
        let (i, x) = draw_positive_pair(&pop, PairMode::AugmentOnly, &a, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(x, pop.point(i).features);
    }

    #[test]
    fn label_pairs_split_evenly_in_two_point_class() {
        let pop = Population::uniform(vec![
            LabeledPoint::new(vec![0.0, 0.0], 0),
            LabeledPoint::new(vec![1.0, 0.0], 0),
            LabeledPoint::new(vec![5.0, 5.0], 1),
            LabeledPoint::new(vec![6.0, 5.0], 1),
        ])
        .unwrap();
        let s = PairSampler::new(&pop, PairMode::AugmentPlusLabel, AugmentConfig::new(0.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let hits = (0..n).filter(|_| s.source_for(0, &mut rng) == 1).count();
        let f = hits as f64 / n as f64;
        assert!((f - 0.5).abs() <= 5.0 * (0.25 / n as f64).sqrt(), "{f}");
    }

    #[test]
    fn singleton_class_falls_back_to_self() {
        let pop = Population::uniform(vec![
            LabeledPoint::new(vec![0.0, 0.0], 0),
            LabeledPoint::new(vec![1.0, 0.0], 1),
            LabeledPoint::new(vec![2.0, 0.0], 1),
        ])
        .unwrap();
        let s = PairSampler::new(&pop, PairMode::AugmentPlusLabel, AugmentConfig::new(0.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| s.source_for(0, &mut rng) == 0));
    }

    #[test]
    fn same_seed_same_pair() {
        let pop = make_mixture(&small(4.0, 1.0, 2)).unwrap();
        let a = AugmentConfig::default();
        let draw = || draw_positive_pair(&pop, PairMode::AugmentPlusLabel, &a, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(draw(), draw());
    }
}
