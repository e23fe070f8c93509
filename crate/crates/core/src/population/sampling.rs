use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;

use crate::error::{Error, Result};
use crate::numeric::kahan_sum;

fn check_distribution(dist: &[f64]) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::Input("distribution is empty".into()));
    }
    if dist.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Input("distribution has negative or non-finite mass".into()));
    }
    let mass = kahan_sum(dist.iter().copied());
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!("distribution sums to {mass}")));
    }
    Ok(())
}

/// `k` iid draws from `dist`, seeded.
pub fn sample_negatives(dist: &[f64], k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_negatives_with(dist, k, &mut rng)
}

pub fn sample_negatives_with<R: Rng>(dist: &[f64], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Input("need at least one negative".into()));
    }
    check_distribution(dist)?;
    let index = WeightedIndex::new(dist).map_err(|e| Error::Input(format!("bad distribution: {e}")))?;
    Ok((0..k).map(|_| index.sample(rng)).collect())
}

/// Occupation counts of `k` iid draws from `dist`.
///
/// Drawn as a chain of conditional binomials, which has exactly the law of
/// counting `k` categorical draws but costs O(len) instead of O(k).
pub fn sample_negative_counts<R: Rng>(dist: &[f64], k: u64, rng: &mut R) -> Result<Vec<u64>> {
    if k == 0 {
        return Err(Error::Input("need at least one negative".into()));
    }
    check_distribution(dist)?;
    // tail[j] = sum_{i >= j} dist[i]
    let mut tail = vec![0.0; dist.len() + 1];
    for j in (0..dist.len()).rev() {
        tail[j] = tail[j + 1] + dist[j];
    }
    let last = dist.iter().rposition(|p| *p > 0.0).expect("distribution has mass");
    let mut counts = vec![0u64; dist.len()];
    let mut remaining = k;
    for j in 0..=last {
        if remaining == 0 {
            break;
        }
        if dist[j] == 0.0 {
            continue;
        }
        if j == last {
            counts[j] = remaining;
            break;
        }
        let p = (dist[j] / tail[j]).clamp(0.0, 1.0);
        let c = Binomial::new(remaining, p)
            .map_err(|e| Error::Numerical(format!("binomial({remaining}, {p}): {e}")))?
            .sample(rng);
        counts[j] = c;
        remaining -= c;
    }
    Ok(counts)
}
