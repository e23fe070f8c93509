//! Softmax-regression probe on frozen embeddings.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const PROBE_GRAD_TOL: f64 = 1e-6;
pub const PROBE_MAX_ITERS: usize = 5000;
pub const PROBE_TRAIN_FRACTION: f64 = 0.7;

/// Per-class shuffled split; each class with at least two members lands in
/// both halves.
pub fn stratified_split(labels: &[usize], train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut members in by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        let mut k = (train_fraction * n as f64).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        } else {
            k = n;
        }
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn augmented(x: &[f64]) -> impl Iterator<Item = f64> + '_ {
    x.iter().copied().chain(std::iter::once(1.0))
}

/// Trained weights, one row of `dim + 1` (bias last) per class.
pub struct SoftmaxModel {
    pub weights: Vec<Vec<f64>>,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl SoftmaxModel {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (c, w) in self.weights.iter().enumerate() {
            let s: f64 = w.iter().zip(augmented(x)).map(|(a, b)| a * b).sum();
            if s > best_score {
                best_score = s;
                best = c;
            }
        }
        best
    }
}

/// Full-batch gradient descent on the mean cross-entropy, step
/// `1 / max ||(x, 1)||^2`.
pub fn fit_softmax(x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<SoftmaxModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Input("probe needs matching, nonempty features and labels".into()));
    }
    let dim = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != dim) {
        return Err(Error::Shape {
            expected: dim,
            got: bad.len(),
        });
    }
    let width = dim + 1;
    let max_sq = x
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .fold(0.0, f64::max);
    let lr = 1.0 / max_sq;
    let n = x.len() as f64;
    let mut w = vec![vec![0.0; width]; n_classes];
    let mut grad = vec![vec![0.0; width]; n_classes];
    let mut probs = vec![0.0; n_classes];
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    while iterations < PROBE_MAX_ITERS {
        grad.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
        for (xi, &yi) in x.iter().zip(y) {
            for (c, wc) in w.iter().enumerate() {
                probs[c] = wc.iter().zip(augmented(xi)).map(|(a, b)| a * b).sum();
            }
            let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            probs.iter_mut().for_each(|p| {
                *p = (*p - max).exp();
                z += *p;
            });
            for (c, g) in grad.iter_mut().enumerate() {
                let r = probs[c] / z - if c == yi { 1.0 } else { 0.0 };
                g.iter_mut().zip(augmented(xi)).for_each(|(gv, xv)| *gv += r * xv);
            }
        }
        grad_norm = grad.iter().flatten().map(|g| (g / n) * (g / n)).sum::<f64>().sqrt();
        if grad_norm < PROBE_GRAD_TOL {
            break;
        }
        for (wc, gc) in w.iter_mut().zip(&grad) {
            wc.iter_mut().zip(gc).for_each(|(a, g)| *a -= lr * g / n);
        }
        iterations += 1;
    }
    Ok(SoftmaxModel {
        weights: w,
        iterations,
        grad_norm,
    })
}

/// Top-1 accuracy on the test split of a probe fitted on the train split.
pub fn linear_probe(train_x: &[Vec<f64>], train_y: &[usize], test_x: &[Vec<f64>], test_y: &[usize]) -> Result<f64> {
    let mut seen: Vec<usize> = train_y.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() < 2 {
        return Err(Error::Input("probe training split has fewer than two classes".into()));
    }
    if test_x.is_empty() || test_x.len() != test_y.len() {
        return Err(Error::Input("probe needs matching, nonempty test features and labels".into()));
    }
    let dim = train_x[0].len();
    if let Some(bad) = test_x.iter().find(|r| r.len() != dim) {
        return Err(Error::Shape {
            expected: dim,
            got: bad.len(),
        });
    }
    let n_classes = train_y.iter().chain(test_y).max().map_or(0, |m| m + 1);
    let model = fit_softmax(train_x, train_y, n_classes)?;
    let correct = test_x.iter().zip(test_y).filter(|(x, &y)| model.predict(x) == y).count();
    Ok(correct as f64 / test_x.len() as f64)
}

/// Probe accuracy under the seeded stratified split of `features`.
pub fn split_probe(features: &[Vec<f64>], labels: &[usize], seed: u64) -> Result<f64> {
    let (train, test) = stratified_split(labels, PROBE_TRAIN_FRACTION, seed);
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (idx.iter().map(|&i| features[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect())
    };
    let (trx, try_) = pick(&train);
    let (tex, tey) = pick(&test);
    linear_probe(&trx, &try_, &tex, &tey)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blobs(n_per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[3.0, 0.0], [-3.0, 0.0], [0.0, 3.0]];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (c, m) in centers.iter().enumerate() {
            for _ in 0..n_per {
                x.push(vec![
                    m[0] + 0.3 * rng.sample::<f64, _>(StandardNormal),
                    m[1] + 0.3 * rng.sample::<f64, _>(StandardNormal),
                ]);
                y.push(c);
            }
        }
        (x, y)
    }

    #[test]
    fn separable_train_equals_test_is_perfect() {
        let (x, y) = blobs(20, 1);
        assert_eq!(linear_probe(&x, &y, &x, &y).unwrap(), 1.0);
    }

    #[test]
    fn single_class_training_split_is_an_error() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(linear_probe(&x, &[2, 2], &x, &[2, 1]).is_err());
    }

    #[test]
    fn shuffled_labels_give_chance_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = 4;
        let n = 1000;
        let mut draw = || -> (Vec<Vec<f64>>, Vec<usize>) {
            let x = (0..n).map(|_| (0..4).map(|_| rng.sample(StandardNormal)).collect()).collect();
            let y = (0..n).map(|_| rng.gen_range(0..c)).collect();
            (x, y)
        };
        let (x, y) = draw();
        let (tx, ty) = draw();
        let acc = linear_probe(&x, &y, &tx, &ty).unwrap();
        assert!((acc - 1.0 / c as f64).abs() <= 0.05, "{acc}");
    }

    #[test]
    fn duplicated_training_points_give_same_accuracy() {
        let (x, y) = blobs(15, 2);
        let (tx, ty) = blobs(10, 3);
        let a = linear_probe(&x, &y, &tx, &ty).unwrap();
        let x2: Vec<Vec<f64>> = x.iter().chain(&x).cloned().collect();
        let y2: Vec<usize> = y.iter().chain(&y).copied().collect();
        assert_eq!(a, linear_probe(&x2, &y2, &tx, &ty).unwrap());
    }

    #[test]
    fn stratified_split_covers_every_class() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let (tr, te) = stratified_split(&labels, 0.7, 9);
        assert_eq!(tr.len() + te.len(), 100);
        for c in 0..4 {
            assert!(tr.iter().any(|&i| labels[i] == c));
            assert!(te.iter().any(|&i| labels[i] == c));
        }
        assert_eq!(stratified_split(&labels, 0.7, 9), (tr, te));
    }
}
