//! Small summation helpers shared by the exact-enumeration code.

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// Weighted mean `sum_i w_i v_i` for weights summing to one, computed as
/// `v_ref + sum_i w_i (v_i - v_ref)` with `v_ref` the value at the first
/// positively weighted entry. Constant values and point masses come back
/// exactly.
pub fn anchored_weighted_mean(weights: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), values.len());
    let Some(r) = weights.iter().position(|&w| w > 0.0) else {
        return 0.0;
    };
    let reference = values[r];
    let delta = kahan_sum(
        weights
            .iter()
            .zip(values)
            .map(|(&w, &v)| if w > 0.0 { w * (v - reference) } else { 0.0 }),
    );
    reference + delta
}

/// Arithmetic mean with the same anchoring as [`anchored_weighted_mean`].
pub fn anchored_mean(values: &[f64]) -> f64 {
    let Some(&reference) = values.first() else {
        return f64::NAN;
    };
    let delta = kahan_sum(values.iter().map(|&v| v - reference));
    reference + delta / values.len() as f64
}

/// Sample mean and unbiased sample standard deviation.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = anchored_mean(values);
    if n < 2 {
        return (mean, 0.0);
    }
    let ss = kahan_sum(values.iter().map(|&v| (v - mean) * (v - mean)));
    (mean, (ss / (n - 1) as f64).sqrt())
}
