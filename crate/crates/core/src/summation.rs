//! Neumaier compensated summation.
//!
//! Every reduction in the engine (path averages, weight aggregation) goes
//! through [`NeumaierSum`] in a fixed index order, so results are bitwise
//! reproducible no matter how the per-path work was scheduled.

/// Running compensated sum (Kahan-Babuska-Neumaier).
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for NeumaierSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

/// Compensated sum of a slice, accumulated in index order.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut acc = NeumaierSum::new();
    acc.extend(values.iter().copied());
    acc.total()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_small_terms_lost_by_naive_sum() {
        let values = [1.0, 1e100, 1.0, -1e100];
        let naive: f64 = values.iter().sum();
        assert_eq!(naive, 0.0);
        assert_eq!(compensated_sum(&values), 2.0);
    }

    #[test]
    fn empty_is_zero() {
        assert_eq!(compensated_sum(&[]), 0.0);
    }

    #[test]
    fn many_tenths() {
        let values = vec![0.1; 1_000_000];
        let exact = 100_000.0;
        assert!((compensated_sum(&values) - exact).abs() <= f64::EPSILON * exact);
    }
}
