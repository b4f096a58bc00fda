//! Small numerical helpers shared across modules.

/// Neumaier-compensated running sum.
///
/// The result depends only on the order in which terms are added, so sums
/// computed on different threads agree as long as the order is fixed.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Prefix sums `[0, x_1, x_1 + x_2, ...]` with compensation carried along.
pub fn compensated_prefix_sums(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len() + 1);
    let mut acc = CompensatedSum::new();
    out.push(0.0);
    for &x in xs {
        acc.add(x);
        out.push(acc.value());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensation_recovers_lost_bits() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-15).abs() < 1e-30);
    }

    #[test]
    fn prefix_sums_start_at_zero() {
        let p = compensated_prefix_sums(&[0.5, 0.25, 0.25]);
        assert_eq!(p, vec![0.0, 0.5, 0.75, 1.0]);
    }
}
