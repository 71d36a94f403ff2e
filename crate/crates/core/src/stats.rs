//! Accumulators and small statistics helpers.

/// Running mean and variance (Welford) with a compensated total.
#[derive(Clone, Debug, Default)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
    sum: f64,
    compensation: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
        // Neumaier summation keeps the total independent of magnitude ordering.
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        (self.sum + self.compensation) / self.n as f64
    }

    /// Unbiased sample variance; NaN below two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        self.m2 / (self.n - 1) as f64
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<Accumulator>().mean()
}

pub fn std_dev(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<Accumulator>().std_dev()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_two_pass_formulas() {
        let xs = [1.0, 2.5, -0.5, 4.0, 3.25];
        let acc: Accumulator = xs.iter().copied().collect();
        let m = xs.iter().sum::<f64>() / 5.0;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
        assert!((acc.mean() - m).abs() < 1e-15);
        assert!((acc.variance() - v).abs() < 1e-14);
    }

    #[test]
    fn compensated_mean_is_order_independent() {
        let mut xs: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1e8 } else { 1e-8 * i as f64 }).collect();
        let a = mean(&xs);
        xs.reverse();
        let b = mean(&xs);
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }
}
