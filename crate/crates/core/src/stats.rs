//! Mergeable running mean/variance (Welford with the Chan et al. pairwise combination).

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    /// Sum of squared deviations from the mean.
    pub m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut s = Self::new();
        xs.iter().for_each(|&x| s.push(x));
        s
    }

    /// Rebuilds stats from a published (mean, standard error, count) triple.
    pub fn from_summary(mean: f64, stderr: Option<f64>, count: u64) -> Self {
        let m2 = match (stderr, count) {
            (Some(se), c) if c >= 2 => se * se * c as f64 * (c - 1) as f64,
            _ => 0.0,
        };
        Self { count, mean, m2 }
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if other.count == 0 {
            return *self;
        }
        if self.count == 0 {
            return *other;
        }
        let count = self.count + other.count;
        let (na, nb, n) = (self.count as f64, other.count as f64, count as f64);
        let delta = other.mean - self.mean;
        RunningStats {
            count,
            mean: self.mean + delta * nb / n,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n,
        }
    }

    /// Sample variance `m2 / (count - 1)`; `None` below two samples.
    pub fn variance(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / (self.count - 1) as f64)
    }

    /// Standard error of the mean, `sqrt(variance / count)`.
    pub fn stderr(&self) -> Option<f64> {
        self.variance().map(|v| (v / self.count as f64).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn two_pass(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn two_point_merge() {
        let (x, y) = (3.0, 7.5);
        let m = RunningStats::from_slice(&[x]).merge(&RunningStats::from_slice(&[y]));
        assert_eq!(m.count, 2);
        assert_eq!(m.mean, (x + y) / 2.0);
        assert_eq!(m.m2, (x - y) * (x - y) / 2.0);
    }

    #[test]
    fn empty_is_identity() {
        let s = RunningStats::from_slice(&[1.0, 2.0, 4.0]);
        assert_eq!(s.merge(&RunningStats::new()), s);
        assert_eq!(RunningStats::new().merge(&s), s);
    }

    #[test]
    fn any_grouping_of_four() {
        let singles: Vec<_> = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|&x| RunningStats::from_slice(&[x]))
            .collect();
        let left = singles[0]
            .merge(&singles[1])
            .merge(&singles[2])
            .merge(&singles[3]);
        let pairs = singles[0]
            .merge(&singles[1])
            .merge(&singles[2].merge(&singles[3]));
        let shuffled = singles[3]
            .merge(&singles[0])
            .merge(&singles[2].merge(&singles[1]));
        for s in [left, pairs, shuffled] {
            assert_eq!(s.mean, 2.5);
            assert!((s.variance().unwrap() - 5.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_sample_has_no_stderr() {
        let s = RunningStats::from_slice(&[4.2]);
        assert_eq!(s.variance(), None);
        assert_eq!(s.stderr(), None);
    }

    #[test]
    fn summary_round_trip() {
        let s = RunningStats::from_slice(&[0.5, 1.5, 2.0, 7.0]);
        let back = RunningStats::from_summary(s.mean, s.stderr(), s.count);
        assert!((back.m2 - s.m2).abs() < 1e-12 * s.m2);
    }

    proptest! {
        #[test]
        fn merge_matches_two_pass(
            xs in prop::collection::vec(-1e3f64..1e3, 2..2000),
            split in 0usize..2000,
        ) {
            let split = split % xs.len();
            let merged = RunningStats::from_slice(&xs[..split])
                .merge(&RunningStats::from_slice(&xs[split..]));
            let (mean, var) = two_pass(&xs);
            prop_assert_eq!(merged.count, xs.len() as u64);
            let scale = xs.iter().map(|x| x.abs()).fold(1.0, f64::max);
            prop_assert!((merged.mean - mean).abs() <= 1e-12 * scale);
            let v = merged.variance().unwrap();
            prop_assert!((v - var).abs() <= 1e-12 * var.max(1e-300) || (v - var).abs() < 1e-20);
        }
    }
}
