//! Reproducible Brownian increments for the per-site measurement noise.
//!
//! Each trajectory owns a ChaCha8 generator whose key is derived from the
//! 64-bit base seed (`ChaCha8Rng::seed_from_u64`) and whose stream id is the
//! trajectory id (`set_stream`). ChaCha has 2^64 non-overlapping streams per
//! key, so trajectories never share generator state and the increments of
//! trajectory `k` do not depend on which worker runs it or in which order.
//!
//! Gaussian variates come from the `rand_distr::StandardNormal` ziggurat
//! sampler and are scaled by `sqrt(dt)`. The ziggurat only uses table
//! lookups and IEEE arithmetic on the fast path, so output is bit-stable on
//! any platform with the same floating-point semantics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NoiseStream {
    base_seed: u64,
    trajectory_id: u64,
    step_counter: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(base_seed: u64, trajectory_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
        rng.set_stream(trajectory_id);
        Self {
            base_seed,
            trajectory_id,
            step_counter: 0,
            rng,
        }
    }

    /// Rebuilds a stream at a saved position (see [`NoiseStream::word_pos`]).
    pub fn restore(base_seed: u64, trajectory_id: u64, step_counter: u64, word_pos: u128) -> Self {
        let mut s = Self::new(base_seed, trajectory_id);
        s.rng.set_word_pos(word_pos);
        s.step_counter = step_counter;
        s
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn trajectory_id(&self) -> u64 {
        self.trajectory_id
    }

    /// Number of completed `sample_step_increments` calls.
    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    /// Position of the underlying generator in 32-bit words.
    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Fills `out` with i.i.d. `Normal(0, dt)` increments and advances the step counter.
    pub fn fill_step_increments(&mut self, dt: f64, out: &mut [f64]) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::contract(format!(
                "noise time step must be > 0, got {dt}"
            )));
        }
        let scale = dt.sqrt();
        for x in out.iter_mut() {
            let z: f64 = self.rng.sample(StandardNormal);
            *x = z * scale;
        }
        self.step_counter += 1;
        Ok(())
    }

    pub fn sample_step_increments(&mut self, volume: usize, dt: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; volume];
        self.fill_step_increments(dt, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Numerical Recipes erfc (fractional error < 1.2e-7), independent of the sampler.
    fn erfc(x: f64) -> f64 {
        let z = x.abs();
        let t = 1.0 / (1.0 + 0.5 * z);
        let ans = t
            * (-z * z - 1.26551223
                + t * (1.00002368
                    + t * (0.37409196
                        + t * (0.09678418
                            + t * (-0.18628806
                                + t * (0.27886807
                                    + t * (-1.13520398
                                        + t * (1.48851587
                                            + t * (-0.82215223 + t * 0.17087277)))))))))
                .exp();
        if x >= 0.0 {
            ans
        } else {
            2.0 - ans
        }
    }

    fn normal_cdf(x: f64) -> f64 {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn replay_is_identical() {
        let mut a = NoiseStream::new(42, 7);
        let mut b = NoiseStream::new(42, 7);
        for _ in 0..3 {
            let x = a.sample_step_increments(100, 0.01).unwrap();
            let y = b.sample_step_increments(100, 0.01).unwrap();
            assert_eq!(x, y);
        }
        assert_eq!(a.step_counter(), 3);
    }

    #[test]
    fn restore_resumes_sequence() {
        let mut a = NoiseStream::new(3, 1);
        a.sample_step_increments(17, 0.1).unwrap();
        let mut b = NoiseStream::restore(3, 1, a.step_counter(), a.word_pos());
        assert_eq!(
            a.sample_step_increments(50, 0.1).unwrap(),
            b.sample_step_increments(50, 0.1).unwrap()
        );
        assert_eq!(a.step_counter(), b.step_counter());
    }

    #[test]
    fn rejects_nonpositive_dt() {
        let mut s = NoiseStream::new(0, 0);
        assert!(s.sample_step_increments(4, 0.0).is_err());
        assert!(s.sample_step_increments(4, -1.0).is_err());
        assert_eq!(s.step_counter(), 0);
    }

    #[test]
    fn moments_within_clt_bounds() {
        let v = 1_000_000;
        let dt = 0.01;
        let x = NoiseStream::new(2024, 0)
            .sample_step_increments(v, dt)
            .unwrap();
        let mean = x.iter().sum::<f64>() / v as f64;
        let var = x.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (v as f64 - 1.0);
        assert!(mean.abs() < 4.0 * (dt / v as f64).sqrt(), "mean {mean}");
        assert!((var / dt - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn distinct_trajectories_uncorrelated() {
        let n = 1_000_000;
        let a = NoiseStream::new(99, 0)
            .sample_step_increments(n, 1.0)
            .unwrap();
        let b = NoiseStream::new(99, 1)
            .sample_step_increments(n, 1.0)
            .unwrap();
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(&b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        let r = sab / (saa * sbb).sqrt();
        assert!(r.abs() < 4.0 / (n as f64).sqrt(), "r = {r}");
    }

    #[test]
    fn kolmogorov_smirnov_standard_normal() {
        let n = 100_000;
        let dt = 0.25;
        let mut z: Vec<f64> = NoiseStream::new(5, 11)
            .sample_step_increments(n, dt)
            .unwrap()
            .into_iter()
            .map(|x| x / dt.sqrt())
            .collect();
        z.sort_by(f64::total_cmp);
        let nf = n as f64;
        let d = z
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = normal_cdf(x);
                (f - i as f64 / nf)
                    .abs()
                    .max(((i + 1) as f64 / nf - f).abs())
            })
            .fold(0.0, f64::max);
        // asymptotic critical value at the 1e-3 level
        let crit = 1.9495 / nf.sqrt();
        assert!(d < crit, "KS D = {d}, critical {crit}");
    }
}
