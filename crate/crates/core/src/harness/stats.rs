use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Random stream for one unit of work.
///
/// The root seed fixes the ChaCha8 key; the 64-bit stream index is
/// `purpose << 32 | replica`. Every replica therefore draws from its own
/// stream regardless of which thread runs it.
pub fn replica_rng(root: u64, purpose: u32, replica: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(((purpose as u64) << 32) | replica as u64);
    rng
}

/// Purpose index for an experiment kind at lattice scale `n`.
pub fn purpose(tag: u32, n: usize) -> u32 {
    (tag << 24) | (n as u32 & 0x00ff_ffff)
}

/// Single-pass mean and variance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Combine two partial accumulators.
    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance (0 below two samples).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::default();
        for x in iter {
            w.push(x);
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn streams_differ_and_replay() {
        let a: u64 = replica_rng(5, 1, 0).random();
        let b: u64 = replica_rng(5, 1, 1).random();
        let c: u64 = replica_rng(5, 2, 0).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, replica_rng(5, 1, 0).random::<u64>());
    }

    proptest! {
        #[test]
        fn matches_two_pass(xs in prop::collection::vec(-1e3f64..1e3, 2..60), split in 0usize..60) {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let w: Welford = xs.iter().copied().collect();
            prop_assert!((w.mean - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
            prop_assert!((w.variance() - var).abs() <= 1e-8 * (1.0 + var));
            let cut = split.min(xs.len());
            let mut left: Welford = xs[..cut].iter().copied().collect();
            let right: Welford = xs[cut..].iter().copied().collect();
            left.merge(&right);
            prop_assert_eq!(left.count, w.count);
            prop_assert!((left.mean - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
            prop_assert!((left.variance() - var).abs() <= 1e-8 * (1.0 + var));
        }
    }
}
