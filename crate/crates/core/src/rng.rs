//! Counter-based random number streams.
//!
//! Every random quantity in the crate is a pure function of
//! `(seed, stream label, stream index, counter)`. Streams never carry
//! mutable state, so scenario `s` draws the same numbers no matter which
//! thread touches it first or how many scenarios were generated before it.
//! Entities reserve fixed counter slots (e.g. job `j` draws its release
//! from counter `j * SLOTS` and its duration from `j * SLOTS + 1`), which
//! keeps instances byte-identical across runs and thread counts.

/// One round of the splitmix64 output permutation.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Two dependent mixing rounds; the second uses murmur3 constants so that
/// near-collinear inputs (adjacent counters, adjacent stream indices) still
/// decorrelate.
fn mix2(z: u64) -> u64 {
    let mut z = mix(z);
    z = (z ^ (z >> 33)).wrapping_mul(0xff51_afd7_ed55_8ccd);
    z = (z ^ (z >> 33)).wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    z ^ (z >> 33)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// A named, indexed random stream derived from a master seed.
///
/// `Stream::new(seed, "scenario", 3)` always denotes the same infinite
/// sequence of draws; `u64_at(c)` reads position `c` of that sequence.
#[derive(Clone, Copy, Debug)]
pub struct Stream {
    key: u64,
}

impl Stream {
    /// Derives the stream key by hashing the label (FNV-1a) into the seed
    /// and folding in the stream index.
    pub fn new(seed: u64, label: &str, index: u64) -> Self {
        let mut h = 0xcbf2_9ce4_8422_2325u64 ^ mix(seed);
        for &b in label.as_bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x1000_0000_01b3);
        }
        h ^= mix(index.wrapping_mul(GOLDEN).wrapping_add(seed));
        Stream { key: mix2(h) }
    }

    /// The raw 64-bit draw at position `counter`.
    pub fn u64_at(&self, counter: u64) -> u64 {
        mix2(self.key ^ counter.wrapping_mul(GOLDEN).wrapping_add(1))
    }

    /// Uniform double in `[0, 1)` with 53 random bits.
    pub fn f64_at(&self, counter: u64) -> f64 {
        (self.u64_at(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[lo, hi]` (inclusive), via the 128-bit
    /// multiply-shift reduction.
    pub fn int_at(&self, counter: u64, lo: i64, hi: i64) -> i64 {
        assert!(lo <= hi, "empty integer range");
        let span = (hi - lo) as u128 + 1;
        let r = (u128::from(self.u64_at(counter)) * span) >> 64;
        lo + r as i64
    }

    /// Picks an index from a discrete distribution given by nonnegative
    /// weights (not necessarily normalized).
    pub fn weighted_at(&self, counter: u64, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "weights must not all be zero");
        let target = self.f64_at(counter) * total;
        let mut acc = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if target < acc {
                return i;
            }
        }
        weights.len() - 1
    }

    /// Exponential draw with the given mean, by inversion. The result is
    /// finite and nonnegative for every counter value.
    pub fn exp_at(&self, counter: u64, mean: f64) -> f64 {
        let u = self.f64_at(counter);
        -mean * (1.0 - u).ln()
    }

    /// Standard normal draw via Box-Muller; consumes counters `2c` and
    /// `2c + 1` of a private substream so callers can keep one slot per
    /// normal variate.
    pub fn normal_at(&self, counter: u64) -> f64 {
        let u1 = self.f64_at(counter.wrapping_mul(2).wrapping_add(0x5bf0_3635));
        let u2 = self.f64_at(counter.wrapping_mul(2).wrapping_add(0x5bf0_3636));
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        r * (std::f64::consts::TAU * u2).cos()
    }

    /// Lognormal draw parameterized by the underlying normal's mu/sigma.
    pub fn lognormal_at(&self, counter: u64, mu: f64, sigma: f64) -> f64 {
        (mu + sigma * self.normal_at(counter)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_reproducible() {
        let a = Stream::new(42, "scenario", 7);
        let b = Stream::new(42, "scenario", 7);
        for c in 0..100 {
            assert_eq!(a.u64_at(c), b.u64_at(c));
        }
    }

    #[test]
    fn labels_indices_and_seeds_separate_streams() {
        let base = Stream::new(1, "scenario", 0);
        let other_label = Stream::new(1, "instance", 0);
        let other_index = Stream::new(1, "scenario", 1);
        let other_seed = Stream::new(2, "scenario", 0);
        for s in [other_label, other_index, other_seed] {
            let same = (0..8).filter(|&c| base.u64_at(c) == s.u64_at(c)).count();
            assert_eq!(same, 0, "streams should diverge immediately");
        }
    }

    #[test]
    fn unit_doubles_stay_in_range_and_look_uniform() {
        let s = Stream::new(9, "u", 0);
        let n = 100_000;
        let mut sum = 0.0;
        for c in 0..n {
            let x = s.f64_at(c);
            assert!((0.0..1.0).contains(&x));
            sum += x;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean} too far from 0.5");
    }

    #[test]
    fn bounded_integers_cover_their_range() {
        let s = Stream::new(3, "i", 2);
        let mut seen = [0usize; 6];
        for c in 0..60_000 {
            let v = s.int_at(c, 10, 15);
            assert!((10..=15).contains(&v));
            seen[(v - 10) as usize] += 1;
        }
        for (i, &count) in seen.iter().enumerate() {
            assert!(count > 8_000, "value {} drawn only {} times", i + 10, count);
        }
    }

    #[test]
    fn exponential_matches_its_mean_and_spread() {
        let s = Stream::new(11, "e", 0);
        let n = 200_000;
        let mean_target = 2.0;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for c in 0..n {
            let x = s.exp_at(c, mean_target);
            assert!(x >= 0.0 && x.is_finite());
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!((mean - mean_target).abs() / mean_target < 0.02);
        assert!((var.sqrt() - mean_target).abs() / mean_target < 0.02);
    }

    #[test]
    fn weighted_choice_respects_zero_weights() {
        let s = Stream::new(5, "w", 0);
        let weights = [0.2, 0.0, 0.5, 0.3, 0.0];
        let mut counts = [0usize; 5];
        for c in 0..50_000 {
            counts[s.weighted_at(c, &weights)] += 1;
        }
        assert_eq!(counts[1], 0);
        assert_eq!(counts[4], 0);
        assert!(counts[2] > counts[0] && counts[0] > 5_000);
    }

    #[test]
    fn lognormal_matches_moment_targets() {
        // Parameters moment-matched to mean 3.25, standard deviation 1.6.
        let sigma2 = (1.0 + (1.6f64 / 3.25).powi(2)).ln();
        let sigma = sigma2.sqrt();
        let mu = 3.25f64.ln() - sigma2 / 2.0;
        let s = Stream::new(17, "ln", 0);
        let n = 400_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for c in 0..n {
            let x = s.lognormal_at(c, mu, sigma);
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let std = (sumsq / n as f64 - mean * mean).sqrt();
        assert!((mean - 3.25).abs() < 0.05, "mean {mean}");
        assert!((std - 1.6).abs() < 0.05, "std {std}");
    }
}
