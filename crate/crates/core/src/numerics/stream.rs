use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Vector;
use crate::Scalar;

/// What a stream is used for. Hashed into the child seed so that, for
/// example, instance data and gradient noise never share draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamDomain {
    Noise = 1,
    Attack = 2,
    Instance = 3,
    Optimum = 4,
    Roster = 5,
    Theory = 6,
    Test = 7,
}

/// Position of a stream in the simulation: (agent, round, local step, draw).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Lineage {
    pub agent: u64,
    pub round: u64,
    pub step: u64,
    pub draw: u64,
}

/// Counter-based random stream.
///
/// A stream is a pure value: its generator is seeded from a hash of
/// `(root_seed, domain, lineage)`, so identical inputs give identical draws
/// regardless of which thread asks or in what order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub root_seed: u64,
    pub domain: StreamDomain,
    pub lineage: Lineage,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(root_seed: u64, domain: StreamDomain, lineage: Lineage) -> Self {
        Self { root_seed, domain, lineage }
    }

    /// Gradient-noise stream of honest `agent` at round `round`, local step `step`.
    pub fn noise(root_seed: u64, agent: usize, round: usize, step: usize) -> Self {
        Self::new(
            root_seed,
            StreamDomain::Noise,
            Lineage { agent: agent as u64, round: round as u64, step: step as u64, draw: 0 },
        )
    }

    pub fn at(root_seed: u64, domain: StreamDomain, agent: u64, round: u64) -> Self {
        Self::new(root_seed, domain, Lineage { agent, round, step: 0, draw: 0 })
    }

    pub fn with_draw(mut self, draw: u64) -> Self {
        self.lineage.draw = draw;
        self
    }

    pub fn with_step(mut self, step: u64) -> Self {
        self.lineage.step = step;
        self
    }

    /// Seed of the child generator.
    pub fn child_seed(&self) -> u64 {
        let Lineage { agent, round, step, draw } = self.lineage;
        let mut h = splitmix64(self.root_seed);
        for word in [self.domain as u64, agent, round, step, draw] {
            h = splitmix64(h ^ splitmix64(word));
        }
        h
    }

    pub fn rng(&self) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.child_seed())
    }
}

/// `len` i.i.d. `N(0, std²)` draws from `stream`.
pub fn gaussian_vector<S: Scalar>(stream: &RandomStream, len: usize, std: S) -> Vector<S> {
    if std == S::zero() {
        return Vector::zeros(len);
    }
    let mut rng = stream.rng();
    let std = std.as_f64();
    Vector::from_fn(len, |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        S::lit(z * std)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_is_zero_vector() {
        let s = RandomStream::noise(1, 0, 0, 0);
        assert_eq!(gaussian_vector(&s, 4, 0.0f64), Vector::zeros(4));
    }

    #[test]
    fn same_lineage_same_draws() {
        let s = RandomStream::noise(42, 3, 7, 1);
        let a = gaussian_vector(&s, 10, 1.0f64);
        let b = gaussian_vector(&s, 10, 1.0f64);
        assert_eq!(a, b);
        let other = gaussian_vector(&RandomStream::noise(42, 3, 7, 2), 10, 1.0f64);
        assert_ne!(a, other);
    }

    #[test]
    fn lineage_fields_all_matter() {
        let base = RandomStream::noise(5, 1, 2, 3);
        let seeds = [
            base.child_seed(),
            RandomStream::noise(6, 1, 2, 3).child_seed(),
            RandomStream::noise(5, 2, 2, 3).child_seed(),
            RandomStream::noise(5, 1, 3, 3).child_seed(),
            RandomStream::noise(5, 1, 2, 4).child_seed(),
            base.with_draw(1).child_seed(),
            RandomStream { domain: StreamDomain::Attack, ..base }.child_seed(),
            // swapped fields must not collide
            RandomStream::noise(5, 2, 1, 3).child_seed(),
        ];
        for i in 0..seeds.len() {
            for j in (i + 1)..seeds.len() {
                assert_ne!(seeds[i], seeds[j], "{i} vs {j}");
            }
        }
    }

    #[test]
    fn moments_of_many_draws() {
        // 10^5 single draws, each from its own lineage
        let n = 100_000u64;
        let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
        for k in 0..n {
            let s = RandomStream::at(2024, StreamDomain::Test, 0, k);
            let z = gaussian_vector(&s, 1, 1.0f64)[0];
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((0.97..=1.03).contains(&var), "variance {var}");
    }

    #[test]
    fn independent_streams_are_uncorrelated() {
        let n = 20_000u64;
        let mut cross = 0.0;
        for k in 0..n {
            let a = gaussian_vector(&RandomStream::noise(9, 0, k as usize, 0), 1, 1.0f64)[0];
            let b = gaussian_vector(&RandomStream::noise(9, 1, k as usize, 0), 1, 1.0f64)[0];
            cross += a * b;
        }
        assert!((cross / n as f64).abs() < 0.04);
    }
}
