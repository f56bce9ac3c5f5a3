//! Seeded sampling primitives: coin flips, uniform cohorts, geometric
//! local-step counts and the randomized consensus estimator used by the
//! single-loop algorithm.
//!
//! Every generator is a ChaCha8 stream keyed by a 64-bit seed, so draws are
//! integer-state and identical on every platform. [`RandomStreams`] derives
//! independent sub-streams from one master seed so that consuming more draws
//! from one stream never shifts another.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::linalg::pairwise_mean;
use crate::{Error, Result};

/// Default upper bound on a single geometric draw.
pub const GEOMETRIC_CAP: u64 = 1_000_000;

/// Stream identifiers used by [`RandomStreams`].
pub mod stream {
    pub const COINS: u64 = 1;
    pub const SUBSETS: u64 = 2;
    pub const LOCAL_STEPS: u64 = 3;
    pub const DATA: u64 = 4;
}

#[derive(Debug, Clone)]
pub struct SeededGenerator {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl SeededGenerator {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform variate in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` by rejection sampling. `bound` must be
    /// positive.
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        let bound = bound as u64;
        let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return (v % bound) as usize;
            }
        }
    }

    /// Standard normal variate (Box–Muller).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    /// Returns `true` with probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> Result<bool> {
        check_probability(p)?;
        Ok(self.uniform() < p)
    }

    /// Uniformly random subset of `{0, …, n−1}` of size `s`, sorted
    /// ascending. Partial Fisher–Yates shuffle followed by a sort.
    pub fn sample_subset(&mut self, n: usize, s: usize) -> Result<Vec<usize>> {
        check_cohort(n, s)?;
        let mut pool: Vec<usize> = (0..n).collect();
        for k in 0..s {
            let j = k + self.below(n - k);
            pool.swap(k, j);
        }
        pool.truncate(s);
        pool.sort_unstable();
        Ok(pool)
    }

    /// Geometric draw on `{1, 2, …}` with `P(L = ℓ) = (1−p)^{ℓ−1} p`, by
    /// inverse CDF on one uniform variate. Capped at [`GEOMETRIC_CAP`].
    pub fn sample_geometric(&mut self, p: f64) -> Result<u64> {
        self.sample_geometric_capped(p, GEOMETRIC_CAP)
    }

    pub fn sample_geometric_capped(&mut self, p: f64, cap: u64) -> Result<u64> {
        check_probability(p)?;
        let u = 1.0 - self.uniform(); // (0, 1]
        if p == 1.0 {
            return Ok(1);
        }
        let draw = 1.0 + libm::floor(libm::log(u) / libm::log1p(-p));
        if draw.is_nan() || draw > cap as f64 {
            return Err(Error::GeometricCapExceeded { cap, p });
        }
        Ok(draw as u64)
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for k in (1..items.len()).rev() {
            let j = self.below(k + 1);
            items.swap(k, j);
        }
    }
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

pub(crate) fn check_cohort(n: usize, s: usize) -> Result<()> {
    if s >= 2 && s <= n {
        Ok(())
    } else {
        Err(Error::InvalidCohort { n, s })
    }
}

/// Independent generators for each kind of draw, all derived from one seed.
#[derive(Debug, Clone)]
pub struct RandomStreams {
    pub coins: SeededGenerator,
    pub subsets: SeededGenerator,
    pub local_steps: SeededGenerator,
}

impl RandomStreams {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            coins: SeededGenerator::with_stream(seed, stream::COINS),
            subsets: SeededGenerator::with_stream(seed, stream::SUBSETS),
            local_steps: SeededGenerator::with_stream(seed, stream::LOCAL_STEPS),
        }
    }
}

/// The participating cohort and local-step count of one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticipationPlan {
    omega: Vec<usize>,
    local_steps: u64,
}

impl ParticipationPlan {
    /// Validates a plan for `n` clients: `omega` must be sorted, distinct,
    /// in range, of size at least 2; `local_steps >= 1`.
    pub fn new(n: usize, omega: Vec<usize>, local_steps: u64) -> Result<Self> {
        check_cohort(n, omega.len())?;
        if omega.windows(2).any(|w| w[0] >= w[1]) || omega.last().is_some_and(|&i| i >= n) {
            return Err(Error::InvalidParameter(
                "cohort indices must be sorted, distinct and below n".into(),
            ));
        }
        if local_steps == 0 {
            return Err(Error::InvalidParameter(
                "a round needs at least one local step".into(),
            ));
        }
        Ok(Self { omega, local_steps })
    }

    /// Draws a cohort of size `s` and a geometric local-step count of mean
    /// `1/p`.
    pub fn draw_geometric(streams: &mut RandomStreams, n: usize, s: usize, p: f64) -> Result<Self> {
        let omega = streams.subsets.sample_subset(n, s)?;
        let local_steps = streams.local_steps.sample_geometric(p)?;
        Ok(Self { omega, local_steps })
    }

    /// Draws a cohort of size `s` with a fixed local-step count.
    pub fn draw_fixed(
        streams: &mut RandomStreams,
        n: usize,
        s: usize,
        local_steps: u64,
    ) -> Result<Self> {
        let omega = streams.subsets.sample_subset(n, s)?;
        Self::new(n, omega, local_steps)
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    pub fn local_steps(&self) -> u64 {
        self.local_steps
    }

    pub fn size(&self) -> usize {
        self.omega.len()
    }
}

/// Every `s`-subset of `0..n` in lexicographic order, each sorted. There are
/// `C(n, s)` of them, so this is meant for small `n`.
pub fn enumerate_subsets(n: usize, s: usize) -> Result<Vec<Vec<usize>>> {
    check_cohort(n, s)?;
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..s).collect();
    loop {
        out.push(current.clone());
        // Rightmost position that can still be advanced.
        let Some(pos) = (0..s).rev().find(|&k| current[k] < n - s + k) else {
            return Ok(out);
        };
        current[pos] += 1;
        for k in pos + 1..s {
            current[k] = current[k - 1] + 1;
        }
    }
}

/// The randomized consensus estimator `d`.
///
/// With `θ = 0` every `d_i` is zero. Otherwise, for `i ∈ Ω`,
/// `d_i = a (x̂_i − (1/s) Σ_{j∈Ω} x̂_j)` with `a = (n−1)/(p(s−1))`, and
/// `d_i = 0` for `i ∉ Ω`. `omega` must be sorted and distinct.
pub fn d_estimator(
    xhat: &[Vec<f64>],
    omega: &[usize],
    p: f64,
    theta: bool,
) -> Result<Vec<Vec<f64>>> {
    let n = xhat.len();
    let dim = xhat.first().map_or(0, Vec::len);
    if let Some(bad) = xhat.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    check_probability(p)?;
    let s = omega.len();
    check_cohort(n, s)?;
    if omega.windows(2).any(|w| w[0] >= w[1]) || omega.last().is_some_and(|&i| i >= n) {
        return Err(Error::InvalidParameter(
            "cohort indices must be sorted, distinct and below n".into(),
        ));
    }
    let mut d = alloc::vec![alloc::vec![0.0; dim]; n];
    if !theta {
        return Ok(d);
    }
    let a = (n - 1) as f64 / (p * (s - 1) as f64);
    let mean = pairwise_mean(omega.iter().map(|&j| xhat[j].as_slice()), dim);
    for &i in omega {
        for ((di, xi), mi) in d[i].iter_mut().zip(&xhat[i]).zip(&mean) {
            *di = a * (xi - mi);
        }
    }
    Ok(d)
}
