use alloc::vec::Vec;

use rand::Rng;

use crate::{Error, Result};

/// Distribution training negatives are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SamplingMode {
    #[default]
    Uniform,
    /// Proportional to raw train frequency.
    Popular,
}

impl SamplingMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Popular => "popular",
        }
    }
}

impl core::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "popular" | "popularity" => Ok(Self::Popular),
            other => Err(Error::Parse(alloc::format!("unknown sampling mode {other:?}"))),
        }
    }
}

/// Train occurrence counts and the cumulative sampling distribution over items.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityTable {
    counts: Vec<u64>,
    cdf: Vec<f64>,
}

impl PopularityTable {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let mut running = 0u64;
        let cdf = counts
            .iter()
            .map(|&c| {
                running += c;
                if total == 0 {
                    0.0
                } else {
                    running as f64 / total as f64
                }
            })
            .collect();
        Self { counts, cdf }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cdf
            .iter()
            .map(|&c| {
                let p = c - prev;
                prev = c;
                p
            })
            .collect()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

/// Draws training negatives, rejecting each user's train positives.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    mode: SamplingMode,
    popularity: PopularityTable,
    positives: Vec<Vec<usize>>,
}

const MAX_ATTEMPTS_PER_DRAW: usize = 100_000;

impl NegativeSampler {
    /// `positives[u]` must be sorted.
    pub fn new(mode: SamplingMode, popularity: PopularityTable, positives: Vec<Vec<usize>>) -> Self {
        debug_assert!(positives.iter().all(|p| p.windows(2).all(|w| w[0] <= w[1])));
        Self {
            mode,
            popularity,
            positives,
        }
    }

    pub fn n_items(&self) -> usize {
        self.popularity.counts.len()
    }

    pub fn positives(&self, user: usize) -> &[usize] {
        &self.positives[user]
    }

    fn has_candidate(&self, user: usize) -> bool {
        let owned = &self.positives[user];
        match self.mode {
            SamplingMode::Uniform => owned.len() < self.n_items(),
            SamplingMode::Popular => self
                .popularity
                .counts
                .iter()
                .enumerate()
                .any(|(i, &c)| c > 0 && owned.binary_search(&i).is_err()),
        }
    }

    /// `n_neg` draws with replacement for one user.
    pub fn sample_user<R: Rng + ?Sized>(&self, user: usize, n_neg: usize, rng: &mut R) -> Result<Vec<usize>> {
        let owned = &self.positives[user];
        let mut out = Vec::with_capacity(n_neg);
        for _ in 0..n_neg {
            let mut attempts = 0;
            loop {
                let item = match self.mode {
                    SamplingMode::Uniform => rng.random_range(0..self.n_items()),
                    SamplingMode::Popular => self.popularity.draw(rng),
                };
                if owned.binary_search(&item).is_err() {
                    out.push(item);
                    break;
                }
                attempts += 1;
                if attempts == 64 && !self.has_candidate(user) || attempts >= MAX_ATTEMPTS_PER_DRAW {
                    return Err(Error::SamplingExhausted { user });
                }
            }
        }
        Ok(out)
    }

    /// Negatives for each `(user, item)` positive, in order.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        positives: &[(usize, usize)],
        n_neg: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<usize>>> {
        if n_neg == 0 {
            return Err(Error::InvalidConfig("n_neg must be at least 1".into()));
        }
        positives.iter().map(|&(u, _)| self.sample_user(u, n_neg, rng)).collect()
    }
}
