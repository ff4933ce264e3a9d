//! Leave-one-out ranking metrics.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{EvalCase, Fingerprint, SplitBundle, Stage, EVAL_NEGATIVES};
use crate::model::Scorer;
use crate::{Error, Result};

/// Rank of the true item among its negatives, 1-based. Ties count against
/// the true item.
pub fn rank_true_item<S: Scorer + ?Sized>(scorer: &S, user: usize, true_item: usize, negatives: &[usize]) -> Result<usize> {
    if negatives.len() != EVAL_NEGATIVES {
        return Err(Error::WrongNegativeCount {
            expected: EVAL_NEGATIVES,
            actual: negatives.len(),
        });
    }
    crate::data::check_index("user", user, scorer.n_users())?;
    for &t in negatives.iter().chain(core::iter::once(&true_item)) {
        crate::data::check_index("item", t, scorer.n_items())?;
    }
    let mut items = Vec::with_capacity(negatives.len() + 1);
    items.push(true_item);
    items.extend_from_slice(negatives);
    Ok(rank_from_scores(&scorer.score_items(user, &items)))
}

/// `scores[0]` is the true item.
pub fn rank_from_scores(scores: &[f64]) -> usize {
    let truth = scores[0];
    1 + scores[1..].iter().filter(|&&s| s >= truth).count()
}

pub fn hit_ratio(ranks: &[usize], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

pub fn ndcg(ranks: &[usize], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    let gain: f64 = ranks
        .iter()
        .filter(|&&r| r <= k)
        .map(|&r| 1.0 / libm::log2(r as f64 + 1.0))
        .sum();
    gain / ranks.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalConfig {
    pub cutoffs: Vec<usize>,
    pub stage: Stage,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            cutoffs: vec![5, 10],
            stage: Stage::Test,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cutoffs.is_empty() {
            return Err(Error::InvalidConfig("at least one cutoff is required".into()));
        }
        if let Some(k) = self.cutoffs.iter().find(|&&k| k == 0 || k > EVAL_NEGATIVES + 1) {
            return Err(Error::InvalidConfig(alloc::format!("cutoff {k} outside 1..=100")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CutoffMetrics {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub stage: Stage,
    /// In ascending `k`.
    pub metrics: Vec<CutoffMetrics>,
    /// `(user, rank)` in evaluation-case order.
    pub ranks: Vec<(usize, usize)>,
}

impl MetricsReport {
    pub fn at(&self, k: usize) -> Option<CutoffMetrics> {
        self.metrics.iter().copied().find(|m| m.k == k)
    }

    pub fn hr(&self, k: usize) -> Option<f64> {
        self.at(k).map(|m| m.hr)
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.at(k).map(|m| m.ndcg)
    }
}

/// Ranks every case and aggregates each cutoff.
pub fn evaluate_cases<S: Scorer + ?Sized>(scorer: &S, cases: &[EvalCase], config: &EvalConfig) -> Result<MetricsReport> {
    config.validate()?;
    if cases.is_empty() {
        return Err(Error::NoEvaluationUsers(config.stage.as_str()));
    }
    let mut ranks = Vec::with_capacity(cases.len());
    for case in cases {
        ranks.push((case.user, rank_true_item(scorer, case.user, case.item, &case.negatives)?));
    }
    let only: Vec<usize> = ranks.iter().map(|r| r.1).collect();
    let mut cutoffs = config.cutoffs.clone();
    cutoffs.sort_unstable();
    cutoffs.dedup();
    let metrics = cutoffs
        .into_iter()
        .map(|k| CutoffMetrics {
            k,
            hr: hit_ratio(&only, k),
            ndcg: ndcg(&only, k),
        })
        .collect();
    Ok(MetricsReport {
        stage: config.stage,
        metrics,
        ranks,
    })
}

/// Evaluates the configured stage of `splits`.
pub fn evaluate<S: Scorer + ?Sized>(scorer: &S, splits: &SplitBundle, config: &EvalConfig) -> Result<MetricsReport> {
    if scorer.n_users() != splits.n_users || scorer.n_items() != splits.n_items {
        return Err(Error::DimensionMismatch {
            expected: splits.n_users * splits.n_items,
            actual: scorer.n_users() * scorer.n_items(),
        });
    }
    evaluate_cases(scorer, splits.stage(config.stage), config)
}

/// As [`evaluate`], after checking that the model was trained on the same
/// ID maps as `splits`.
pub fn evaluate_checked<S: Scorer + ?Sized>(
    scorer: &S,
    model_fingerprint: &Fingerprint,
    splits: &SplitBundle,
    config: &EvalConfig,
) -> Result<MetricsReport> {
    if *model_fingerprint != splits.fingerprint {
        return Err(Error::FingerprintMismatch {
            model: alloc::format!("{model_fingerprint}"),
            splits: alloc::format!("{}", splits.fingerprint),
        });
    }
    evaluate(scorer, splits, config)
}
