use alloc::vec::Vec;

use rand::seq::index;

use super::{Dataset, Fingerprint, Interaction};
use crate::{rng, Error, Result};

/// Negatives ranked against each held-out item.
pub const EVAL_NEGATIVES: usize = 99;

/// Users need this many interactions to contribute validation and test cases.
pub const MIN_EVAL_HISTORY: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Stage {
    Validation,
    Test,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Validation => "validation",
            Stage::Test => "test",
        }
    }

    fn stream_index(self) -> u64 {
        match self {
            Stage::Validation => 0,
            Stage::Test => 1,
        }
    }
}

impl core::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validation" | "valid" => Ok(Stage::Validation),
            "test" => Ok(Stage::Test),
            other => Err(Error::Parse(alloc::format!("unknown stage {other:?}"))),
        }
    }
}

/// One held-out interaction and the negatives it is ranked against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalCase {
    pub user: usize,
    pub item: usize,
    pub timestamp: i64,
    pub negatives: Vec<usize>,
}

/// Leave-one-out partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBundle {
    pub n_users: usize,
    pub n_items: usize,
    pub fingerprint: Fingerprint,
    pub train: Vec<Interaction>,
    pub validation: Vec<EvalCase>,
    pub test: Vec<EvalCase>,
}

impl SplitBundle {
    pub fn stage(&self, stage: Stage) -> &[EvalCase] {
        match stage {
            Stage::Validation => &self.validation,
            Stage::Test => &self.test,
        }
    }

    /// Sorted train items per user.
    pub fn train_items_by_user(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.n_users];
        for it in &self.train {
            out[it.user].push(it.item);
        }
        out.iter_mut().for_each(|v| v.sort_unstable());
        out
    }

    /// Sorted items per user across train, validation and test.
    pub fn all_items_by_user(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.n_users];
        for it in &self.train {
            out[it.user].push(it.item);
        }
        for case in self.validation.iter().chain(&self.test) {
            out[case.user].push(case.item);
        }
        out.iter_mut().for_each(|v| v.sort_unstable());
        out
    }

    /// Train occurrences per item.
    pub fn train_item_counts(&self) -> Vec<u64> {
        let mut counts = alloc::vec![0u64; self.n_items];
        self.train.iter().for_each(|it| counts[it.item] += 1);
        counts
    }
}

/// Per user: latest interaction to test, second latest to validation, the
/// rest to train. Users with fewer than [`MIN_EVAL_HISTORY`] interactions
/// keep everything in train. Timestamp ties resolve by dataset order.
///
/// Each evaluation case gets [`EVAL_NEGATIVES`] distinct items the user never
/// interacted with, drawn uniformly from a stream keyed by
/// `(seed, user, stage)`.
pub fn leave_one_out_split(dataset: &Dataset, seed: u64) -> Result<SplitBundle> {
    let n_users = dataset.n_users();
    let n_items = dataset.n_items();
    let mut per_user: Vec<Vec<Interaction>> = alloc::vec![Vec::new(); n_users];
    for it in dataset.interactions() {
        per_user[it.user].push(*it);
    }

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for (user, history) in per_user.iter_mut().enumerate() {
        history.sort_by_key(|it| it.timestamp);
        if history.len() < MIN_EVAL_HISTORY {
            train.extend_from_slice(history);
            continue;
        }
        let mut seen: Vec<usize> = history.iter().map(|it| it.item).collect();
        seen.sort_unstable();
        let candidates: Vec<usize> = (0..n_items).filter(|i| seen.binary_search(i).is_err()).collect();
        if candidates.len() < EVAL_NEGATIVES {
            return Err(Error::NotEnoughNegatives {
                user,
                available: candidates.len(),
                required: EVAL_NEGATIVES,
            });
        }
        let n = history.len();
        train.extend_from_slice(&history[..n - 2]);
        for (stage, held_out, out) in [
            (Stage::Validation, history[n - 2], &mut validation),
            (Stage::Test, history[n - 1], &mut test),
        ] {
            let mut stream = rng::stream(seed, "eval-negatives", 2 * user as u64 + stage.stream_index());
            let negatives = index::sample(&mut stream, candidates.len(), EVAL_NEGATIVES)
                .into_iter()
                .map(|k| candidates[k])
                .collect();
            out.push(EvalCase {
                user,
                item: held_out.item,
                timestamp: held_out.timestamp,
                negatives,
            });
        }
    }

    Ok(SplitBundle {
        n_users,
        n_items,
        fingerprint: dataset.fingerprint(),
        train,
        validation,
        test,
    })
}
