//! Block-clustered synthetic interaction data with known group labels.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Dataset, Interaction, RawInteraction};
use crate::linalg::{shifted_cosine, Matrix};
use crate::rng::stream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthConfig {
    pub n_groups: usize,
    pub users_per_group: usize,
    pub items_per_group: usize,
    /// Interaction probability within a group.
    pub p_in: f64,
    /// Interaction probability across groups.
    pub p_out: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_groups: 5,
            users_per_group: 100,
            items_per_group: 40,
            p_in: 0.3,
            p_out: 0.01,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.users_per_group == 0 || self.items_per_group == 0 {
            return Err(Error::InvalidConfig("group and group-size counts must be at least 1".into()));
        }
        if !(self.p_in > 0.0 && self.p_in <= 1.0) {
            return Err(Error::InvalidConfig("p_in must lie in (0, 1]".into()));
        }
        if !(self.p_out >= 0.0 && self.p_out < 1.0) {
            return Err(Error::InvalidConfig("p_out must lie in [0, 1)".into()));
        }
        if self.p_in <= self.p_out {
            return Err(Error::InvalidConfig("p_in must exceed p_out".into()));
        }
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        self.n_groups * self.users_per_group
    }

    pub fn n_items(&self) -> usize {
        self.n_groups * self.items_per_group
    }

    /// Expected number of interactions before any resampling.
    pub fn expected_interactions(&self) -> f64 {
        let block = (self.users_per_group * self.items_per_group) as f64;
        let g = self.n_groups as f64;
        g * block * self.p_in + g * (g - 1.0) * block * self.p_out
    }
}

pub fn user_key(user: usize) -> String {
    format!("u{user}")
}

pub fn item_key(item: usize) -> String {
    format!("i{item}")
}

/// Generated data. Users are numbered group by group, as are items.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    /// All items are kept; users are those with at least one interaction.
    pub dataset: Dataset,
    /// Group of every generated user, including dropped ones.
    pub user_groups: Vec<usize>,
    pub item_groups: Vec<usize>,
    /// Users that came up empty twice.
    pub dropped_users: Vec<usize>,
    /// Users that came up empty once and were drawn again.
    pub resampled_users: Vec<usize>,
}

impl SynthDataset {
    /// Interactions as raw keyed rows, ready for the preprocessing pipeline.
    pub fn raw_interactions(&self) -> Vec<RawInteraction> {
        let ds = &self.dataset;
        ds.interactions()
            .iter()
            .map(|it| RawInteraction::new(ds.user_keys()[it.user].clone(), ds.item_keys()[it.item].clone(), None, it.timestamp))
            .collect()
    }

    /// Group of a generated user key, e.g. `"u17"`.
    pub fn user_group_of_key(&self, key: &str) -> Option<usize> {
        parse_key(key, 'u').and_then(|i| self.user_groups.get(i).copied())
    }

    pub fn item_group_of_key(&self, key: &str) -> Option<usize> {
        parse_key(key, 'i').and_then(|i| self.item_groups.get(i).copied())
    }

    /// Groups aligned with another dataset's indices (e.g. after filtering).
    pub fn labels_for(&self, dataset: &Dataset) -> Result<(Vec<usize>, Vec<usize>)> {
        let users = dataset
            .user_keys()
            .iter()
            .map(|k| self.user_group_of_key(k).ok_or_else(|| Error::Parse(format!("unknown synthetic user key {k:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let items = dataset
            .item_keys()
            .iter()
            .map(|k| self.item_group_of_key(k).ok_or_else(|| Error::Parse(format!("unknown synthetic item key {k:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok((users, items))
    }
}

fn parse_key(key: &str, prefix: char) -> Option<usize> {
    key.strip_prefix(prefix)?.parse().ok()
}

fn draw_user<R: Rng + ?Sized>(config: &SynthConfig, group: usize, item_groups: &[usize], rng: &mut R) -> Vec<usize> {
    item_groups
        .iter()
        .enumerate()
        .filter(|&(_, &g)| {
            let p = if g == group { config.p_in } else { config.p_out };
            rng.random_bool(p)
        })
        .map(|(t, _)| t)
        .collect()
}

/// Samples every (user, item) pair independently with `p_in` inside a group
/// and `p_out` across groups.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let user_groups: Vec<usize> = (0..config.n_users()).map(|u| u / config.users_per_group).collect();
    let item_groups: Vec<usize> = (0..config.n_items()).map(|t| t / config.items_per_group).collect();

    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(user_groups.len());
    let mut dropped_users = Vec::new();
    let mut resampled_users = Vec::new();
    for (u, &g) in user_groups.iter().enumerate() {
        let mut items = draw_user(config, g, &item_groups, &mut stream(config.seed, "synth-user", u as u64));
        if items.is_empty() {
            resampled_users.push(u);
            items = draw_user(config, g, &item_groups, &mut stream(config.seed, "synth-user-retry", u as u64));
            if items.is_empty() {
                dropped_users.push(u);
            }
        }
        rows.push(items);
    }

    let total: usize = rows.iter().map(Vec::len).sum();
    let mut times: Vec<i64> = (0..total as i64).collect();
    times.shuffle(&mut stream(config.seed, "synth-time", 0));

    let mut user_keys = Vec::new();
    let mut interactions = Vec::with_capacity(total);
    let mut next = 0;
    for (u, items) in rows.iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        let idx = user_keys.len();
        user_keys.push(user_key(u));
        for &t in items {
            interactions.push(Interaction {
                user: idx,
                item: t,
                timestamp: times[next],
            });
            next += 1;
        }
    }
    let item_keys = (0..config.n_items()).map(item_key).collect();
    Ok(SynthDataset {
        config: *config,
        dataset: Dataset::new(user_keys, item_keys, interactions)?,
        user_groups,
        item_groups,
        dropped_users,
        resampled_users,
    })
}

/// Group whose members have the highest mean shifted cosine to each
/// prototype, ties to the lowest group. `None` when every non-empty group
/// ties, i.e. no group dominates.
pub fn assign_prototypes(embeddings: &Matrix, groups: &[usize], prototypes: &Matrix, n_groups: usize) -> Vec<Option<usize>> {
    let mut sizes = alloc::vec![0usize; n_groups];
    for &g in groups {
        sizes[g] += 1;
    }
    prototypes
        .iter_rows()
        .map(|p| {
            let mut sums = alloc::vec![0.0; n_groups];
            for (row, &g) in embeddings.iter_rows().zip(groups) {
                sums[g] += shifted_cosine(row, p);
            }
            let means: Vec<(usize, f64)> = (0..n_groups)
                .filter(|&g| sizes[g] > 0)
                .map(|g| (g, sums[g] / sizes[g] as f64))
                .collect();
            let (best_g, best) = means.iter().copied().fold((usize::MAX, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            if means.is_empty() || means.iter().all(|&(_, m)| m == best) {
                None
            } else {
                Some(best_g)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockScore {
    /// Matched fraction over the assigned user prototypes.
    pub score: f64,
    pub matched: usize,
    pub counted: usize,
    /// User prototypes without a group.
    pub excluded: Vec<usize>,
}

/// Fraction of user prototypes whose largest-`|w|` connection, among item
/// prototypes with a group, lands on an item prototype of the same group.
pub fn block_structure_score(
    connections: &Matrix,
    user_proto_groups: &[Option<usize>],
    item_proto_groups: &[Option<usize>],
) -> Result<BlockScore> {
    if connections.rows() != user_proto_groups.len() {
        return Err(Error::DimensionMismatch {
            expected: connections.rows(),
            actual: user_proto_groups.len(),
        });
    }
    if connections.cols() != item_proto_groups.len() {
        return Err(Error::DimensionMismatch {
            expected: connections.cols(),
            actual: item_proto_groups.len(),
        });
    }
    let mut excluded = Vec::new();
    let (mut matched, mut counted) = (0, 0);
    for (i, group) in user_proto_groups.iter().enumerate() {
        let Some(group) = group else {
            excluded.push(i);
            continue;
        };
        let strongest = connections
            .row(i)
            .iter()
            .enumerate()
            .filter_map(|(j, w)| item_proto_groups[j].map(|g| (g, w.abs())))
            .fold(None, |best: Option<(usize, f64)>, x| match best {
                Some(b) if b.1 >= x.1 => Some(b),
                _ => Some(x),
            });
        let Some((item_group, _)) = strongest else {
            excluded.push(i);
            continue;
        };
        counted += 1;
        if item_group == *group {
            matched += 1;
        }
    }
    if counted == 0 {
        return Err(Error::InvalidConfig("no user prototype could be assigned to a group".into()));
    }
    Ok(BlockScore {
        score: matched as f64 / counted as f64,
        matched,
        counted,
        excluded,
    })
}
