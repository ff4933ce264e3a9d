//! Interaction logs, k-core filtering, leave-one-out splits and negative
//! sampling.

mod kcore;
mod sampling;
mod split;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub use kcore::k_core_filter;
pub use sampling::{NegativeSampler, PopularityTable, SamplingMode};
pub use split::{leave_one_out_split, EvalCase, SplitBundle, Stage, EVAL_NEGATIVES};

/// One row of a raw interaction log.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInteraction {
    pub user_key: String,
    pub item_key: String,
    pub rating: Option<f64>,
    pub timestamp: i64,
}

impl RawInteraction {
    pub fn new(user_key: impl Into<String>, item_key: impl Into<String>, rating: Option<f64>, timestamp: i64) -> Self {
        Self {
            user_key: user_key.into(),
            item_key: item_key.into(),
            rating,
            timestamp,
        }
    }
}

/// Keeps rows whose rating is strictly above `threshold`. Rows without a
/// rating cannot be judged positive and are dropped. Order is preserved.
pub fn apply_rating_threshold(rows: Vec<RawInteraction>, threshold: f64) -> Vec<RawInteraction> {
    rows.into_iter()
        .filter(|r| r.rating.is_some_and(|v| v > threshold))
        .collect()
}

/// A dense-indexed interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: i64,
}

/// SHA-256 over the ordered user and item key lists. Two artifacts built
/// from the same ID maps share a fingerprint.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn of_keys(user_keys: &[String], item_keys: &[String]) -> Self {
        let mut hasher = Sha256::new();
        for (tag, keys) in [(b'u', user_keys), (b'i', item_keys)] {
            for key in keys {
                hasher.update([tag, b'\t']);
                hasher.update(key.as_bytes());
                hasher.update(b"\n");
            }
        }
        Self(hasher.finalize().into())
    }

    pub fn parse_hex(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.len() != 64 || !text.is_ascii() {
            return Err(Error::Parse(alloc::format!("bad fingerprint {text:?}")));
        }
        let mut out = [0u8; 32];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&text[2 * i..2 * i + 2], 16)
                .map_err(|_| Error::Parse(alloc::format!("bad fingerprint {text:?}")))?;
        }
        Ok(Self(out))
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|b| write!(f, "{b:02x}"))
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({self})")
    }
}

/// Users, items and their deduplicated interactions under dense indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    user_keys: Vec<String>,
    item_keys: Vec<String>,
    user_index: BTreeMap<String, usize>,
    item_index: BTreeMap<String, usize>,
    interactions: Vec<Interaction>,
}

impl Dataset {
    /// Builds a dataset from ID maps and interactions. Indices must be in
    /// range, keys unique and (user, item) pairs distinct.
    pub fn new(user_keys: Vec<String>, item_keys: Vec<String>, interactions: Vec<Interaction>) -> Result<Self> {
        let user_index = index_keys(&user_keys, "user")?;
        let item_index = index_keys(&item_keys, "item")?;
        let mut seen = alloc::collections::BTreeSet::new();
        for it in &interactions {
            check_index("user", it.user, user_keys.len())?;
            check_index("item", it.item, item_keys.len())?;
            if !seen.insert((it.user, it.item)) {
                return Err(Error::InvalidShape(alloc::format!(
                    "duplicate interaction ({}, {})",
                    it.user,
                    it.item
                )));
            }
        }
        Ok(Self {
            user_keys,
            item_keys,
            user_index,
            item_index,
            interactions,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_keys.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_keys.len()
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn user_keys(&self) -> &[String] {
        &self.user_keys
    }

    pub fn item_keys(&self) -> &[String] {
        &self.item_keys
    }

    pub fn user_id(&self, key: &str) -> Option<usize> {
        self.user_index.get(key).copied()
    }

    pub fn item_id(&self, key: &str) -> Option<usize> {
        self.item_index.get(key).copied()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of_keys(&self.user_keys, &self.item_keys)
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        let mut deg = alloc::vec![0; self.n_users()];
        self.interactions.iter().for_each(|it| deg[it.user] += 1);
        deg
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = alloc::vec![0; self.n_items()];
        self.interactions.iter().for_each(|it| deg[it.item] += 1);
        deg
    }
}

fn index_keys(keys: &[String], entity: &'static str) -> Result<BTreeMap<String, usize>> {
    let mut map = BTreeMap::new();
    for (i, key) in keys.iter().enumerate() {
        if map.insert(key.clone(), i).is_some() {
            return Err(Error::InvalidShape(alloc::format!("duplicate {entity} key {key:?}")));
        }
    }
    Ok(map)
}

pub(crate) fn check_index(entity: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { entity, index, len })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn threshold_keeps_ratings_above() {
        let rows = vec![
            RawInteraction::new("u1", "i1", Some(4.0), 1),
            RawInteraction::new("u1", "i2", Some(3.0), 2),
        ];
        let kept = apply_rating_threshold(rows, 3.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].item_key, "i1");
    }

    #[test]
    fn fingerprint_hex_round_trip() {
        let fp = Fingerprint::of_keys(&["a".into()], &["b".into()]);
        assert_eq!(Fingerprint::parse_hex(&alloc::format!("{fp}")).unwrap(), fp);
        assert_ne!(fp, Fingerprint::of_keys(&["b".into()], &["a".into()]));
    }

    #[test]
    fn dataset_rejects_duplicates() {
        let its = vec![
            Interaction { user: 0, item: 0, timestamp: 0 },
            Interaction { user: 0, item: 0, timestamp: 1 },
        ];
        assert!(Dataset::new(vec!["u".into()], vec!["i".into()], its).is_err());
    }
}
