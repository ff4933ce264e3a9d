use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Dataset, Interaction, RawInteraction};
use crate::{Error, Result};

/// Deduplicates `rows`, then keeps the largest subgraph in which every user
/// has at least `user_core` and every item at least `item_core`
/// interactions.
///
/// Duplicate (user, item) rows keep the earliest timestamp (earliest row on
/// ties). Surviving users and items are numbered by first appearance, and
/// interactions keep input order, so the output is a deterministic function
/// of the input sequence.
pub fn k_core_filter(rows: &[RawInteraction], user_core: usize, item_core: usize) -> Result<Dataset> {
    if user_core == 0 || item_core == 0 {
        return Err(Error::InvalidConfig("core thresholds must be at least 1".into()));
    }

    // dedupe: pair -> index into `kept`
    let mut first: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut kept: Vec<(usize, i64)> = Vec::new();
    for (row_idx, row) in rows.iter().enumerate() {
        match first.get(&(row.user_key.as_str(), row.item_key.as_str())) {
            Some(&slot) => {
                if row.timestamp < kept[slot].1 {
                    kept[slot] = (row_idx, row.timestamp);
                }
            }
            None => {
                first.insert((row.user_key.as_str(), row.item_key.as_str()), kept.len());
                kept.push((row_idx, row.timestamp));
            }
        }
    }
    kept.sort_by_key(|&(row_idx, _)| row_idx);

    let mut user_ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut item_ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut edges = Vec::with_capacity(kept.len());
    for &(row_idx, ts) in &kept {
        let row = &rows[row_idx];
        let next_u = user_ids.len();
        let u = *user_ids.entry(row.user_key.as_str()).or_insert(next_u);
        let next_i = item_ids.len();
        let i = *item_ids.entry(row.item_key.as_str()).or_insert(next_i);
        edges.push((u, i, ts, row_idx));
    }

    let n_users = user_ids.len();
    let n_items = item_ids.len();
    let mut user_edges = vec![Vec::new(); n_users];
    let mut item_edges = vec![Vec::new(); n_items];
    for (e, &(u, i, _, _)) in edges.iter().enumerate() {
        user_edges[u].push(e);
        item_edges[i].push(e);
    }
    let mut user_deg: Vec<usize> = user_edges.iter().map(Vec::len).collect();
    let mut item_deg: Vec<usize> = item_edges.iter().map(Vec::len).collect();
    let mut alive = vec![true; edges.len()];
    let mut user_gone = vec![false; n_users];
    let mut item_gone = vec![false; n_items];

    #[derive(Clone, Copy)]
    enum Node {
        User(usize),
        Item(usize),
    }
    let mut queue: VecDeque<Node> = VecDeque::new();
    for u in 0..n_users {
        if user_deg[u] < user_core {
            user_gone[u] = true;
            queue.push_back(Node::User(u));
        }
    }
    for i in 0..n_items {
        if item_deg[i] < item_core {
            item_gone[i] = true;
            queue.push_back(Node::Item(i));
        }
    }
    while let Some(node) = queue.pop_front() {
        let incident = match node {
            Node::User(u) => &user_edges[u],
            Node::Item(i) => &item_edges[i],
        };
        for &e in incident {
            if !alive[e] {
                continue;
            }
            alive[e] = false;
            let (u, i, _, _) = edges[e];
            match node {
                Node::User(_) => {
                    item_deg[i] -= 1;
                    if !item_gone[i] && item_deg[i] < item_core {
                        item_gone[i] = true;
                        queue.push_back(Node::Item(i));
                    }
                }
                Node::Item(_) => {
                    user_deg[u] -= 1;
                    if !user_gone[u] && user_deg[u] < user_core {
                        user_gone[u] = true;
                        queue.push_back(Node::User(u));
                    }
                }
            }
        }
    }

    let mut user_map = vec![usize::MAX; n_users];
    let mut item_map = vec![usize::MAX; n_items];
    let mut user_keys: Vec<String> = Vec::new();
    let mut item_keys: Vec<String> = Vec::new();
    let mut interactions = Vec::new();
    for (e, &(u, i, ts, row_idx)) in edges.iter().enumerate() {
        if !alive[e] {
            continue;
        }
        if user_map[u] == usize::MAX {
            user_map[u] = user_keys.len();
            user_keys.push(rows[row_idx].user_key.clone());
        }
        if item_map[i] == usize::MAX {
            item_map[i] = item_keys.len();
            item_keys.push(rows[row_idx].item_key.clone());
        }
        interactions.push(Interaction {
            user: user_map[u],
            item: item_map[i],
            timestamp: ts,
        });
    }
    if interactions.is_empty() {
        return Err(Error::EmptyAfterFiltering { user_core, item_core });
    }
    Dataset::new(user_keys, item_keys, interactions)
}
