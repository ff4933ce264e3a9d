//! Explanations read off a trained UIPC-MF model.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::check_index;
use crate::linalg::shifted_cosine;
use crate::model::{ScoreBreakdown, UipcParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SupportingItem {
    pub item: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrototypeContribution {
    pub prototype: usize,
    pub score: f64,
    /// The user's train items nearest this prototype.
    pub supporting_items: Vec<SupportingItem>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExplanationRecord {
    pub user: usize,
    pub item: usize,
    pub breakdown: ScoreBreakdown,
    /// By descending `|score|`, ties by prototype index.
    pub top_prototypes: Vec<PrototypeContribution>,
}

/// Sorts `(index, key)` by descending key, ties by ascending index.
fn sort_desc(entries: &mut [(usize, f64)]) {
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Decomposes the score of `(user, item)` and lists its `top_n` most
/// influential item prototypes, each with up to `n_support` of the user's
/// `train_items` nearest to it.
pub fn explain_pair(
    params: &UipcParams,
    user: usize,
    item: usize,
    top_n: usize,
    train_items: &[usize],
    n_support: usize,
) -> Result<ExplanationRecord> {
    if top_n == 0 {
        return Err(Error::InvalidConfig("top_n must be at least 1".into()));
    }
    let breakdown = params.score_breakdown(user, item)?;
    let n_items = params.item_embeddings.rows();
    for &t in train_items {
        check_index("item", t, n_items)?;
    }
    let mut ranked: Vec<(usize, f64)> = breakdown.prototype_scores.iter().map(|s| s.abs()).enumerate().collect();
    sort_desc(&mut ranked);
    let top_prototypes = ranked
        .into_iter()
        .take(top_n)
        .map(|(j, _)| {
            let proto = params.item_prototypes.row(j);
            let mut near: Vec<(usize, f64)> = train_items
                .iter()
                .map(|&t| (t, shifted_cosine(params.item_embeddings.row(t), proto)))
                .collect();
            sort_desc(&mut near);
            PrototypeContribution {
                prototype: j,
                score: breakdown.prototype_scores[j],
                supporting_items: near
                    .into_iter()
                    .take(n_support)
                    .map(|(item, similarity)| SupportingItem { item, similarity })
                    .collect(),
            }
        })
        .collect();
    Ok(ExplanationRecord {
        user,
        item,
        breakdown,
        top_prototypes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NearItem {
    pub item: usize,
    pub similarity: f64,
    pub occurrences: u64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrototypeProfile {
    pub prototype: usize,
    pub nearest_items: Vec<NearItem>,
}

/// The `top_n` items most similar to item prototype `prototype`, ties by
/// item index. `occurrences[t]` is attached when present, else 0.
pub fn nearest_items(params: &UipcParams, prototype: usize, top_n: usize, occurrences: &[u64]) -> Result<PrototypeProfile> {
    check_index("item prototype", prototype, params.item_prototypes.rows())?;
    let proto = params.item_prototypes.row(prototype);
    let mut all: Vec<(usize, f64)> = params
        .item_embeddings
        .iter_rows()
        .enumerate()
        .map(|(t, e)| (t, shifted_cosine(e, proto)))
        .collect();
    sort_desc(&mut all);
    let nearest_items = all
        .into_iter()
        .take(top_n)
        .map(|(item, similarity)| NearItem {
            item,
            similarity,
            occurrences: occurrences.get(item).copied().unwrap_or(0),
        })
        .collect();
    Ok(PrototypeProfile { prototype, nearest_items })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PreferenceDistribution {
    pub prototype: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub all_same_sign: bool,
}

/// Linear-interpolation quantile of sorted data (`p` in `[0, 1]`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl PreferenceDistribution {
    pub fn from_values(prototype: usize, values: &mut [f64]) -> Self {
        values.sort_by(f64::total_cmp);
        let min = quantile(values, 0.0);
        let max = quantile(values, 1.0);
        Self {
            prototype,
            min,
            q1: quantile(values, 0.25),
            median: quantile(values, 0.5),
            q3: quantile(values, 0.75),
            max,
            all_same_sign: min * max > 0.0,
        }
    }
}

/// Per item prototype, the spread of preference values over all users.
pub fn preference_distribution(params: &UipcParams) -> Vec<PreferenceDistribution> {
    let n_users = params.user_embeddings.rows();
    let lt = params.item_prototypes.rows();
    let mut columns: Vec<Vec<f64>> = (0..lt).map(|_| Vec::with_capacity(n_users)).collect();
    for u in 0..n_users {
        for (j, r) in params.user_vector(u).into_iter().enumerate() {
            columns[j].push(r);
        }
    }
    columns
        .iter_mut()
        .enumerate()
        .map(|(j, col)| PreferenceDistribution::from_values(j, col))
        .collect()
}

/// Number of item prototypes whose preferences share one strict sign.
pub fn same_sign_count(dists: &[PreferenceDistribution]) -> usize {
    dists.iter().filter(|d| d.all_same_sign).count()
}

/// Used when the dominant prototype has no supporting items.
pub const FALLBACK_TEMPLATE: &str = "Recommended to {user} because of their preference for item prototype {prototype}.";

/// Fills `template` from the dominant prototype of `record`.
///
/// Placeholders: `{items}` (supporting item names), `{prototype}`, `{user}`
/// and `{item}`. `{{` and `}}` are literal braces. If `{items}` is used but
/// there are no supporting items, [`FALLBACK_TEMPLATE`] is rendered instead.
pub fn render_rationale(
    record: &ExplanationRecord,
    template: &str,
    user_name: &str,
    item_name: &dyn Fn(usize) -> String,
) -> Result<String> {
    let top = record
        .top_prototypes
        .first()
        .ok_or_else(|| Error::InvalidConfig("explanation has no prototypes".into()))?;
    let names: Vec<String> = top.supporting_items.iter().map(|s| item_name(s.item)).collect();
    let template = if names.is_empty() && template.contains("{items}") {
        FALLBACK_TEMPLATE
    } else {
        template
    };

    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            out.push_str(&tail[..1]);
            rest = &tail[2..];
            continue;
        }
        if tail.starts_with('}') {
            return Err(Error::UnresolvedPlaceholder("}".into()));
        }
        let end = tail.find('}').ok_or_else(|| Error::UnresolvedPlaceholder(tail.into()))?;
        let name = &tail[1..end];
        match name {
            "items" => out.push_str(&join_names(&names)),
            "prototype" => out.push_str(&alloc::format!("{}", top.prototype)),
            "user" => out.push_str(user_name),
            "item" => out.push_str(&item_name(record.item)),
            other => return Err(Error::UnresolvedPlaceholder(other.into())),
        }
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// `a`, `a and b`, `a, b and c`.
fn join_names(names: &[String]) -> String {
    match names {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => alloc::format!("{} and {}", init.join(", "), last),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use alloc::string::ToString;
    use alloc::vec;

    fn params(connections: Matrix) -> UipcParams {
        let m = |r: &[&[f64]]| Matrix::from_rows(r).unwrap();
        UipcParams::from_parts(
            m(&[&[1.0, 0.0], &[0.0, 1.0]]),
            m(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[-1.0, 0.0], &[0.5, 0.1]]),
            m(&[&[1.0, 0.0], &[0.0, 1.0]]),
            m(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, -1.0]]),
            connections,
        )
        .unwrap()
    }

    #[test]
    fn zero_connections_keep_index_order() {
        let p = params(Matrix::zeros(2, 3));
        let rec = explain_pair(&p, 0, 1, 3, &[0, 2], 2).unwrap();
        let order: Vec<usize> = rec.top_prototypes.iter().map(|c| c.prototype).collect();
        assert_eq!(order, [0, 1, 2]);
        assert!(rec.top_prototypes.iter().all(|c| c.score == 0.0));
    }

    #[test]
    fn dominant_prototype_first_and_complete() {
        let mut w = Matrix::zeros(2, 3);
        w.set(0, 2, 10.0);
        w.set(1, 2, 10.0);
        w.set(0, 0, 0.5);
        let p = params(w);
        let rec = explain_pair(&p, 0, 3, 3, &[0, 1, 2], 2).unwrap();
        assert_eq!(rec.top_prototypes[0].prototype, 2);
        let sum: f64 = rec.top_prototypes.iter().map(|c| c.score).sum();
        assert!((sum - rec.breakdown.total).abs() <= 1e-9);
        assert!((rec.breakdown.total - p.score(0, 3).unwrap()).abs() <= 1e-12);
        // supporting items sorted by similarity to prototype 2 = (-1, -1)
        let support: Vec<usize> = rec.top_prototypes[0].supporting_items.iter().map(|s| s.item).collect();
        assert_eq!(support, [0, 1]);
    }

    #[test]
    fn out_of_range() {
        let p = params(Matrix::zeros(2, 3));
        assert!(explain_pair(&p, 9, 0, 1, &[], 1).is_err());
        assert!(explain_pair(&p, 0, 0, 0, &[], 1).is_err());
        assert!(nearest_items(&p, 3, 1, &[]).is_err());
    }

    #[test]
    fn nearest_items_sorted() {
        let p = params(Matrix::zeros(2, 3));
        let prof = nearest_items(&p, 0, 3, &[5, 4, 3, 2, 1]).unwrap();
        let items: Vec<usize> = prof.nearest_items.iter().map(|n| n.item).collect();
        assert_eq!(items, [0, 4, 2]);
        assert_eq!(prof.nearest_items[0].similarity, 2.0);
        assert_eq!(prof.nearest_items[0].occurrences, 5);
    }

    #[test]
    fn quantile_examples() {
        let mut d = PreferenceDistribution::from_values(0, &mut [1.0, -1.0]);
        assert_eq!(d.median, 0.0);
        assert!(!d.all_same_sign);
        d = PreferenceDistribution::from_values(0, &mut [3.0, 1.0]);
        assert!(d.all_same_sign);
        assert_eq!((d.min, d.q1, d.median, d.q3, d.max), (1.0, 1.5, 2.0, 2.5, 3.0));
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&s, 0.25), 2.0);
        assert_eq!(quantile(&s, 0.1), 1.4);
    }

    #[test]
    fn zero_connections_distribution() {
        let dist = preference_distribution(&params(Matrix::zeros(2, 3)));
        assert_eq!(dist.len(), 3);
        for d in dist {
            assert_eq!((d.min, d.median, d.max), (0.0, 0.0, 0.0));
            assert!(!d.all_same_sign);
        }
    }

    fn record(support: Vec<SupportingItem>) -> ExplanationRecord {
        let p = params(Matrix::zeros(2, 3));
        let mut rec = explain_pair(&p, 0, 4, 1, &[], 0).unwrap();
        rec.top_prototypes[0].prototype = 15;
        rec.top_prototypes[0].supporting_items = support;
        rec
    }

    fn name(t: usize) -> String {
        ["Iron Maiden", "Metallica", "Slayer", "Megadeth", "Anthrax"][t].to_string()
    }

    #[test]
    fn rationale_inlines_items() {
        let rec = record(vec![
            SupportingItem { item: 0, similarity: 1.9 },
            SupportingItem { item: 1, similarity: 1.8 },
        ]);
        let text = render_rationale(&rec, "Other listeners who have listened to {items} also enjoy {item}.", "u1", &name).unwrap();
        assert_eq!(text, "Other listeners who have listened to Iron Maiden and Metallica also enjoy Anthrax.");
    }

    #[test]
    fn rationale_fallback_and_errors() {
        let rec = record(vec![]);
        let text = render_rationale(&rec, "Because you liked {items}", "u1", &name).unwrap();
        assert_eq!(text, "Recommended to u1 because of their preference for item prototype 15.");
        let rec = record(vec![SupportingItem { item: 2, similarity: 1.0 }]);
        assert!(matches!(
            render_rationale(&rec, "{genre} fans like {items}", "u", &name),
            Err(Error::UnresolvedPlaceholder(n)) if n == "genre"
        ));
        assert!(render_rationale(&rec, "open {items", "u", &name).is_err());
        assert_eq!(render_rationale(&rec, "{{{items}}}", "u", &name).unwrap(), "{Slayer}");
    }

    #[test]
    fn join_forms() {
        let n = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(join_names(&n(&["a", "b", "c"])), "a, b and c");
    }
}
