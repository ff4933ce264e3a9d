//! Training objective and its analytic gradients.
//!
//! The total loss is
//!
//! ```text
//! base + λ_L2·‖Θ‖ + λ₁·R(Pᵘ→U) + λ₂·R(U→Pᵘ) + λ₃·R(Pᵗ→T) + λ₄·R(T→Pᵗ) + λ_L1·‖r‖₁
//! ```
//!
//! where the four `R` terms are max-similarity regularizers and `‖r‖₁` the
//! mean absolute preference value, all evaluated only over the users and
//! items present in the batch.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{dot, log_sum_exp, shifted_cosine, shifted_cosine_backward, sigmoid, softplus, Matrix};
use crate::model::Model;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BaseLoss {
    /// Pointwise binary cross-entropy, unnormalized.
    #[cfg_attr(feature = "serde", serde(rename = "BCE"))]
    Bce,
    /// Pairwise ranking, averaged over (positive, negative) pairs.
    #[cfg_attr(feature = "serde", serde(rename = "BPR"))]
    Bpr,
    /// Sampled softmax, averaged over positives.
    #[default]
    #[cfg_attr(feature = "serde", serde(rename = "SSM"))]
    Ssm,
}

impl BaseLoss {
    pub fn name(self) -> &'static str {
        match self {
            BaseLoss::Bce => "BCE",
            BaseLoss::Bpr => "BPR",
            BaseLoss::Ssm => "SSM",
        }
    }
}

impl core::str::FromStr for BaseLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BCE" => Ok(BaseLoss::Bce),
            "BPR" => Ok(BaseLoss::Bpr),
            "SSM" => Ok(BaseLoss::Ssm),
            other => Err(Error::Parse(alloc::format!("unknown base loss {other:?} (expected BCE, BPR or SSM)"))),
        }
    }
}

/// How `‖Θ‖` enters the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum L2Form {
    /// `Σθ²`
    #[default]
    Squared,
    /// `sqrt(Σθ²)`
    Norm,
}

/// Non-negative weights of every auxiliary term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegWeights {
    pub l2: f64,
    /// Each user prototype close to some user.
    pub proto_to_user: f64,
    /// Each user close to some user prototype.
    pub user_to_proto: f64,
    /// Each item prototype close to some item.
    pub proto_to_item: f64,
    /// Each item close to some item prototype.
    pub item_to_proto: f64,
    pub l1_pref: f64,
}

impl RegWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.l2,
            self.proto_to_user,
            self.user_to_proto,
            self.proto_to_item,
            self.item_to_proto,
            self.l1_pref,
        ];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidConfig("regularization weights must be finite and non-negative".into()))
        }
    }
}

/// Positives and their sampled negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<Vec<usize>>,
}

impl Batch {
    pub fn new(positives: Vec<(usize, usize)>, negatives: Vec<Vec<usize>>) -> Result<Self> {
        if positives.is_empty() {
            return Err(Error::InvalidConfig("empty batch".into()));
        }
        if positives.len() != negatives.len() {
            return Err(Error::DimensionMismatch {
                expected: positives.len(),
                actual: negatives.len(),
            });
        }
        Ok(Self { positives, negatives })
    }

    /// Sorted distinct users of the positives.
    pub fn batch_users(&self) -> Vec<usize> {
        let mut users: Vec<usize> = self.positives.iter().map(|p| p.0).collect();
        users.sort_unstable();
        users.dedup();
        users
    }

    /// Sorted distinct items among positives and negatives.
    pub fn batch_items(&self) -> Vec<usize> {
        let mut items: Vec<usize> = self
            .positives
            .iter()
            .map(|p| p.1)
            .chain(self.negatives.iter().flatten().copied())
            .collect();
        items.sort_unstable();
        items.dedup();
        items
    }

    pub fn pair_count(&self) -> usize {
        self.negatives.iter().map(Vec::len).sum()
    }
}

/// Unweighted value of every term and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossReport {
    pub base: f64,
    pub l2: f64,
    pub reg_pu_to_u: f64,
    pub reg_u_to_pu: f64,
    pub reg_pt_to_t: f64,
    pub reg_t_to_pt: f64,
    pub l1_pref: f64,
    pub total: f64,
}

impl LossReport {
    pub fn terms(&self) -> [(&'static str, f64); 8] {
        [
            ("base", self.base),
            ("l2", self.l2),
            ("reg_pu_to_u", self.reg_pu_to_u),
            ("reg_u_to_pu", self.reg_u_to_pu),
            ("reg_pt_to_t", self.reg_pt_to_t),
            ("reg_t_to_pt", self.reg_t_to_pt),
            ("l1_pref", self.l1_pref),
            ("total", self.total),
        ]
    }

    /// First non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        self.terms().into_iter().find(|(_, v)| !v.is_finite()).map(|(n, _)| n)
    }

    fn weighted_total(&mut self, reg: &RegWeights) {
        self.total = self.base
            + reg.l2 * self.l2
            + reg.proto_to_user * self.reg_pu_to_u
            + reg.user_to_proto * self.reg_u_to_pu
            + reg.proto_to_item * self.reg_pt_to_t
            + reg.item_to_proto * self.reg_t_to_pt
            + reg.l1_pref * self.l1_pref;
    }
}

/// A base loss evaluated on raw scores, with derivatives per score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLoss {
    pub value: f64,
    pub grad_pos: Vec<f64>,
    pub grad_neg: Vec<Vec<f64>>,
}

/// Evaluates `kind` on positive scores and per-positive negative scores.
pub fn score_loss(kind: BaseLoss, pos: &[f64], neg: &[Vec<f64>]) -> Result<ScoreLoss> {
    if pos.len() != neg.len() {
        return Err(Error::DimensionMismatch {
            expected: pos.len(),
            actual: neg.len(),
        });
    }
    if kind != BaseLoss::Bce && neg.iter().any(Vec::is_empty) {
        return Err(Error::InvalidConfig(alloc::format!("{} needs at least one negative per positive", kind.name())));
    }
    let mut grad_pos = vec![0.0; pos.len()];
    let mut grad_neg: Vec<Vec<f64>> = neg.iter().map(|n| vec![0.0; n.len()]).collect();
    let mut value = 0.0;
    match kind {
        BaseLoss::Bce => {
            for (p, &s) in pos.iter().enumerate() {
                value += softplus(-s);
                grad_pos[p] = -sigmoid(-s);
                for (k, &sn) in neg[p].iter().enumerate() {
                    value += softplus(sn);
                    grad_neg[p][k] = sigmoid(sn);
                }
            }
        }
        BaseLoss::Bpr => {
            let pairs = neg.iter().map(Vec::len).sum::<usize>() as f64;
            for (p, &s) in pos.iter().enumerate() {
                for (k, &sn) in neg[p].iter().enumerate() {
                    let margin = s - sn;
                    value += softplus(-margin);
                    let g = sigmoid(-margin) / pairs;
                    grad_pos[p] -= g;
                    grad_neg[p][k] += g;
                }
            }
            value /= pairs;
        }
        BaseLoss::Ssm => {
            let count = pos.len() as f64;
            let mut logits = Vec::new();
            for (p, &s) in pos.iter().enumerate() {
                logits.clear();
                logits.push(s);
                logits.extend_from_slice(&neg[p]);
                let lse = log_sum_exp(&logits);
                value += lse - s;
                grad_pos[p] = (libm::exp(s - lse) - 1.0) / count;
                for (k, &sn) in neg[p].iter().enumerate() {
                    grad_neg[p][k] = libm::exp(sn - lse) / count;
                }
            }
            value /= count;
        }
    }
    Ok(ScoreLoss {
        value,
        grad_pos,
        grad_neg,
    })
}

/// Base loss over a batch; accumulates parameter gradients into `grads`.
pub fn base_loss(model: &Model, batch: &Batch, kind: BaseLoss, grads: Option<&mut Model>) -> Result<f64> {
    let users = batch.batch_users();
    let items = batch.batch_items();
    let user_vecs: Vec<Vec<f64>> = users.iter().map(|&u| model.user_vector(u)).collect();
    let item_vecs: Vec<Vec<f64>> = items.iter().map(|&t| model.item_vector(t)).collect();
    let slot = |list: &[usize], x: usize| list.binary_search(&x).expect("index collected from batch");

    let mut pos = Vec::with_capacity(batch.positives.len());
    let mut neg = Vec::with_capacity(batch.positives.len());
    for (&(u, t), negs) in batch.positives.iter().zip(&batch.negatives) {
        let q = &user_vecs[slot(&users, u)];
        pos.push(dot(q, &item_vecs[slot(&items, t)]));
        neg.push(negs.iter().map(|&n| dot(q, &item_vecs[slot(&items, n)])).collect::<Vec<f64>>());
    }
    let loss = score_loss(kind, &pos, &neg)?;

    if let Some(grads) = grads {
        let mut grad_users: Vec<Vec<f64>> = user_vecs.iter().map(|v| vec![0.0; v.len()]).collect();
        let mut grad_items: Vec<Vec<f64>> = item_vecs.iter().map(|v| vec![0.0; v.len()]).collect();
        let mut add = |u: usize, t: usize, g: f64| {
            let (ui, ti) = (slot(&users, u), slot(&items, t));
            crate::linalg::axpy(g, &item_vecs[ti], &mut grad_users[ui]);
            crate::linalg::axpy(g, &user_vecs[ui], &mut grad_items[ti]);
        };
        for (p, (&(u, t), negs)) in batch.positives.iter().zip(&batch.negatives).enumerate() {
            add(u, t, loss.grad_pos[p]);
            for (k, &n) in negs.iter().enumerate() {
                add(u, n, loss.grad_neg[p][k]);
            }
        }
        for (u, g) in users.iter().zip(&grad_users) {
            model.backprop_user(*u, g, grads);
        }
        for (t, g) in items.iter().zip(&grad_items) {
            model.backprop_item(*t, g, grads);
        }
    }
    Ok(loss.value)
}

/// The four max-similarity regularizers, in the order
/// `[R(Pᵘ→U), R(U→Pᵘ), R(Pᵗ→T), R(T→Pᵗ)]`.
///
/// Only batch users and items take part. Maxima are hard, ties go to the
/// lowest index, and gradient flows only through the selected pair. Models
/// without prototypes yield zeros.
pub fn interpretability_terms(
    model: &Model,
    users: &[usize],
    items: &[usize],
    grads: Option<(&RegWeights, &mut Model)>,
) -> [f64; 4] {
    let Some(views) = model.prototype_views() else {
        return [0.0; 4];
    };
    match grads {
        None => {
            let (a, b) = max_similarity_pair(views.user_embeddings, views.user_prototypes, users, None);
            let (c, d) = max_similarity_pair(views.item_embeddings, views.item_prototypes, items, None);
            [a, b, c, d]
        }
        Some((reg, out)) => {
            let g = out.prototype_views_mut().expect("gradient buffer matches model kind");
            let (a, b) = max_similarity_pair(
                views.user_embeddings,
                views.user_prototypes,
                users,
                Some((reg.proto_to_user, reg.user_to_proto, g.user_embeddings, g.user_prototypes)),
            );
            let (c, d) = max_similarity_pair(
                views.item_embeddings,
                views.item_prototypes,
                items,
                Some((reg.proto_to_item, reg.item_to_proto, g.item_embeddings, g.item_prototypes)),
            );
            [a, b, c, d]
        }
    }
}

type PairGrads<'a> = (f64, f64, &'a mut Matrix, &'a mut Matrix);

/// `(-(1/L) Σ_l max_b sim(e_b, p_l), -(1/B) Σ_b max_l sim(e_b, p_l))`.
fn max_similarity_pair(entities: &Matrix, protos: &Matrix, batch: &[usize], grads: Option<PairGrads<'_>>) -> (f64, f64) {
    if batch.is_empty() || protos.rows() == 0 {
        return (0.0, 0.0);
    }
    let n_protos = protos.rows();
    let sims: Vec<Vec<f64>> = batch
        .iter()
        .map(|&e| protos.iter_rows().map(|p| shifted_cosine(entities.row(e), p)).collect())
        .collect();

    let mut best_entity = vec![0usize; n_protos];
    for l in 0..n_protos {
        for b in 1..batch.len() {
            if sims[b][l] > sims[best_entity[l]][l] {
                best_entity[l] = b;
            }
        }
    }
    let best_proto: Vec<usize> = sims
        .iter()
        .map(|row| (1..n_protos).fold(0, |best, l| if row[l] > row[best] { l } else { best }))
        .collect();

    let proto_to_entity = -(0..n_protos).map(|l| sims[best_entity[l]][l]).sum::<f64>() / n_protos as f64;
    let entity_to_proto = -best_proto.iter().enumerate().map(|(b, &l)| sims[b][l]).sum::<f64>() / batch.len() as f64;

    if let Some((w_pe, w_ep, grad_entities, grad_protos)) = grads {
        let mut apply = |b: usize, l: usize, upstream: f64| {
            let e = batch[b];
            shifted_cosine_backward(entities.row(e), protos.row(l), upstream, grad_entities.row_mut(e), grad_protos.row_mut(l));
        };
        if w_pe != 0.0 {
            for (l, &b) in best_entity.iter().enumerate() {
                apply(b, l, -w_pe / n_protos as f64);
            }
        }
        if w_ep != 0.0 {
            for (b, &l) in best_proto.iter().enumerate() {
                apply(b, l, -w_ep / batch.len() as f64);
            }
        }
    }
    (proto_to_entity, entity_to_proto)
}

/// Mean over batch users of `Σ_j |r_j|`. Zero for models other than UIPC-MF.
/// The subgradient at `r_j = 0` is zero.
pub fn l1_preference_norm(model: &Model, users: &[usize], grads: Option<(f64, &mut Model)>) -> f64 {
    let Model::Uipc(params) = model else {
        return 0.0;
    };
    if users.is_empty() {
        return 0.0;
    }
    let scale = 1.0 / users.len() as f64;
    let mut total = 0.0;
    let mut grads = grads;
    for &u in users {
        let r = params.user_vector(u);
        total += r.iter().map(|x| x.abs()).sum::<f64>();
        if let Some((weight, out)) = grads.as_mut() {
            if *weight != 0.0 {
                let g: Vec<f64> = r.iter().map(|&x| *weight * scale * sign(x)).collect();
                model.backprop_user(u, &g, out);
            }
        }
    }
    total * scale
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `‖Θ‖` over every parameter table.
pub fn l2_term(model: &Model, form: L2Form, grads: Option<(f64, &mut Model)>) -> f64 {
    let squared: f64 = model.tensors().iter().map(|(_, t)| dot(t.as_slice(), t.as_slice())).sum();
    let value = match form {
        L2Form::Squared => squared,
        L2Form::Norm => libm::sqrt(squared),
    };
    if let Some((weight, out)) = grads {
        let factor = match form {
            L2Form::Squared => 2.0 * weight,
            L2Form::Norm if value > 0.0 => weight / value,
            L2Form::Norm => 0.0,
        };
        if factor != 0.0 {
            for ((_, p), (_, g)) in model.tensors().into_iter().zip(out.tensors_mut()) {
                crate::linalg::axpy(factor, p.as_slice(), g.as_mut_slice());
            }
        }
    }
    value
}

fn objective(
    model: &Model,
    batch: &Batch,
    reg: &RegWeights,
    base: BaseLoss,
    l2_form: L2Form,
    mut grads: Option<&mut Model>,
) -> Result<LossReport> {
    reg.validate()?;
    let users = batch.batch_users();
    let items = batch.batch_items();
    let mut report = LossReport {
        base: base_loss(model, batch, base, grads.as_deref_mut())?,
        ..LossReport::default()
    };
    report.l2 = l2_term(model, l2_form, grads.as_deref_mut().map(|g| (reg.l2, g)));
    let [a, b, c, d] = interpretability_terms(model, &users, &items, grads.as_deref_mut().map(|g| (reg, g)));
    report.reg_pu_to_u = a;
    report.reg_u_to_pu = b;
    report.reg_pt_to_t = c;
    report.reg_t_to_pt = d;
    report.l1_pref = l1_preference_norm(model, &users, grads.as_deref_mut().map(|g| (reg.l1_pref, g)));
    report.weighted_total(reg);
    Ok(report)
}

/// Full objective and the gradient of `report.total` w.r.t. every parameter.
pub fn total_loss(model: &Model, batch: &Batch, reg: &RegWeights, base: BaseLoss, l2_form: L2Form) -> Result<(LossReport, Model)> {
    let mut grads = model.zeros_like();
    let report = objective(model, batch, reg, base, l2_form, Some(&mut grads))?;
    Ok((report, grads))
}

/// Full objective without gradients.
pub fn loss_value(model: &Model, batch: &Batch, reg: &RegWeights, base: BaseLoss, l2_form: L2Form) -> Result<LossReport> {
    objective(model, batch, reg, base, l2_form, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelKind, ModelShape};
    use crate::Model;
    use core::f64::consts::LN_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn bce_examples() {
        let l = score_loss(BaseLoss::Bce, &[0.0], &[vec![]]).unwrap();
        assert!(close(l.value, LN_2, 1e-15));
        // a lone negative at 0 contributes log 2 as well
        let l = score_loss(BaseLoss::Bce, &[50.0], &[vec![0.0]]).unwrap();
        assert!(close(l.value, LN_2, 1e-12));
        // softplus oracle: ln(1+e^-2) + ln(1+e^-1)
        let l = score_loss(BaseLoss::Bce, &[2.0], &[vec![-1.0]]).unwrap();
        let oracle = libm::log(1.0 + libm::exp(-2.0)) + libm::log(1.0 + libm::exp(-1.0));
        assert!(close(l.value, oracle, 1e-14));
        assert!(close(l.value, 0.440190, 1e-6));
    }

    #[test]
    fn bpr_examples() {
        let l = score_loss(BaseLoss::Bpr, &[0.3], &[vec![0.3]]).unwrap();
        assert!(close(l.value, LN_2, 1e-15));
        let l = score_loss(BaseLoss::Bpr, &[10.0], &[vec![0.0]]).unwrap();
        assert!(close(l.value, libm::log(1.0 + libm::exp(-10.0)), 1e-15));
        assert!(close(l.value, 4.54e-5, 1e-7));
        let l = score_loss(BaseLoss::Bpr, &[1.0, 2.0], &[vec![1.0], vec![2.0]]).unwrap();
        assert!(close(l.value, LN_2, 1e-15));
    }

    #[test]
    fn ssm_examples() {
        let l = score_loss(BaseLoss::Ssm, &[0.7], &[vec![0.7]]).unwrap();
        assert!(close(l.value, LN_2, 1e-15));
        let l = score_loss(BaseLoss::Ssm, &[0.0], &[vec![0.0; 4]]).unwrap();
        assert!(close(l.value, libm::log(5.0), 1e-15));
        let l = score_loss(BaseLoss::Ssm, &[1.0], &[vec![0.0, 0.0]]).unwrap();
        let e = core::f64::consts::E;
        assert!(close(l.value, -libm::log(e / (e + 2.0)), 1e-15));
        assert!(close(l.value, 0.551444, 1e-6));
    }

    #[test]
    fn losses_stay_finite_for_extreme_scores() {
        for kind in [BaseLoss::Bce, BaseLoss::Bpr, BaseLoss::Ssm] {
            let l = score_loss(kind, &[-1e4, 1e4], &[vec![1e4, -1e4], vec![-1e4, 1e4]]).unwrap();
            assert!(l.value.is_finite(), "{kind:?}");
            assert!(l.grad_pos.iter().chain(l.grad_neg.iter().flatten()).all(|g| g.is_finite()));
        }
    }

    #[test]
    fn pairwise_losses_need_negatives() {
        assert!(score_loss(BaseLoss::Bpr, &[0.0], &[vec![]]).is_err());
        assert!(score_loss(BaseLoss::Ssm, &[0.0], &[vec![]]).is_err());
    }

    #[test]
    fn score_level_gradients_match_finite_differences() {
        let pos = [0.4, -1.3];
        let neg = [vec![0.1, 2.0, -0.5], vec![0.9, -0.2, 0.0]];
        let h = 1e-6;
        for kind in [BaseLoss::Bce, BaseLoss::Bpr, BaseLoss::Ssm] {
            let l = score_loss(kind, &pos, &neg).unwrap();
            for p in 0..2 {
                let mut a = pos;
                let mut b = pos;
                a[p] += h;
                b[p] -= h;
                let fd = (score_loss(kind, &a, &neg).unwrap().value - score_loss(kind, &b, &neg).unwrap().value) / (2.0 * h);
                assert!(close(fd, l.grad_pos[p], 1e-8), "{kind:?}");
                for k in 0..3 {
                    let mut a = neg.clone();
                    let mut b = neg.clone();
                    a[p][k] += h;
                    b[p][k] -= h;
                    let fd = (score_loss(kind, &pos, &a).unwrap().value - score_loss(kind, &pos, &b).unwrap().value) / (2.0 * h);
                    assert!(close(fd, l.grad_neg[p][k], 1e-8), "{kind:?}");
                }
            }
        }
    }

    fn uipc_from(rows_u: &[&[f64]], protos_u: &[&[f64]]) -> Model {
        let m = |r: &[&[f64]]| Matrix::from_rows(r).unwrap();
        let params = crate::model::UipcParams::from_parts(
            m(rows_u),
            m(&[&[1.0, 0.0], &[0.0, 1.0]]),
            m(protos_u),
            m(&[&[1.0, 0.0]]),
            Matrix::zeros(protos_u.len(), 1),
        )
        .unwrap();
        Model::Uipc(params)
    }

    #[test]
    fn saturated_max_similarity() {
        let model = uipc_from(&[&[1.0, 0.0], &[0.0, 2.0]], &[&[0.0, 1.0], &[3.0, 0.0]]);
        let [a, b, _, _] = interpretability_terms(&model, &[0, 1], &[0], None);
        assert!(close(a, -2.0, 1e-15));
        assert!(close(b, -2.0, 1e-15));
    }

    #[test]
    fn orthogonal_user_gives_minus_one() {
        let model = uipc_from(&[&[0.0, 1.0], &[0.0, -3.0]], &[&[1.0, 0.0], &[-1.0, 0.0]]);
        let [_, b, _, _] = interpretability_terms(&model, &[0, 1], &[0], None);
        assert!(close(b, -1.0, 1e-15));
    }

    #[test]
    fn max_terms_match_nested_loop() {
        let shape = ModelShape {
            n_users: 3,
            n_items: 2,
            dim: 4,
            n_user_prototypes: 2,
            n_item_prototypes: 2,
            n_anchors: 0,
        };
        let model = Model::init(ModelKind::UipcMf, &shape, 17).unwrap();
        let views = model.prototype_views().unwrap();
        let sim = |u: usize, l: usize| shifted_cosine(views.user_embeddings.row(u), views.user_prototypes.row(l));
        let mut r1 = 0.0;
        for l in 0..2 {
            let mut best = f64::NEG_INFINITY;
            for u in 0..3 {
                best = best.max(sim(u, l));
            }
            r1 -= best / 2.0;
        }
        let mut r2 = 0.0;
        for u in 0..3 {
            let mut best = f64::NEG_INFINITY;
            for l in 0..2 {
                best = best.max(sim(u, l));
            }
            r2 -= best / 3.0;
        }
        let [a, b, _, _] = interpretability_terms(&model, &[0, 1, 2], &[0], None);
        assert!(close(a, r1, 1e-15));
        assert!(close(b, r2, 1e-15));
    }

    #[test]
    fn l1_examples() {
        let m = |r: &[&[f64]]| Matrix::from_rows(r).unwrap();
        let params = crate::model::UipcParams::from_parts(
            m(&[&[0.0, 1.0]]),
            m(&[&[1.0, 0.0], &[0.0, 1.0]]),
            m(&[&[0.0, 1.0]]),
            m(&[&[1.0, 0.0], &[0.0, 1.0]]),
            m(&[&[1.0, -2.0]]),
        )
        .unwrap();
        let mut model = Model::Uipc(params);
        assert!(close(l1_preference_norm(&model, &[0], None), 6.0, 1e-15));
        if let Model::Uipc(p) = &mut model {
            p.connections.scale(2.0);
        }
        assert!(close(l1_preference_norm(&model, &[0], None), 12.0, 1e-15));
        if let Model::Uipc(p) = &mut model {
            p.connections.scale(0.0);
        }
        assert_eq!(l1_preference_norm(&model, &[0], None), 0.0);
    }

    fn small_batch() -> Batch {
        Batch::new(vec![(0, 1), (2, 3), (0, 4)], vec![vec![2, 5], vec![0, 1], vec![3, 5]]).unwrap()
    }

    #[test]
    fn zero_weights_total_is_base() {
        let shape = ModelShape {
            n_users: 6,
            n_items: 6,
            dim: 5,
            n_user_prototypes: 3,
            n_item_prototypes: 4,
            n_anchors: 0,
        };
        let model = Model::init(ModelKind::UipcMf, &shape, 1).unwrap();
        let r = loss_value(&model, &small_batch(), &RegWeights::default(), BaseLoss::Ssm, L2Form::Squared).unwrap();
        assert_eq!(r.total, r.base);
    }

    #[test]
    fn l2_only_adds_weighted_norm() {
        let shape = ModelShape {
            n_users: 6,
            n_items: 6,
            dim: 5,
            n_user_prototypes: 3,
            n_item_prototypes: 4,
            n_anchors: 0,
        };
        let model = Model::init(ModelKind::UipcMf, &shape, 1).unwrap();
        let reg = RegWeights {
            l2: 0.3,
            ..RegWeights::default()
        };
        let direct: f64 = model.tensors().iter().flat_map(|(_, t)| t.as_slice().iter()).map(|x| x * x).sum();
        for (form, norm) in [(L2Form::Squared, direct), (L2Form::Norm, libm::sqrt(direct))] {
            let r = loss_value(&model, &small_batch(), &reg, BaseLoss::Bpr, form).unwrap();
            assert!(close(r.total - r.base, 0.3 * norm, 1e-12));
        }
    }

    #[test]
    fn batch_order_does_not_matter() {
        let shape = ModelShape {
            n_users: 6,
            n_items: 6,
            dim: 5,
            n_user_prototypes: 3,
            n_item_prototypes: 4,
            n_anchors: 0,
        };
        let model = Model::init(ModelKind::UipcMf, &shape, 2).unwrap();
        let reg = RegWeights {
            l2: 0.01,
            proto_to_user: 0.1,
            user_to_proto: 0.2,
            proto_to_item: 0.3,
            item_to_proto: 0.4,
            l1_pref: 0.05,
        };
        let b = small_batch();
        let mut rev = b.clone();
        rev.positives.reverse();
        rev.negatives.reverse();
        for kind in [BaseLoss::Bce, BaseLoss::Bpr, BaseLoss::Ssm] {
            let x = loss_value(&model, &b, &reg, kind, L2Form::Squared).unwrap();
            let y = loss_value(&model, &rev, &reg, kind, L2Form::Squared).unwrap();
            assert!(close(x.total, y.total, 1e-12));
        }
    }
}
