//! UIPC-MF parameters and the model-agnostic scoring interface.
//!
//! Every model scores a pair as an inner product `<φ(u), ψ(t)>` between a
//! user-side and an item-side vector. For UIPC-MF `φ(u)` is the preference
//! vector `r = Wᵀu*` and `ψ(t)` the item similarity vector `t*`, which is
//! exactly the per-prototype decomposition used for explanations. Training
//! code accumulates gradients with respect to these vectors and backpropagates
//! once per distinct user or item in a batch.

pub(crate) mod uipc;

use alloc::vec::Vec;

pub use uipc::{similarity_vector, ScoreBreakdown, UipcParams};

use crate::baselines::{AcfParams, MfParams, ProtoMfParams};
use crate::linalg::{dot, Matrix};
use crate::{rng, Error, Result};

/// Standard deviation of the initial embedding and prototype entries.
pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ModelKind {
    #[cfg_attr(feature = "serde", serde(rename = "mf"))]
    Mf,
    #[cfg_attr(feature = "serde", serde(rename = "acf"))]
    Acf,
    #[cfg_attr(feature = "serde", serde(rename = "protomf"))]
    ProtoMf,
    #[cfg_attr(feature = "serde", serde(rename = "uipc-mf"))]
    UipcMf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Mf, ModelKind::Acf, ModelKind::ProtoMf, ModelKind::UipcMf];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mf => "mf",
            ModelKind::Acf => "acf",
            ModelKind::ProtoMf => "protomf",
            ModelKind::UipcMf => "uipc-mf",
        }
    }

    /// Whether the model has user and item prototypes (and so the
    /// interpretability regularizers apply).
    pub fn has_prototypes(self) -> bool {
        matches!(self, ModelKind::ProtoMf | ModelKind::UipcMf)
    }
}

impl core::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(alloc::format!("unknown model kind {s:?}")))
    }
}

/// Sizes of every parameter table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelShape {
    pub n_users: usize,
    pub n_items: usize,
    pub dim: usize,
    pub n_user_prototypes: usize,
    pub n_item_prototypes: usize,
    /// ACF anchor count.
    pub n_anchors: usize,
}

impl ModelShape {
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidShape(msg.into()));
        if self.n_users == 0 || self.n_items == 0 {
            return bad("model needs at least one user and one item");
        }
        if self.dim == 0 {
            return bad("embedding size must be at least 1");
        }
        match kind {
            ModelKind::Mf => {}
            ModelKind::Acf => {
                if self.n_anchors == 0 {
                    return bad("ACF needs at least one anchor");
                }
            }
            ModelKind::ProtoMf | ModelKind::UipcMf => {
                if self.n_user_prototypes == 0 || self.n_item_prototypes == 0 {
                    return bad("prototype counts must be at least 1");
                }
                if self.n_user_prototypes > self.n_users {
                    return bad("more user prototypes than users");
                }
                if self.n_item_prototypes > self.n_items {
                    return bad("more item prototypes than items");
                }
            }
        }
        Ok(())
    }
}

/// Number of learnable scalars a model of `kind` allocates for `shape`.
///
/// With `K` prototypes per side (or `K` anchors) and `K = d`, these reduce to
/// `(N+M)d`, `(N+M)d + Kd`, `(N+M)d + 4Kd` and `(N+M)d + 2Kd + K²`.
pub fn parameter_count(shape: &ModelShape, kind: ModelKind) -> usize {
    let ModelShape {
        n_users: n,
        n_items: m,
        dim: d,
        n_user_prototypes: lu,
        n_item_prototypes: lt,
        n_anchors: k,
    } = *shape;
    let embeddings = (n + m) * d;
    match kind {
        ModelKind::Mf => embeddings,
        // coefficient logits per entity plus the shared anchors
        ModelKind::Acf => (n + m) * k + k * d,
        ModelKind::ProtoMf => embeddings + (lu + lt) * d + (lu + lt) * d,
        ModelKind::UipcMf => embeddings + (lu + lt) * d + lu * lt,
    }
}

/// Read-only pair scoring.
pub trait Scorer {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;
    /// Logit for `(user, item)`; indices must be in range.
    fn score(&self, user: usize, item: usize) -> f64;

    fn score_items(&self, user: usize, items: &[usize]) -> Vec<f64> {
        items.iter().map(|&t| self.score(user, t)).collect()
    }
}

/// Borrowed prototype-side tables of a prototype model.
pub struct PrototypeViews<'a> {
    pub user_embeddings: &'a Matrix,
    pub user_prototypes: &'a Matrix,
    pub item_embeddings: &'a Matrix,
    pub item_prototypes: &'a Matrix,
}

pub struct PrototypeViewsMut<'a> {
    pub user_embeddings: &'a mut Matrix,
    pub user_prototypes: &'a mut Matrix,
    pub item_embeddings: &'a mut Matrix,
    pub item_prototypes: &'a mut Matrix,
}

/// Parameters of any supported model. A value of the same variant and shape
/// doubles as a gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Mf(MfParams),
    Acf(AcfParams),
    ProtoMf(ProtoMfParams),
    Uipc(UipcParams),
}

macro_rules! dispatch {
    ($self:expr, $p:ident => $body:expr) => {
        match $self {
            Model::Mf($p) => $body,
            Model::Acf($p) => $body,
            Model::ProtoMf($p) => $body,
            Model::Uipc($p) => $body,
        }
    };
}

impl Model {
    /// Random initialization from the `(seed, "init")` stream.
    pub fn init(kind: ModelKind, shape: &ModelShape, seed: u64) -> Result<Self> {
        shape.validate(kind)?;
        let mut rng = rng::stream(seed, "init", 0);
        Ok(match kind {
            ModelKind::Mf => Model::Mf(MfParams::random(shape, &mut rng)),
            ModelKind::Acf => Model::Acf(AcfParams::random(shape, &mut rng)),
            ModelKind::ProtoMf => Model::ProtoMf(ProtoMfParams::random(shape, &mut rng)),
            ModelKind::UipcMf => Model::Uipc(UipcParams::random(shape, &mut rng)),
        })
    }

    /// Rebuilds a model from tensors in [`Model::tensors`] order.
    pub fn from_tensors(kind: ModelKind, shape: &ModelShape, tensors: Vec<Matrix>) -> Result<Self> {
        let mut model = Model::zeros(kind, shape)?;
        let slots = model.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::DimensionMismatch {
                expected: slots.len(),
                actual: tensors.len(),
            });
        }
        for ((name, slot), tensor) in slots.into_iter().zip(tensors) {
            if slot.rows() != tensor.rows() || slot.cols() != tensor.cols() {
                return Err(Error::InvalidShape(alloc::format!(
                    "{name}: expected {}x{}, got {}x{}",
                    slot.rows(),
                    slot.cols(),
                    tensor.rows(),
                    tensor.cols()
                )));
            }
            *slot = tensor;
        }
        model.validate()?;
        Ok(model)
    }

    pub fn zeros(kind: ModelKind, shape: &ModelShape) -> Result<Self> {
        shape.validate(kind)?;
        Ok(match kind {
            ModelKind::Mf => Model::Mf(MfParams::zeros(shape)),
            ModelKind::Acf => Model::Acf(AcfParams::zeros(shape)),
            ModelKind::ProtoMf => Model::ProtoMf(ProtoMfParams::zeros(shape)),
            ModelKind::UipcMf => Model::Uipc(UipcParams::zeros(shape)),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Mf(_) => ModelKind::Mf,
            Model::Acf(_) => ModelKind::Acf,
            Model::ProtoMf(_) => ModelKind::ProtoMf,
            Model::Uipc(_) => ModelKind::UipcMf,
        }
    }

    pub fn shape(&self) -> ModelShape {
        dispatch!(self, p => p.shape())
    }

    /// Named parameter tables in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        dispatch!(self, p => p.tensors())
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        dispatch!(self, p => p.tensors_mut())
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.tensors_mut().into_iter().for_each(|(_, t)| t.as_mut_slice().fill(0.0));
        out
    }

    /// Total learnable scalars actually allocated.
    pub fn parameter_total(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Shapes agree with [`Model::shape`] and every entry is finite.
    pub fn validate(&self) -> Result<()> {
        self.shape().validate(self.kind())?;
        for (name, t) in self.tensors() {
            if !t.is_finite() {
                return Err(Error::InvalidShape(alloc::format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn user_vector(&self, user: usize) -> Vec<f64> {
        dispatch!(self, p => p.user_vector(user))
    }

    pub fn item_vector(&self, item: usize) -> Vec<f64> {
        dispatch!(self, p => p.item_vector(item))
    }

    /// Adds the gradient of `<grad, φ(user)>` to `out`.
    pub fn backprop_user(&self, user: usize, grad: &[f64], out: &mut Model) {
        match (self, out) {
            (Model::Mf(p), Model::Mf(g)) => p.backprop_user(user, grad, g),
            (Model::Acf(p), Model::Acf(g)) => p.backprop_user(user, grad, g),
            (Model::ProtoMf(p), Model::ProtoMf(g)) => p.backprop_user(user, grad, g),
            (Model::Uipc(p), Model::Uipc(g)) => p.backprop_user(user, grad, g),
            _ => panic!("gradient buffer does not match model kind"),
        }
    }

    /// Adds the gradient of `<grad, ψ(item)>` to `out`.
    pub fn backprop_item(&self, item: usize, grad: &[f64], out: &mut Model) {
        match (self, out) {
            (Model::Mf(p), Model::Mf(g)) => p.backprop_item(item, grad, g),
            (Model::Acf(p), Model::Acf(g)) => p.backprop_item(item, grad, g),
            (Model::ProtoMf(p), Model::ProtoMf(g)) => p.backprop_item(item, grad, g),
            (Model::Uipc(p), Model::Uipc(g)) => p.backprop_item(item, grad, g),
            _ => panic!("gradient buffer does not match model kind"),
        }
    }

    pub fn prototype_views(&self) -> Option<PrototypeViews<'_>> {
        match self {
            Model::ProtoMf(p) => Some(PrototypeViews {
                user_embeddings: &p.user_embeddings,
                user_prototypes: &p.user_prototypes,
                item_embeddings: &p.item_embeddings,
                item_prototypes: &p.item_prototypes,
            }),
            Model::Uipc(p) => Some(PrototypeViews {
                user_embeddings: &p.user_embeddings,
                user_prototypes: &p.user_prototypes,
                item_embeddings: &p.item_embeddings,
                item_prototypes: &p.item_prototypes,
            }),
            _ => None,
        }
    }

    pub fn prototype_views_mut(&mut self) -> Option<PrototypeViewsMut<'_>> {
        match self {
            Model::ProtoMf(p) => Some(PrototypeViewsMut {
                user_embeddings: &mut p.user_embeddings,
                user_prototypes: &mut p.user_prototypes,
                item_embeddings: &mut p.item_embeddings,
                item_prototypes: &mut p.item_prototypes,
            }),
            Model::Uipc(p) => Some(PrototypeViewsMut {
                user_embeddings: &mut p.user_embeddings,
                user_prototypes: &mut p.user_prototypes,
                item_embeddings: &mut p.item_embeddings,
                item_prototypes: &mut p.item_prototypes,
            }),
            _ => None,
        }
    }

    pub fn as_uipc(&self) -> Option<&UipcParams> {
        match self {
            Model::Uipc(p) => Some(p),
            _ => None,
        }
    }
}

impl Scorer for Model {
    fn n_users(&self) -> usize {
        self.shape().n_users
    }

    fn n_items(&self) -> usize {
        self.shape().n_items
    }

    fn score(&self, user: usize, item: usize) -> f64 {
        dot(&self.user_vector(user), &self.item_vector(item))
    }

    fn score_items(&self, user: usize, items: &[usize]) -> Vec<f64> {
        let q = self.user_vector(user);
        items.iter().map(|&t| dot(&q, &self.item_vector(t))).collect()
    }
}
