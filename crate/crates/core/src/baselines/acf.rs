use alloc::vec::Vec;

use rand::Rng;

use crate::data::check_index;
use crate::linalg::{axpy, dot, softmax_in_place, Matrix};
use crate::model::{ModelShape, INIT_STD};
use crate::Result;

/// Anchor-based CF: users and items are convex combinations of shared
/// anchors, with coefficients given by a softmax over learned logits.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfParams {
    /// `K × d`
    pub anchors: Matrix,
    /// `N × K`
    pub user_logits: Matrix,
    /// `M × K`
    pub item_logits: Matrix,
}

impl AcfParams {
    pub fn zeros(shape: &ModelShape) -> Self {
        Self {
            anchors: Matrix::zeros(shape.n_anchors, shape.dim),
            user_logits: Matrix::zeros(shape.n_users, shape.n_anchors),
            item_logits: Matrix::zeros(shape.n_items, shape.n_anchors),
        }
    }

    pub fn random<R: Rng + ?Sized>(shape: &ModelShape, rng: &mut R) -> Self {
        Self {
            anchors: Matrix::random_normal(shape.n_anchors, shape.dim, 1.0 / libm::sqrt(shape.dim as f64), rng),
            user_logits: Matrix::random_normal(shape.n_users, shape.n_anchors, INIT_STD, rng),
            item_logits: Matrix::random_normal(shape.n_items, shape.n_anchors, INIT_STD, rng),
        }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            n_users: self.user_logits.rows(),
            n_items: self.item_logits.rows(),
            dim: self.anchors.cols(),
            n_user_prototypes: 0,
            n_item_prototypes: 0,
            n_anchors: self.anchors.rows(),
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        alloc::vec![
            ("anchors", &self.anchors),
            ("user_logits", &self.user_logits),
            ("item_logits", &self.item_logits),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        alloc::vec![
            ("anchors", &mut self.anchors),
            ("user_logits", &mut self.user_logits),
            ("item_logits", &mut self.item_logits),
        ]
    }

    /// Softmax of a logit row: non-negative, sums to one.
    pub fn coefficients(logits: &[f64]) -> Vec<f64> {
        let mut c = logits.to_vec();
        softmax_in_place(&mut c);
        c
    }

    pub fn user_coefficients(&self, user: usize) -> Vec<f64> {
        Self::coefficients(self.user_logits.row(user))
    }

    pub fn item_coefficients(&self, item: usize) -> Vec<f64> {
        Self::coefficients(self.item_logits.row(item))
    }

    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        check_index("user", user, self.user_logits.rows())?;
        check_index("item", item, self.item_logits.rows())?;
        Ok(dot(&self.user_vector(user), &self.item_vector(item)))
    }

    fn represent(&self, logits: &[f64]) -> Vec<f64> {
        self.anchors.transpose_mul_vec(&Self::coefficients(logits))
    }

    pub(crate) fn user_vector(&self, user: usize) -> Vec<f64> {
        self.represent(self.user_logits.row(user))
    }

    pub(crate) fn item_vector(&self, item: usize) -> Vec<f64> {
        self.represent(self.item_logits.row(item))
    }

    fn backprop_rep(&self, logits: &[f64], grad: &[f64], grad_anchors: &mut Matrix, grad_logits: &mut [f64]) {
        let c = Self::coefficients(logits);
        let grad_c = self.anchors.mul_vec(grad);
        grad_anchors.add_outer(1.0, &c, grad);
        let mean = dot(&c, &grad_c);
        for k in 0..c.len() {
            grad_logits[k] += c[k] * (grad_c[k] - mean);
        }
    }

    pub(crate) fn backprop_user(&self, user: usize, grad: &[f64], out: &mut Self) {
        let mut g = alloc::vec![0.0; self.anchors.rows()];
        self.backprop_rep(self.user_logits.row(user), grad, &mut out.anchors, &mut g);
        axpy(1.0, &g, out.user_logits.row_mut(user));
    }

    pub(crate) fn backprop_item(&self, item: usize, grad: &[f64], out: &mut Self) {
        let mut g = alloc::vec![0.0; self.anchors.rows()];
        self.backprop_rep(self.item_logits.row(item), grad, &mut out.anchors, &mut g);
        axpy(1.0, &g, out.item_logits.row_mut(item));
    }
}
