use alloc::vec::Vec;

use rand::Rng;

use crate::data::check_index;
use crate::linalg::{axpy, dot, Matrix};
use crate::model::{ModelShape, INIT_STD};
use crate::Result;

/// Classical matrix factorization: the logit is `<u, t>`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfParams {
    pub user_embeddings: Matrix,
    pub item_embeddings: Matrix,
}

impl MfParams {
    pub fn zeros(shape: &ModelShape) -> Self {
        Self {
            user_embeddings: Matrix::zeros(shape.n_users, shape.dim),
            item_embeddings: Matrix::zeros(shape.n_items, shape.dim),
        }
    }

    pub fn random<R: Rng + ?Sized>(shape: &ModelShape, rng: &mut R) -> Self {
        Self {
            user_embeddings: Matrix::random_normal(shape.n_users, shape.dim, INIT_STD, rng),
            item_embeddings: Matrix::random_normal(shape.n_items, shape.dim, INIT_STD, rng),
        }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            n_users: self.user_embeddings.rows(),
            n_items: self.item_embeddings.rows(),
            dim: self.user_embeddings.cols(),
            n_user_prototypes: 0,
            n_item_prototypes: 0,
            n_anchors: 0,
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        alloc::vec![("user_embeddings", &self.user_embeddings), ("item_embeddings", &self.item_embeddings)]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        alloc::vec![
            ("user_embeddings", &mut self.user_embeddings),
            ("item_embeddings", &mut self.item_embeddings)
        ]
    }

    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        check_index("user", user, self.user_embeddings.rows())?;
        check_index("item", item, self.item_embeddings.rows())?;
        Ok(dot(self.user_embeddings.row(user), self.item_embeddings.row(item)))
    }

    pub(crate) fn user_vector(&self, user: usize) -> Vec<f64> {
        self.user_embeddings.row(user).to_vec()
    }

    pub(crate) fn item_vector(&self, item: usize) -> Vec<f64> {
        self.item_embeddings.row(item).to_vec()
    }

    pub(crate) fn backprop_user(&self, user: usize, grad: &[f64], out: &mut Self) {
        axpy(1.0, grad, out.user_embeddings.row_mut(user));
    }

    pub(crate) fn backprop_item(&self, item: usize, grad: &[f64], out: &mut Self) {
        axpy(1.0, grad, out.item_embeddings.row_mut(item));
    }
}
