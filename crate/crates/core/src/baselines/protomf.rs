use alloc::vec::Vec;

use rand::Rng;

use crate::data::check_index;
use crate::linalg::{axpy, dot, Matrix};
use crate::model::uipc::{sims, sims_backward};
use crate::model::{ModelShape, INIT_STD};
use crate::Result;

/// ProtoMF: `<u*, W_item t> + <t*, W_user u>` with shifted-cosine similarity
/// vectors against separate user and item prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtoMfParams {
    pub user_embeddings: Matrix,
    pub item_embeddings: Matrix,
    pub user_prototypes: Matrix,
    pub item_prototypes: Matrix,
    /// Maps an item embedding into user-prototype space (`Lᵘ × d`).
    pub item_side_weights: Matrix,
    /// Maps a user embedding into item-prototype space (`Lᵗ × d`).
    pub user_side_weights: Matrix,
}

impl ProtoMfParams {
    pub fn zeros(shape: &ModelShape) -> Self {
        let d = shape.dim;
        let (lu, lt) = (shape.n_user_prototypes, shape.n_item_prototypes);
        Self {
            user_embeddings: Matrix::zeros(shape.n_users, d),
            item_embeddings: Matrix::zeros(shape.n_items, d),
            user_prototypes: Matrix::zeros(lu, d),
            item_prototypes: Matrix::zeros(lt, d),
            item_side_weights: Matrix::zeros(lu, d),
            user_side_weights: Matrix::zeros(lt, d),
        }
    }

    pub fn random<R: Rng + ?Sized>(shape: &ModelShape, rng: &mut R) -> Self {
        let d = shape.dim;
        let (lu, lt) = (shape.n_user_prototypes, shape.n_item_prototypes);
        let w_std = 1.0 / libm::sqrt(d as f64);
        Self {
            user_embeddings: Matrix::random_normal(shape.n_users, d, INIT_STD, rng),
            item_embeddings: Matrix::random_normal(shape.n_items, d, INIT_STD, rng),
            user_prototypes: Matrix::random_normal(lu, d, INIT_STD, rng),
            item_prototypes: Matrix::random_normal(lt, d, INIT_STD, rng),
            item_side_weights: Matrix::random_normal(lu, d, w_std, rng),
            user_side_weights: Matrix::random_normal(lt, d, w_std, rng),
        }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            n_users: self.user_embeddings.rows(),
            n_items: self.item_embeddings.rows(),
            dim: self.user_embeddings.cols(),
            n_user_prototypes: self.user_prototypes.rows(),
            n_item_prototypes: self.item_prototypes.rows(),
            n_anchors: 0,
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        alloc::vec![
            ("user_embeddings", &self.user_embeddings),
            ("item_embeddings", &self.item_embeddings),
            ("user_prototypes", &self.user_prototypes),
            ("item_prototypes", &self.item_prototypes),
            ("item_side_weights", &self.item_side_weights),
            ("user_side_weights", &self.user_side_weights),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        alloc::vec![
            ("user_embeddings", &mut self.user_embeddings),
            ("item_embeddings", &mut self.item_embeddings),
            ("user_prototypes", &mut self.user_prototypes),
            ("item_prototypes", &mut self.item_prototypes),
            ("item_side_weights", &mut self.item_side_weights),
            ("user_side_weights", &mut self.user_side_weights),
        ]
    }

    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        check_index("user", user, self.user_embeddings.rows())?;
        check_index("item", item, self.item_embeddings.rows())?;
        Ok(dot(&self.user_vector(user), &self.item_vector(item)))
    }

    /// `[W_itemᵀ u* ; W_user u]`, paired with `[t ; t*]` on the item side.
    pub(crate) fn user_vector(&self, user: usize) -> Vec<f64> {
        let u = self.user_embeddings.row(user);
        let u_star = sims(u, &self.user_prototypes);
        let mut out = self.item_side_weights.transpose_mul_vec(&u_star);
        out.extend(self.user_side_weights.mul_vec(u));
        out
    }

    pub(crate) fn item_vector(&self, item: usize) -> Vec<f64> {
        let t = self.item_embeddings.row(item);
        let mut out = t.to_vec();
        out.extend(sims(t, &self.item_prototypes));
        out
    }

    pub(crate) fn backprop_user(&self, user: usize, grad: &[f64], out: &mut Self) {
        let d = self.user_embeddings.cols();
        let (grad_a, grad_b) = grad.split_at(d);
        let u = self.user_embeddings.row(user);
        let u_star = sims(u, &self.user_prototypes);
        out.item_side_weights.add_outer(1.0, &u_star, grad_a);
        let grad_u_star = self.item_side_weights.mul_vec(grad_a);
        out.user_side_weights.add_outer(1.0, grad_b, u);
        let mut grad_u = self.user_side_weights.transpose_mul_vec(grad_b);
        sims_backward(u, &self.user_prototypes, &grad_u_star, &mut grad_u, &mut out.user_prototypes);
        axpy(1.0, &grad_u, out.user_embeddings.row_mut(user));
    }

    pub(crate) fn backprop_item(&self, item: usize, grad: &[f64], out: &mut Self) {
        let d = self.item_embeddings.cols();
        let (grad_t, grad_t_star) = grad.split_at(d);
        let t = self.item_embeddings.row(item);
        let mut g = grad_t.to_vec();
        sims_backward(t, &self.item_prototypes, grad_t_star, &mut g, &mut out.item_prototypes);
        axpy(1.0, &g, out.item_embeddings.row_mut(item));
    }
}
