use alloc::vec::Vec;

use rand::Rng;

use super::{ModelShape, INIT_STD};
use crate::data::check_index;
use crate::linalg::{axpy, dot, shifted_cosine, shifted_cosine_backward, Matrix};
use crate::{Error, Result};

/// Learnable tables of UIPC-MF.
///
/// * `user_embeddings`: `N × d`
/// * `item_embeddings`: `M × d`
/// * `user_prototypes`: `Lᵘ × d`
/// * `item_prototypes`: `Lᵗ × d`
/// * `connections`: `Lᵘ × Lᵗ`, entry `(i, j)` links user prototype `i` to
///   item prototype `j` and is shared by every user and item.
#[derive(Debug, Clone, PartialEq)]
pub struct UipcParams {
    pub user_embeddings: Matrix,
    pub item_embeddings: Matrix,
    pub user_prototypes: Matrix,
    pub item_prototypes: Matrix,
    pub connections: Matrix,
}

/// Per-pair decomposition of a UIPC-MF logit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoreBreakdown {
    /// Similarities of the user to each user prototype, in `[0, 2]`.
    pub u_star: Vec<f64>,
    /// Similarities of the item to each item prototype, in `[0, 2]`.
    pub t_star: Vec<f64>,
    /// The user's preference for each item prototype.
    pub preferences: Vec<f64>,
    /// `preferences[j] * t_star[j]`.
    pub prototype_scores: Vec<f64>,
    /// Sum of `prototype_scores`; the model's logit.
    pub total: f64,
}

/// Shifted cosine of `x` against every row of `prototypes`.
pub fn similarity_vector(x: &[f64], prototypes: &Matrix) -> Result<Vec<f64>> {
    if x.len() != prototypes.cols() {
        return Err(Error::DimensionMismatch {
            expected: prototypes.cols(),
            actual: x.len(),
        });
    }
    Ok(sims(x, prototypes))
}

#[inline]
pub(crate) fn sims(x: &[f64], prototypes: &Matrix) -> Vec<f64> {
    prototypes.iter_rows().map(|p| shifted_cosine(x, p)).collect()
}

/// Backpropagates `grad[l]` (gradient w.r.t. `sim(x, p_l)`) into the entity
/// row `x` and every prototype row.
pub(crate) fn sims_backward(x: &[f64], prototypes: &Matrix, grad: &[f64], grad_x: &mut [f64], grad_protos: &mut Matrix) {
    for (l, &g) in grad.iter().enumerate() {
        shifted_cosine_backward(x, prototypes.row(l), g, grad_x, grad_protos.row_mut(l));
    }
}

impl UipcParams {
    pub fn zeros(shape: &ModelShape) -> Self {
        let d = shape.dim;
        Self {
            user_embeddings: Matrix::zeros(shape.n_users, d),
            item_embeddings: Matrix::zeros(shape.n_items, d),
            user_prototypes: Matrix::zeros(shape.n_user_prototypes, d),
            item_prototypes: Matrix::zeros(shape.n_item_prototypes, d),
            connections: Matrix::zeros(shape.n_user_prototypes, shape.n_item_prototypes),
        }
    }

    /// Embeddings and prototypes ~ N(0, 0.1²); connections ~ N(0, 1/(LᵘLᵗ))
    /// so initial logits are O(1).
    pub fn random<R: Rng + ?Sized>(shape: &ModelShape, rng: &mut R) -> Self {
        let d = shape.dim;
        let (lu, lt) = (shape.n_user_prototypes, shape.n_item_prototypes);
        Self {
            user_embeddings: Matrix::random_normal(shape.n_users, d, INIT_STD, rng),
            item_embeddings: Matrix::random_normal(shape.n_items, d, INIT_STD, rng),
            user_prototypes: Matrix::random_normal(lu, d, INIT_STD, rng),
            item_prototypes: Matrix::random_normal(lt, d, INIT_STD, rng),
            connections: Matrix::random_normal(lu, lt, 1.0 / libm::sqrt((lu * lt) as f64), rng),
        }
    }

    /// Assembles parameters from explicit tables, checking shapes.
    pub fn from_parts(
        user_embeddings: Matrix,
        item_embeddings: Matrix,
        user_prototypes: Matrix,
        item_prototypes: Matrix,
        connections: Matrix,
    ) -> Result<Self> {
        let d = user_embeddings.cols();
        for (name, t) in [
            ("item embeddings", &item_embeddings),
            ("user prototypes", &user_prototypes),
            ("item prototypes", &item_prototypes),
        ] {
            if t.cols() != d {
                return Err(Error::InvalidShape(alloc::format!("{name} have {} columns, expected {d}", t.cols())));
            }
        }
        if connections.rows() != user_prototypes.rows() || connections.cols() != item_prototypes.rows() {
            return Err(Error::InvalidShape(alloc::format!(
                "connections are {}x{}, expected {}x{}",
                connections.rows(),
                connections.cols(),
                user_prototypes.rows(),
                item_prototypes.rows()
            )));
        }
        let params = Self {
            user_embeddings,
            item_embeddings,
            user_prototypes,
            item_prototypes,
            connections,
        };
        params.shape().validate(super::ModelKind::UipcMf)?;
        Ok(params)
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
            ("connections", &self.connections),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        alloc::vec![
            ("user_embeddings", &mut self.user_embeddings),
            ("item_embeddings", &mut self.item_embeddings),
            ("user_prototypes", &mut self.user_prototypes),
            ("item_prototypes", &mut self.item_prototypes),
            ("connections", &mut self.connections),
        ]
    }

    fn check_user(&self, user: usize) -> Result<()> {
        check_index("user", user, self.user_embeddings.rows())
    }

    fn check_item(&self, item: usize) -> Result<()> {
        check_index("item", item, self.item_embeddings.rows())
    }

    /// `u*` for a user; panics on an out-of-range index.
    pub fn user_similarities(&self, user: usize) -> Vec<f64> {
        sims(self.user_embeddings.row(user), &self.user_prototypes)
    }

    /// `t*` for an item; panics on an out-of-range index.
    pub fn item_similarities(&self, item: usize) -> Vec<f64> {
        sims(self.item_embeddings.row(item), &self.item_prototypes)
    }

    /// `r_j = Σ_i w_ij · sim(u, p_i^u)` for every item prototype `j`.
    pub fn preference_vector(&self, user: usize) -> Result<Vec<f64>> {
        self.check_user(user)?;
        Ok(self.user_vector(user))
    }

    /// `Σ_i Σ_j w_ij · sim(u, p_i^u) · sim(t, p_j^t)`, evaluated as `<r, t*>`.
    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        self.check_user(user)?;
        self.check_item(item)?;
        Ok(dot(&self.user_vector(user), &self.item_vector(item)))
    }

    pub fn score_breakdown(&self, user: usize, item: usize) -> Result<ScoreBreakdown> {
        self.check_user(user)?;
        self.check_item(item)?;
        let u_star = self.user_similarities(user);
        let t_star = self.item_similarities(item);
        let preferences = self.connections.transpose_mul_vec(&u_star);
        let prototype_scores: Vec<f64> = preferences.iter().zip(&t_star).map(|(r, s)| r * s).collect();
        let total = prototype_scores.iter().sum();
        Ok(ScoreBreakdown {
            u_star,
            t_star,
            preferences,
            prototype_scores,
            total,
        })
    }

    pub(crate) fn user_vector(&self, user: usize) -> Vec<f64> {
        self.connections.transpose_mul_vec(&self.user_similarities(user))
    }

    pub(crate) fn item_vector(&self, item: usize) -> Vec<f64> {
        self.item_similarities(item)
    }

    /// `grad` is with respect to the preference vector `r = Wᵀu*`.
    pub(crate) fn backprop_user(&self, user: usize, grad: &[f64], out: &mut Self) {
        let u = self.user_embeddings.row(user);
        let u_star = sims(u, &self.user_prototypes);
        out.connections.add_outer(1.0, &u_star, grad);
        let grad_u_star = self.connections.mul_vec(grad);
        let mut grad_u = alloc::vec![0.0; u.len()];
        sims_backward(u, &self.user_prototypes, &grad_u_star, &mut grad_u, &mut out.user_prototypes);
        axpy(1.0, &grad_u, out.user_embeddings.row_mut(user));
    }

    /// `grad` is with respect to `t*`.
    pub(crate) fn backprop_item(&self, item: usize, grad: &[f64], out: &mut Self) {
        let t = self.item_embeddings.row(item);
        let mut grad_t = alloc::vec![0.0; t.len()];
        sims_backward(t, &self.item_prototypes, grad, &mut grad_t, &mut out.item_prototypes);
        axpy(1.0, &grad_t, out.item_embeddings.row_mut(item));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use alloc::vec;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    /// Naive double loop with recomputed cosines.
    fn brute_force_score(p: &UipcParams, u: usize, t: usize) -> f64 {
        let mut total = 0.0;
        for i in 0..p.user_prototypes.rows() {
            for j in 0..p.item_prototypes.rows() {
                let su = shifted_cosine(p.user_embeddings.row(u), p.user_prototypes.row(i));
                let st = shifted_cosine(p.item_embeddings.row(t), p.item_prototypes.row(j));
                total += p.connections.get(i, j) * su * st;
            }
        }
        total
    }

    fn random_params(seed: u64, n: usize, m_: usize, d: usize, lu: usize, lt: usize) -> UipcParams {
        let shape = ModelShape {
            n_users: n,
            n_items: m_,
            dim: d,
            n_user_prototypes: lu,
            n_item_prototypes: lt,
            n_anchors: 0,
        };
        UipcParams::random(&shape, &mut stream(seed, "test", 0))
    }

    #[test]
    fn similarity_vector_cases() {
        let protos = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(similarity_vector(&[1.0, 0.0], &protos).unwrap(), vec![2.0, 1.0]);
        assert_eq!(similarity_vector(&[3.0, 0.5], &m(&[&[3.0, 0.5]])).unwrap(), vec![2.0]);
        assert!(matches!(
            similarity_vector(&[1.0, 0.0, 0.0], &protos),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn similarity_vector_matches_per_entry_recomputation() {
        let mut rng = stream(11, "sim", 0);
        let protos = Matrix::random_normal(4, 6, 1.0, &mut rng);
        let x = Matrix::random_normal(1, 6, 1.0, &mut rng);
        let got = similarity_vector(x.row(0), &protos).unwrap();
        for (l, value) in got.iter().enumerate() {
            let p = protos.row(l);
            let cos = x.row(0).iter().zip(p).map(|(a, b)| a * b).sum::<f64>()
                / (libm::sqrt(x.row(0).iter().map(|a| a * a).sum::<f64>()) * libm::sqrt(p.iter().map(|b| b * b).sum::<f64>()));
            assert!((value - (1.0 + cos)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_connections_score_zero() {
        let mut p = random_params(1, 4, 5, 3, 2, 3);
        p.connections.as_mut_slice().fill(0.0);
        for u in 0..4 {
            for t in 0..5 {
                assert_eq!(p.score(u, t).unwrap(), 0.0);
            }
        }
        assert_eq!(p.preference_vector(0).unwrap(), vec![0.0; 3]);
        let b = p.score_breakdown(1, 2).unwrap();
        assert_eq!(b.prototype_scores, vec![0.0; 3]);
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn single_prototype_hand_evaluation() {
        let p = UipcParams::from_parts(
            m(&[&[1.0, 2.0]]),
            m(&[&[-3.0, 1.0]]),
            m(&[&[1.0, 2.0]]),
            m(&[&[-3.0, 1.0]]),
            m(&[&[0.5]]),
        )
        .unwrap();
        assert!((p.score(0, 0).unwrap() - 2.0).abs() < 1e-15);
        let b = p.score_breakdown(0, 0).unwrap();
        assert!((b.prototype_scores[0] - 2.0).abs() < 1e-15);
        assert!((b.total - 2.0).abs() < 1e-15);
    }

    #[test]
    fn preference_hand_evaluation() {
        let p = UipcParams::from_parts(
            m(&[&[0.0, 1.0]]),
            m(&[&[1.0, 0.0], &[0.0, 1.0]]),
            m(&[&[0.0, 1.0]]),
            m(&[&[1.0, 0.0], &[0.0, 1.0]]),
            m(&[&[1.0, -2.0]]),
        )
        .unwrap();
        assert_eq!(p.preference_vector(0).unwrap(), vec![2.0, -4.0]);
    }

    #[test]
    fn three_by_four_matches_double_loop() {
        let p = random_params(5, 6, 7, 5, 3, 4);
        for u in 0..6 {
            for t in 0..7 {
                assert!((p.score(u, t).unwrap() - brute_force_score(&p, u, t)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn out_of_range_indices() {
        let p = random_params(5, 2, 3, 4, 1, 1);
        assert!(matches!(p.score(2, 0), Err(Error::IndexOutOfRange { entity: "user", .. })));
        assert!(matches!(p.score(0, 3), Err(Error::IndexOutOfRange { entity: "item", .. })));
        assert!(p.preference_vector(9).is_err());
        assert!(p.score_breakdown(0, 9).is_err());
    }

    #[test]
    fn mismatched_parts_rejected() {
        let r = UipcParams::from_parts(
            m(&[&[1.0, 0.0]]),
            m(&[&[1.0, 0.0]]),
            m(&[&[1.0, 0.0]]),
            m(&[&[1.0, 0.0]]),
            m(&[&[1.0, 2.0]]),
        );
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn score_equals_preference_dot_t_star(seed in 0u64..1000) {
            let p = random_params(seed, 3, 3, 4, 3, 2);
            let r = p.preference_vector(1).unwrap();
            let t_star = p.item_similarities(2);
            let via_r: f64 = r.iter().zip(&t_star).map(|(a, b)| a * b).sum();
            let s = p.score(1, 2).unwrap();
            prop_assert!((s - via_r).abs() <= 1e-9 * (1.0 + s.abs()));
        }

        #[test]
        fn similarities_stay_in_range(seed in 0u64..1000, scale in 1e-6f64..1e6) {
            let mut p = random_params(seed, 2, 2, 3, 2, 2);
            p.user_embeddings.scale(scale);
            for u in 0..2 {
                prop_assert!(p.user_similarities(u).iter().all(|s| (0.0..=2.0).contains(s)));
            }
        }

        #[test]
        fn score_is_scale_invariant(seed in 0u64..1000, scale in 1e-3f64..1e3) {
            let p = random_params(seed, 3, 3, 4, 2, 3);
            let base = p.score(0, 1).unwrap();
            let mut q = p.clone();
            q.user_embeddings.row_mut(0).iter_mut().for_each(|x| *x *= scale);
            q.item_prototypes.row_mut(2).iter_mut().for_each(|x| *x *= scale);
            let scaled = q.score(0, 1).unwrap();
            prop_assert!((scaled - base).abs() <= 1e-9 * (1.0 + base.abs()));
        }

        #[test]
        fn score_is_linear_in_connections(seed in 0u64..1000) {
            let p = random_params(seed, 2, 2, 3, 3, 2);
            let q = random_params(seed + 1, 2, 2, 3, 3, 2);
            let mut w1 = p.clone();
            let mut w2 = p.clone();
            w2.connections = q.connections.clone();
            let mut sum = p.clone();
            for (s, b) in sum.connections.as_mut_slice().iter_mut().zip(q.connections.as_slice()) {
                *s += b;
            }
            w1.connections = p.connections.clone();
            let lhs = sum.score(1, 0).unwrap();
            let rhs = w1.score(1, 0).unwrap() + w2.score(1, 0).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
