use uipc_core::losses::{loss_value, total_loss, BaseLoss, Batch, L2Form, RegWeights};
use uipc_core::model::{ModelKind, ModelShape};
use uipc_core::Model;

const STEP: f64 = 1e-6;
const TOLERANCE: f64 = 1e-5;

fn shape() -> ModelShape {
    ModelShape {
        n_users: 6,
        n_items: 6,
        dim: 5,
        n_user_prototypes: 3,
        n_item_prototypes: 4,
        n_anchors: 4,
    }
}

fn batch() -> Batch {
    Batch::new(
        vec![(0, 1), (2, 3), (0, 4), (5, 0)],
        vec![vec![2, 5], vec![0, 1], vec![3, 5], vec![1, 4]],
    )
    .unwrap()
}

/// Largest per-tensor relative error `‖a − n‖∞ / max(‖a‖∞, ‖n‖∞)`.
fn worst_relative_error(model: &Model, reg: &RegWeights, base: BaseLoss, form: L2Form) -> Vec<(&'static str, f64)> {
    let b = batch();
    let (_, grads) = total_loss(model, &b, reg, base, form).unwrap();
    let analytic: Vec<(&'static str, Vec<f64>)> =
        grads.tensors().into_iter().map(|(n, t)| (n, t.as_slice().to_vec())).collect();
    let mut probe = model.clone();
    let mut out = Vec::new();
    for (t, (name, grad)) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; grad.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.tensors()[t].1.as_slice()[i];
            probe.tensors_mut()[t].1.as_mut_slice()[i] = orig + STEP;
            let up = loss_value(&probe, &b, reg, base, form).unwrap().total;
            probe.tensors_mut()[t].1.as_mut_slice()[i] = orig - STEP;
            let down = loss_value(&probe, &b, reg, base, form).unwrap().total;
            probe.tensors_mut()[t].1.as_mut_slice()[i] = orig;
            *slot = (up - down) / (2.0 * STEP);
        }
        let diff = grad.iter().zip(&numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
        let scale = grad.iter().chain(&numeric).map(|x| x.abs()).fold(0.0, f64::max);
        let rel = if scale == 0.0 { 0.0 } else { diff / scale };
        out.push((*name, rel));
    }
    out
}

fn assert_matches(kind: ModelKind, reg: RegWeights, base: BaseLoss, form: L2Form, seed: u64) {
    let model = Model::init(kind, &shape(), seed).unwrap();
    for (name, rel) in worst_relative_error(&model, &reg, base, form) {
        assert!(rel <= TOLERANCE, "{kind} {base:?} {reg:?}: tensor {name} rel err {rel:e}");
    }
}

#[test]
fn base_losses_for_every_model() {
    for kind in ModelKind::ALL {
        for base in [BaseLoss::Bce, BaseLoss::Bpr, BaseLoss::Ssm] {
            assert_matches(kind, RegWeights::default(), base, L2Form::Squared, 3);
        }
    }
}

#[test]
fn each_regularizer_alone() {
    let single = [
        RegWeights { l2: 0.7, ..Default::default() },
        RegWeights { proto_to_user: 0.9, ..Default::default() },
        RegWeights { user_to_proto: 0.9, ..Default::default() },
        RegWeights { proto_to_item: 0.9, ..Default::default() },
        RegWeights { item_to_proto: 0.9, ..Default::default() },
        RegWeights { l1_pref: 0.4, ..Default::default() },
    ];
    for reg in single {
        for base in [BaseLoss::Bce, BaseLoss::Bpr, BaseLoss::Ssm] {
            assert_matches(ModelKind::UipcMf, reg, base, L2Form::Squared, 11);
        }
        assert_matches(ModelKind::ProtoMf, reg, BaseLoss::Ssm, L2Form::Squared, 11);
    }
}

#[test]
fn everything_at_once() {
    let reg = RegWeights {
        l2: 0.05,
        proto_to_user: 0.3,
        user_to_proto: 0.2,
        proto_to_item: 0.4,
        item_to_proto: 0.1,
        l1_pref: 0.25,
    };
    for seed in [1, 2, 3] {
        for form in [L2Form::Squared, L2Form::Norm] {
            for base in [BaseLoss::Bce, BaseLoss::Bpr, BaseLoss::Ssm] {
                assert_matches(ModelKind::UipcMf, reg, base, form, seed);
            }
        }
    }
}

#[test]
fn unused_entities_get_no_base_gradient() {
    let model = Model::init(ModelKind::Mf, &shape(), 5).unwrap();
    let b = Batch::new(vec![(1, 2)], vec![vec![3]]).unwrap();
    let (_, grads) = total_loss(&model, &b, &RegWeights::default(), BaseLoss::Bpr, L2Form::Squared).unwrap();
    let users = grads.tensors()[0].1.clone();
    for u in [0, 2, 3, 4, 5] {
        assert!(users.row(u).iter().all(|&g| g == 0.0));
    }
    assert!(users.row(1).iter().any(|&g| g != 0.0));
}
