//! Adam and Adagrad over every parameter table of a [`Model`].

use alloc::vec;
use alloc::vec::Vec;

use crate::model::Model;
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;
pub const ADAGRAD_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OptimizerKind {
    #[default]
    Adam,
    Adagrad,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Adagrad => "adagrad",
        }
    }
}

impl core::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "adagrad" => Ok(OptimizerKind::Adagrad),
            other => Err(Error::Parse(alloc::format!("unknown optimizer {other:?} (expected adam or adagrad)"))),
        }
    }
}

/// First and second moments of one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamMoments {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One Adam update at 1-based step `t`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamMoments, t: u64, lr: f64) -> Result<()> {
    check_lengths(params.len(), grads.len())?;
    check_lengths(params.len(), state.m.len())?;
    check_lengths(params.len(), state.v.len())?;
    let t = i32::try_from(t.max(1)).unwrap_or(i32::MAX);
    let c1 = 1.0 - libm::pow(ADAM_BETA1, t as f64);
    let c2 = 1.0 - libm::pow(ADAM_BETA2, t as f64);
    for i in 0..params.len() {
        let g = grads[i];
        let m = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        let v = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        params[i] -= lr * (m / c1) / (libm::sqrt(v / c2) + ADAM_EPSILON);
    }
    Ok(())
}

/// One Adagrad update; `accum` holds the running sum of squared gradients.
pub fn adagrad_step(params: &mut [f64], grads: &[f64], accum: &mut [f64], lr: f64) -> Result<()> {
    check_lengths(params.len(), grads.len())?;
    check_lengths(params.len(), accum.len())?;
    for i in 0..params.len() {
        let g = grads[i];
        accum[i] += g * g;
        params[i] -= lr * g / (libm::sqrt(accum[i]) + ADAGRAD_EPSILON);
    }
    Ok(())
}

fn check_lengths(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

/// Optimizer state for a whole model, one table per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Adam { step: u64, moments: Vec<AdamMoments> },
    Adagrad { accum: Vec<Vec<f64>> },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, model: &Model) -> Self {
        let lens = model.tensors().into_iter().map(|(_, t)| t.len());
        match kind {
            OptimizerKind::Adam => Optimizer::Adam {
                step: 0,
                moments: lens.map(AdamMoments::new).collect(),
            },
            OptimizerKind::Adagrad => Optimizer::Adagrad {
                accum: lens.map(|n| vec![0.0; n]).collect(),
            },
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            Optimizer::Adam { .. } => OptimizerKind::Adam,
            Optimizer::Adagrad { .. } => OptimizerKind::Adagrad,
        }
    }

    /// Applies `grads` (a model of the same variant and shape) to `model`.
    pub fn step(&mut self, model: &mut Model, grads: &Model, lr: f64) -> Result<()> {
        if model.kind() != grads.kind() || model.shape() != grads.shape() {
            return Err(Error::InvalidShape("gradient does not match model".into()));
        }
        let grad_tensors = grads.tensors();
        match self {
            Optimizer::Adam { step, moments } => {
                *step += 1;
                for (((_, p), (_, g)), st) in model.tensors_mut().into_iter().zip(&grad_tensors).zip(moments) {
                    adam_step(p.as_mut_slice(), g.as_slice(), st, *step, lr)?;
                }
            }
            Optimizer::Adagrad { accum } => {
                for (((_, p), (_, g)), acc) in model.tensors_mut().into_iter().zip(&grad_tensors).zip(accum) {
                    adagrad_step(p.as_mut_slice(), g.as_slice(), acc, lr)?;
                }
            }
        }
        Ok(())
    }
}
