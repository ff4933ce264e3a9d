//! Mini-batch training with early stopping, and seeded random search.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{NegativeSampler, PopularityTable, SamplingMode, SplitBundle, Stage};
use crate::eval::{evaluate_cases, EvalConfig};
use crate::losses::{total_loss, BaseLoss, Batch, L2Form, LossReport, RegWeights};
use crate::model::{Model, ModelKind, ModelShape};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// Cutoff used for model selection.
pub const SELECTION_CUTOFF: usize = 10;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub base_loss: BaseLoss,
    /// Negatives per positive interaction.
    pub n_neg: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub reg: RegWeights,
    pub l2_form: L2Form,
    pub sampling: SamplingMode,
    pub seed: u64,
    pub dim: usize,
    pub n_user_prototypes: usize,
    pub n_item_prototypes: usize,
    /// ACF only.
    pub n_anchors: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_loss: BaseLoss::Ssm,
            n_neg: 20,
            batch_size: 128,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            max_epochs: 100,
            patience: 10,
            reg: RegWeights::default(),
            l2_form: L2Form::Squared,
            sampling: SamplingMode::Uniform,
            seed: 0,
            dim: 32,
            n_user_prototypes: 16,
            n_item_prototypes: 16,
            n_anchors: 16,
        }
    }
}

/// Value assigned to a named hyperparameter.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(untagged))]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Text(String),
}

impl core::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Text(v) => f.write_str(v),
        }
    }
}

impl ParamValue {
    fn as_f64(&self, key: &str) -> Result<f64> {
        match self {
            ParamValue::Int(v) => Ok(*v as f64),
            ParamValue::Real(v) => Ok(*v),
            ParamValue::Text(t) => t
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(alloc::format!("{key}: expected a number, got {t:?}"))),
        }
    }

    fn as_usize(&self, key: &str) -> Result<usize> {
        let v = match self {
            ParamValue::Int(v) => *v as f64,
            other => other.as_f64(key)?,
        };
        if v < 0.0 || v.fract() != 0.0 || v > usize::MAX as f64 {
            return Err(Error::InvalidConfig(alloc::format!("{key}: expected a non-negative integer, got {v}")));
        }
        Ok(v as usize)
    }

    fn as_text(&self) -> String {
        self.to_string()
    }
}

/// Hyperparameter names, as they appear in configuration files.
pub const PARAM_KEYS: [&str; 18] = [
    "Embedding size",
    "λ_L2",
    "Base loss",
    "Sampling",
    "Neg. samples",
    "Batch size",
    "Optimizer",
    "LR",
    "# User prototypes",
    "# Item prototypes",
    "λ_1",
    "λ_2",
    "λ_3",
    "λ_4",
    "λ_L1",
    "# Anchors",
    "Max epochs",
    "Patience",
];

/// Case, spacing and punctuation insensitive; `λ` may be spelled `lambda`.
fn normalize_key(key: &str) -> String {
    key.replace('λ', "lambda")
        .chars()
        .filter(|c| !matches!(c, ' ' | '_' | '.' | '#' | '-'))
        .flat_map(char::to_lowercase)
        .collect()
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max epochs must be at least 1".into()));
        }
        if self.n_neg == 0 {
            return Err(Error::InvalidConfig("negative samples must be at least 1".into()));
        }
        self.reg.validate()
    }

    pub fn model_shape(&self, n_users: usize, n_items: usize) -> ModelShape {
        ModelShape {
            n_users,
            n_items,
            dim: self.dim,
            n_user_prototypes: self.n_user_prototypes,
            n_item_prototypes: self.n_item_prototypes,
            n_anchors: self.n_anchors,
        }
    }

    /// Sets one hyperparameter by name (see [`PARAM_KEYS`]).
    pub fn set_param(&mut self, key: &str, value: &ParamValue) -> Result<()> {
        match normalize_key(key).as_str() {
            "embeddingsize" => self.dim = value.as_usize(key)?,
            "lambdal2" => self.reg.l2 = value.as_f64(key)?,
            "baseloss" => self.base_loss = value.as_text().parse()?,
            "sampling" => self.sampling = value.as_text().parse()?,
            "negsamples" => self.n_neg = value.as_usize(key)?,
            "batchsize" => self.batch_size = value.as_usize(key)?,
            "optimizer" => self.optimizer = value.as_text().parse()?,
            "lr" => self.learning_rate = value.as_f64(key)?,
            "userprototypes" => self.n_user_prototypes = value.as_usize(key)?,
            "itemprototypes" => self.n_item_prototypes = value.as_usize(key)?,
            "lambda1" => self.reg.proto_to_user = value.as_f64(key)?,
            "lambda2" => self.reg.user_to_proto = value.as_f64(key)?,
            "lambda3" => self.reg.proto_to_item = value.as_f64(key)?,
            "lambda4" => self.reg.item_to_proto = value.as_f64(key)?,
            "lambdal1" => self.reg.l1_pref = value.as_f64(key)?,
            "anchors" => self.n_anchors = value.as_usize(key)?,
            "maxepochs" => self.max_epochs = value.as_usize(key)?,
            "patience" => self.patience = value.as_usize(key)?,
            "l2form" => {
                self.l2_form = match value.as_text().to_ascii_lowercase().as_str() {
                    "squared" => L2Form::Squared,
                    "norm" => L2Form::Norm,
                    other => return Err(Error::InvalidConfig(alloc::format!("{key}: unknown form {other:?}"))),
                }
            }
            _ => {
                return Err(Error::InvalidConfig(alloc::format!(
                    "unknown hyperparameter {key:?}; known: {}",
                    PARAM_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Every hyperparameter under its canonical name, in [`PARAM_KEYS`] order.
    pub fn params(&self) -> Vec<(&'static str, ParamValue)> {
        let int = |v: usize| ParamValue::Int(v as i64);
        let text = |v: &str| ParamValue::Text(v.into());
        let values = [
            int(self.dim),
            ParamValue::Real(self.reg.l2),
            text(self.base_loss.name()),
            text(self.sampling.name()),
            int(self.n_neg),
            int(self.batch_size),
            text(self.optimizer.name()),
            ParamValue::Real(self.learning_rate),
            int(self.n_user_prototypes),
            int(self.n_item_prototypes),
            ParamValue::Real(self.reg.proto_to_user),
            ParamValue::Real(self.reg.user_to_proto),
            ParamValue::Real(self.reg.proto_to_item),
            ParamValue::Real(self.reg.item_to_proto),
            ParamValue::Real(self.reg.l1_pref),
            int(self.n_anchors),
            int(self.max_epochs),
            int(self.patience),
        ];
        PARAM_KEYS.into_iter().zip(values).collect()
    }
}

/// Patience-based stopping on a metric that should increase.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Records `value` for `epoch`; returns whether it is a strict improvement.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        match self.best {
            Some((_, best)) if value <= best => {
                self.since_best += 1;
                false
            }
            _ => {
                self.best = Some((epoch, value));
                self.since_best = 0;
                true
            }
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    /// `(epoch, value)` of the best observation.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean over the epoch's batches.
    pub loss: LossReport,
    pub validation_hr: f64,
    pub validation_ndcg: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation_hr: f64,
    pub stopped_early: bool,
}

/// Hooks for progress output and timing, which the core cannot do itself.
pub trait TrainMonitor {
    /// Seconds since training started.
    fn elapsed_seconds(&mut self) -> f64 {
        0.0
    }
    fn on_step(&mut self, _epoch: usize, _step: usize, _report: &LossReport) {}
    fn on_epoch(&mut self, _record: &EpochRecord) {}
}

/// Monitor that ignores everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct Silent;

impl TrainMonitor for Silent {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters after the best validation epoch.
    pub model: Model,
    pub log: TrainLog,
}

/// Trains `kind` on `splits.train`, selecting the epoch with the best
/// validation HR@10.
pub fn train(splits: &SplitBundle, kind: ModelKind, config: &TrainConfig, monitor: &mut dyn TrainMonitor) -> Result<TrainOutcome> {
    config.validate()?;
    if splits.train.is_empty() {
        return Err(Error::InvalidConfig("no training interactions".into()));
    }
    if splits.validation.is_empty() {
        return Err(Error::NoEvaluationUsers(Stage::Validation.as_str()));
    }
    let shape = config.model_shape(splits.n_users, splits.n_items);
    let mut model = Model::init(kind, &shape, config.seed)?;
    let sampler = NegativeSampler::new(
        config.sampling,
        PopularityTable::from_counts(splits.train_item_counts()),
        splits.train_items_by_user(),
    );
    let mut optimizer = Optimizer::new(config.optimizer, &model);
    let eval_config = EvalConfig {
        cutoffs: alloc::vec![SELECTION_CUTOFF],
        stage: Stage::Validation,
    };
    let positives: Vec<(usize, usize)> = splits.train.iter().map(|it| (it.user, it.item)).collect();

    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_model = model.clone();
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..positives.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(config.seed, "epoch-order", epoch as u64));
        let mut neg_rng = stream(config.seed, "train-negatives", epoch as u64);
        let mut sum = LossReport::default();
        let mut steps = 0usize;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let pos: Vec<(usize, usize)> = chunk.iter().map(|&i| positives[i]).collect();
            let negs = sampler.sample_batch(&pos, config.n_neg, &mut neg_rng)?;
            let batch = Batch::new(pos, negs)?;
            let (report, grads) = total_loss(&model, &batch, &config.reg, config.base_loss, config.l2_form)?;
            if let Some(term) = report.non_finite_term() {
                return Err(Error::NonFiniteLoss { term, epoch, step });
            }
            optimizer.step(&mut model, &grads, config.learning_rate)?;
            monitor.on_step(epoch, step, &report);
            accumulate(&mut sum, &report);
            steps += 1;
        }
        let mean = scale_report(&sum, 1.0 / steps as f64);

        let metrics = evaluate_cases(&model, &splits.validation, &eval_config)?;
        let hr = metrics.hr(SELECTION_CUTOFF).unwrap_or(0.0);
        let record = EpochRecord {
            epoch,
            loss: mean,
            validation_hr: hr,
            validation_ndcg: metrics.ndcg(SELECTION_CUTOFF).unwrap_or(0.0),
            wall_seconds: monitor.elapsed_seconds(),
        };
        monitor.on_epoch(&record);
        log.epochs.push(record);
        if stopper.observe(epoch, hr) {
            best_model.clone_from(&model);
        }
        if stopper.should_stop() {
            log.stopped_early = true;
            break;
        }
    }
    let (best_epoch, best_hr) = stopper.best().unwrap_or((0, 0.0));
    log.best_epoch = best_epoch;
    log.best_validation_hr = best_hr;
    Ok(TrainOutcome { model: best_model, log })
}

fn accumulate(sum: &mut LossReport, r: &LossReport) {
    sum.base += r.base;
    sum.l2 += r.l2;
    sum.reg_pu_to_u += r.reg_pu_to_u;
    sum.reg_u_to_pu += r.reg_u_to_pu;
    sum.reg_pt_to_t += r.reg_pt_to_t;
    sum.reg_t_to_pt += r.reg_t_to_pt;
    sum.l1_pref += r.l1_pref;
    sum.total += r.total;
}

fn scale_report(r: &LossReport, f: f64) -> LossReport {
    LossReport {
        base: r.base * f,
        l2: r.l2 * f,
        reg_pu_to_u: r.reg_pu_to_u * f,
        reg_u_to_pu: r.reg_u_to_pu * f,
        reg_pt_to_t: r.reg_pt_to_t * f,
        reg_t_to_pt: r.reg_t_to_pt * f,
        l1_pref: r.l1_pref * f,
        total: r.total * f,
    }
}

/// Declared range of one searched hyperparameter.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum ParamRange {
    LogUniform { low: f64, high: f64 },
    Uniform { low: f64, high: f64 },
    /// Inclusive on both ends.
    IntUniform { low: i64, high: i64 },
    Choice { options: Vec<String> },
}

impl ParamRange {
    pub fn validate(&self, name: &str) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidConfig(alloc::format!("range for {name:?}: {why}")));
        match self {
            ParamRange::LogUniform { low, high } if !(*low > 0.0 && low <= high && high.is_finite()) => {
                bad("log-uniform needs 0 < low <= high")
            }
            ParamRange::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low <= high) => {
                bad("uniform needs low <= high")
            }
            ParamRange::IntUniform { low, high } if low > high => bad("int-uniform needs low <= high"),
            ParamRange::Choice { options } if options.is_empty() => bad("choice needs at least one option"),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamValue {
        match self {
            ParamRange::LogUniform { low, high } => {
                let (a, b) = (libm::log(*low), libm::log(*high));
                ParamValue::Real(if a == b { *low } else { libm::exp(rng.random_range(a..b)) })
            }
            ParamRange::Uniform { low, high } => {
                ParamValue::Real(if low == high { *low } else { rng.random_range(*low..*high) })
            }
            ParamRange::IntUniform { low, high } => ParamValue::Int(rng.random_range(*low..=*high)),
            ParamRange::Choice { options } => ParamValue::Text(options[rng.random_range(0..options.len())].clone()),
        }
    }
}

/// Base configuration plus the ranges searched over it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchSpace {
    pub base: TrainConfig,
    pub ranges: BTreeMap<String, ParamRange>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.ranges.is_empty() {
            return Err(Error::EmptySearchSpace);
        }
        let mut probe = self.base.clone();
        for (name, range) in &self.ranges {
            range.validate(name)?;
            probe.set_param(name, &range.sample(&mut stream(0, "probe", 0)))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    /// 0-based draw order.
    pub index: usize,
    pub config: TrainConfig,
    pub assignments: Vec<(String, ParamValue)>,
}

/// Draws `n_trials` configurations; trial `i` trains with a seed derived
/// from `(seed, i)`.
pub fn sample_trials(space: &SearchSpace, n_trials: usize, seed: u64) -> Result<Vec<Trial>> {
    if n_trials == 0 {
        return Err(Error::InvalidConfig("at least one trial is required".into()));
    }
    space.validate()?;
    let mut rng = stream(seed, "search", 0);
    (0..n_trials)
        .map(|index| {
            let mut config = space.base.clone();
            let mut assignments = Vec::with_capacity(space.ranges.len());
            for (name, range) in &space.ranges {
                let value = range.sample(&mut rng);
                config.set_param(name, &value)?;
                assignments.push((name.clone(), value));
            }
            config.seed = derive_seed(seed, "trial", index as u64);
            Ok(Trial {
                index,
                config,
                assignments,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: Trial,
    /// `(best validation HR@10, its NDCG@10, best epoch)`, or the failure.
    pub outcome: core::result::Result<(f64, f64, usize), String>,
}

impl TrialResult {
    pub fn from_outcome(trial: Trial, outcome: &Result<TrainOutcome>) -> Self {
        let outcome = match outcome {
            Ok(o) => {
                let best = o.log.epochs.iter().find(|e| e.epoch == o.log.best_epoch);
                Ok((o.log.best_validation_hr, best.map_or(0.0, |e| e.validation_ndcg), o.log.best_epoch))
            }
            Err(e) => Err(e.to_string()),
        };
        Self { trial, outcome }
    }

    pub fn validation_hr(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|o| o.0)
    }
}

/// Best first: higher validation HR@10, then higher NDCG@10, then earlier
/// trial. Failed trials go last.
pub fn rank_trials(mut results: Vec<TrialResult>) -> Vec<TrialResult> {
    results.sort_by(|a, b| match (&a.outcome, &b.outcome) {
        (Ok(x), Ok(y)) => y
            .0
            .total_cmp(&x.0)
            .then(y.1.total_cmp(&x.1))
            .then(a.trial.index.cmp(&b.trial.index)),
        (Ok(_), Err(_)) => core::cmp::Ordering::Less,
        (Err(_), Ok(_)) => core::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.trial.index.cmp(&b.trial.index),
    });
    results
}

/// Sequential random search; results are ranked best first.
pub fn random_search(splits: &SplitBundle, kind: ModelKind, space: &SearchSpace, n_trials: usize, seed: u64) -> Result<Vec<TrialResult>> {
    let trials = sample_trials(space, n_trials, seed)?;
    let results = trials
        .into_iter()
        .map(|trial| {
            let outcome = train(splits, kind, &trial.config, &mut Silent);
            TrialResult::from_outcome(trial, &outcome)
        })
        .collect();
    Ok(rank_trials(results))
}
