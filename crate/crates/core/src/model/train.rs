//! Epoch loop: one Adam step per query day, validation MRR after every
//! epoch, best-checkpoint retention and patience-based stopping.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::eval::{evaluate_split, EvalContext};
use crate::event::{Dataset, Day, Query, Split};
use crate::kernel::{adam_step, AdamConfig, AdamState};
use crate::seed::rng_for;

use super::config::SLOPE_RANGE;
use super::logo::LogoModel;
use super::variant::VariantRegistry;
use super::{ModelConfig, ModelError, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-query training loss of the epoch.
    pub train_loss: f64,
    pub val_mrr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: LogoModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_mrr: f64,
}

/// Tracks the best validation score; a new score must be strictly greater to
/// count as an improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None }
    }

    /// Records `value` for `epoch`; returns whether it improved on the best.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        let improved = self.best.is_none_or(|(_, b)| value > b);
        if improved {
            self.best = Some((epoch, value));
        }
        improved
    }

    /// True once `patience` epochs have passed since the best one.
    pub fn should_stop(&self, epoch: usize) -> bool {
        self.best.is_some_and(|(b, _)| epoch >= b + self.patience)
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Writes `epoch\ttrain_loss\tval_mrr` lines.
pub fn write_train_log<W: Write>(mut w: W, log: &[EpochLog]) -> std::io::Result<()> {
    writeln!(w, "epoch\ttrain_loss\tval_mrr")?;
    for e in log {
        writeln!(w, "{}\t{}\t{}", e.epoch, e.train_loss, e.val_mrr)?;
    }
    Ok(())
}

pub fn train(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    registry: &VariantRegistry,
) -> Result<TrainOutcome, ModelError> {
    train_with(dataset, model_cfg, train_cfg, registry, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    registry: &VariantRegistry,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, ModelError> {
    train_cfg.validate()?;
    let ctx = EvalContext::new(dataset);
    let train_queries = ctx.answerable_queries(dataset, Split::Train);
    if train_queries.is_empty() {
        return Err(ModelError::Eval(crate::eval::EvalError::EmptySplit(Split::Train)));
    }
    if ctx.answerable_queries(dataset, Split::Val).is_empty() {
        return Err(ModelError::Eval(crate::eval::EvalError::EmptySplit(Split::Val)));
    }
    let mut by_day: BTreeMap<Day, Vec<Query>> = BTreeMap::new();
    for q in train_queries {
        by_day.entry(q.time).or_default().push(q);
    }
    let mut days: Vec<Day> = by_day.keys().copied().collect();

    let root = train_cfg.seed;
    let mut model = LogoModel::new(
        model_cfg.clone(),
        dataset.vocab.num_entities(),
        dataset.vocab.num_relations(),
        registry,
        crate::seed::derive_seed(root, "model.init"),
    )?;
    let mut states: Vec<AdamState> = model
        .params()
        .tensors()
        .iter()
        .map(|t| AdamState::new(t, AdamConfig::default()))
        .collect();
    let mut shuffle_rng = rng_for(root, "train.shuffle");
    let mut slope_rng = rng_for(root, "train.slope");

    let mut stopper = EarlyStopping::new(train_cfg.patience);
    let mut best_model = model.clone();
    let mut log = Vec::new();
    for epoch in 1..=train_cfg.epochs {
        days.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for &day in &days {
            let queries = &by_day[&day];
            let slope = if model_cfg.randomized_slope {
                slope_rng.random_range(SLOPE_RANGE.0..=SLOPE_RANGE.1)
            } else {
                model_cfg.slope
            };
            let (value, grads) = model.loss_and_gradients(&ctx.index, queries, slope)?;
            if !value.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, time: day, value });
            }
            for ((param, grad), state) in model.params_mut().tensors_mut().into_iter().zip(&grads).zip(&mut states) {
                adam_step(param, grad, state, train_cfg.lr, train_cfg.weight_decay)?;
            }
            total += value;
            count += queries.len();
        }
        let val = evaluate_split(&model, &ctx, dataset, Split::Val)?;
        let entry = EpochLog {
            epoch,
            train_loss: total / count as f64,
            val_mrr: val.report.mrr,
        };
        on_epoch(&entry);
        log.push(entry);
        if stopper.observe(epoch, entry.val_mrr) {
            best_model = model.clone();
        }
        if stopper.should_stop(epoch) {
            break;
        }
    }
    let (best_epoch, best_val_mrr) = stopper.best().expect("at least one epoch ran");
    Ok(TrainOutcome {
        model: best_model,
        log,
        best_epoch,
        best_val_mrr,
    })
}
