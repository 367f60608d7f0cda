//! Alignment, contrastive and cross-entropy objectives, their weighted sum,
//! and the mini-batch training loop.

use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::diffcore::{seed_rng, AdamConfig, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;
use crate::model::{names::*, predict_from_probs, Batch, Model, ModelConfig, PredictMode};

/// Weights of the joint objective `L_align + λ1·L_con + λ2·L_ce`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_con: f64,
    pub lambda_ce: f64,
    /// Contrastive margin `m`.
    pub margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_con: 1.0, lambda_ce: 1.0, margin: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_con >= 0.0 && self.lambda_ce >= 0.0) {
            return Err(Error::Validation("loss weights must be non-negative".into()));
        }
        if !(self.margin > 0.0) {
            return Err(Error::Validation(format!("margin must be positive, got {}", self.margin)));
        }
        Ok(())
    }
}

/// Which terms enter the total loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LossTerms {
    pub align: bool,
    pub contrastive: bool,
    pub cross_entropy: bool,
}

impl LossTerms {
    pub const ALL: LossTerms = LossTerms { align: true, contrastive: true, cross_entropy: true };

    /// Parses a comma list such as `align,con,ce`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut t = LossTerms { align: false, contrastive: false, cross_entropy: false };
        for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "align" => t.align = true,
                "con" => t.contrastive = true,
                "ce" => t.cross_entropy = true,
                other => return Err(Error::Validation(format!("unknown loss term `{other}`"))),
            }
        }
        if !(t.align || t.contrastive || t.cross_entropy) {
            return Err(Error::Validation("at least one loss term is required".into()));
        }
        Ok(t)
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.align {
            parts.push("align");
        }
        if self.contrastive {
            parts.push("con");
        }
        if self.cross_entropy {
            parts.push("ce");
        }
        parts.join(",")
    }
}

impl Default for LossTerms {
    fn default() -> Self {
        Self::ALL
    }
}

/// `φ(x) = x·W + b` applied along the last axis.
pub fn project(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let y = tape.matmul(x, weight)?;
    tape.add_bias(y, bias)
}

/// Mean over examples of `‖φ_x(E_X(i)) − φ_l(E_L)‖²_F`, on already projected
/// inputs (`n×N×h` and `N×h`).
pub fn align_loss(tape: &mut Tape, proj_data: Var, proj_label: Var) -> Result<Var> {
    let n = tape.value(proj_data).shape()[0];
    let diff = tape.sub_slices(proj_data, proj_label)?;
    let sq = tape.sum_squares(diff);
    Ok(tape.scale(sq, if n == 0 { 0.0 } else { 1.0 / n as f64 }))
}

/// Margin contrastive loss over all unordered in-batch pairs of flattened
/// projected data embeddings. A pair is positive iff the full label sets
/// match.
pub fn contrastive_loss(tape: &mut Tape, proj_data: Var, label_sets: &[Vec<bool>], margin: f64) -> Result<Var> {
    let shape = tape.value(proj_data).shape().to_vec();
    let n = shape[0];
    if label_sets.len() != n {
        return Err(Error::Shape(format!("{} label sets for {n} embeddings", label_sets.len())));
    }
    let width = shape[1..].iter().product();
    let flat = tape.reshape(proj_data, &[n, width])?;
    let mut same = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            same[i * n + j] = label_sets[i] == label_sets[j];
        }
    }
    tape.contrastive(flat, same, margin)
}

/// Binary cross-entropy summed over labels, averaged over examples.
pub fn bce_loss(tape: &mut Tape, probs: Var, targets: &Tensor) -> Result<Var> {
    tape.bce(probs, targets)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub align: f64,
    pub contrastive: f64,
    pub cross_entropy: f64,
    pub total: f64,
}

/// Loss components on a tape, with the node of the weighted total.
#[derive(Clone, Copy, Debug)]
pub struct LossGraph {
    pub align: Var,
    pub contrastive: Var,
    pub cross_entropy: Var,
    pub total: Var,
}

impl LossGraph {
    pub fn values(&self, tape: &Tape) -> LossValues {
        let v = |x: Var| tape.value(x).data()[0];
        LossValues {
            align: v(self.align),
            contrastive: v(self.contrastive),
            cross_entropy: v(self.cross_entropy),
            total: v(self.total),
        }
    }
}

/// Records the full forward pass and all three losses on `tape`. Every term is
/// evaluated; only those enabled in `terms` enter the total.
pub fn record_total_loss(
    tape: &mut Tape,
    model: &Model,
    batch: &Batch,
    weights: &LossWeights,
    terms: LossTerms,
) -> Result<LossGraph> {
    let fwd = model.forward(tape, &batch.features)?;

    let pxw = tape.param(&model.params, PROJ_X_WEIGHT)?;
    let pxb = tape.param(&model.params, PROJ_X_BIAS)?;
    let plw = tape.param(&model.params, PROJ_L_WEIGHT)?;
    let plb = tape.param(&model.params, PROJ_L_BIAS)?;
    let proj_data = project(tape, fwd.data, pxw, pxb)?;
    let proj_label = project(tape, fwd.label, plw, plb)?;

    let align = align_loss(tape, proj_data, proj_label)?;
    let sets: Vec<Vec<bool>> = batch.terminals.iter().map(|&t| model.hierarchy.label_set(t)).collect();
    let contrastive = contrastive_loss(tape, proj_data, &sets, weights.margin)?;
    let cross_entropy = bce_loss(tape, fwd.probs, &batch.targets)?;

    let mut parts = Vec::new();
    if terms.align {
        parts.push(align);
    }
    if terms.contrastive {
        parts.push(tape.scale(contrastive, weights.lambda_con));
    }
    if terms.cross_entropy {
        parts.push(tape.scale(cross_entropy, weights.lambda_ce));
    }
    let mut total = parts[0];
    for &p in &parts[1..] {
        total = tape.add(total, p)?;
    }
    Ok(LossGraph { align, contrastive, cross_entropy, total })
}

/// Loss values and the gradient of the total for every parameter.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub values: LossValues,
    /// Gradient per parameter name, in store order. Parameters the total does
    /// not depend on get zeros.
    pub grads: Vec<(String, Tensor)>,
}

/// Evaluates the joint objective on `batch` and back-propagates once.
pub fn total_loss(model: &Model, batch: &Batch, weights: &LossWeights, terms: LossTerms) -> Result<LossEval> {
    weights.validate()?;
    let mut tape = Tape::new();
    let graph = record_total_loss(&mut tape, model, batch, weights, terms)?;
    let values = graph.values(&tape);
    for (name, v) in [("L_align", values.align), ("L_con", values.contrastive), ("L_ce", values.cross_entropy)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name.into()));
        }
    }
    let grads = tape.backward(graph.total)?;
    let bound: std::collections::HashMap<&str, Var> =
        tape.param_bindings().iter().map(|(n, v)| (n.as_str(), *v)).collect();
    let grads = model
        .params
        .iter()
        .map(|(name, value)| {
            let g = bound
                .get(name)
                .and_then(|v| grads.get(*v))
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(value.shape()));
            (name.to_string(), g)
        })
        .collect();
    Ok(LossEval { values, grads })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub terms: LossTerms,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            initial_lr: 0.01,
            seed: 0,
            weights: LossWeights::default(),
            terms: LossTerms::ALL,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Validation("batch size must be positive".into()));
        }
        if !(self.initial_lr >= 0.0) {
            return Err(Error::Validation("learning rate must be non-negative".into()));
        }
        self.weights.validate()
    }
}

/// Learning rate of `epoch` (0-based): halves every epoch.
pub fn learning_rate(initial: f64, epoch: usize) -> f64 {
    initial * 0.5f64.powi(epoch as i32)
}

/// Loss above which training is considered diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// One structured log record per epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub align: f64,
    pub contrastive: f64,
    pub cross_entropy: f64,
    pub total: f64,
    pub train_acc: f64,
    /// `None` when the validation split is empty.
    pub val_acc: Option<f64>,
    #[serde(skip)]
    pub seconds: f64,
}

/// Anything trained by [`fit`]: a parameter store, a differentiable loss and
/// an inference path producing per-node probabilities.
pub trait Trainable {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn hierarchy(&self) -> &LabelHierarchy;
    fn terminal_eligible(&self) -> &[bool];
    fn mark_terminal(&mut self, node: usize);
    fn loss(&self, batch: &Batch, cfg: &TrainConfig) -> Result<LossEval>;
    fn probabilities(&self, x: &Tensor) -> Result<Tensor>;
    /// Copy kept as the last good state for divergence reports.
    fn snapshot(&self) -> Option<Model> {
        None
    }
}

impl Trainable for Model {
    fn params(&self) -> &ParamStore {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
    fn hierarchy(&self) -> &LabelHierarchy {
        &self.hierarchy
    }
    fn terminal_eligible(&self) -> &[bool] {
        &self.terminal_eligible
    }
    fn mark_terminal(&mut self, node: usize) {
        Model::mark_terminal(self, node)
    }
    fn loss(&self, batch: &Batch, cfg: &TrainConfig) -> Result<LossEval> {
        total_loss(self, batch, &cfg.weights, cfg.terms)
    }
    fn probabilities(&self, x: &Tensor) -> Result<Tensor> {
        Model::probabilities(self, x)
    }
    fn snapshot(&self) -> Option<Model> {
        Some(self.clone())
    }
}

/// Fraction of `indices` whose single-label prediction hits the true terminal.
pub fn single_label_accuracy<M: Trainable + ?Sized>(model: &M, data: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Validation("accuracy of an empty split".into()));
    }
    let probs = model.probabilities(&data.features(indices))?;
    let preds = predict_from_probs(model.hierarchy(), model.terminal_eligible(), &probs, PredictMode::Single)?;
    let hits = preds.iter().zip(indices).filter(|(p, &i)| p.terminal == Some(data.terminal(i))).count();
    Ok(hits as f64 / indices.len() as f64)
}

/// Mini-batch Adam over the training split with the halving schedule.
///
/// Shuffling uses a generator seeded from `cfg.seed`, so a run is a pure
/// function of model, data and config. On divergence the error carries the
/// parameters from the end of the last good epoch.
pub fn fit<M: Trainable>(
    model: &mut M,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    let mut order = data.indices(Split::Train);
    if order.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    for &i in &order {
        let t = data.terminal(i);
        if !model.hierarchy().is_leaf(t) {
            model.mark_terminal(t);
        }
    }
    let val = data.indices(Split::Val);
    let train_idx = order.clone();
    // shuffling stream independent of the initialization stream
    let mut rng = seed_rng(cfg.seed ^ 0x5eed_0f5e_ed0f_5eed);
    let mut last_good: Option<Model> = None;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let lr = learning_rate(cfg.initial_lr, epoch);
        order.shuffle(&mut rng);
        let mut sums = LossValues::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.batch(chunk);
            let eval = match model.loss(&batch, cfg) {
                Ok(e) => e,
                Err(Error::NonFinite(_)) => return Err(diverged(epoch, f64::NAN, last_good)),
                Err(e) => return Err(e),
            };
            let v = eval.values;
            if !v.total.is_finite() || v.total > DIVERGENCE_LIMIT {
                return Err(diverged(epoch, v.total, last_good));
            }
            let params = model.params_mut();
            for (name, g) in eval.grads {
                params.set_grad(&name, g)?;
            }
            params.adam_step(lr, AdamConfig::default())?;
            let w = chunk.len() as f64;
            sums.align += v.align * w;
            sums.contrastive += v.contrastive * w;
            sums.cross_entropy += v.cross_entropy * w;
            sums.total += v.total * w;
        }
        if !model.params().all_finite() {
            return Err(diverged(epoch, f64::NAN, last_good));
        }
        let n = order.len() as f64;
        let entry = EpochLog {
            epoch,
            lr,
            align: sums.align / n,
            contrastive: sums.contrastive / n,
            cross_entropy: sums.cross_entropy / n,
            total: sums.total / n,
            train_acc: single_label_accuracy(model, data, &train_idx)?,
            val_acc: if val.is_empty() { None } else { Some(single_label_accuracy(model, data, &val)?) },
            seconds: start.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch} lr {lr:e} total {:.6} train_acc {:.4} ({:.2}s)",
            entry.total, entry.train_acc, entry.seconds
        );
        log.push(entry);
        last_good = model.snapshot();
    }
    Ok(log)
}

fn diverged(epoch: usize, loss: f64, last_good: Option<Model>) -> Error {
    Error::Diverged { epoch, loss, last_good: last_good.map(Box::new) }
}

/// Trained model together with its per-epoch log.
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: Model,
    pub log: Vec<EpochLog>,
}

/// Initializes a model from `cfg.seed` and trains it on `data`'s training
/// split.
pub fn train(data: &Dataset, model_config: ModelConfig, cfg: &TrainConfig) -> Result<Trained> {
    if data.is_empty() {
        return Err(Error::Validation("dataset is empty".into()));
    }
    if model_config.feature_dim != data.dim() {
        return Err(Error::Validation(format!(
            "model expects {} features, dataset has {}",
            model_config.feature_dim,
            data.dim()
        )));
    }
    let mut rng = seed_rng(cfg.seed);
    let mut model = Model::init(model_config, data.hierarchy.clone(), &mut rng)?;
    let log = fit(&mut model, data, cfg)?;
    Ok(Trained { model, log })
}
