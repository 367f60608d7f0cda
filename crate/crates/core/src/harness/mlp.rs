//! One-hidden-layer multi-label baseline trained on cross-entropy alone.

use crate::data::Dataset;
use crate::diffcore::{init_uniform, seed_rng, ParamStore, Rng, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;
use crate::model::Batch;
use crate::objectives::{bce_loss, fit, EpochLog, LossEval, LossTerms, LossValues, TrainConfig, Trainable};

pub const DEFAULT_HIDDEN: usize = 64;

/// Initial learning rate of the baseline. The halving schedule leaves a
/// total step budget of twice the initial rate, which at 0.01 stops a
/// single hidden layer well short of convergence.
pub const DEFAULT_LR: f64 = 0.1;

/// Default baseline schedule: 50 halving epochs from [`DEFAULT_LR`],
/// cross-entropy only.
pub fn baseline_config(seed: u64) -> TrainConfig {
    TrainConfig {
        initial_lr: DEFAULT_LR,
        seed,
        terms: LossTerms { align: false, contrastive: false, cross_entropy: true },
        ..TrainConfig::default()
    }
}

const W1: &str = "mlp.w1";
const B1: &str = "mlp.b1";
const W2: &str = "mlp.w2";
const B2: &str = "mlp.b2";

/// `sigmoid(relu(x W1 + b1) W2 + b2)` with one output per hierarchy node.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub hierarchy: LabelHierarchy,
    pub params: ParamStore,
    pub terminal_eligible: Vec<bool>,
}

impl Mlp {
    pub fn init(feature_dim: usize, hidden: usize, hierarchy: LabelHierarchy, rng: &mut Rng) -> Result<Self> {
        if feature_dim == 0 || hidden == 0 {
            return Err(Error::Validation("MLP widths must be positive".into()));
        }
        let n = hierarchy.len();
        let mut params = ParamStore::new();
        params.insert(W1, init_uniform(&[feature_dim, hidden], 1.0 / (feature_dim as f64).sqrt(), rng)?);
        params.insert(B1, Tensor::zeros(&[hidden]));
        params.insert(W2, init_uniform(&[hidden, n], 1.0 / (hidden as f64).sqrt(), rng)?);
        params.insert(B2, Tensor::zeros(&[n]));
        let terminal_eligible = (0..n).map(|v| hierarchy.is_leaf(v)).collect();
        Ok(Self { hierarchy, params, terminal_eligible })
    }

    fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Var> {
        let x = tape.constant(x.clone());
        let w1 = tape.param(&self.params, W1)?;
        let b1 = tape.param(&self.params, B1)?;
        let w2 = tape.param(&self.params, W2)?;
        let b2 = tape.param(&self.params, B2)?;
        let h = tape.matmul(x, w1)?;
        let h = tape.add_bias(h, b1)?;
        let h = tape.relu(h);
        let z = tape.matmul(h, w2)?;
        let z = tape.add_bias(z, b2)?;
        Ok(tape.sigmoid(z))
    }
}

impl Trainable for Mlp {
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
        self.terminal_eligible[node] = true;
    }

    fn loss(&self, batch: &Batch, _cfg: &TrainConfig) -> Result<LossEval> {
        let mut tape = Tape::new();
        let probs = self.forward(&mut tape, &batch.features)?;
        let ce = bce_loss(&mut tape, probs, &batch.targets)?;
        let value = tape.value(ce).data()[0];
        if !value.is_finite() {
            return Err(Error::NonFinite("L_ce".into()));
        }
        let grads = tape.backward(ce)?;
        let grads = tape
            .param_bindings()
            .iter()
            .map(|(name, var)| {
                let g = grads.get(*var).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(*var).shape()));
                (name.clone(), g)
            })
            .collect();
        let values = LossValues { cross_entropy: value, total: value, ..LossValues::default() };
        Ok(LossEval { values, grads })
    }

    fn probabilities(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.forward(&mut tape, x)?;
        Ok(tape.value(p).clone())
    }
}

/// Initializes from `cfg.seed` and fits on the training split. Only the
/// schedule, batch size, epochs and seed of `cfg` are used.
pub fn train_mlp(data: &Dataset, hidden: usize, cfg: &TrainConfig) -> Result<(Mlp, Vec<EpochLog>)> {
    let mut mlp = Mlp::init(data.dim(), hidden, data.hierarchy.clone(), &mut seed_rng(cfg.seed))?;
    let log = fit(&mut mlp, data, cfg)?;
    Ok((mlp, log))
}
