//! Label encoder, activity data encoder with feature propagation, and the
//! sigmoid multi-label head.

use serde::{Deserialize, Serialize};

use crate::diffcore::{init_uniform, ParamStore, Rng, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::hierarchy::{adaptive_adjacency, GraphPair, LabelHierarchy, DEFAULT_ADAPTIVE_DIM};

/// Which label graphs take part in the graph layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    /// Graph layer replaced by a plain per-node linear layer.
    None,
    Predefined,
    Adaptive,
    Both,
}

impl GraphMode {
    pub fn uses_predefined(self) -> bool {
        matches!(self, GraphMode::Predefined | GraphMode::Both)
    }

    pub fn uses_adaptive(self) -> bool {
        matches!(self, GraphMode::Adaptive | GraphMode::Both)
    }

    /// Whether a `w_pre` weight exists. Without any graph it is the weight of
    /// the replacement linear layer.
    fn has_pre_weight(self) -> bool {
        !matches!(self, GraphMode::Adaptive)
    }
}

impl std::str::FromStr for GraphMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(GraphMode::None),
            "predefined" => Ok(GraphMode::Predefined),
            "adaptive" => Ok(GraphMode::Adaptive),
            "both" => Ok(GraphMode::Both),
            other => Err(Error::Validation(format!("unknown graph mode `{other}`"))),
        }
    }
}

/// Default width of the alignment space. It is kept below the graph width:
/// when the data projection is square, aligning every example to the one
/// label embedding leaves no room for example-specific directions and the
/// node embeddings collapse.
pub const DEFAULT_PROJ_DIM: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    /// Label embedding width `d_l`.
    pub label: usize,
    /// Graph layer output width `d_c`.
    pub conv: usize,
    /// Data embedding width `d_x`.
    pub embed: usize,
    /// Adaptive-graph node embedding width `d_f`.
    pub adaptive: usize,
    /// Common projection width `d_h` for the alignment space.
    pub proj: usize,
}

impl Default for Widths {
    fn default() -> Self {
        Self { label: 64, conv: 64, embed: 64, adaptive: DEFAULT_ADAPTIVE_DIM, proj: DEFAULT_PROJ_DIM }
    }
}

impl Widths {
    pub fn uniform(w: usize) -> Self {
        Self { label: w, conv: w, embed: w, adaptive: w, proj: w }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input feature width `d`.
    pub feature_dim: usize,
    pub widths: Widths,
    pub graph: GraphMode,
    pub feature_propagation: bool,
}

impl ModelConfig {
    pub fn new(feature_dim: usize) -> Self {
        Self { feature_dim, widths: Widths::default(), graph: GraphMode::Both, feature_propagation: true }
    }

    fn validate(&self) -> Result<()> {
        let w = &self.widths;
        if self.feature_dim == 0 || [w.label, w.conv, w.embed, w.adaptive, w.proj].contains(&0) {
            return Err(Error::Validation(format!("all model widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

pub mod names {
    pub const LABEL_EMBEDDING: &str = "label.embedding";
    pub const LABEL_W_PRE: &str = "label.w_pre";
    pub const LABEL_W_ADP: &str = "label.w_adp";
    pub const DATA_W_PRE: &str = "data.w_pre";
    pub const DATA_W_ADP: &str = "data.w_adp";
    pub const ADAPTIVE_SOURCE: &str = "adaptive.source";
    pub const ADAPTIVE_TARGET: &str = "adaptive.target";
    pub const EMBED_WEIGHT: &str = "embed.weight";
    pub const EMBED_BIAS: &str = "embed.bias";
    pub const RESHAPE_WEIGHT: &str = "reshape.weight";
    pub const PROJ_X_WEIGHT: &str = "proj_x.weight";
    pub const PROJ_X_BIAS: &str = "proj_x.bias";
    pub const PROJ_L_WEIGHT: &str = "proj_l.weight";
    pub const PROJ_L_BIAS: &str = "proj_l.bias";
    pub const CLASSIFIER_WEIGHT: &str = "classifier.weight";
    pub const CLASSIFIER_BIAS: &str = "classifier.bias";
}

use names::*;

/// Features, multi-label targets and terminal labels of `n` examples.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub features: Tensor,
    pub targets: Tensor,
    pub terminals: Vec<usize>,
}

impl Batch {
    pub fn new(hierarchy: &LabelHierarchy, features: Tensor, terminals: Vec<usize>) -> Result<Self> {
        let (n, _) = features.dims2()?;
        if n != terminals.len() {
            return Err(Error::Shape(format!("{n} feature rows but {} terminals", terminals.len())));
        }
        let nodes = hierarchy.len();
        let mut targets = Tensor::zeros(&[n, nodes]);
        for (i, &t) in terminals.iter().enumerate() {
            if t >= nodes {
                return Err(Error::Validation(format!("terminal index {t} out of range")));
            }
            for v in hierarchy.path(t) {
                targets.set(i, v, 1.0);
            }
        }
        Ok(Self { features, targets, terminals })
    }

    pub fn len(&self) -> usize {
        self.terminals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminals.is_empty()
    }
}

/// Graph nodes shared by the label and data encoders in one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphVars {
    pub predefined: Option<Var>,
    pub adaptive: Option<Var>,
}

/// Every intermediate of a joint forward pass that the objectives need.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub label_graphs: GraphVars,
    pub data_graphs: GraphVars,
    /// `E_L`, `N×d_c`.
    pub label: Var,
    /// `E_X`, `n×N×d_c`.
    pub data: Var,
    /// Sigmoid probabilities, `n×N`.
    pub probs: Var,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictMode {
    /// Arg-max over terminal-eligible nodes, expanded to its path.
    Single,
    /// Every node with probability strictly above one half.
    Multi,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prediction {
    /// Predicted terminal in single mode; in multi mode the terminal whose
    /// path equals the predicted set, if there is one.
    pub terminal: Option<usize>,
    pub labels: Vec<bool>,
}

/// Complete H-HAR model: hierarchy, fixed graphs, trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub hierarchy: LabelHierarchy,
    pub graphs: GraphPair,
    pub params: ParamStore,
    /// Nodes that single-label prediction may return: leaves plus any
    /// internal node seen as a terminal during training.
    pub terminal_eligible: Vec<bool>,
}

fn fan_in_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Result<Tensor> {
    init_uniform(&[rows, cols], 1.0 / (rows as f64).sqrt(), rng)
}

impl Model {
    /// Fresh model with weights uniform in `±1/√fan_in` and zero biases.
    pub fn init(config: ModelConfig, hierarchy: LabelHierarchy, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let n = hierarchy.len();
        let w = config.widths;
        let mut p = ParamStore::new();
        let graph = config.graph;

        p.insert(LABEL_EMBEDDING, fan_in_uniform(n, w.label, rng)?);
        if graph.has_pre_weight() {
            p.insert(LABEL_W_PRE, fan_in_uniform(w.label, w.conv, rng)?);
        }
        if graph.uses_adaptive() {
            p.insert(LABEL_W_ADP, fan_in_uniform(w.label, w.conv, rng)?);
            p.insert(ADAPTIVE_SOURCE, fan_in_uniform(n, w.adaptive, rng)?);
            p.insert(ADAPTIVE_TARGET, fan_in_uniform(n, w.adaptive, rng)?);
        }
        p.insert(EMBED_WEIGHT, fan_in_uniform(config.feature_dim, w.embed, rng)?);
        p.insert(EMBED_BIAS, Tensor::zeros(&[w.embed]));
        p.insert(RESHAPE_WEIGHT, fan_in_uniform(w.embed, n * w.conv, rng)?);
        let data_graph = data_graph_mode(&config);
        if data_graph.has_pre_weight() {
            p.insert(DATA_W_PRE, fan_in_uniform(w.conv, w.conv, rng)?);
        }
        if data_graph.uses_adaptive() {
            p.insert(DATA_W_ADP, fan_in_uniform(w.conv, w.conv, rng)?);
        }
        p.insert(PROJ_X_WEIGHT, fan_in_uniform(w.conv, w.proj, rng)?);
        p.insert(PROJ_X_BIAS, Tensor::zeros(&[w.proj]));
        p.insert(PROJ_L_WEIGHT, fan_in_uniform(w.conv, w.proj, rng)?);
        p.insert(PROJ_L_BIAS, Tensor::zeros(&[w.proj]));
        p.insert(CLASSIFIER_WEIGHT, fan_in_uniform(w.conv, 1, rng)?);
        p.insert(CLASSIFIER_BIAS, Tensor::zeros(&[1]));

        let terminal_eligible = (0..n).map(|v| hierarchy.is_leaf(v)).collect();
        let graphs = GraphPair::new(&hierarchy);
        Ok(Self { config, hierarchy, graphs, params: p, terminal_eligible })
    }

    pub fn nodes(&self) -> usize {
        self.hierarchy.len()
    }

    /// Marks `node` as a valid single-label prediction.
    pub fn mark_terminal(&mut self, node: usize) {
        self.terminal_eligible[node] = true;
    }

    /// Places the graphs of the configured mode on `tape`. The predefined
    /// graph is a constant; the adaptive one depends on trainable embeddings.
    pub fn graph_vars(&self, tape: &mut Tape) -> Result<GraphVars> {
        let predefined = if self.config.graph.uses_predefined() {
            Some(tape.constant(self.graphs.normalized.clone()))
        } else {
            None
        };
        let adaptive = if self.config.graph.uses_adaptive() {
            let source = tape.param(&self.params, ADAPTIVE_SOURCE)?;
            let target = tape.param(&self.params, ADAPTIVE_TARGET)?;
            Some(adaptive_adjacency(tape, source, target)?)
        } else {
            None
        };
        Ok(GraphVars { predefined, adaptive })
    }

    /// `relu(Ã X W_pre + Ã_adp X W_adp)` with absent graphs dropped; with no
    /// graph at all it is `relu(X W_pre)`.
    fn graph_layer(
        &self,
        tape: &mut Tape,
        graphs: &GraphVars,
        input: Var,
        w_pre: &str,
        w_adp: &str,
    ) -> Result<Var> {
        let mut terms = Vec::with_capacity(2);
        match (graphs.predefined, graphs.adaptive) {
            (None, None) => {
                let w = tape.param(&self.params, w_pre)?;
                terms.push(tape.matmul(input, w)?);
            }
            (pre, adp) => {
                if let Some(g) = pre {
                    let w = tape.param(&self.params, w_pre)?;
                    let mixed = tape.graph_mix(g, input)?;
                    terms.push(tape.matmul(mixed, w)?);
                }
                if let Some(g) = adp {
                    let w = tape.param(&self.params, w_adp)?;
                    let mixed = tape.graph_mix(g, input)?;
                    terms.push(tape.matmul(mixed, w)?);
                }
            }
        }
        let mut sum = terms[0];
        for &t in &terms[1..] {
            sum = tape.add(sum, t)?;
        }
        Ok(tape.relu(sum))
    }

    /// Hierarchy-aware label embeddings `E_L` (`N×d_c`).
    pub fn label_encoder_forward(&self, tape: &mut Tape, graphs: &GraphVars) -> Result<Var> {
        let table = tape.param(&self.params, LABEL_EMBEDDING)?;
        self.graph_layer(tape, graphs, table, LABEL_W_PRE, LABEL_W_ADP)
    }

    /// Data embeddings `E_X` (`n×N×d_c`) for feature rows `x` (`n×d`).
    ///
    /// Features are embedded (`linear + relu`), expanded onto the node axis by
    /// `reshape.weight`, then propagated over the shared graphs. With feature
    /// propagation off the graph step is a per-node linear layer.
    pub fn data_encoder_forward(&self, tape: &mut Tape, graphs: &GraphVars, x: &Tensor) -> Result<Var> {
        let (n, d) = x.dims2()?;
        if d != self.config.feature_dim {
            return Err(Error::Shape(format!(
                "feature width {d} does not match configured width {}",
                self.config.feature_dim
            )));
        }
        let xv = tape.constant(x.clone());
        self.data_encoder_from_var(tape, graphs, xv, n)
    }

    /// [`data_encoder_forward`](Self::data_encoder_forward) on features
    /// already placed on the tape, so callers can differentiate through them.
    pub fn data_encoder_from_var(&self, tape: &mut Tape, graphs: &GraphVars, x: Var, n: usize) -> Result<Var> {
        let w = self.config.widths;
        let nodes = self.nodes();
        let ew = tape.param(&self.params, EMBED_WEIGHT)?;
        let eb = tape.param(&self.params, EMBED_BIAS)?;
        let embedded = tape.matmul(x, ew)?;
        let embedded = tape.add_bias(embedded, eb)?;
        let embedded = tape.relu(embedded);
        let rw = tape.param(&self.params, RESHAPE_WEIGHT)?;
        let flat = tape.matmul(embedded, rw)?;
        let v = tape.reshape(flat, &[n, nodes, w.conv])?;
        let data_graphs = if self.config.feature_propagation {
            *graphs
        } else {
            GraphVars { predefined: None, adaptive: None }
        };
        self.graph_layer(tape, &data_graphs, v, DATA_W_PRE, DATA_W_ADP)
    }

    /// Per-node probabilities `sigmoid(E_X[i, j, :] · w + b)` (`n×N`).
    pub fn classify(&self, tape: &mut Tape, data: Var) -> Result<Var> {
        let shape = tape.value(data).shape().to_vec();
        let [n, nodes, _] = shape[..] else {
            return Err(Error::Shape(format!("classify expects n×N×d_c, got {shape:?}")));
        };
        let w = tape.param(&self.params, CLASSIFIER_WEIGHT)?;
        let b = tape.param(&self.params, CLASSIFIER_BIAS)?;
        let logits = tape.matmul(data, w)?;
        let logits = tape.add_bias(logits, b)?;
        let logits = tape.reshape(logits, &[n, nodes])?;
        Ok(tape.sigmoid(logits))
    }

    /// Joint forward pass over both encoders with one set of graph nodes.
    pub fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Forward> {
        let graphs = self.graph_vars(tape)?;
        let label = self.label_encoder_forward(tape, &graphs)?;
        let data = self.data_encoder_forward(tape, &graphs, x)?;
        let probs = self.classify(tape, data)?;
        Ok(Forward { label_graphs: graphs, data_graphs: graphs, label, data, probs })
    }

    /// Inference path: data encoder and head only.
    pub fn probabilities(&self, x: &Tensor) -> Result<Tensor> {
        const CHUNK: usize = 512;
        let (n, d) = x.dims2()?;
        let nodes = self.nodes();
        let mut out = Vec::with_capacity(n * nodes);
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let chunk = Tensor::new(&[end - start, d], x.data()[start * d..end * d].to_vec())?;
            let mut tape = Tape::new();
            let graphs = self.graph_vars(&mut tape)?;
            let data = self.data_encoder_forward(&mut tape, &graphs, &chunk)?;
            let probs = self.classify(&mut tape, data)?;
            out.extend_from_slice(tape.value(probs).data());
        }
        Tensor::new(&[n, nodes], out)
    }

    pub fn predict(&self, x: &Tensor, mode: PredictMode) -> Result<Vec<Prediction>> {
        if !self.params.all_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        let probs = self.probabilities(x)?;
        predict_from_probs(&self.hierarchy, &self.terminal_eligible, &probs, mode)
    }
}

fn data_graph_mode(config: &ModelConfig) -> GraphMode {
    if config.feature_propagation {
        config.graph
    } else {
        GraphMode::None
    }
}

/// Turns an `n×N` probability matrix into label-set predictions.
pub fn predict_from_probs(
    hierarchy: &LabelHierarchy,
    eligible: &[bool],
    probs: &Tensor,
    mode: PredictMode,
) -> Result<Vec<Prediction>> {
    let (_, nodes) = probs.dims2()?;
    if nodes != hierarchy.len() || eligible.len() != nodes {
        return Err(Error::Shape(format!(
            "{nodes} probability columns for a hierarchy of {} nodes",
            hierarchy.len()
        )));
    }
    if !probs.is_finite() {
        return Err(Error::NonFinite("predicted probabilities".into()));
    }
    let preds = probs
        .rows()
        .map(|row| match mode {
            PredictMode::Single => {
                let terminal = argmax_eligible(row, eligible);
                Prediction { terminal: Some(terminal), labels: hierarchy.label_set(terminal) }
            }
            PredictMode::Multi => {
                let labels: Vec<bool> = row.iter().map(|&p| p > 0.5).collect();
                Prediction { terminal: hierarchy.terminal_of(&labels), labels }
            }
        })
        .collect();
    Ok(preds)
}

/// First index of the largest eligible entry.
fn argmax_eligible(row: &[f64], eligible: &[bool]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (j, (&p, &ok)) in row.iter().zip(eligible).enumerate() {
        if ok && best.is_none_or(|(_, b)| p > b) {
            best = Some((j, p));
        }
    }
    best.map_or(0, |(j, _)| j)
}
