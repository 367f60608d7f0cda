//! Accuracy metrics over label-set predictions.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;
use crate::model::{predict_from_probs, PredictMode, Prediction};
use crate::objectives::Trainable;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Predicted terminal equals the true terminal.
    pub single_label_accuracy: f64,
    /// Thresholded label set equals the true root path exactly.
    pub exact_match: f64,
    /// Mean correctness over every (example, node) decision.
    pub micro_accuracy: f64,
    /// Thresholded label set is some node's root path.
    pub path_consistency: f64,
    pub examples: usize,
}

/// Scores single- and multi-mode predictions against true terminals.
pub fn score(
    hierarchy: &LabelHierarchy,
    terminals: &[usize],
    single: &[Prediction],
    multi: &[Prediction],
) -> Result<Metrics> {
    let n = terminals.len();
    if n == 0 {
        return Err(Error::Validation("cannot score an empty split".into()));
    }
    if single.len() != n || multi.len() != n {
        return Err(Error::Shape(format!(
            "{n} examples but {} single and {} multi predictions",
            single.len(),
            multi.len()
        )));
    }
    let nodes = hierarchy.len();
    let (mut hit, mut exact, mut agree, mut consistent) = (0usize, 0usize, 0usize, 0usize);
    for ((&t, s), m) in terminals.iter().zip(single).zip(multi) {
        let truth = hierarchy.label_set(t);
        hit += usize::from(s.terminal == Some(t));
        exact += usize::from(m.labels == truth);
        agree += m.labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
        consistent += usize::from(hierarchy.terminal_of(&m.labels).is_some());
    }
    let n_f = n as f64;
    Ok(Metrics {
        single_label_accuracy: hit as f64 / n_f,
        exact_match: exact as f64 / n_f,
        micro_accuracy: agree as f64 / (n_f * nodes as f64),
        path_consistency: consistent as f64 / n_f,
        examples: n,
    })
}

/// Metrics of a trained model on one split.
pub fn evaluate<M: Trainable + ?Sized>(model: &M, data: &Dataset, split: Split) -> Result<Metrics> {
    let idx = data.indices(split);
    if idx.is_empty() {
        return Err(Error::Validation(format!("the {} split is empty", split.name())));
    }
    if !model.params().all_finite() {
        return Err(Error::NonFinite("model parameters".into()));
    }
    let probs = model.probabilities(&data.features(&idx))?;
    let h = model.hierarchy();
    let eligible = model.terminal_eligible();
    let single = predict_from_probs(h, eligible, &probs, PredictMode::Single)?;
    let multi = predict_from_probs(h, eligible, &probs, PredictMode::Multi)?;
    let terminals: Vec<usize> = idx.iter().map(|&i| data.terminal(i)).collect();
    score(h, &terminals, &single, &multi)
}
