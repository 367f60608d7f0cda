//! Exact k-nearest-neighbour baseline over raw features.

use rayon::prelude::*;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::Prediction;

use super::metrics::{score, Metrics};

/// Neighbour count used by the baseline.
pub const DEFAULT_K: usize = 7;

/// Majority terminal among the `k` training rows closest to `query`.
///
/// Distances are squared Euclidean. Equal distances are ordered by training
/// row, and a tied vote goes to the smallest node index, so the result never
/// depends on iteration order.
pub fn knn_predict(
    train: &[f64],
    terminals: &[usize],
    dim: usize,
    nodes: usize,
    query: &[f64],
    k: usize,
) -> Result<usize> {
    let n = terminals.len();
    if k == 0 || k > n {
        return Err(Error::Validation(format!("k = {k} with {n} training examples")));
    }
    if query.len() != dim || train.len() != n * dim {
        return Err(Error::shape_mismatch("knn", &[n, dim], &[query.len()]));
    }
    let mut dist: Vec<(f64, usize)> = train
        .chunks_exact(dim.max(1))
        .take(n)
        .enumerate()
        .map(|(i, row)| (row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < n {
        dist.select_nth_unstable_by(k - 1, by_key);
    }
    let mut votes = vec![0usize; nodes];
    for &(_, i) in &dist[..k] {
        votes[terminals[i]] += 1;
    }
    let best = votes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map_or(0, |(j, _)| j);
    Ok(best)
}

/// Classifies every example of `split` against the training split.
pub fn knn_predictions(data: &Dataset, k: usize, split: Split) -> Result<Vec<usize>> {
    let train_idx = data.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let train = data.features(&train_idx).into_data();
    let terminals: Vec<usize> = train_idx.iter().map(|&i| data.terminal(i)).collect();
    let nodes = data.hierarchy.len();
    data.indices(split)
        .par_iter()
        .map(|&i| knn_predict(&train, &terminals, data.dim(), nodes, data.row(i), k))
        .collect()
}

/// Metrics of the k-NN baseline. The multi-label output is the voted
/// terminal's path.
pub fn knn_baseline(data: &Dataset, k: usize, split: Split) -> Result<Metrics> {
    let idx = data.indices(split);
    if idx.is_empty() {
        return Err(Error::Validation(format!("the {} split is empty", split.name())));
    }
    let preds: Vec<Prediction> = knn_predictions(data, k, split)?
        .into_iter()
        .map(|t| Prediction { terminal: Some(t), labels: data.hierarchy.label_set(t) })
        .collect();
    let terminals: Vec<usize> = idx.iter().map(|&i| data.terminal(i)).collect();
    score(&data.hierarchy, &terminals, &preds, &preds)
}
