//! Experiment orchestration: evaluation, flat baselines, the ablation grid,
//! reports and the command-line front end.

pub mod cli;
pub mod knn;
pub mod metrics;
pub mod mlp;
pub mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{GraphMode, ModelConfig, Widths};
use crate::objectives::{train, LossTerms, TrainConfig, Trained};

pub use knn::{knn_baseline, knn_predict, DEFAULT_K};
pub use metrics::{evaluate, score, Metrics};
pub use mlp::{train_mlp, Mlp};
pub use report::{Report, Row};

/// The eight model variants of the ablation grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Graph layers replaced by linear layers.
    NoGraph,
    PredefinedOnly,
    AdaptiveOnly,
    NoFeaturePropagation,
    AlignCe,
    ConCe,
    CeOnly,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::NoGraph,
        Variant::PredefinedOnly,
        Variant::AdaptiveOnly,
        Variant::NoFeaturePropagation,
        Variant::AlignCe,
        Variant::ConCe,
        Variant::CeOnly,
        Variant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NoGraph => "no_graph",
            Variant::PredefinedOnly => "predefined_only",
            Variant::AdaptiveOnly => "adaptive_only",
            Variant::NoFeaturePropagation => "no_feature_propagation",
            Variant::AlignCe => "align_ce",
            Variant::ConCe => "con_ce",
            Variant::CeOnly => "ce_only",
            Variant::Full => "full",
        }
    }

    pub fn graph(self) -> GraphMode {
        match self {
            Variant::NoGraph => GraphMode::None,
            Variant::PredefinedOnly => GraphMode::Predefined,
            Variant::AdaptiveOnly => GraphMode::Adaptive,
            _ => GraphMode::Both,
        }
    }

    pub fn feature_propagation(self) -> bool {
        self != Variant::NoFeaturePropagation
    }

    pub fn terms(self) -> LossTerms {
        let (align, contrastive) = match self {
            Variant::AlignCe => (true, false),
            Variant::ConCe => (false, true),
            Variant::CeOnly => (false, false),
            _ => (true, true),
        };
        LossTerms { align, contrastive, cross_entropy: true }
    }

    pub fn model_config(self, feature_dim: usize, widths: Widths) -> ModelConfig {
        ModelConfig { feature_dim, widths, graph: self.graph(), feature_propagation: self.feature_propagation() }
    }

    pub fn train_config(self, base: &TrainConfig) -> TrainConfig {
        TrainConfig { terms: self.terms(), ..base.clone() }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown variant `{s}`")))
    }
}

/// Outcome of training and scoring one variant on one split of the data.
#[derive(Debug)]
pub struct VariantRun {
    pub variant: Variant,
    pub result: Result<(Trained, Metrics)>,
}

/// Trains `variant` on `data` and evaluates it on `split`.
pub fn run_variant(
    data: &Dataset,
    widths: Widths,
    base: &TrainConfig,
    variant: Variant,
    split: Split,
) -> Result<(Trained, Metrics)> {
    let trained = train(data, variant.model_config(data.dim(), widths), &variant.train_config(base))?;
    let metrics = evaluate(&trained.model, data, split)?;
    Ok((trained, metrics))
}

/// Trains every variant in `variants` on the same data split with the same
/// seed. Variants run in parallel; a failing variant is recorded and does not
/// stop the others. Results come back in the order given.
pub fn run_ablation(
    data: &Dataset,
    widths: Widths,
    base: &TrainConfig,
    variants: &[Variant],
    split: Split,
) -> Vec<VariantRun> {
    variants
        .par_iter()
        .map(|&variant| {
            let result = run_variant(data, widths, base, variant, split);
            if let Err(e) = &result {
                log::warn!("variant {} failed: {e}", variant.name());
            }
            VariantRun { variant, result }
        })
        .collect()
}

/// Repeats the ablation for several seeds. For each seed the data is split
/// with that seed and every variant is trained with it. Rows hold the mean
/// metrics over seeds; margins compare the full model against the no-graph
/// and cross-entropy-only variants on mean single-label accuracy (plain keys)
/// and on mean exact-match accuracy (`_exact_match` keys).
pub fn ablation_report(
    data: &Dataset,
    fractions: [f64; 3],
    widths: Widths,
    base: &TrainConfig,
    variants: &[Variant],
    seeds: &[u64],
    split: Split,
) -> Result<Report> {
    if seeds.is_empty() {
        return Err(Error::Validation("at least one seed is required".into()));
    }
    let mut per_variant: Vec<Vec<Result<(Metrics, f64)>>> = variants.iter().map(|_| Vec::new()).collect();
    for &seed in seeds {
        let split_data = data.clone().split(fractions, seed)?;
        let cfg = TrainConfig { seed, ..base.clone() };
        for (slot, run) in per_variant.iter_mut().zip(run_ablation(&split_data, widths, &cfg, variants, split)) {
            slot.push(run.result.map(|(t, m)| (m, t.log.last().map_or(f64::NAN, |e| e.total))));
        }
    }
    let rows: Vec<Row> = variants.iter().zip(per_variant).map(|(v, runs)| Row::from_runs(v.name(), runs)).collect();
    let mut report = Report::new("ablate", rows);
    let metrics = |v: Variant| report.row(v.name()).and_then(|r| r.metrics);
    let mut margins = BTreeMap::new();
    if let Some(full) = metrics(Variant::Full) {
        for (other, key) in [(Variant::NoGraph, "no_graph"), (Variant::CeOnly, "ce_only")] {
            if let Some(m) = metrics(other) {
                margins.insert(format!("full_minus_{key}"), full.single_label_accuracy - m.single_label_accuracy);
                margins.insert(format!("full_minus_{key}_exact_match"), full.exact_match - m.exact_match);
            }
        }
    }
    report.margins = margins;
    Ok(report)
}
