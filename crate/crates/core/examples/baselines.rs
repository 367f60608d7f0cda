//! Scores the k-NN (k = 7) and MLP baselines next to the full model on the
//! same synthetic split.

use hhar::harness::mlp::{baseline_config, DEFAULT_HIDDEN};
use hhar::harness::{evaluate, knn_baseline, train_mlp, Report, Row, DEFAULT_K};
use hhar::{generate_synthetic, train, ModelConfig, Split, SyntheticSpec, TrainConfig};

fn main() -> hhar::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let spec = SyntheticSpec { seed, rho: 0.8, sigma: 0.15, ..SyntheticSpec::default() };
    let data = generate_synthetic(&spec)?.split([0.8, 0.1, 0.1], seed)?;

    let knn = knn_baseline(&data, DEFAULT_K, Split::Test)?;
    let (mlp, _) = train_mlp(&data, DEFAULT_HIDDEN, &baseline_config(seed))?;
    let model = train(&data, ModelConfig::new(data.dim()), &TrainConfig { seed, ..TrainConfig::default() })?;

    let report = Report::new(
        "baseline",
        vec![
            Row::ok("knn_k7", knn),
            Row::ok("mlp_h64", evaluate(&mlp, &data, Split::Test)?),
            Row::ok("hhar_full", evaluate(&model.model, &data, Split::Test)?),
        ],
    );
    print!("{}", report.to_table(false));
    Ok(())
}
