//! Trains briefly, saves a checkpoint, reloads it and prints single- and
//! multi-label predictions for a few test examples.

use std::collections::BTreeMap;

use hhar::checkpoint;
use hhar::{generate_synthetic, train, ModelConfig, PredictMode, Split, SyntheticSpec, TrainConfig};

fn main() -> hhar::Result<()> {
    let data = generate_synthetic(&SyntheticSpec::default())?.split([0.8, 0.1, 0.1], 0)?;
    let trained = train(&data, ModelConfig::new(data.dim()), &TrainConfig { epochs: 10, ..TrainConfig::default() })?;

    let dir = std::env::temp_dir().join("hhar-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    let mut run = BTreeMap::new();
    run.insert("note".to_string(), "example".to_string());
    checkpoint::save(&path, &trained.model, &run)?;
    let (model, meta) = checkpoint::load(&path)?;
    println!("reloaded {} ({} parameter tensors, run {meta:?})", path.display(), model.params.len());

    let idx: Vec<usize> = data.indices(Split::Test).into_iter().step_by(15).collect();
    let x = data.features(&idx);
    let single = model.predict(&x, PredictMode::Single)?;
    // Optimizer moments are not stored, but predictions must match exactly.
    assert_eq!(single, trained.model.predict(&x, PredictMode::Single)?);
    let multi = model.predict(&x, PredictMode::Multi)?;
    let h = &model.hierarchy;
    let names = |set: &[bool]| -> String {
        let picked: Vec<&str> = set.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| h.name(j)).collect();
        format!("{{{}}}", picked.join(", "))
    };
    for ((&i, s), m) in idx.iter().zip(&single).zip(&multi) {
        println!(
            "example {i:>3}  true {:<8} single {:<8} multi {}",
            h.name(data.terminal(i)),
            s.terminal.map_or("-", |t| h.name(t)),
            names(&m.labels)
        );
    }
    Ok(())
}
