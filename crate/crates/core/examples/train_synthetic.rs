//! Trains the full model on a generated three-leaf-per-group hierarchy and
//! prints the per-epoch log plus test metrics.
//!
//! cargo run --release --example train_synthetic -- [seed] [epochs]

use hhar::{generate_synthetic, train, ModelConfig, Split, SyntheticSpec, TrainConfig};

fn main() -> hhar::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let epochs: usize = args.next().map_or(50, |s| s.parse().expect("epochs"));

    let spec = SyntheticSpec { seed, ..SyntheticSpec::default() };
    let data = generate_synthetic(&spec)?.split([0.8, 0.1, 0.1], seed)?;
    let cfg = TrainConfig { seed, epochs, ..TrainConfig::default() };

    let start = std::time::Instant::now();
    let trained = train(&data, ModelConfig::new(data.dim()), &cfg)?;
    for e in &trained.log {
        println!(
            "epoch {:>2}  lr {:<10.3e} total {:>9.4}  align {:>8.4}  con {:>7.4}  ce {:>7.4}  train {:.3}",
            e.epoch, e.lr, e.total, e.align, e.contrastive, e.cross_entropy, e.train_acc
        );
    }
    let test = data.indices(Split::Test);
    let acc = hhar::objectives::single_label_accuracy(&trained.model, &data, &test)?;
    println!("test single-label accuracy {acc:.4} in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
