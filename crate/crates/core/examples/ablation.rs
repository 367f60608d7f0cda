//! Trains all eight ablation variants on one synthetic split (or several
//! seeds) and prints the consolidated table with margins.
//!
//! cargo run --release --example ablation -- [repeats] [epochs]

use hhar::harness::{ablation_report, Variant};
use hhar::{generate_synthetic, Split, SyntheticSpec, TrainConfig, Widths};

fn main() -> hhar::Result<()> {
    let mut args = std::env::args().skip(1);
    let repeats: u64 = args.next().map_or(1, |s| s.parse().expect("repeats"));
    let epochs: usize = args.next().map_or(20, |s| s.parse().expect("epochs"));

    let data = generate_synthetic(&SyntheticSpec { rho: 0.8, sigma: 0.2, ..SyntheticSpec::default() })?;
    let cfg = TrainConfig { epochs, ..TrainConfig::default() };
    let seeds: Vec<u64> = (0..repeats).collect();
    let report =
        ablation_report(&data, [0.8, 0.1, 0.1], Widths::default(), &cfg, &Variant::ALL, &seeds, Split::Test)?;
    print!("{}", report.to_table(false));
    Ok(())
}
