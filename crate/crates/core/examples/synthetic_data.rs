//! Generates a synthetic hierarchical dataset, reports prototype geometry and
//! writes it to a directory as features.csv + hierarchy.tsv.
//!
//! cargo run --example synthetic_data -- [out_dir] [key=value ...]

use hhar::{generate_synthetic, Split, SyntheticSpec};

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (n(a) * n(b))
}

fn main() -> hhar::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "synthetic-data".into());
    let overrides: Vec<String> = args.collect();
    let spec = SyntheticSpec::parse(&overrides.join("\n"))?;
    print!("{}", spec.to_text());

    let (h, protos) = spec.prototypes()?;
    let leaves: Vec<usize> = h.leaves().collect();
    let (mut sib, mut other) = (Vec::new(), Vec::new());
    for (k, &a) in leaves.iter().enumerate() {
        for &b in &leaves[k + 1..] {
            let c = cos(&protos[a], &protos[b]);
            if h.parent(a) == h.parent(b) { sib.push(c) } else { other.push(c) }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    println!("leaf prototype cosine: siblings {:.3}, across parents {:.3}", mean(&sib), mean(&other));

    let data = generate_synthetic(&spec)?.split([0.8, 0.1, 0.1], spec.seed)?;
    for s in Split::ALL {
        println!("{:>5}: {} examples", s.name(), data.indices(s).len());
    }
    data.save(&out)?;
    println!("wrote {out}/features.csv and {out}/hierarchy.tsv");
    Ok(())
}
