//! Loads a preprocessed feature CSV against a hierarchy and prints label
//! statistics. With no arguments it writes and reads a tiny DaLiAc-labelled
//! file.
//!
//! cargo run --example load_csv -- features.csv [hierarchy.tsv|daliac|hapt]

use std::collections::BTreeMap;

use hhar::{Dataset, LabelHierarchy};

fn main() -> hhar::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = match args.next() {
        Some(p) => p,
        None => {
            let p = std::env::temp_dir().join("hhar-daliac-demo.csv");
            std::fs::write(&p, "f0,f1,f2,label\n0.1,0.2,0.3,sitting\n1.5,0.1,-0.4,vacuuming\n2.2,1.9,0.3,rope_jumping\n")?;
            p.to_string_lossy().into_owned()
        }
    };
    let hierarchy = match args.next().as_deref() {
        None | Some("daliac") => LabelHierarchy::daliac(),
        Some("hapt") => LabelHierarchy::hapt(),
        Some(file) => LabelHierarchy::from_file(file)?,
    };
    let data = Dataset::from_csv(hierarchy, std::fs::File::open(&path)?)?;
    println!("{path}: {} examples, d = {}", data.len(), data.dim());
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &t in data.terminals() {
        *counts.entry(data.hierarchy.name(t)).or_default() += 1;
    }
    for (label, n) in counts {
        let t = data.hierarchy.index_of(label).unwrap();
        let path: Vec<&str> = data.hierarchy.path(t).iter().map(|&v| data.hierarchy.name(v)).collect();
        println!("{n:>6}  {}", path.join(" > "));
    }
    Ok(())
}
