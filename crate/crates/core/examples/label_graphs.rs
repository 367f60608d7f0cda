//! Prints the ancestor-overlap graph of the bundled DaLiAc hierarchy, its
//! normalized form and a freshly initialized adaptive graph.

use hhar::diffcore::{init_uniform, seed_rng, Tape, Tensor};
use hhar::hierarchy::{adaptive_adjacency, normalize_adjacency, predefined_adjacency, DEFAULT_ADAPTIVE_DIM};
use hhar::LabelHierarchy;

fn print_matrix(title: &str, h: &LabelHierarchy, m: &Tensor) {
    println!("\n{title}");
    print!("{:>18}", "");
    for j in 0..h.len() {
        print!("{j:>6}");
    }
    println!();
    for (i, row) in m.rows().enumerate() {
        print!("{:>14} {i:>2} ", h.name(i));
        for v in row {
            print!("{v:>6.2}");
        }
        println!();
    }
}

fn main() -> hhar::Result<()> {
    let h = match std::env::args().nth(1) {
        Some(path) => LabelHierarchy::from_file(path)?,
        None => LabelHierarchy::daliac(),
    };
    println!("root `{}`, {} labels, {} leaves", h.root_name(), h.len(), h.leaves().count());
    for v in 0..h.len() {
        let path: Vec<&str> = h.path(v).iter().map(|&p| h.name(p)).collect();
        println!("  {v:>2} {}", path.join(" > "));
    }

    let raw = predefined_adjacency(&h);
    print_matrix("A (ancestor overlap)", &h, &raw);
    print_matrix("I + D^-1/2 A D^-1/2", &h, &normalize_adjacency(&raw)?);

    let mut rng = seed_rng(0);
    let mut tape = Tape::new();
    let scale = 1.0 / (h.len() as f64).sqrt();
    let e1 = tape.leaf(init_uniform(&[h.len(), DEFAULT_ADAPTIVE_DIM], scale, &mut rng)?);
    let e2 = tape.leaf(init_uniform(&[h.len(), DEFAULT_ADAPTIVE_DIM], scale, &mut rng)?);
    let adp = adaptive_adjacency(&mut tape, e1, e2)?;
    print_matrix("softmax(relu(E1 E2^T)) at initialization", &h, tape.value(adp));
    Ok(())
}
