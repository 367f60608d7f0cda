//! Feature-vector datasets, stratified splits and the synthetic hierarchical
//! activity generator.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::{seed_rng, Rng, Tensor};
use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;
use crate::model::Batch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split `{other}`"))),
        }
    }
}

/// Preprocessed feature vectors with terminal labels over one hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub hierarchy: LabelHierarchy,
    dim: usize,
    features: Vec<f64>,
    terminals: Vec<usize>,
    splits: Vec<Split>,
}

impl Dataset {
    /// Every example starts in the training split.
    pub fn new(hierarchy: LabelHierarchy, dim: usize, features: Vec<f64>, terminals: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("feature width must be positive".into()));
        }
        if features.len() != dim * terminals.len() {
            return Err(Error::Shape(format!(
                "{} feature values for {} examples of width {dim}",
                features.len(),
                terminals.len()
            )));
        }
        if let Some(&t) = terminals.iter().find(|&&t| t >= hierarchy.len()) {
            return Err(Error::Validation(format!("terminal index {t} out of range")));
        }
        let splits = vec![Split::Train; terminals.len()];
        Ok(Self { hierarchy, dim, features, terminals, splits })
    }

    /// Reads a features CSV (`f0,...,f{d-1},label`) and a hierarchy edge file.
    pub fn load(features_path: impl AsRef<Path>, hierarchy_path: impl AsRef<Path>) -> Result<Self> {
        let hierarchy = LabelHierarchy::from_file(hierarchy_path)?;
        let file = std::fs::File::open(features_path)?;
        Self::from_csv(hierarchy, file)
    }

    pub fn from_csv(hierarchy: LabelHierarchy, reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 {
            return Err(Error::Validation("features CSV needs at least one feature column and a label".into()));
        }
        let dim = header.len() - 1;
        let mut features = Vec::new();
        let mut terminals = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            // data rows are numbered from 1, after the header
            let row = i + 1;
            if record.len() != dim + 1 {
                return Err(Error::Validation(format!(
                    "row {row}: expected {} fields, found {}",
                    dim + 1,
                    record.len()
                )));
            }
            for field in record.iter().take(dim) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Validation(format!("row {row}: `{field}` is not a number")))?;
                features.push(v);
            }
            let label = record[dim].trim();
            let t = hierarchy
                .index_of(label)
                .ok_or_else(|| Error::UnknownLabel { label: label.to_string(), row: Some(row) })?;
            terminals.push(t);
        }
        Self::new(hierarchy, dim, features, terminals)
    }

    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.hierarchy.name(self.terminals[i]).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `features.csv` and `hierarchy.tsv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join("features.csv"))?)?;
        self.hierarchy.write(dir.join("hierarchy.tsv"))
    }

    pub fn len(&self) -> usize {
        self.terminals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminals.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn terminal(&self, i: usize) -> usize {
        self.terminals[i]
    }

    pub fn terminals(&self) -> &[usize] {
        &self.terminals
    }

    pub fn split_of(&self, i: usize) -> Split {
        self.splits[i]
    }

    /// Binary target row for example `i`.
    pub fn targets(&self, i: usize) -> Vec<bool> {
        self.hierarchy.label_set(self.terminals[i])
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Feature matrix of the given examples.
    pub fn features(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Tensor::new(&[indices.len(), self.dim], data).expect("consistent width")
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let terminals = indices.iter().map(|&i| self.terminals[i]).collect();
        Batch::new(&self.hierarchy, self.features(indices), terminals).expect("validated on construction")
    }

    /// Seeded split stratified by terminal label.
    ///
    /// Per class, `round(f_val·n)` examples go to validation, `round(f_test·n)`
    /// to test and the rest to training; every split with a positive fraction
    /// receives at least one example of each class.
    pub fn split(mut self, fractions: [f64; 3], seed: u64) -> Result<Self> {
        if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
        }
        let active = fractions.iter().filter(|&&f| f > 0.0).count();
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &t) in self.terminals.iter().enumerate() {
            by_class.entry(t).or_default().push(i);
        }
        let mut rng = seed_rng(seed);
        for (class, mut members) in by_class {
            let n = members.len();
            if n < active {
                return Err(Error::Validation(format!(
                    "class `{}` has {n} examples, fewer than the {active} requested splits",
                    self.hierarchy.name(class)
                )));
            }
            members.shuffle(&mut rng);
            let want = |f: f64| if f > 0.0 { ((f * n as f64).round() as usize).max(1) } else { 0 };
            let (n_val, n_test) = fit_counts(n, fractions, want(fractions[1]), want(fractions[2]));
            let n_train = n - n_val - n_test;
            for (pos, &i) in members.iter().enumerate() {
                self.splits[i] = if pos < n_train {
                    Split::Train
                } else if pos < n_train + n_val {
                    Split::Val
                } else {
                    debug_assert!(pos < n_train + n_val + n_test);
                    Split::Test
                };
            }
        }
        Ok(self)
    }
}

// Trims val/test (larger first, never below one) until a training example
// fits when one is wanted. With no training fraction the remainder goes to
// the last active split.
fn fit_counts(n: usize, fractions: [f64; 3], mut n_val: usize, mut n_test: usize) -> (usize, usize) {
    let min_train = usize::from(fractions[0] > 0.0);
    while n_val + n_test + min_train > n {
        if n_test >= n_val && n_test > 1 || n_val <= 1 {
            n_test -= 1;
        } else {
            n_val -= 1;
        }
    }
    if min_train == 0 {
        let rest = n - n_val - n_test;
        if fractions[2] > 0.0 {
            n_test += rest;
        } else {
            n_val += rest;
        }
    }
    (n_val, n_test)
}

/// Parameters of a synthetic hierarchical activity dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub depth: usize,
    pub branching: usize,
    pub dim: usize,
    /// Cosine similarity between sibling prototypes.
    pub rho: f64,
    /// Per-coordinate Gaussian noise around the leaf prototype.
    pub sigma: f64,
    pub per_leaf: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { depth: 2, branching: 3, dim: 16, rho: 0.6, sigma: 0.1, per_leaf: 100, seed: 0 }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.branching == 0 || self.dim == 0 || self.per_leaf == 0 {
            return Err(Error::Validation("depth, branching, dim and per_leaf must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Validation(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Validation(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Parses `key=value` lines (`#` comments allowed).
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::Parse { path: "<synthetic spec>".into(), line: lineno + 1, message: m };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |_| err(format!("bad value `{value}` for `{key}`"));
            match key {
                "depth" => spec.depth = value.parse().map_err(bad)?,
                "branching" => spec.branching = value.parse().map_err(bad)?,
                "dim" => spec.dim = value.parse().map_err(bad)?,
                "per_leaf" => spec.per_leaf = value.parse().map_err(bad)?,
                "seed" => spec.seed = value.parse().map_err(bad)?,
                "rho" => spec.rho = value.parse().map_err(|_| err(format!("bad value `{value}` for `rho`")))?,
                "sigma" => spec.sigma = value.parse().map_err(|_| err(format!("bad value `{value}` for `sigma`")))?,
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        format!(
            "depth={}\nbranching={}\ndim={}\nrho={}\nsigma={}\nper_leaf={}\nseed={}\n",
            self.depth, self.branching, self.dim, self.rho, self.sigma, self.per_leaf, self.seed
        )
    }

    /// Full `branching`-ary tree of the given depth and one unit-norm
    /// prototype per node.
    ///
    /// Children of a prototype `p` are `√ρ·p + √(1-ρ)·f_k` with fresh
    /// directions `f_k` orthonormal to `p` and to each other, so siblings
    /// have cosine similarity exactly `ρ` whenever `dim > branching`.
    pub fn prototypes(&self) -> Result<(LabelHierarchy, Vec<Vec<f64>>)> {
        self.validate()?;
        let mut rng = seed_rng(self.seed);
        let root = random_unit(self.dim, &mut rng);
        let (keep, fresh) = (self.rho.sqrt(), (1.0 - self.rho).sqrt());

        let mut edges = Vec::new();
        let mut protos = Vec::new();
        let mut frontier: Vec<(String, Vec<f64>)> = vec![("root".to_string(), root)];
        for _ in 0..self.depth {
            let mut next = Vec::new();
            for (parent_name, parent) in &frontier {
                let mut basis: Vec<Vec<f64>> = vec![parent.clone()];
                for k in 0..self.branching {
                    let dir = orthogonal_direction(&basis, self.dim, &mut rng);
                    let child: Vec<f64> = parent.iter().zip(&dir).map(|(p, f)| keep * p + fresh * f).collect();
                    let child = normalized(child);
                    basis.push(dir);
                    let name = if parent_name == "root" { format!("n{k}") } else { format!("{parent_name}.{k}") };
                    edges.push((parent_name.clone(), name.clone()));
                    protos.push(child.clone());
                    next.push((name, child));
                }
            }
            frontier = next;
        }
        let hierarchy = LabelHierarchy::from_edges(&edges)?;
        // breadth-first generation matches first-appearance node order
        Ok((hierarchy, protos))
    }
}

fn random_unit(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if norm(&v) > 1e-9 {
            return normalized(v);
        }
    }
}

/// Random unit vector orthogonal to every vector in `basis` (assumed
/// orthonormal after the first). Falls back to orthogonality with the first
/// vector only once the space is exhausted.
fn orthogonal_direction(basis: &[Vec<f64>], dim: usize, rng: &mut Rng) -> Vec<f64> {
    for limit in [basis.len(), 1] {
        for _ in 0..16 {
            let mut v = random_unit(dim, rng);
            for b in &basis[..limit] {
                let bb: f64 = b.iter().map(|x| x * x).sum();
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / bb;
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= proj * y;
                }
            }
            if norm(&v) > 1e-6 {
                return normalized(v);
            }
        }
    }
    random_unit(dim, rng)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    for x in &mut v {
        *x /= n;
    }
    v
}

/// Samples `per_leaf` noisy copies of every leaf prototype. Terminals are
/// leaves; examples are grouped by leaf in node order.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let (hierarchy, protos) = spec.prototypes()?;
    // independent stream from the prototype draw
    let mut rng = seed_rng(spec.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::Validation(e.to_string()))?;
    let mut features = Vec::new();
    let mut terminals = Vec::new();
    let leaves: Vec<usize> = hierarchy.leaves().collect();
    for &leaf in &leaves {
        for _ in 0..spec.per_leaf {
            features.extend(protos[leaf].iter().map(|&p| p + noise.sample(&mut rng)));
            terminals.push(leaf);
        }
    }
    Dataset::new(hierarchy, spec.dim, features, terminals)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b))
    }

    fn tiny_hierarchy() -> LabelHierarchy {
        LabelHierarchy::from_edges(&[("r", "a"), ("r", "b")]).unwrap()
    }

    #[test]
    fn parses_small_csv() {
        let csv = "f0,f1,f2,label\n1,2,3,a\n4.5,-1e-3,0,b\n";
        let d = Dataset::from_csv(tiny_hierarchy(), csv.as_bytes()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 3);
        assert_eq!(d.row(1), &[4.5, -1e-3, 0.0]);
        assert_eq!(d.terminal(1), 1);
    }

    #[test]
    fn unknown_label_names_label_and_row() {
        let csv = "f0,label\n1,a\n2,zzz\n";
        let err = Dataset::from_csv(tiny_hierarchy(), csv.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { ref label, row: Some(2) } if label == "zzz"), "{err}");
        assert!(err.to_string().contains("zzz"));
    }

    #[test]
    fn ragged_row_is_rejected() {
        let csv = "f0,f1,label\n1,2,a\n3,b\n";
        assert!(matches!(Dataset::from_csv(tiny_hierarchy(), csv.as_bytes()), Err(Error::Validation(_))));
    }

    #[test]
    fn degenerate_split_puts_everything_in_train() {
        let d = generate_synthetic(&SyntheticSpec { per_leaf: 5, ..Default::default() }).unwrap();
        let d = d.split([1.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(d.indices(Split::Train).len(), d.len());
    }

    #[test]
    fn stratified_counts() {
        let d = generate_synthetic(&SyntheticSpec { per_leaf: 100, ..Default::default() }).unwrap();
        let d = d.split([0.8, 0.1, 0.1], 3).unwrap();
        for leaf in d.hierarchy.leaves() {
            let count = |s| d.indices(s).iter().filter(|&&i| d.terminal(i) == leaf).count();
            assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (80, 10, 10));
        }
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let d = generate_synthetic(&SyntheticSpec { per_leaf: 10, ..Default::default() }).unwrap();
        let a = d.clone().split([0.6, 0.2, 0.2], 8).unwrap();
        let b = d.clone().split([0.6, 0.2, 0.2], 8).unwrap();
        let c = d.split([0.6, 0.2, 0.2], 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_errors() {
        let d = generate_synthetic(&SyntheticSpec { per_leaf: 2, ..Default::default() }).unwrap();
        assert!(d.clone().split([0.5, 0.5, 0.1], 0).is_err());
        assert!(d.split([0.8, 0.1, 0.1], 0).is_err());
    }

    #[test]
    fn zero_noise_copies_prototypes() {
        let spec = SyntheticSpec { sigma: 0.0, per_leaf: 4, ..Default::default() };
        let d = generate_synthetic(&spec).unwrap();
        for i in 0..d.len() {
            for j in 0..d.len() {
                if d.terminal(i) == d.terminal(j) {
                    assert_eq!(d.row(i), d.row(j));
                }
            }
        }
    }

    #[test]
    fn sibling_prototypes_have_cosine_rho() {
        let spec = SyntheticSpec { rho: 0.6, ..Default::default() };
        let (h, protos) = spec.prototypes().unwrap();
        assert_eq!(h.len(), 12);
        for v in 0..h.len() {
            for w in 0..h.len() {
                if v != w && h.parent(v) == h.parent(w) {
                    assert!((cos(&protos[v], &protos[w]) - 0.6).abs() < 1e-9);
                }
            }
            assert!((norm(&protos[v]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spec_file_round_trip() {
        let spec = SyntheticSpec { depth: 3, branching: 2, dim: 8, rho: 0.25, sigma: 0.05, per_leaf: 7, seed: 42 };
        assert_eq!(SyntheticSpec::parse(&spec.to_text()).unwrap(), spec);
        assert!(SyntheticSpec::parse("depth=2\nwidth=3\n").is_err());
        assert!(SyntheticSpec::parse("rho=1.5\n").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = generate_synthetic(&SyntheticSpec { per_leaf: 3, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::from_csv(d.hierarchy.clone(), buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }
}
