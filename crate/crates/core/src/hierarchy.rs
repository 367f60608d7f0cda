//! Label hierarchy and the two label graphs built over it.
//!
//! The hierarchy is a tree whose root is *virtual*: it is not one of the `N`
//! classifiable nodes, but it is counted as an ancestor of every node. The
//! ancestor set `H(v)` used for the predefined adjacency is therefore
//! `ancestors(v) ∪ {root}`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Default width of the adaptive-graph source/target node embeddings.
pub const DEFAULT_ADAPTIVE_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelHierarchy {
    root: String,
    names: Vec<String>,
    index: HashMap<String, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    /// Strict real ancestors, ordered from the top level down to the parent.
    ancestors: Vec<Vec<usize>>,
    edges: Vec<(String, String)>,
}

impl LabelHierarchy {
    /// Builds a hierarchy from `(parent, child)` edges. Node indices follow
    /// first appearance of each name, the root excluded.
    pub fn from_edges<P: AsRef<str>, C: AsRef<str>>(edges: &[(P, C)]) -> Result<Self> {
        let edges: Vec<(String, String)> =
            edges.iter().map(|(p, c)| (p.as_ref().to_string(), c.as_ref().to_string())).collect();
        Self::build(edges, |_, msg| Error::Validation(msg))
    }

    /// Parses the `parent<TAB>child` edge format. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_path(text, Path::new("<hierarchy>"))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse_with_path(&text, path)
    }

    fn parse_with_path(text: &str, path: &Path) -> Result<Self> {
        let mut edges = Vec::new();
        let mut lines = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields[..] {
                [p, c] if !p.trim().is_empty() && !c.trim().is_empty() => {
                    edges.push((p.trim().to_string(), c.trim().to_string()));
                    lines.push(lineno + 1);
                }
                _ => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno + 1,
                        message: "expected `parent<TAB>child`".into(),
                    })
                }
            }
        }
        Self::build(edges, |edge, message| Error::Parse {
            path: path.to_path_buf(),
            line: edge.and_then(|e| lines.get(e).copied()).unwrap_or(0),
            message,
        })
    }

    fn build(edges: Vec<(String, String)>, err: impl Fn(Option<usize>, String) -> Error) -> Result<Self> {
        if edges.is_empty() {
            return Err(err(None, "hierarchy has no edges".into()));
        }
        let mut parent_of: HashMap<&str, &str> = HashMap::new();
        for (i, (p, c)) in edges.iter().enumerate() {
            if p == c {
                return Err(err(Some(i), format!("`{c}` is its own parent")));
            }
            if parent_of.insert(c, p).is_some() {
                return Err(err(Some(i), format!("`{c}` has more than one parent")));
            }
        }
        let mut roots: Vec<&str> = Vec::new();
        for (p, _) in &edges {
            if !parent_of.contains_key(p.as_str()) && !roots.contains(&p.as_str()) {
                roots.push(p);
            }
        }
        let root = match roots[..] {
            [r] => r.to_string(),
            [] => return Err(err(None, "no root: every name appears as a child (cycle)".into())),
            _ => return Err(err(None, format!("multiple roots: {}", roots.join(", ")))),
        };

        let mut names = Vec::new();
        let mut index = HashMap::new();
        for (p, c) in &edges {
            for name in [p, c] {
                if *name != root && !index.contains_key(name) {
                    index.insert(name.clone(), names.len());
                    names.push(name.clone());
                }
            }
        }
        let n = names.len();
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for (p, c) in &edges {
            let ci = index[c];
            if *p != root {
                let pi = index[p];
                parent[ci] = Some(pi);
                children[pi].push(ci);
            }
        }

        let mut ancestors = Vec::with_capacity(n);
        for v in 0..n {
            let mut chain = Vec::new();
            let mut cur = parent[v];
            while let Some(p) = cur {
                if chain.len() >= n {
                    return Err(err(None, format!("cycle through `{}`", names[v])));
                }
                chain.push(p);
                cur = parent[p];
            }
            chain.reverse();
            ancestors.push(chain);
        }

        Ok(Self { root, names, index, parent, children, ancestors, edges })
    }

    /// Edge-file text that parses back to an identical hierarchy.
    pub fn to_edge_text(&self) -> String {
        let mut out = String::new();
        for (p, c) in &self.edges {
            let _ = writeln!(out, "{p}\t{c}");
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_edge_text())?;
        Ok(())
    }

    /// Number of classifiable nodes `N`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn root_name(&self) -> &str {
        &self.root
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Parent node, `None` for top-level nodes (whose parent is the root).
    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.children[node].is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&v| self.is_leaf(v))
    }

    /// Strict real ancestors of `node`, top level first. `H(node)` is this
    /// set plus the virtual root.
    pub fn ancestors(&self, node: usize) -> &[usize] {
        &self.ancestors[node]
    }

    /// Number of real nodes on the root-to-`node` path, `node` included.
    pub fn depth(&self, node: usize) -> usize {
        self.ancestors[node].len() + 1
    }

    /// Real nodes on the root-to-`node` path, top level first.
    pub fn path(&self, node: usize) -> Vec<usize> {
        let mut p = self.ancestors[node].clone();
        p.push(node);
        p
    }

    /// Binary multi-label target for a sample whose most specific label is
    /// `terminal`: the terminal and all its real ancestors are set.
    pub fn label_set(&self, terminal: usize) -> Vec<bool> {
        let mut y = vec![false; self.len()];
        for v in self.path(terminal) {
            y[v] = true;
        }
        y
    }

    /// [`label_set`](Self::label_set) by name.
    pub fn expand_label_set(&self, terminal: &str) -> Result<Vec<bool>> {
        let t = self
            .index_of(terminal)
            .ok_or_else(|| Error::UnknownLabel { label: terminal.to_string(), row: None })?;
        Ok(self.label_set(t))
    }

    /// Terminal node whose label set equals `set`, if `set` is a valid
    /// root-to-node path.
    pub fn terminal_of(&self, set: &[bool]) -> Option<usize> {
        let members: Vec<usize> = (0..self.len()).filter(|&v| set[v]).collect();
        let deepest = *members.iter().max_by_key(|&&v| self.depth(v))?;
        (self.label_set(deepest) == set).then_some(deepest)
    }

    /// DaLiAc daily-living activity hierarchy: 13 activities in 4 groups.
    pub fn daliac() -> Self {
        Self::parse(include_str!("../data/daliac.tsv")).expect("bundled hierarchy is valid")
    }

    /// UCI HAPT hierarchy: 6 basic activities and 6 postural transitions.
    pub fn hapt() -> Self {
        Self::parse(include_str!("../data/hapt.tsv")).expect("bundled hierarchy is valid")
    }
}

/// Raw ancestor-overlap weights `A[i][j] = |H(i) ∩ H(j)| / |H(i)|` with a
/// zero diagonal. Generally asymmetric.
pub fn predefined_adjacency(h: &LabelHierarchy) -> Tensor {
    let n = h.len();
    let mut a = Tensor::zeros(&[n, n]);
    for i in 0..n {
        // both sets contain the virtual root
        let hi = h.ancestors(i);
        let size = (hi.len() + 1) as f64;
        for j in 0..n {
            if i == j {
                continue;
            }
            // ancestor lists are root-first chains, so the overlap is a common prefix
            let shared = hi.iter().zip(h.ancestors(j)).take_while(|(x, y)| x == y).count() + 1;
            a.set(i, j, shared as f64 / size);
        }
    }
    a
}

/// `I + D^{-1/2} A D^{-1/2}` with `D` the row sums of `A`. Rows with zero
/// degree get a zero scaling factor.
pub fn normalize_adjacency(a: &Tensor) -> Result<Tensor> {
    let (r, c) = a.dims2()?;
    if r != c {
        return Err(Error::Shape(format!("adjacency must be square, got {:?}", a.shape())));
    }
    if let Some(bad) = a.data().iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Validation(format!("adjacency entries must be finite and non-negative, found {bad}")));
    }
    let inv_sqrt: Vec<f64> = a
        .rows()
        .map(|row| {
            let d: f64 = row.iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut out = Tensor::identity(r);
    for i in 0..r {
        for j in 0..r {
            let v = out.at(i, j) + inv_sqrt[i] * a.at(i, j) * inv_sqrt[j];
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Learned graph `row_softmax(relu(E1 · E2ᵀ))` recorded on `tape`.
pub fn adaptive_adjacency(tape: &mut Tape, source: Var, target: Var) -> Result<Var> {
    let (s, t) = (tape.value(source).shape().to_vec(), tape.value(target).shape().to_vec());
    if s.len() != 2 || s != t {
        return Err(Error::shape_mismatch("adaptive_adjacency", &s, &t));
    }
    let tt = tape.transpose(target)?;
    let scores = tape.matmul(source, tt)?;
    let filtered = tape.relu(scores);
    tape.row_softmax(filtered)
}

/// The fixed part of the label graphs: raw and normalized predefined
/// adjacency. The adaptive graph is rebuilt from trainable embeddings on
/// every forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphPair {
    pub raw: Tensor,
    pub normalized: Tensor,
}

impl GraphPair {
    pub fn new(h: &LabelHierarchy) -> Self {
        let raw = predefined_adjacency(h);
        let normalized = normalize_adjacency(&raw).expect("ancestor-overlap weights are non-negative");
        Self { raw, normalized }
    }

    pub fn nodes(&self) -> usize {
        self.raw.shape()[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_node() -> LabelHierarchy {
        LabelHierarchy::from_edges(&[
            ("r", "still"),
            ("r", "walking"),
            ("still", "sitting"),
            ("still", "standing"),
        ])
        .unwrap()
    }

    #[test]
    fn node_order_is_first_appearance() {
        let h = four_node();
        assert_eq!(h.names(), &["still", "walking", "sitting", "standing"]);
        assert_eq!(h.root_name(), "r");
    }

    #[test]
    fn ancestor_overlap_hand_values() {
        let h = four_node();
        let a = predefined_adjacency(&h);
        let (still, walking, sitting, standing) = (0, 1, 2, 3);
        assert_eq!(a.at(sitting, standing), 1.0);
        assert_eq!(a.at(sitting, walking), 0.5);
        assert_eq!(a.at(walking, sitting), 1.0);
        assert_eq!(a.at(sitting, still), 0.5);
        for i in 0..4 {
            assert_eq!(a.at(i, i), 0.0);
        }
    }

    #[test]
    fn single_node_adjacency() {
        let h = LabelHierarchy::from_edges(&[("root", "only")]).unwrap();
        let a = predefined_adjacency(&h);
        assert_eq!(a.data(), &[0.0]);
        assert_eq!(normalize_adjacency(&a).unwrap().data(), &[1.0]);
    }

    #[test]
    fn normalization_examples() {
        let a = Tensor::new(&[2, 2], vec![0., 1., 1., 0.]).unwrap();
        assert_eq!(normalize_adjacency(&a).unwrap().data(), &[1., 1., 1., 1.]);
        let a = Tensor::new(&[2, 2], vec![0., 2., 2., 0.]).unwrap();
        let n = normalize_adjacency(&a).unwrap();
        for v in n.data() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn normalization_rejects_negative_entries() {
        let a = Tensor::new(&[2, 2], vec![0., -1., 1., 0.]).unwrap();
        assert!(matches!(normalize_adjacency(&a), Err(Error::Validation(_))));
        assert!(normalize_adjacency(&Tensor::zeros(&[2, 3])).is_err());
    }

    #[test]
    fn label_set_expansion() {
        let h = four_node();
        assert_eq!(h.expand_label_set("sitting").unwrap(), vec![true, false, true, false]);
        assert_eq!(h.expand_label_set("walking").unwrap(), vec![false, true, false, false]);
        assert_eq!(h.expand_label_set("standing").unwrap().iter().filter(|b| **b).count(), 2);
        assert!(matches!(h.expand_label_set("jumping"), Err(Error::UnknownLabel { .. })));
    }

    #[test]
    fn terminal_of_inverts_label_set() {
        let h = four_node();
        for v in 0..h.len() {
            assert_eq!(h.terminal_of(&h.label_set(v)), Some(v));
        }
        assert_eq!(h.terminal_of(&[false, false, true, false]), None);
        assert_eq!(h.terminal_of(&[false; 4]), None);
        assert_eq!(h.terminal_of(&[true, true, false, false]), None);
    }

    #[test]
    fn parse_round_trip() {
        let text = "# activities\nr\tstill\nstill\tsitting\n\nr\twalking\n";
        let h = LabelHierarchy::parse(text).unwrap();
        assert_eq!(h.len(), 3);
        assert_eq!(LabelHierarchy::parse(&h.to_edge_text()).unwrap(), h);
    }

    #[test]
    fn parse_errors() {
        assert!(LabelHierarchy::parse("").is_err());
        assert!(matches!(LabelHierarchy::parse("a b\n"), Err(Error::Parse { line: 1, .. })));
        // two parents
        assert!(matches!(LabelHierarchy::parse("r\ta\nr\tb\nb\ta\n"), Err(Error::Parse { line: 3, .. })));
        // two roots
        assert!(LabelHierarchy::parse("r\ta\ns\tb\n").is_err());
        // detached cycle
        assert!(LabelHierarchy::parse("r\ta\nb\tc\nc\tb\n").is_err());
    }

    #[test]
    fn bundled_hierarchies() {
        let d = LabelHierarchy::daliac();
        assert_eq!(d.leaves().count(), 13);
        assert_eq!(d.len() - d.leaves().count(), 4);
        let h = LabelHierarchy::hapt();
        assert_eq!(h.leaves().count(), 12);
    }
}
