//! Directed communication topology.
//!
//! A [`Digraph`] stores the edge set as ordered `(receiver, sender)` pairs
//! (the edge `(j, i)` means node `j` can receive from node `i`), together with
//! derived out-/in-neighbor adjacency. [`TransmissionPolicy`] attaches the
//! per-node transmission probabilities (one column per sender, covering its
//! out-neighbors plus itself) as exact rationals, so column-stochasticity can
//! be checked without tolerances.
//!
//! Node identifiers are dense indices `0..n`. File formats use 1-based labels
//! `v_1..v_n`; the translation happens at the parse/render boundary.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("a digraph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("self-edge on node v{} is not allowed", .0 + 1)]
    SelfEdge(usize),
    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("duplicate edge (v{}, v{})", .receiver + 1, .sender + 1)]
    DuplicateEdge { receiver: usize, sender: usize },
    #[error("edge list parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("extra edge probability must lie in [0, 1], got {0}")]
    InvalidEdgeProbability(f64),
    #[error("probability of v{} transmitting to v{} must be in (0, 1], got {value}", .sender + 1, .dest + 1)]
    ProbabilityOutOfRange {
        sender: usize,
        dest: usize,
        value: String,
    },
    #[error("column of v{} sums to {sum}, expected 1", .sender + 1)]
    ColumnNotStochastic { sender: usize, sum: String },
    #[error("column of v{} assigns probability to v{}, which is neither an out-neighbor nor itself", .sender + 1, .dest + 1)]
    UnsupportedDestination { sender: usize, dest: usize },
    #[error("column of v{} gives no probability to v{}; every out-neighbor and self need one", .sender + 1, .dest + 1)]
    MissingDestination { sender: usize, dest: usize },
}

/// Static directed graph over nodes `0..n`, self-edges excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    out_neighbors: Vec<Vec<usize>>,
    in_neighbors: Vec<Vec<usize>>,
}

impl Digraph {
    /// Build from `(receiver, sender)` pairs with 0-based indices.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewNodes(n));
        }
        let mut set = BTreeSet::new();
        for (receiver, sender) in edges {
            if receiver >= n {
                return Err(GraphError::NodeOutOfRange { index: receiver, n });
            }
            if sender >= n {
                return Err(GraphError::NodeOutOfRange { index: sender, n });
            }
            if receiver == sender {
                return Err(GraphError::SelfEdge(receiver));
            }
            if !set.insert((receiver, sender)) {
                return Err(GraphError::DuplicateEdge { receiver, sender });
            }
        }
        let mut out_neighbors = vec![Vec::new(); n];
        let mut in_neighbors = vec![Vec::new(); n];
        for &(receiver, sender) in &set {
            out_neighbors[sender].push(receiver);
            in_neighbors[receiver].push(sender);
        }
        for list in out_neighbors.iter_mut().chain(in_neighbors.iter_mut()) {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            edges: set,
            out_neighbors,
            in_neighbors,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Iterate `(receiver, sender)` pairs in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn contains_edge(&self, receiver: usize, sender: usize) -> bool {
        self.edges.contains(&(receiver, sender))
    }

    /// Nodes that can receive from `j`, sorted ascending.
    pub fn out_neighbors(&self, j: usize) -> &[usize] {
        &self.out_neighbors[j]
    }

    /// Nodes that can send to `j`, sorted ascending.
    pub fn in_neighbors(&self, j: usize) -> &[usize] {
        &self.in_neighbors[j]
    }

    pub fn out_degree(&self, j: usize) -> usize {
        self.out_neighbors[j].len()
    }

    pub fn in_degree(&self, j: usize) -> usize {
        self.in_neighbors[j].len()
    }

    pub fn max_out_degree(&self) -> usize {
        (0..self.n).map(|j| self.out_degree(j)).max().unwrap_or(0)
    }

    /// True iff every ordered node pair is connected by a directed path.
    pub fn is_strongly_connected(&self) -> bool {
        scc_count(&self.out_neighbors) == 1
    }

    /// Parse the plain-text edge-list format: first non-comment line
    /// `n <count>`, then `<receiver> <sender>` per line, 1-based labels.
    /// Lines starting with `#` and blank lines are skipped.
    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let parse_err = |line: usize, reason: &str| GraphError::Parse {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (header_line, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing `n <count>` header"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("n") {
            return Err(parse_err(header_line, "expected `n <count>` header"));
        }
        let n: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(header_line, "invalid node count"))?;
        if parts.next().is_some() {
            return Err(parse_err(header_line, "trailing tokens after node count"));
        }

        let mut edges = Vec::new();
        for (line, body) in lines {
            let mut toks = body.split_whitespace();
            let receiver: usize = toks
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(line, "expected `<receiver> <sender>`"))?;
            let sender: usize = toks
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(line, "expected `<receiver> <sender>`"))?;
            if toks.next().is_some() {
                return Err(parse_err(line, "trailing tokens after edge"));
            }
            if receiver == 0 || sender == 0 {
                return Err(parse_err(line, "labels are 1-based; 0 is not a node"));
            }
            edges.push((receiver - 1, sender - 1));
        }
        Self::new(n, edges)
    }

    /// Render the edge-list format with 1-based labels, edges sorted.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        for (receiver, sender) in self.edges() {
            out.push_str(&format!("{} {}\n", receiver + 1, sender + 1));
        }
        out
    }
}

/// Iterative Tarjan SCC over an adjacency list; returns the component count.
fn scc_count(adj: &[Vec<usize>]) -> usize {
    const UNVISITED: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut frames: Vec<(usize, usize)> = Vec::new();
    let mut next_index = 0usize;
    let mut count = 0usize;

    for start in 0..n {
        if index[start] != UNVISITED {
            continue;
        }
        index[start] = next_index;
        low[start] = next_index;
        next_index += 1;
        stack.push(start);
        on_stack[start] = true;
        frames.push((start, 0));

        while let Some(frame) = frames.last_mut() {
            let v = frame.0;
            if frame.1 < adj[v].len() {
                let w = adj[v][frame.1];
                frame.1 += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                frames.pop();
                if let Some(parent) = frames.last() {
                    let p = parent.0;
                    low[p] = low[p].min(low[v]);
                }
                if low[v] == index[v] {
                    count += 1;
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        if w == v {
                            break;
                        }
                    }
                }
            }
        }
    }
    count
}

/// Per-sender transmission probabilities over out-neighbors plus self,
/// stored as exact rationals. Column `j` is the distribution node `j`
/// samples a destination from on every transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransmissionPolicy {
    columns: Vec<BTreeMap<usize, BigRational>>,
}

impl TransmissionPolicy {
    /// The uniform assignment: node `j` gives probability `1/(1 + D_j)` to
    /// itself and to each of its `D_j` out-neighbors.
    pub fn uniform(g: &Digraph) -> Self {
        let columns = (0..g.n())
            .map(|j| {
                let share =
                    BigRational::new(BigInt::one(), BigInt::from(1 + g.out_degree(j) as u64));
                let mut col = BTreeMap::new();
                col.insert(j, share.clone());
                for &dest in g.out_neighbors(j) {
                    col.insert(dest, share.clone());
                }
                col
            })
            .collect();
        Self { columns }
    }

    /// Custom policy from exact rational columns. Each column must cover
    /// exactly `out_neighbors(j) ∪ {j}` with probabilities in `(0, 1]`
    /// summing to exactly 1.
    pub fn from_rational_columns(
        g: &Digraph,
        columns: Vec<BTreeMap<usize, BigRational>>,
    ) -> Result<Self, GraphError> {
        let policy = Self { columns };
        policy.validate(g, None)?;
        Ok(policy)
    }

    /// Custom policy from floating-point columns. Probabilities are converted
    /// exactly (every f64 is a dyadic rational); column sums must be within
    /// `1e-12` of 1.
    pub fn from_float_columns(
        g: &Digraph,
        columns: Vec<BTreeMap<usize, f64>>,
    ) -> Result<Self, GraphError> {
        let mut rational_columns = Vec::with_capacity(columns.len());
        for (j, col) in columns.into_iter().enumerate() {
            let mut out = BTreeMap::new();
            for (dest, p) in col {
                let r = BigRational::from_float(p).ok_or_else(|| {
                    GraphError::ProbabilityOutOfRange {
                        sender: j,
                        dest,
                        value: p.to_string(),
                    }
                })?;
                out.insert(dest, r);
            }
            rational_columns.push(out);
        }
        let tolerance = BigRational::from_float(1e-12).expect("finite constant");
        let policy = Self {
            columns: rational_columns,
        };
        policy.validate(g, Some(&tolerance))?;
        Ok(policy)
    }

    fn validate(&self, g: &Digraph, sum_tolerance: Option<&BigRational>) -> Result<(), GraphError> {
        assert_eq!(self.columns.len(), g.n(), "one column per node");
        for (j, col) in self.columns.iter().enumerate() {
            for (&dest, p) in col {
                if dest != j && !g.contains_edge(dest, j) {
                    return Err(GraphError::UnsupportedDestination { sender: j, dest });
                }
                if !p.is_positive() || *p > BigRational::one() {
                    return Err(GraphError::ProbabilityOutOfRange {
                        sender: j,
                        dest,
                        value: p.to_string(),
                    });
                }
            }
            if !col.contains_key(&j) {
                return Err(GraphError::MissingDestination { sender: j, dest: j });
            }
            for &dest in g.out_neighbors(j) {
                if !col.contains_key(&dest) {
                    return Err(GraphError::MissingDestination { sender: j, dest });
                }
            }
            let sum: BigRational = col.values().sum();
            let ok = match sum_tolerance {
                None => sum.is_one(),
                Some(tol) => (&sum - BigRational::one()).abs() <= *tol,
            };
            if !ok {
                return Err(GraphError::ColumnNotStochastic {
                    sender: j,
                    sum: sum.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.columns.len()
    }

    /// The full distribution node `j` transmits with, keyed by destination.
    pub fn column(&self, j: usize) -> &BTreeMap<usize, BigRational> {
        &self.columns[j]
    }

    /// Probability that `sender` transmits to `dest` (zero when absent).
    pub fn prob(&self, dest: usize, sender: usize) -> BigRational {
        self.columns[sender]
            .get(&dest)
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }
}

/// Generate a strongly connected digraph: a random Hamiltonian directed
/// cycle (which alone is strongly connected), plus each remaining ordered
/// non-self pair independently with probability `extra_edge_prob`.
/// Deterministic for a fixed seed.
pub fn random_strongly_connected(
    n: usize,
    extra_edge_prob: f64,
    seed: u64,
) -> Result<Digraph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewNodes(n));
    }
    if !(0.0..=1.0).contains(&extra_edge_prob) {
        return Err(GraphError::InvalidEdgeProbability(extra_edge_prob));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut edges = BTreeSet::new();
    for i in 0..n {
        let sender = order[i];
        let receiver = order[(i + 1) % n];
        edges.insert((receiver, sender));
    }
    for receiver in 0..n {
        for sender in 0..n {
            if receiver == sender || edges.contains(&(receiver, sender)) {
                continue;
            }
            if rng.random_bool(extra_edge_prob) {
                edges.insert((receiver, sender));
            }
        }
    }
    Digraph::new(n, edges)
}
