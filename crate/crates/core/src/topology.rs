//! Hardware coupling graphs and distances between physical qubits.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::ir::LatencyModel;
use crate::mapping::{Mapping, SwapOp};

const TOKYO_JSON: &str = include_str!("../data/tokyo.json");

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("unknown topology `{0}`")]
    UnknownName(String),
    #[error("edge ({0}, {1}) references a qubit outside 0..{2}")]
    BadIndex(usize, usize, usize),
    #[error("self-loop on qubit {0}")]
    SelfLoop(usize),
    #[error("coupling graph `{0}` is disconnected")]
    Disconnected(String),
    #[error("coupling graph needs at least one qubit")]
    Empty,
    #[error("cannot read topology file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed topology JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Deserialize)]
struct TopologyFile {
    name: String,
    num_qubits: usize,
    #[serde(default = "default_true")]
    bidirectional: bool,
    edges: Vec<(usize, usize)>,
}

fn default_true() -> bool {
    true
}

/// Hop counts over the undirected view of a coupling graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<u32>,
}

impl DistanceMatrix {
    pub fn get(&self, a: usize, b: usize) -> u32 {
        self.d[a * self.n + b]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn max(&self) -> u32 {
        self.d.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Executable {
    Yes,
    /// The link only runs the other way; the CNOT must be wrapped in Hadamards.
    NeedsHWrap,
    No,
}

impl Executable {
    pub fn ok(self) -> bool {
        self != Executable::No
    }
}

#[derive(Debug, Clone)]
pub struct CouplingGraph {
    pub name: String,
    pub num_physical: usize,
    /// Links as declared, `(control, target)` on directed devices.
    pub edges: Vec<(usize, usize)>,
    pub bidirectional: bool,
    undirected: Vec<(usize, usize)>,
    directed_set: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    dist: DistanceMatrix,
}

impl CouplingGraph {
    pub fn new(name: &str, num_physical: usize, edges: Vec<(usize, usize)>, bidirectional: bool) -> Result<Self, TopologyError> {
        if num_physical == 0 {
            return Err(TopologyError::Empty);
        }
        let mut und = BTreeSet::new();
        let mut directed_set = BTreeSet::new();
        for &(a, b) in &edges {
            if a >= num_physical || b >= num_physical {
                return Err(TopologyError::BadIndex(a, b, num_physical));
            }
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            und.insert((a.min(b), a.max(b)));
            directed_set.insert((a, b));
        }
        let undirected: Vec<(usize, usize)> = und.into_iter().collect();
        let mut adjacency = vec![Vec::new(); num_physical];
        for &(a, b) in &undirected {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let dist = bfs_distances(num_physical, &adjacency).ok_or_else(|| TopologyError::Disconnected(name.to_string()))?;
        Ok(CouplingGraph { name: name.to_string(), num_physical, edges, bidirectional, undirected, directed_set, adjacency, dist })
    }

    pub fn line(n: usize) -> Result<Self, TopologyError> {
        let edges = (1..n).map(|i| (i - 1, i)).collect();
        CouplingGraph::new(&format!("line:{n}"), n, edges, true)
    }

    pub fn grid(rows: usize, cols: usize) -> Result<Self, TopologyError> {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    edges.push((i, i + 1));
                }
                if r + 1 < rows {
                    edges.push((i, i + cols));
                }
            }
        }
        CouplingGraph::new(&format!("grid:{rows}x{cols}"), rows * cols, edges, true)
    }

    pub fn tokyo() -> Self {
        from_json_str(TOKYO_JSON).expect("bundled tokyo layout is valid")
    }

    /// Canonical undirected edge list, each pair as `(low, high)`, sorted.
    pub fn undirected_edges(&self) -> &[(usize, usize)] {
        &self.undirected
    }

    pub fn neighbors(&self, p: usize) -> &[usize] {
        &self.adjacency[p]
    }

    pub fn distances(&self) -> &DistanceMatrix {
        &self.dist
    }

    pub fn distance(&self, a: usize, b: usize) -> u32 {
        self.dist.get(a, b)
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.undirected.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    /// Whether a CNOT with physical control `c` and target `t` can run.
    pub fn cx_direction(&self, c: usize, t: usize) -> Executable {
        if !self.is_adjacent(c, t) {
            Executable::No
        } else if self.bidirectional || self.directed_set.contains(&(c, t)) {
            Executable::Yes
        } else {
            Executable::NeedsHWrap
        }
    }

    /// A swap on the link between `a` and `b`, oriented along the declared
    /// direction on directed devices and low-to-high otherwise.
    pub fn swap_on(&self, a: usize, b: usize) -> SwapOp {
        if !self.bidirectional && self.directed_set.contains(&(b, a)) && !self.directed_set.contains(&(a, b)) {
            SwapOp::new(b, a)
        } else {
            SwapOp::new(a.min(b), a.max(b))
        }
    }
}

fn bfs_distances(n: usize, adjacency: &[Vec<usize>]) -> Option<DistanceMatrix> {
    let mut d = vec![u32::MAX; n * n];
    for s in 0..n {
        let row = &mut d[s * n..(s + 1) * n];
        row[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if row[v] == u32::MAX {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if row.contains(&u32::MAX) {
            return None;
        }
    }
    Some(DistanceMatrix { n, d })
}

pub fn all_pairs_distance(g: &CouplingGraph) -> DistanceMatrix {
    g.dist.clone()
}

fn from_json_str(text: &str) -> Result<CouplingGraph, TopologyError> {
    let f: TopologyFile = serde_json::from_str(text)?;
    CouplingGraph::new(&f.name, f.num_qubits, f.edges, f.bidirectional)
}

/// Resolves `tokyo`, `line:<n>`, `grid:<r>x<c>`, or a path to a JSON file.
pub fn load_topology(spec: &str) -> Result<CouplingGraph, TopologyError> {
    if spec == "tokyo" {
        return Ok(CouplingGraph::tokyo());
    }
    if let Some(n) = spec.strip_prefix("line:") {
        let n: usize = n.parse().map_err(|_| TopologyError::UnknownName(spec.to_string()))?;
        return CouplingGraph::line(n);
    }
    if let Some(rc) = spec.strip_prefix("grid:") {
        let parsed = rc.split_once('x').and_then(|(r, c)| Some((r.parse().ok()?, c.parse().ok()?)));
        let (r, c): (usize, usize) = parsed.ok_or_else(|| TopologyError::UnknownName(spec.to_string()))?;
        return CouplingGraph::grid(r, c);
    }
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "json") || path.exists() {
        return from_json_str(&std::fs::read_to_string(path)?);
    }
    Err(TopologyError::UnknownName(spec.to_string()))
}

/// Whether a gate on logical `qubits` can run under `pi`. Single-qubit gates
/// and barriers always can.
pub fn is_executable(g: &CouplingGraph, pi: &Mapping, qubits: &[usize]) -> Executable {
    match qubits {
        [c, t] => g.cx_direction(pi.phys(*c), pi.phys(*t)),
        _ => Executable::Yes,
    }
}

/// Gate count and duration of one inserted swap.
pub fn swap_cost(g: &CouplingGraph, lm: &LatencyModel) -> (usize, u64) {
    if g.bidirectional {
        (3, lm.swap_cycles(false))
    } else {
        (7, lm.swap_cycles(true))
    }
}
