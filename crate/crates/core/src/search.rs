//! Best-first search for swap sequences that make a set of CNOTs executable.

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::mapping::{Mapping, SwapOp};
use crate::topology::{CouplingGraph, DistanceMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchParams {
    /// Steps allowed after the first goal is found.
    pub m: usize,
    /// Candidates may use at most `k` times the minimal swap count.
    pub k: f64,
    /// Nodes popped per step.
    pub expand: usize,
    /// Extra levels explored below goal nodes.
    pub deeper: usize,
    pub hard_cap: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams { m: 20, k: 2.0, expand: 1, deeper: 0, hard_cap: 100_000 }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.k >= 1.0) || self.expand == 0 || self.hard_cap == 0 {
            return Err(SearchError::BadParams(*self));
        }
        Ok(())
    }

    fn swap_cap(&self, s_min: usize) -> usize {
        ((self.k * s_min as f64) + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("no target gates given")]
    NoTargets,
    #[error("every target gate is already executable")]
    NothingBlocked,
    #[error("search aborted after {expansions} expansions without reaching a goal (params {params:?})")]
    HardCap { expansions: usize, params: SearchParams },
    #[error("no sequence of swaps makes all targets executable at once")]
    Unreachable,
    #[error("invalid search parameters {0:?}")]
    BadParams(SearchParams),
}

/// A CNOT to be made executable, as a pair of logical qubits.
pub type Target = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingCandidate {
    pub swaps: Vec<SwapOp>,
    pub final_mapping: Mapping,
    pub swap_count: usize,
}

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub mapping: Mapping,
    pub swaps: Vec<SwapOp>,
    pub g_cost: usize,
    pub h_cost: usize,
    pub depth: usize,
}

/// Lower bound on the swaps still needed. A swap moves two logical qubits by
/// one hop each, so it shortens any single target by at most one and the sum
/// of excess distances by at most twice the largest number of targets sharing
/// a qubit. Taking the larger of both bounds keeps the estimate consistent.
pub fn heuristic_cost(pi: &Mapping, targets: &[Target], dist: &DistanceMatrix) -> usize {
    let mut sum = 0usize;
    let mut max = 0usize;
    for &(c, t) in targets {
        let excess = dist.get(pi.phys(c), pi.phys(t)).saturating_sub(1) as usize;
        sum += excess;
        max = max.max(excess);
    }
    let per_swap = 2 * max_multiplicity(targets);
    max.max(sum.div_ceil(per_swap.max(1)))
}

fn max_multiplicity(targets: &[Target]) -> usize {
    let mut best = 0;
    for &(c, t) in targets {
        for q in [c, t] {
            best = best.max(targets.iter().filter(|&&(a, b)| a == q || b == q).count());
        }
    }
    best
}

pub fn is_goal(pi: &Mapping, targets: &[Target], g: &CouplingGraph) -> bool {
    targets.iter().all(|&(c, t)| g.is_adjacent(pi.phys(c), pi.phys(t)))
}

/// One child per coupling-graph edge, in canonical edge order.
pub fn successors(node: &SearchNode, g: &CouplingGraph, targets: &[Target]) -> Vec<SearchNode> {
    g.undirected_edges()
        .iter()
        .map(|&(a, b)| child(node, g.swap_on(a, b), g, targets))
        .collect()
}

fn child(node: &SearchNode, s: SwapOp, g: &CouplingGraph, targets: &[Target]) -> SearchNode {
    let mut mapping = node.mapping.clone();
    mapping.swap_in_place(s);
    let mut swaps = node.swaps.clone();
    swaps.push(s);
    let h_cost = heuristic_cost(&mapping, targets, g.distances());
    SearchNode { mapping, swaps, g_cost: node.g_cost + 1, h_cost, depth: node.depth + 1 }
}

/// Site occupancy with all idle padding qubits treated as interchangeable.
fn occupancy(pi: &Mapping) -> Vec<usize> {
    let n = pi.num_logical();
    pi.phys_to_log().iter().map(|&l| if l < n { l } else { usize::MAX }).collect()
}

type HeapKey = Reverse<(usize, usize, Vec<(usize, usize)>, usize)>;

/// Collects swap sequences that make every target executable.
///
/// Best-first over `(g + h, g, swap sequence)`. The first goal popped has the
/// minimal swap count `s_min`; after that the search runs `m` more steps of
/// `expand` pops each. A popped node with more than `k * s_min` swaps ends the
/// search. Goal nodes are only expanded further while they are fewer than
/// `deeper` levels below `s_min`.
pub fn resolve_conflicts(
    pi: &Mapping,
    targets: &[Target],
    g: &CouplingGraph,
    params: &SearchParams,
) -> Result<Vec<MappingCandidate>, SearchError> {
    params.validate()?;
    if targets.is_empty() {
        return Err(SearchError::NoTargets);
    }
    if is_goal(pi, targets, g) {
        return Err(SearchError::NothingBlocked);
    }
    let mut arena: Vec<SearchNode> = Vec::new();
    let mut heap: BinaryHeap<HeapKey> = BinaryHeap::new();
    // Fewest swaps seen per occupancy; later arrivals with as many or more are dropped.
    let mut visited: HashMap<Vec<usize>, usize> = HashMap::new();

    let root = SearchNode { mapping: pi.clone(), swaps: Vec::new(), g_cost: 0, h_cost: heuristic_cost(pi, targets, g.distances()), depth: 0 };
    visited.insert(occupancy(pi), 0);
    let push = |heap: &mut BinaryHeap<HeapKey>, arena: &mut Vec<SearchNode>, node: SearchNode| {
        let seq = node.swaps.iter().map(|s| (s.phys_a, s.phys_b)).collect();
        heap.push(Reverse((node.g_cost + node.h_cost, node.g_cost, seq, arena.len())));
        arena.push(node);
    };
    push(&mut heap, &mut arena, root);

    let mut out = Vec::new();
    let mut s_min: Option<usize> = None;
    let mut expansions = 0usize;
    let mut steps_after_goal = 0usize;

    'search: loop {
        if s_min.is_some() && steps_after_goal >= params.m {
            break;
        }
        let counted = s_min.is_some();
        for _ in 0..params.expand {
            let Some(Reverse((_, _, _, idx))) = heap.pop() else { break 'search };
            let node = arena[idx].clone();
            if let Some(s) = s_min {
                if node.g_cost > params.swap_cap(s) {
                    break 'search;
                }
            }
            if is_goal(&node.mapping, targets, g) {
                let s = *s_min.get_or_insert(node.g_cost);
                out.push(MappingCandidate { swaps: node.swaps.clone(), final_mapping: node.mapping.clone(), swap_count: node.g_cost });
                if node.g_cost >= s + params.deeper {
                    continue;
                }
            }
            expansions += 1;
            if expansions > params.hard_cap {
                if out.is_empty() {
                    return Err(SearchError::HardCap { expansions: params.hard_cap, params: *params });
                }
                log::warn!("search stopped at the hard cap with {} candidates", out.len());
                break 'search;
            }
            let last = node.swaps.last().copied();
            for &(a, b) in g.undirected_edges() {
                if node.mapping.is_idle(a) && node.mapping.is_idle(b) {
                    continue;
                }
                let s = g.swap_on(a, b);
                if Some(s) == last {
                    continue;
                }
                let c = child(&node, s, g, targets);
                match visited.entry(occupancy(&c.mapping)) {
                    Entry::Occupied(mut e) if *e.get() > c.g_cost => {
                        e.insert(c.g_cost);
                        push(&mut heap, &mut arena, c);
                    }
                    Entry::Occupied(_) => {}
                    Entry::Vacant(e) => {
                        e.insert(c.g_cost);
                        push(&mut heap, &mut arena, c);
                    }
                }
            }
        }
        if counted {
            steps_after_goal += 1;
        }
    }
    if out.is_empty() {
        return Err(SearchError::Unreachable);
    }
    Ok(out)
}
