//! Dynamic gate scheduler: schedules executable gates ASAP and, when stuck,
//! picks a swap sequence for the blocked gates.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::ir::{build_dep_graph, partition_layers, DepGraph, LatencyModel, NodeKind};
use crate::mapping::{Mapping, SwapOp};
use crate::qasm::{GateKind, RawGate, SourceCircuit};
use crate::search::{resolve_conflicts, MappingCandidate, SearchError, SearchParams, Target};
use crate::topology::{is_executable, CouplingGraph, Executable};
use crate::verify::{compute_metrics, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SlackQ,
    MinSwap,
    Layered,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::SlackQ, Strategy::MinSwap, Strategy::Layered];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::SlackQ => "slackq",
            Strategy::MinSwap => "min_swap",
            Strategy::Layered => "layered",
        }
    }
}

/// Which blocked frontier gates are handed to the search.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CriticalSelection {
    #[default]
    CriticalFirst,
    /// Resolves gates off the critical path first. Only useful for comparisons.
    NonCriticalFirst,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SchedulerOptions {
    pub strategy: Strategy,
    pub params: SearchParams,
    #[doc(hidden)]
    pub selection: CriticalSelection,
    /// Swap sequence to use in the first conflict round instead of ranking.
    #[doc(hidden)]
    pub forced_first: Option<Vec<SwapOp>>,
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::SlackQ
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RouteError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("circuit uses {logical} qubits but the device has {physical}")]
    TooManyQubits { logical: usize, physical: usize },
    #[error("initial mapping covers {got} qubits, device has {expected}")]
    MappingSize { expected: usize, got: usize },
    #[error("statement {index} acts on qubit {qubit} after it was measured")]
    GateAfterMeasure { index: usize, qubit: usize },
    #[error("forced swap sequence {0:?} is not among the candidates")]
    ForcedMissing(Vec<SwapOp>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Gate,
    InsertedSwap,
    Barrier,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledOp {
    pub kind: OpKind,
    pub name: String,
    pub params: Vec<String>,
    /// Physical qubits.
    pub qubits: Vec<usize>,
    pub start: u64,
    pub end: u64,
    /// Index of the originating source statement; `None` for inserted swaps.
    pub source: Option<usize>,
    /// CNOT run against a directed link and wrapped in Hadamards.
    pub h_wrapped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformedCircuit {
    pub num_physical: usize,
    pub ops: Vec<ScheduledOp>,
    pub initial_mapping: Mapping,
    pub final_mapping: Mapping,
    /// Measurements with physical targets under the final mapping.
    pub measures: Vec<RawGate>,
    pub metrics: Metrics,
}

impl TransformedCircuit {
    pub fn swap_count(&self) -> usize {
        self.ops.iter().filter(|o| o.kind == OpKind::InsertedSwap).count()
    }

    pub fn circuit_time(&self) -> u64 {
        self.ops.iter().map(|o| o.end).max().unwrap_or(0)
    }

    /// Physical circuit ready for printing. Reversed CNOTs are written out
    /// with their Hadamard wrapping.
    pub fn to_source(&self, original: &SourceCircuit) -> SourceCircuit {
        let mut out = SourceCircuit::new(self.num_physical);
        out.version = original.version.clone();
        out.includes = original.includes.clone();
        out.qreg = original.qreg.clone();
        out.cregs = original.cregs.clone();
        for op in &self.ops {
            if op.h_wrapped {
                let (c, t) = (op.qubits[0], op.qubits[1]);
                for q in [c, t] {
                    out.push(RawGate::new("h", &[q]));
                }
                out.push(RawGate::new(&op.name, &[t, c]));
                for q in [c, t] {
                    out.push(RawGate::new("h", &[q]));
                }
            } else {
                let mut g = RawGate::new(&op.name, &op.qubits);
                g.params = op.params.clone();
                out.push(g);
            }
        }
        out.gates.extend(self.measures.iter().cloned());
        out
    }
}

/// Mutable state of the dynamic scheduler.
#[derive(Debug, Clone)]
pub struct ScheduleState {
    pub frontier: BTreeSet<usize>,
    pub processed: Vec<ScheduledOp>,
    pub scheduled: Vec<bool>,
    pub pi: Mapping,
    /// Cycle at which each physical qubit becomes free.
    pub qubit_free_at: Vec<u64>,
    pending_preds: Vec<usize>,
    /// Unscheduled gate count per logical qubit.
    remaining_on: Vec<usize>,
    /// Per logical qubit, its gates in order, and the index of the first
    /// unscheduled one.
    chains: Vec<Vec<usize>>,
    heads: Vec<usize>,
}

impl ScheduleState {
    pub fn new(dg: &DepGraph, pi: Mapping) -> Self {
        let n = dg.len();
        let mut chains = vec![Vec::new(); pi.len()];
        for (id, node) in dg.nodes.iter().enumerate() {
            for &q in &node.qubits {
                chains[q].push(id);
            }
        }
        let pending_preds: Vec<usize> = dg.nodes.iter().map(|x| x.preds.len()).collect();
        let frontier = (0..n).filter(|&i| pending_preds[i] == 0).collect();
        ScheduleState {
            frontier,
            processed: Vec::new(),
            scheduled: vec![false; n],
            qubit_free_at: vec![0; pi.len()],
            remaining_on: chains.iter().map(|c| c.len()).collect(),
            heads: vec![0; chains.len()],
            chains,
            pending_preds,
            pi,
        }
    }

    pub fn is_done(&self) -> bool {
        self.frontier.is_empty()
    }

    fn head(&self, q: usize) -> Option<usize> {
        self.chains[q].get(self.heads[q]).copied()
    }

    /// Current time of the processed circuit.
    pub fn processed_time(&self) -> u64 {
        self.qubit_free_at.iter().copied().max().unwrap_or(0)
    }

    fn mark_scheduled(&mut self, dg: &DepGraph, id: usize) {
        self.frontier.remove(&id);
        self.scheduled[id] = true;
        for &q in &dg.nodes[id].qubits {
            self.remaining_on[q] -= 1;
            self.heads[q] += 1;
        }
        for &s in &dg.nodes[id].succs {
            self.pending_preds[s] -= 1;
            if self.pending_preds[s] == 0 {
                self.frontier.insert(s);
            }
        }
    }

    fn place(&mut self, phys: &[usize], latency: u64) -> (u64, u64) {
        let start = phys.iter().map(|&p| self.qubit_free_at[p]).max().unwrap_or(0);
        let end = start + latency;
        for &p in phys {
            self.qubit_free_at[p] = end;
        }
        (start, end)
    }

    fn apply_swap(&mut self, s: SwapOp, latency: u64) {
        let (start, end) = self.place(&[s.phys_a, s.phys_b], latency);
        self.processed.push(ScheduledOp {
            kind: OpKind::InsertedSwap,
            name: "swap".to_string(),
            params: Vec::new(),
            qubits: vec![s.phys_a, s.phys_b],
            start,
            end,
            source: None,
            h_wrapped: false,
        });
        self.pi.swap_in_place(s);
    }
}

/// Everything the scheduler needs besides its state.
pub struct Context<'a> {
    pub circuit: &'a SourceCircuit,
    pub dg: &'a DepGraph,
    pub g: &'a CouplingGraph,
    pub lm: &'a LatencyModel,
}

impl Context<'_> {
    fn swap_latency(&self) -> u64 {
        self.lm.swap_cycles(!self.g.bidirectional)
    }

    fn check(&self, pi: &Mapping, id: usize) -> Executable {
        let node = &self.dg.nodes[id];
        match node.kind {
            NodeKind::Cx => is_executable(self.g, pi, &node.qubits),
            NodeKind::Swap => {
                if self.g.is_adjacent(pi.phys(node.qubits[0]), pi.phys(node.qubits[1])) {
                    Executable::Yes
                } else {
                    Executable::No
                }
            }
            _ => Executable::Yes,
        }
    }

    fn latency_of(&self, id: usize, exec: Executable) -> u64 {
        match (self.dg.nodes[id].kind, exec) {
            (NodeKind::Cx, Executable::NeedsHWrap) => NodeKind::CxReversed.latency(self.lm),
            (NodeKind::Swap, _) if !self.g.bidirectional => NodeKind::SwapDirected.latency(self.lm),
            (k, _) => k.latency(self.lm),
        }
    }

    /// Tentative latency of a remaining gate, assuming it runs along the link.
    fn base_latency(&self, id: usize) -> u64 {
        self.latency_of(id, Executable::Yes)
    }

    fn schedule_gate(&self, st: &mut ScheduleState, id: usize) {
        let exec = self.check(&st.pi, id);
        debug_assert!(exec.ok());
        let node = &self.dg.nodes[id];
        let src = node.source.expect("graph nodes come from statements");
        let raw = &self.circuit.gates[src];
        let mut phys: Vec<usize> = node.qubits.iter().map(|&q| st.pi.phys(q)).collect();
        if node.kind == NodeKind::Swap && !self.g.bidirectional {
            let s = self.g.swap_on(phys[0], phys[1]);
            phys = vec![s.phys_a, s.phys_b];
        }
        let (start, end) = st.place(&phys, self.latency_of(id, exec));
        st.processed.push(ScheduledOp {
            kind: if node.kind == NodeKind::Barrier { OpKind::Barrier } else { OpKind::Gate },
            name: raw.name.clone(),
            params: raw.params.clone(),
            qubits: phys,
            start,
            end,
            source: Some(src),
            h_wrapped: exec == Executable::NeedsHWrap,
        });
        st.mark_scheduled(self.dg, id);
    }
}

/// Frontier gates that can run under the current mapping.
pub fn schedulable_gates(ctx: &Context, st: &ScheduleState) -> Vec<usize> {
    st.frontier.iter().copied().filter(|&id| ctx.check(&st.pi, id).ok()).collect()
}

/// Schedules executable frontier gates until none is left.
pub fn schedule_ready(ctx: &Context, st: &mut ScheduleState) -> usize {
    let mut count = 0;
    loop {
        let ready = schedulable_gates(ctx, st);
        if ready.is_empty() {
            return count;
        }
        for id in ready {
            ctx.schedule_gate(st, id);
            count += 1;
        }
    }
}

/// ASAP timing of the unscheduled gates as if every gate could run where its
/// qubits currently are, plus zero-float flags against that horizon.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub start: Vec<u64>,
    pub end: Vec<u64>,
    pub circuit_time: u64,
    pub critical: Vec<bool>,
}

pub fn baseline(ctx: &Context, st: &ScheduleState) -> Baseline {
    let n = ctx.dg.len();
    let mut start = vec![0u64; n];
    let mut end = vec![0u64; n];
    let mut cp = st.processed_time();
    for id in 0..n {
        if st.scheduled[id] {
            continue;
        }
        let (s, e) = tentative_times(ctx, st, &st.pi, &st.qubit_free_at, id, |p| end[p]);
        start[id] = s;
        end[id] = e;
        cp = cp.max(e);
    }
    let mut critical = vec![false; n];
    let mut late_start = vec![0u64; n];
    for id in (0..n).rev() {
        if st.scheduled[id] {
            continue;
        }
        let finish = ctx.dg.nodes[id].succs.iter().map(|&s| late_start[s]).fold(cp, u64::min);
        late_start[id] = finish - (end[id] - start[id]);
        critical[id] = late_start[id] == start[id];
    }
    Baseline { start, end, circuit_time: cp, critical }
}

fn tentative_times(
    ctx: &Context,
    st: &ScheduleState,
    pi: &Mapping,
    free: &[u64],
    id: usize,
    pred_end: impl Fn(usize) -> u64,
) -> (u64, u64) {
    let node = &ctx.dg.nodes[id];
    let mut s = node.qubits.iter().map(|&q| free[pi.phys(q)]).max().unwrap_or(0);
    for &p in &node.preds {
        if !st.scheduled[p] {
            s = s.max(pred_end(p));
        }
    }
    (s, s + ctx.base_latency(id))
}

/// Blocked frontier gates, split by whether they lie on the remaining
/// circuit's critical path.
pub fn select_critical_gates(ctx: &Context, st: &ScheduleState, selection: CriticalSelection) -> Vec<usize> {
    let blocked: Vec<usize> = st.frontier.iter().copied().filter(|&id| !ctx.check(&st.pi, id).ok()).collect();
    if blocked.len() <= 1 {
        return blocked;
    }
    let base = baseline(ctx, st);
    let want = selection == CriticalSelection::CriticalFirst;
    let picked: Vec<usize> = blocked.iter().copied().filter(|&id| base.critical[id] == want).collect();
    if picked.is_empty() {
        blocked
    } else {
        picked
    }
}

fn targets_of(ctx: &Context, ids: &[usize]) -> Vec<Target> {
    ids.iter().map(|&id| (ctx.dg.nodes[id].qubits[0], ctx.dg.nodes[id].qubits[1])).collect()
}

/// Runs the search for all `ids`; if they cannot be satisfied together, or
/// the joint search hits the hard cap, for the first one alone.
fn candidates_for(ctx: &Context, st: &ScheduleState, ids: &[usize], params: &SearchParams) -> Result<Vec<MappingCandidate>, RouteError> {
    match resolve_conflicts(&st.pi, &targets_of(ctx, ids), ctx.g, params) {
        Err(e @ (SearchError::Unreachable | SearchError::HardCap { .. })) if ids.len() > 1 => {
            log::debug!("joint search over {} gates failed ({e}); resolving gate {} alone", ids.len(), ids[0]);
            Ok(resolve_conflicts(&st.pi, &targets_of(ctx, &ids[..1]), ctx.g, params)?)
        }
        other => Ok(other?),
    }
}

/// Effect of one candidate on the timing of the rest of the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateScore {
    /// Cycles added to the current circuit time; `None` if the candidate was
    /// abandoned because it could not beat an earlier one.
    pub increment: Option<u64>,
    pub swap_count: usize,
    /// Unscheduled gates on the program qubits the swaps relocate.
    pub relocated_load: usize,
}

/// Swap start/end times and free times after tentatively appending `swaps`.
fn tentative_swaps(ctx: &Context, st: &ScheduleState, swaps: &[SwapOp]) -> (Mapping, Vec<u64>) {
    let lat = ctx.swap_latency();
    let mut free = st.qubit_free_at.clone();
    let mut pi = st.pi.clone();
    for s in swaps {
        let end = free[s.phys_a].max(free[s.phys_b]) + lat;
        free[s.phys_a] = end;
        free[s.phys_b] = end;
        pi.swap_in_place(*s);
    }
    (pi, free)
}

fn relocated_load(st: &ScheduleState, cand: &MappingCandidate) -> usize {
    (0..st.pi.num_logical()).filter(|&q| st.pi.phys(q) != cand.final_mapping.phys(q)).map(|q| st.remaining_on[q]).sum()
}

/// Circuit time after applying `swaps`, recomputing every unscheduled gate.
pub fn full_circuit_time(ctx: &Context, st: &ScheduleState, swaps: &[SwapOp]) -> u64 {
    let (pi, free) = tentative_swaps(ctx, st, swaps);
    let mut end = vec![0u64; ctx.dg.len()];
    let mut cp = free.iter().copied().max().unwrap_or(0);
    for id in 0..ctx.dg.len() {
        if !st.scheduled[id] {
            let (_, e) = tentative_times(ctx, st, &pi, &free, id, |p| end[p]);
            end[id] = e;
            cp = cp.max(e);
        }
    }
    cp
}

/// Ranks candidates by how much they lengthen the circuit.
///
/// Each candidate's swaps are appended after the last gates on their qubits,
/// then start times are pushed forward only through gates whose inputs moved.
/// Tracing stops early once a zero-float gate is delayed by more than the
/// best increment seen so far. Ties go to fewer swaps, then to moving qubits
/// with less remaining work, then to canonical swap order.
pub fn best_slack_utilization(ctx: &Context, st: &ScheduleState, candidates: &[MappingCandidate]) -> (usize, Vec<CandidateScore>) {
    let base = baseline(ctx, st);
    let cp = base.circuit_time;
    let mut smallest: Option<u64> = None;
    let mut scores = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let (pi, free) = tentative_swaps(ctx, st, &cand.swaps);
        let mut time = free.iter().copied().max().unwrap_or(0).max(cp);
        let mut moved: HashMap<usize, u64> = HashMap::new();
        let mut queue: BinaryHeap<Reverse<usize>> = BinaryHeap::new();
        for q in 0..pi.len() {
            if free[pi.phys(q)] != st.qubit_free_at[st.pi.phys(q)] {
                if let Some(h) = st.head(q) {
                    queue.push(Reverse(h));
                }
            }
        }
        let mut hopeless = false;
        let mut last = None;
        while let Some(Reverse(id)) = queue.pop() {
            if last == Some(id) {
                continue;
            }
            last = Some(id);
            let (s, e) = tentative_times(ctx, st, &pi, &free, id, |p| moved.get(&p).copied().unwrap_or(base.end[p]));
            let delta = s.saturating_sub(base.start[id]);
            if base.critical[id] && smallest.is_some_and(|best| delta > best) {
                hopeless = true;
                break;
            }
            if delta > 0 {
                moved.insert(id, e);
                time = time.max(e);
                for &c in &ctx.dg.nodes[id].succs {
                    queue.push(Reverse(c));
                }
            }
        }
        let increment = if hopeless { None } else { Some(time - cp) };
        if let Some(inc) = increment {
            smallest = Some(smallest.map_or(inc, |b| b.min(inc)));
        }
        scores.push(CandidateScore { increment, swap_count: cand.swap_count, relocated_load: relocated_load(st, cand) });
    }
    let best = (0..candidates.len())
        .filter(|&i| scores[i].increment.is_some())
        .min_by(|&a, &b| {
            let key = |i: usize| (scores[i].increment, scores[i].swap_count, scores[i].relocated_load);
            key(a).cmp(&key(b)).then_with(|| candidates[a].swaps.cmp(&candidates[b].swaps))
        })
        .expect("the first candidate is never abandoned");
    (best, scores)
}

fn min_swap_choice(candidates: &[MappingCandidate]) -> usize {
    (0..candidates.len())
        .min_by(|&a, &b| (candidates[a].swap_count, &candidates[a].swaps).cmp(&(candidates[b].swap_count, &candidates[b].swaps)))
        .expect("search returns at least one candidate")
}

fn full_recompute_choice(ctx: &Context, st: &ScheduleState, candidates: &[MappingCandidate]) -> usize {
    (0..candidates.len())
        .min_by_key(|&i| (full_circuit_time(ctx, st, &candidates[i].swaps), candidates[i].swap_count, candidates[i].swaps.clone()))
        .expect("search returns at least one candidate")
}

fn apply_candidate(ctx: &Context, st: &mut ScheduleState, cand: &MappingCandidate) {
    for &s in &cand.swaps {
        st.apply_swap(s, ctx.swap_latency());
    }
}

fn pick_forced(forced: &mut Option<Vec<SwapOp>>, candidates: &[MappingCandidate]) -> Result<Option<usize>, RouteError> {
    let Some(want) = forced.take() else { return Ok(None) };
    match candidates.iter().position(|c| c.swaps == want) {
        Some(i) => Ok(Some(i)),
        None => Err(RouteError::ForcedMissing(want)),
    }
}

fn run_dynamic(ctx: &Context, st: &mut ScheduleState, opts: &SchedulerOptions) -> Result<(), RouteError> {
    let mut forced = opts.forced_first.clone();
    loop {
        schedule_ready(ctx, st);
        if st.is_done() {
            return Ok(());
        }
        let (ids, choose): (Vec<usize>, fn(&Context, &ScheduleState, &[MappingCandidate]) -> usize) = match opts.strategy {
            Strategy::SlackQ => (select_critical_gates(ctx, st, opts.selection), |c, s, m| best_slack_utilization(c, s, m).0),
            _ => (st.frontier.iter().copied().collect(), |_, _, m| min_swap_choice(m)),
        };
        let candidates = candidates_for(ctx, st, &ids, &opts.params)?;
        let pick = match pick_forced(&mut forced, &candidates)? {
            Some(i) => i,
            None => choose(ctx, st, &candidates),
        };
        apply_candidate(ctx, st, &candidates[pick]);
    }
}

fn run_layered(ctx: &Context, st: &mut ScheduleState, opts: &SchedulerOptions) -> Result<(), RouteError> {
    let mut forced = opts.forced_first.clone();
    let layering = partition_layers(ctx.dg, ctx.lm).expect("built graphs are acyclic");
    for layer in &layering.layers {
        loop {
            let ready: Vec<usize> = layer.iter().copied().filter(|id| st.frontier.contains(id) && ctx.check(&st.pi, *id).ok()).collect();
            for &id in &ready {
                ctx.schedule_gate(st, id);
            }
            let left: Vec<usize> = layer.iter().copied().filter(|&id| !st.scheduled[id]).collect();
            if left.is_empty() {
                break;
            }
            if !ready.is_empty() {
                continue;
            }
            let candidates = candidates_for(ctx, st, &left, &opts.params)?;
            let pick = match pick_forced(&mut forced, &candidates)? {
                Some(i) => i,
                None => full_recompute_choice(ctx, st, &candidates),
            };
            apply_candidate(ctx, st, &candidates[pick]);
        }
    }
    Ok(())
}

/// Source statements to route, with measurements split off. Rejects gates
/// that follow a measurement of one of their qubits.
fn split_measures(circuit: &SourceCircuit) -> Result<(SourceCircuit, Vec<RawGate>), RouteError> {
    let mut measured = vec![false; circuit.num_qubits];
    let mut measures = Vec::new();
    for (index, g) in circuit.gates.iter().enumerate() {
        if g.kind() == GateKind::Measure {
            measured[g.qubits[0]] = true;
            measures.push(g.clone());
        } else if g.kind() != GateKind::Barrier {
            if let Some(&qubit) = g.qubits.iter().find(|&&q| measured[q]) {
                return Err(RouteError::GateAfterMeasure { index, qubit });
            }
        }
    }
    Ok((circuit.clone(), measures))
}

/// Routes `circuit` onto `g` starting from `pi0`.
pub fn run_scheduler(
    circuit: &SourceCircuit,
    g: &CouplingGraph,
    pi0: &Mapping,
    lm: &LatencyModel,
    opts: &SchedulerOptions,
) -> Result<TransformedCircuit, RouteError> {
    opts.params.validate()?;
    if circuit.num_qubits > g.num_physical {
        return Err(RouteError::TooManyQubits { logical: circuit.num_qubits, physical: g.num_physical });
    }
    if pi0.len() != g.num_physical {
        return Err(RouteError::MappingSize { expected: g.num_physical, got: pi0.len() });
    }
    let (routable, measures) = split_measures(circuit)?;
    let dg = build_dep_graph(&routable);
    let ctx = Context { circuit: &routable, dg: &dg, g, lm };
    let mut st = ScheduleState::new(&dg, pi0.clone());
    match opts.strategy {
        Strategy::Layered => run_layered(&ctx, &mut st, opts)?,
        _ => run_dynamic(&ctx, &mut st, opts)?,
    }
    let final_mapping = st.pi.clone();
    let measures = measures
        .into_iter()
        .map(|mut m| {
            m.qubits = vec![final_mapping.phys(m.qubits[0])];
            m
        })
        .collect();
    let mut t = TransformedCircuit {
        num_physical: g.num_physical,
        ops: st.processed,
        initial_mapping: pi0.clone(),
        final_mapping,
        measures,
        metrics: Metrics::default(),
    };
    t.metrics = compute_metrics(&t, circuit, lm);
    Ok(t)
}
