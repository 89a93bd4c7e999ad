//! Checks on routed circuits: hardware compliance, equivalence with the
//! source program, a small state-vector oracle, and summary metrics.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::ir::{build_dep_graph, critical_path, LatencyModel};
use crate::mapping::{Mapping, SwapOp};
use crate::qasm::{GateKind, SourceCircuit};
use crate::scheduler::{OpKind, TransformedCircuit};
use crate::topology::{CouplingGraph, Executable};

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Metrics {
    pub circuit_time: u64,
    pub original_circuit_time: u64,
    pub overhead_ratio: f64,
    /// Original gates (no barriers or measurements) plus inserted swaps.
    pub gate_count_total: usize,
    pub swaps_inserted: usize,
    /// CNOTs after expanding every swap into three.
    pub cx_count: usize,
    pub wall_time_ms: f64,
}

pub fn compute_metrics(t: &TransformedCircuit, original: &SourceCircuit, lm: &LatencyModel) -> Metrics {
    let mut routable = original.clone();
    routable.gates.retain(|g| g.kind() != GateKind::Measure);
    let original_circuit_time = critical_path(&build_dep_graph(&routable), lm).expect("built graphs are acyclic");
    let circuit_time = t.circuit_time();
    let swaps_inserted = t.swap_count();
    let cx_ops = t.ops.iter().filter(|o| o.kind == OpKind::Gate && o.qubits.len() == 2 && o.name != "swap").count();
    let source_swaps = t.ops.iter().filter(|o| o.kind == OpKind::Gate && o.name == "swap").count();
    let overhead_ratio = if original_circuit_time == 0 { 1.0 } else { circuit_time as f64 / original_circuit_time as f64 };
    Metrics {
        circuit_time,
        original_circuit_time,
        overhead_ratio,
        gate_count_total: original.gate_count() + swaps_inserted,
        swaps_inserted,
        cx_count: cx_ops + 3 * (swaps_inserted + source_swaps),
        wall_time_ms: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub op_index: usize,
    pub qubits: (usize, usize),
}

/// Every two-qubit op must sit on a link, in the link's direction unless it
/// is Hadamard-wrapped.
pub fn check_compliance(t: &TransformedCircuit, g: &CouplingGraph) -> Result<(), Vec<Violation>> {
    let mut bad = Vec::new();
    for (i, op) in t.ops.iter().enumerate() {
        if op.kind == OpKind::Barrier || op.qubits.len() != 2 {
            continue;
        }
        let (a, b) = (op.qubits[0], op.qubits[1]);
        let ok = if op.name == "swap" {
            g.is_adjacent(a, b)
        } else if op.h_wrapped {
            g.cx_direction(a, b) == Executable::NeedsHWrap
        } else {
            g.cx_direction(a, b) == Executable::Yes
        };
        if !ok {
            bad.push(Violation { op_index: i, qubits: (a, b) });
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("routed circuit differs from the source: {0}")]
pub struct Mismatch(pub String);

/// Per logical qubit: (gate name, params, position of the qubit among the
/// gate's operands). Swap statements are symmetric, so their role is 0.
type Signature = (String, Vec<String>, usize);

fn signature(name: &str, params: &[String], qubits: &[usize], q: usize) -> Signature {
    let role = if name == "swap" { 0 } else { qubits.iter().position(|&x| x == q).unwrap_or(0) };
    (name.to_string(), params.to_vec(), role)
}

/// Replays the routed ops, tracking where every logical qubit lives, and
/// compares each qubit's gate sequence with the source.
pub fn check_equivalence(original: &SourceCircuit, t: &TransformedCircuit, pi0: &Mapping) -> Result<(), Mismatch> {
    let n = original.num_qubits;
    let mut want: Vec<Vec<Signature>> = vec![Vec::new(); n];
    let mut want_measures = Vec::new();
    let mut want_multiset: HashMap<(String, Vec<String>, Vec<usize>), isize> = HashMap::new();
    for g in &original.gates {
        if g.kind() == GateKind::Measure {
            want_measures.push((g.qubits[0], g.clbit.clone()));
            continue;
        }
        for &q in &g.qubits {
            want[q].push(signature(&g.name, &g.params, &g.qubits, q));
        }
        *want_multiset.entry(multiset_key(&g.name, &g.params, &g.qubits)).or_default() += 1;
    }

    let mut pi = pi0.clone();
    let mut got: Vec<Vec<Signature>> = vec![Vec::new(); n];
    for (i, op) in t.ops.iter().enumerate() {
        if op.kind == OpKind::InsertedSwap {
            pi.swap_in_place(SwapOp::new(op.qubits[0], op.qubits[1]));
            continue;
        }
        let logical: Vec<usize> = op.qubits.iter().map(|&p| pi.logical(p)).collect();
        if let Some(&l) = logical.iter().find(|&&l| l >= n) {
            return Err(Mismatch(format!("op {i} ({}) acts on unused logical qubit {l}", op.name)));
        }
        for &q in &logical {
            got[q].push(signature(&op.name, &op.params, &logical, q));
        }
        let key = multiset_key(&op.name, &op.params, &logical);
        *want_multiset.entry(key).or_default() -= 1;
    }
    if pi != t.final_mapping {
        return Err(Mismatch("replayed mapping differs from the reported final mapping".into()));
    }
    for q in 0..n {
        if want[q] != got[q] {
            return Err(Mismatch(format!("gate sequence on logical qubit {q} differs")));
        }
    }
    if let Some((k, _)) = want_multiset.iter().find(|(_, &c)| c != 0) {
        return Err(Mismatch(format!("gate count differs for {} on {:?}", k.0, k.2)));
    }
    let got_measures: Vec<_> = t.measures.iter().map(|m| (pi.logical(m.qubits[0]), m.clbit.clone())).collect();
    if got_measures != want_measures {
        return Err(Mismatch("measurements differ".into()));
    }
    Ok(())
}

fn multiset_key(name: &str, params: &[String], qubits: &[usize]) -> (String, Vec<String>, Vec<usize>) {
    let mut q = qubits.to_vec();
    if name == "swap" {
        q.sort_unstable();
    }
    (name.to_string(), params.to_vec(), q)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("{0} qubits are involved; the oracle handles at most {MAX_ORACLE_QUBITS}")]
    TooLarge(usize),
    #[error("cannot simulate gate `{0}`")]
    UnsupportedGate(String),
    #[error("cannot evaluate parameter `{0}`")]
    BadParam(String),
    #[error("states differ by {0:e} after removing global phase")]
    Differs(f64),
}

/// Largest number of physical sites the oracle will simulate.
pub const MAX_ORACLE_QUBITS: usize = 16;
const ORACLE_TOLERANCE: f64 = 1e-9;

/// State-vector comparison of source and routed circuit.
///
/// Simulates every computational basis input of the program qubits (idle
/// device sites start in |0>) through both circuits, restricted to the sites
/// the routed circuit touches. The routed outputs must equal the source
/// outputs with each qubit moved to its final site, up to one global phase.
pub fn unitary_oracle_equivalence(original: &SourceCircuit, t: &TransformedCircuit, pi0: &Mapping) -> Result<(), OracleError> {
    let n = original.num_qubits;
    let mut sites: Vec<usize> = (0..n).map(|q| pi0.phys(q)).collect();
    for op in &t.ops {
        sites.extend(op.qubits.iter().copied());
    }
    sites.sort_unstable();
    sites.dedup();
    let m = sites.len();
    if m > MAX_ORACLE_QUBITS {
        return Err(OracleError::TooLarge(m));
    }
    let local = |p: usize| sites.binary_search(&p).expect("site is touched");

    let mut src_ops = Vec::new();
    for g in &original.gates {
        if matches!(g.kind(), GateKind::Measure | GateKind::Barrier) {
            continue;
        }
        let qs: Vec<usize> = g.qubits.iter().map(|&q| local(pi0.phys(q))).collect();
        src_ops.push(SimGate::from_parts(&g.name, &g.params, qs)?);
    }
    let mut routed_ops = Vec::new();
    for op in &t.ops {
        if op.kind == OpKind::Barrier {
            continue;
        }
        let qs: Vec<usize> = op.qubits.iter().map(|&p| local(p)).collect();
        routed_ops.push(SimGate::from_parts(&op.name, &op.params, qs)?);
    }
    // Where each program qubit's state ends up, in local site numbering.
    let moves: Vec<(usize, usize)> = (0..n).map(|q| (local(pi0.phys(q)), local(t.final_mapping.phys(q)))).collect();

    let mut phase: Option<Complex64> = None;
    let mut worst = 0.0f64;
    for x in 0..(1usize << n) {
        let mut basis = 0usize;
        for (q, &(from, _)) in moves.iter().enumerate() {
            if x >> q & 1 == 1 {
                basis |= 1 << from;
            }
        }
        let mut a = vec![Complex64::new(0.0, 0.0); 1 << m];
        a[basis] = Complex64::new(1.0, 0.0);
        let mut b = a.clone();
        for g in &src_ops {
            g.apply(&mut a);
        }
        for g in &routed_ops {
            g.apply(&mut b);
        }
        let expected = permute_bits(&a, &moves, m);
        let ph = *phase.get_or_insert_with(|| {
            let (i, _) = expected.iter().enumerate().max_by(|x, y| x.1.norm().total_cmp(&y.1.norm())).expect("nonempty");
            b[i] / expected[i]
        });
        for (e, r) in expected.iter().zip(&b) {
            worst = worst.max((r - ph * e).norm());
        }
    }
    if worst > ORACLE_TOLERANCE {
        return Err(OracleError::Differs(worst));
    }
    Ok(())
}

/// Moves the amplitude of bit `from` to bit `to` for every pair; all other
/// bits must be zero in the support, so they are left in place.
fn permute_bits(state: &[Complex64], moves: &[(usize, usize)], m: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); 1 << m];
    let from_mask: usize = moves.iter().map(|&(f, _)| 1 << f).sum();
    for (i, amp) in state.iter().enumerate() {
        if amp.norm() == 0.0 {
            continue;
        }
        let mut j = i & !from_mask;
        for &(f, t) in moves {
            if i >> f & 1 == 1 {
                j |= 1 << t;
            }
        }
        out[j] += amp;
    }
    out
}

enum SimGate {
    One(usize, [[Complex64; 2]; 2]),
    Cx(usize, usize),
    Swap(usize, usize),
}

impl SimGate {
    fn from_parts(name: &str, params: &[String], qubits: Vec<usize>) -> Result<Self, OracleError> {
        match (name, qubits.as_slice()) {
            ("cx" | "CX", &[c, t]) => Ok(SimGate::Cx(c, t)),
            ("swap", &[a, b]) => Ok(SimGate::Swap(a, b)),
            (_, &[q]) => {
                let vals = params.iter().map(|p| eval_param(p)).collect::<Result<Vec<f64>, _>>()?;
                Ok(SimGate::One(q, single_qubit_matrix(name, &vals)?))
            }
            _ => Err(OracleError::UnsupportedGate(name.to_string())),
        }
    }

    fn apply(&self, s: &mut [Complex64]) {
        match *self {
            SimGate::One(q, u) => {
                let bit = 1 << q;
                for i in 0..s.len() {
                    if i & bit == 0 {
                        let (a, b) = (s[i], s[i | bit]);
                        s[i] = u[0][0] * a + u[0][1] * b;
                        s[i | bit] = u[1][0] * a + u[1][1] * b;
                    }
                }
            }
            SimGate::Cx(c, t) => {
                for i in 0..s.len() {
                    if i >> c & 1 == 1 && i >> t & 1 == 0 {
                        s.swap(i, i | 1 << t);
                    }
                }
            }
            SimGate::Swap(a, b) => {
                for i in 0..s.len() {
                    if i >> a & 1 == 1 && i >> b & 1 == 0 {
                        s.swap(i, (i & !(1 << a)) | 1 << b);
                    }
                }
            }
        }
    }
}

fn u3(theta: f64, phi: f64, lambda: f64) -> [[Complex64; 2]; 2] {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    [
        [Complex64::new(c, 0.0), -Complex64::from_polar(s, lambda)],
        [Complex64::from_polar(s, phi), Complex64::from_polar(c, phi + lambda)],
    ]
}

fn single_qubit_matrix(name: &str, p: &[f64]) -> Result<[[Complex64; 2]; 2], OracleError> {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
    let arity = match name {
        "u1" | "p" | "rx" | "ry" | "rz" => 1,
        "u2" => 2,
        "u3" | "u" | "U" => 3,
        _ => 0,
    };
    if p.len() != arity {
        return Err(OracleError::UnsupportedGate(format!("{name} with {} parameters", p.len())));
    }
    let sx = |sign: f64| {
        let (a, b) = (Complex64::new(0.5, 0.5 * sign), Complex64::new(0.5, -0.5 * sign));
        [[a, b], [b, a]]
    };
    Ok(match name {
        "id" => u3(0.0, 0.0, 0.0),
        "x" => u3(PI, 0.0, PI),
        "y" => u3(PI, FRAC_PI_2, FRAC_PI_2),
        "z" => u3(0.0, 0.0, PI),
        "h" => u3(FRAC_PI_2, 0.0, PI),
        "s" => u3(0.0, 0.0, FRAC_PI_2),
        "sdg" => u3(0.0, 0.0, -FRAC_PI_2),
        "t" => u3(0.0, 0.0, FRAC_PI_4),
        "tdg" => u3(0.0, 0.0, -FRAC_PI_4),
        "u1" | "p" | "rz" => u3(0.0, 0.0, p[0]),
        "u2" => u3(FRAC_PI_2, p[0], p[1]),
        "u3" | "u" | "U" => u3(p[0], p[1], p[2]),
        "rx" => u3(p[0], -FRAC_PI_2, FRAC_PI_2),
        "ry" => u3(p[0], 0.0, 0.0),
        "sx" => sx(1.0),
        "sxdg" => sx(-1.0),
        _ => return Err(OracleError::UnsupportedGate(name.to_string())),
    })
}

/// Evaluates a numeric angle: literals, `pi`, `+ - * /`, unary minus and
/// parentheses.
pub fn eval_param(text: &str) -> Result<f64, OracleError> {
    let toks: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    let mut pos = 0;
    let v = expr(&toks, &mut pos).ok_or_else(|| OracleError::BadParam(text.to_string()))?;
    if pos != toks.len() {
        return Err(OracleError::BadParam(text.to_string()));
    }
    Ok(v)
}

fn expr(t: &[char], i: &mut usize) -> Option<f64> {
    let mut v = term(t, i)?;
    while let Some(&op) = t.get(*i).filter(|c| **c == '+' || **c == '-') {
        *i += 1;
        let r = term(t, i)?;
        v = if op == '+' { v + r } else { v - r };
    }
    Some(v)
}

fn term(t: &[char], i: &mut usize) -> Option<f64> {
    let mut v = factor(t, i)?;
    while let Some(&op) = t.get(*i).filter(|c| **c == '*' || **c == '/') {
        *i += 1;
        let r = factor(t, i)?;
        v = if op == '*' { v * r } else { v / r };
    }
    Some(v)
}

fn factor(t: &[char], i: &mut usize) -> Option<f64> {
    match t.get(*i)? {
        '-' => {
            *i += 1;
            Some(-factor(t, i)?)
        }
        '+' => {
            *i += 1;
            factor(t, i)
        }
        '(' => {
            *i += 1;
            let v = expr(t, i)?;
            (t.get(*i) == Some(&')')).then(|| *i += 1)?;
            Some(v)
        }
        'p' if t.get(*i + 1) == Some(&'i') => {
            *i += 2;
            Some(std::f64::consts::PI)
        }
        c if c.is_ascii_digit() || *c == '.' => {
            let start = *i;
            while t.get(*i).is_some_and(|c| c.is_ascii_digit() || *c == '.') {
                *i += 1;
            }
            if t.get(*i).is_some_and(|c| *c == 'e' || *c == 'E') {
                *i += 1;
                if t.get(*i).is_some_and(|c| *c == '-' || *c == '+') {
                    *i += 1;
                }
                while t.get(*i).is_some_and(|c| c.is_ascii_digit()) {
                    *i += 1;
                }
            }
            t[start..*i].iter().collect::<String>().parse().ok()
        }
        _ => None,
    }
}
