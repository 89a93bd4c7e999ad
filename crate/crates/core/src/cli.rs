//! Command-line front end: `route`, `bench` and `sweep`.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::ir::LatencyModel;
use crate::mapping::Mapping;
use crate::qasm::{emit_qasm, parse_qasm, QasmError, SourceCircuit};
use crate::scheduler::{run_scheduler, RouteError, SchedulerOptions, Strategy, TransformedCircuit};
use crate::search::SearchParams;
use crate::topology::{load_topology, CouplingGraph};
use crate::verify::{check_compliance, check_equivalence, unitary_oracle_equivalence, OracleError};

/// Programs with more qubits than this skip the unitary oracle.
const ORACLE_MAX_PROGRAM_QUBITS: usize = 8;

#[derive(Debug, Parser)]
#[command(name = "slackq", version, about = "Slack-aware SWAP insertion for constrained qubit topologies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Route one OpenQASM file.
    Route(RouteArgs),
    /// Compare strategies over a directory of OpenQASM files.
    Bench(BenchArgs),
    /// Grid over the search's expand/deeper parameters.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Slackq,
    MinSwap,
    Layered,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Slackq => Strategy::SlackQ,
            StrategyArg::MinSwap => Strategy::MinSwap,
            StrategyArg::Layered => Strategy::Layered,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// `tokyo`, `line:<n>`, `grid:<r>x<c>` or a topology JSON file.
    #[arg(long, default_value = "tokyo")]
    pub topology: String,
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    #[arg(long, default_value_t = 2.0)]
    pub k: f64,
    #[arg(long = "latency-1q", default_value_t = 1)]
    pub latency_1q: u64,
    #[arg(long = "latency-cx", default_value_t = 2)]
    pub latency_cx: u64,
    /// One cycle per gate, three per swap.
    #[arg(long)]
    pub unit_model: bool,
    /// `identity` or a JSON array giving the physical qubit of each logical qubit.
    #[arg(long, default_value = "identity")]
    pub initial_mapping: String,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "slackq")]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 1)]
    pub expand: usize,
    #[arg(long, default_value_t = 0)]
    pub deeper: usize,
    #[arg(long)]
    pub decompose_swaps: bool,
    /// Check hardware compliance and equivalence with the input.
    #[arg(long)]
    pub verify: bool,
    /// Also compare state vectors (programs with at most 8 qubits).
    #[arg(long)]
    pub oracle: bool,
    /// Routed program; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub dir: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 1)]
    pub expand: usize,
    #[arg(long, default_value_t = 0)]
    pub deeper: usize,
    /// CSV report; stdout when omitted.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Per-file, per-strategy metrics as a JSON array.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub dir: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "slackq")]
    pub strategy: StrategyArg,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 4])]
    pub expand: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0, 1, 2])]
    pub deeper: Vec<usize>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{source}")]
    Parse { path: String, source: QasmError },
    #[error("{path}: routing aborted: {source}")]
    Route { path: String, source: RouteError },
    #[error("{0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Parse { .. } => 2,
            CliError::Route { .. } => 3,
            CliError::Verify(_) => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

impl CommonArgs {
    pub fn latency(&self) -> Result<LatencyModel, CliError> {
        if self.unit_model {
            return Ok(LatencyModel::unit());
        }
        LatencyModel::new(self.latency_1q, self.latency_cx).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn params(&self, expand: usize, deeper: usize) -> Result<SearchParams, CliError> {
        let mut p = SearchParams { m: self.m, k: self.k, expand, deeper, ..SearchParams::default() };
        if let Ok(cap) = std::env::var("SLACKQ_HARD_CAP") {
            p.hard_cap = cap.parse().map_err(|_| CliError::Usage(format!("SLACKQ_HARD_CAP must be a positive integer, got `{cap}`")))?;
        }
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(p)
    }

    pub fn topology(&self) -> Result<CouplingGraph, CliError> {
        load_topology(&self.topology).map_err(|e| CliError::Usage(format!("topology `{}`: {e}", self.topology)))
    }

    pub fn mapping(&self, num_logical: usize, g: &CouplingGraph) -> Result<Mapping, CliError> {
        let bad = |e: String| CliError::Usage(format!("initial mapping: {e}"));
        if self.initial_mapping == "identity" {
            return Mapping::padded_identity(num_logical, g.num_physical).map_err(|e| bad(e.to_string()));
        }
        let path = Path::new(&self.initial_mapping);
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let placement: Vec<usize> = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        Mapping::from_placement(&placement, num_logical, g.num_physical).map_err(|e| bad(e.to_string()))
    }
}

pub fn read_circuit(path: &Path) -> Result<SourceCircuit, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_qasm(&text).map_err(|source| CliError::Parse { path: path.display().to_string(), source })
}

/// One routed file with its wall time.
pub struct Routed {
    pub circuit: SourceCircuit,
    pub pi0: Mapping,
    pub t: TransformedCircuit,
}

pub fn route_circuit(
    path: &Path,
    circuit: &SourceCircuit,
    common: &CommonArgs,
    g: &CouplingGraph,
    lm: &LatencyModel,
    opts: &SchedulerOptions,
) -> Result<Routed, CliError> {
    let pi0 = common.mapping(circuit.num_qubits, g)?;
    let started = Instant::now();
    let mut t = run_scheduler(circuit, g, &pi0, lm, opts).map_err(|source| CliError::Route { path: path.display().to_string(), source })?;
    t.metrics.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(Routed { circuit: circuit.clone(), pi0, t })
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Verified {
    pub compliance: Option<bool>,
    pub equivalence: Option<bool>,
    pub oracle: Option<bool>,
}

fn metrics_json(input: &str, common: &CommonArgs, strategy: Strategy, params: &SearchParams, lm: &LatencyModel, g: &CouplingGraph, r: &Routed, verified: Verified) -> serde_json::Value {
    let m = &r.t.metrics;
    json!({
        "schema": 1,
        "input": input,
        "topology": common.topology,
        "strategy": strategy.name(),
        "params": {"m": params.m, "k": params.k, "expand": params.expand, "deeper": params.deeper},
        "latency": {"single": lm.single, "cnot": lm.cnot, "swap": lm.swap_cycles(!g.bidirectional)},
        "circuit_time": m.circuit_time,
        "original_circuit_time": m.original_circuit_time,
        "overhead_ratio": m.overhead_ratio,
        "gates": {"total": m.gate_count_total, "cx": m.cx_count, "swaps": m.swaps_inserted},
        "final_mapping": r.t.final_mapping.placement(),
        "verified": verified,
        "wall_time_ms": m.wall_time_ms,
    })
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn route_command(a: &RouteArgs) -> Result<(), CliError> {
    let lm = a.common.latency()?;
    let params = a.common.params(a.expand, a.deeper)?;
    let g = a.common.topology()?;
    let circuit = read_circuit(&a.input)?;
    let strategy = Strategy::from(a.strategy);
    let opts = SchedulerOptions { strategy, params, ..Default::default() };
    let r = route_circuit(&a.input, &circuit, &a.common, &g, &lm, &opts)?;

    let mut verified = Verified::default();
    let mut failures = Vec::new();
    if a.verify || a.oracle {
        let compliance = check_compliance(&r.t, &g);
        if let Err(v) = &compliance {
            failures.push(format!("{} two-qubit ops off the coupling graph, first at op {}", v.len(), v[0].op_index));
        }
        let equivalence = check_equivalence(&circuit, &r.t, &r.pi0);
        if let Err(e) = &equivalence {
            failures.push(e.to_string());
        }
        verified.compliance = Some(compliance.is_ok());
        verified.equivalence = Some(equivalence.is_ok());
    }
    if a.oracle {
        if circuit.num_qubits > ORACLE_MAX_PROGRAM_QUBITS {
            log::warn!("unitary oracle skipped: {} qubits", circuit.num_qubits);
        } else {
            match unitary_oracle_equivalence(&circuit, &r.t, &r.pi0) {
                Ok(()) => verified.oracle = Some(true),
                Err(e @ OracleError::Differs(_)) => {
                    verified.oracle = Some(false);
                    failures.push(e.to_string());
                }
                Err(e) => log::warn!("unitary oracle skipped: {e}"),
            }
        }
    }

    let routed = r.t.to_source(&circuit);
    write_or_print(a.out.as_deref(), &emit_qasm(&routed, a.decompose_swaps, !g.bidirectional))?;
    if let Some(p) = &a.metrics {
        let doc = metrics_json(&a.input.display().to_string(), &a.common, strategy, &params, &lm, &g, &r, verified);
        fs::write(p, serde_json::to_string_pretty(&doc).expect("json values serialize") + "\n").map_err(io_err(p))?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(format!("{}: verification failed: {}", a.input.display(), failures.join("; "))))
    }
}

/// Size class by gate count.
pub fn category(gates: usize) -> &'static str {
    match gates {
        0..=199 => "mini",
        200..=999 => "small",
        1000..=9999 => "medium",
        _ => "large",
    }
}

pub const CATEGORIES: [&str; 4] = ["mini", "small", "medium", "large"];

fn qasm_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "qasm"))
        .collect();
    files.sort();
    Ok(files)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn geomean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    Some((xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp())
}

fn bench_command(a: &BenchArgs) -> Result<(), CliError> {
    let lm = a.common.latency()?;
    let params = a.common.params(a.expand, a.deeper)?;
    let g = a.common.topology()?;
    let mut header = vec!["file".to_string(), "category".into(), "gates".into(), "qubits".into(), "original_time".into()];
    for s in Strategy::ALL {
        for col in ["time", "swaps", "ms"] {
            header.push(format!("{}_{col}", s.name()));
        }
    }
    header.push("ratio_min_swap_over_slackq".into());

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut ratios: Vec<(&'static str, f64)> = Vec::new();
    let mut docs = Vec::new();
    for path in qasm_files(&a.dir)? {
        let name = file_name(&path);
        let row = (|| -> Result<Vec<String>, CliError> {
            let circuit = read_circuit(&path)?;
            let cat = category(circuit.gate_count());
            let mut row = vec![name.clone(), cat.to_string(), circuit.gate_count().to_string(), circuit.num_qubits.to_string()];
            let mut times = Vec::new();
            let mut original = 0;
            for s in Strategy::ALL {
                let opts = SchedulerOptions { strategy: s, params, ..Default::default() };
                let r = route_circuit(&path, &circuit, &a.common, &g, &lm, &opts)?;
                let m = &r.t.metrics;
                original = m.original_circuit_time;
                row.extend([m.circuit_time.to_string(), m.swaps_inserted.to_string(), format!("{:.3}", m.wall_time_ms)]);
                times.push(m.circuit_time);
                docs.push(metrics_json(&name, &a.common, s, &params, &lm, &g, &r, Verified::default()));
            }
            row.insert(4, original.to_string());
            let ratio = if times[0] == 0 { 1.0 } else { times[1] as f64 / times[0] as f64 };
            ratios.push((cat, ratio));
            row.push(format!("{ratio:.6}"));
            Ok(row)
        })();
        match row {
            Ok(r) => rows.push(r),
            Err(e) => log::error!("{e}"),
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in &rows {
        w.write_record(r).expect("in-memory write");
    }
    if !rows.is_empty() {
        for cat in CATEGORIES {
            let xs: Vec<f64> = ratios.iter().filter(|(c, _)| *c == cat).map(|(_, r)| *r).collect();
            let mut rec = vec![String::new(); header.len()];
            rec[0] = "summary".into();
            rec[1] = cat.into();
            if let Some(gm) = geomean(&xs) {
                rec[header.len() - 1] = format!("{gm:.6}");
            }
            w.write_record(&rec).expect("in-memory write");
        }
    }
    let bytes = w.into_inner().expect("in-memory flush");
    write_or_print(a.csv.as_deref(), &String::from_utf8(bytes).expect("csv is utf-8"))?;
    if let Some(p) = &a.metrics {
        fs::write(p, serde_json::to_string_pretty(&docs).expect("json values serialize") + "\n").map_err(io_err(p))?;
    }
    Ok(())
}

fn sweep_command(a: &SweepArgs) -> Result<(), CliError> {
    if a.expand.is_empty() || a.deeper.is_empty() {
        return Err(CliError::Usage("sweep ranges must be nonempty".into()));
    }
    let lm = a.common.latency()?;
    let g = a.common.topology()?;
    let strategy = Strategy::from(a.strategy);
    let mut grid = Vec::new();
    for &e in &a.expand {
        for &d in &a.deeper {
            grid.push((e, d, a.common.params(e, d)?));
        }
    }
    let mut header = vec!["file".to_string()];
    header.extend(grid.iter().map(|(e, d, _)| format!("e{e}_d{d}")));
    header.push("best".into());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for path in qasm_files(&a.dir)? {
        let row = (|| -> Result<Vec<String>, CliError> {
            let circuit = read_circuit(&path)?;
            let mut row = vec![file_name(&path)];
            let mut best = u64::MAX;
            for (_, _, params) in &grid {
                let opts = SchedulerOptions { strategy, params: *params, ..Default::default() };
                let time = route_circuit(&path, &circuit, &a.common, &g, &lm, &opts)?.t.metrics.circuit_time;
                best = best.min(time);
                row.push(time.to_string());
            }
            row.push(best.to_string());
            Ok(row)
        })();
        match row {
            Ok(r) => w.write_record(&r).expect("in-memory write"),
            Err(e) => log::error!("{e}"),
        }
    }
    let bytes = w.into_inner().expect("in-memory flush");
    write_or_print(a.csv.as_deref(), &String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Route(a) => route_command(a),
        Command::Bench(a) => bench_command(a),
        Command::Sweep(a) => sweep_command(a),
    }
}

/// Parses `args` (program name first) and runs; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
