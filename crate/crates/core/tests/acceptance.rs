//! Acceptance criteria. Each test prints one PASS/FAIL line on stderr (not
//! captured by the harness) with its wall time and budget.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use slackq::ir::{build_dep_graph, critical_path, partition_layers, DepGraph, LatencyModel};
use slackq::mapping::{identity_mapping, Mapping, SwapOp};
use slackq::qasm::{parse_qasm, RawGate, SourceCircuit};
use slackq::scheduler::{
    best_slack_utilization, full_circuit_time, run_scheduler, schedule_ready, Context, CriticalSelection, ScheduleState,
    SchedulerOptions, Strategy, TransformedCircuit,
};
use slackq::search::{resolve_conflicts, SearchError, SearchParams};
use slackq::topology::{load_topology, CouplingGraph};
use slackq::verify::{check_compliance, check_equivalence, unitary_oracle_equivalence};

fn criterion(id: u32, name: &str, budget: Option<Duration>, body: impl FnOnce() -> Result<String, String>) {
    let started = Instant::now();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(body))
        .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()));
    let elapsed = started.elapsed();
    let outcome = match (outcome, budget) {
        (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.1?}, budget {b:?}")),
        (o, _) => o,
    };
    let budget = budget.map(|b| format!(" / {b:?}")).unwrap_or_default();
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    let _ = writeln!(std::io::stderr(), "criterion {id:>2} {tag} {name}: {detail} [{elapsed:.2?}{budget}]");
    if let Err(d) = outcome {
        panic!("criterion {id} failed: {d}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn fixture(qasm: &str, topo: &str) -> (SourceCircuit, CouplingGraph) {
    let text = std::fs::read_to_string(manifest(&format!("fixtures/{qasm}"))).unwrap();
    let g = load_topology(manifest(&format!("fixtures/{topo}")).to_str().unwrap()).unwrap();
    (parse_qasm(&text).unwrap(), g)
}

fn route(c: &SourceCircuit, g: &CouplingGraph, lm: &LatencyModel, opts: &SchedulerOptions) -> (Mapping, TransformedCircuit) {
    let pi0 = Mapping::padded_identity(c.num_qubits, g.num_physical).unwrap();
    let t = run_scheduler(c, g, &pi0, lm, opts).unwrap();
    (pi0, t)
}

fn strategy(s: Strategy) -> SchedulerOptions {
    SchedulerOptions { strategy: s, ..Default::default() }
}

#[test]
fn c01_motivation_swap_hidden() {
    criterion(1, "motivation instance", Some(Duration::from_secs(1)), || {
        let (c, g) = fixture("fig_motivation.qasm", "fig1.json");
        let lm = LatencyModel::unit();
        let cp = critical_path(&build_dep_graph(&c), &lm).unwrap();
        let (_, t) = route(&c, &g, &lm, &strategy(Strategy::SlackQ));
        ensure(t.circuit_time() == cp, || format!("slackq {} != original critical path {cp}", t.circuit_time()))?;
        // Adverse candidate: swap of q2 and q3, zero-based (1,2).
        let forced = SchedulerOptions { forced_first: Some(vec![SwapOp::new(1, 2)]), ..Default::default() };
        let (_, d) = route(&c, &g, &lm, &forced);
        ensure(d.circuit_time() == cp + 3, || format!("forced candidate gives {}, expected {}", d.circuit_time(), cp + 3))?;
        Ok(format!("slackq {} = CP {cp}, forced (q2,q3) {}", t.circuit_time(), d.circuit_time()))
    });
}

#[test]
fn c02_criticality_ten_vs_thirteen() {
    criterion(2, "criticality instance", Some(Duration::from_secs(1)), || {
        let (c, g) = fixture("fig_criticality.qasm", "fig8.json");
        let lm = LatencyModel::unit();
        let (_, t) = route(&c, &g, &lm, &strategy(Strategy::SlackQ));
        let hook = SchedulerOptions { selection: CriticalSelection::NonCriticalFirst, ..Default::default() };
        let (_, n) = route(&c, &g, &lm, &hook);
        ensure(t.circuit_time() == 10 && n.circuit_time() == 13, || {
            format!("critical first {}, non-critical first {}", t.circuit_time(), n.circuit_time())
        })?;
        Ok("critical first 10, non-critical first 13".into())
    });
}

#[test]
fn c03_flexible_slack() {
    criterion(3, "flexible-slack instance", Some(Duration::from_secs(1)), || {
        let (c, g) = fixture("fig_flexslack.qasm", "fig_flexslack.json");
        let lm = LatencyModel::unit();
        let (_, s) = route(&c, &g, &lm, &strategy(Strategy::SlackQ));
        let (_, m) = route(&c, &g, &lm, &strategy(Strategy::MinSwap));
        ensure(s.circuit_time() <= 7, || format!("slackq {} > 7", s.circuit_time()))?;
        ensure(m.circuit_time() > s.circuit_time(), || format!("min_swap {} not worse than slackq {}", m.circuit_time(), s.circuit_time()))?;
        let optimum = if s.circuit_time() == 6 { "optimum 6 reached" } else { "optimum 6 not reached" };
        Ok(format!("slackq {} ({optimum}), min_swap {}", s.circuit_time(), m.circuit_time()))
    });
}

#[test]
fn c04_slack_utilization_golden() {
    criterion(4, "slack utilization golden", Some(Duration::from_secs(1)), || {
        let (c, g) = fixture("fig_motivation.qasm", "fig1.json");
        let dg = build_dep_graph(&c);
        let lm = LatencyModel::unit();
        let ctx = Context { circuit: &c, dg: &dg, g: &g, lm: &lm };
        let mut st = ScheduleState::new(&dg, identity_mapping(5));
        schedule_ready(&ctx, &mut st);
        let blocked: Vec<usize> = st.frontier.iter().copied().collect();
        ensure(blocked == vec![4], || format!("blocked frontier {blocked:?}, expected g5 alone"))?;
        let cands = resolve_conflicts(&st.pi, &[(1, 4)], &g, &SearchParams::default()).map_err(|e| e.to_string())?;
        let (best, scores) = best_slack_utilization(&ctx, &st, &cands);
        let q35 = SwapOp::new(2, 4);
        let q23 = SwapOp::new(1, 2);
        ensure(cands[best].swaps == vec![q35], || format!("chose {:?}", cands[best].swaps))?;
        ensure(scores[best].increment == Some(0), || format!("(q3,q5) increment {:?}", scores[best].increment))?;
        let d = cands.iter().position(|c| c.swaps == vec![q23]).ok_or("(q2,q3) candidate missing")?;
        // Pruned candidates stop scoring once they cannot win; the full
        // recompute gives the exact increment.
        let current = full_circuit_time(&ctx, &st, &[]);
        let inc_d = full_circuit_time(&ctx, &st, &cands[d].swaps) - current;
        ensure(inc_d == 3, || format!("(q2,q3) increment {inc_d}"))?;
        ensure(scores[d].increment.is_none_or(|i| i == 3), || format!("(q2,q3) scored {:?}", scores[d].increment))?;
        Ok(format!("(q3,q5) +0 chosen over (q2,q3) +{inc_d} (scored {:?})", scores[d].increment))
    });
}

fn exhaustive_longest_path(lat: &[u64], succ: &[Vec<usize>]) -> u64 {
    fn walk(n: usize, lat: &[u64], succ: &[Vec<usize>]) -> u64 {
        lat[n] + succ[n].iter().map(|&s| walk(s, lat, succ)).max().unwrap_or(0)
    }
    (0..lat.len()).map(|n| walk(n, lat, succ)).max().unwrap_or(0)
}

#[test]
fn c05_critical_path_oracle() {
    criterion(5, "critical path vs exhaustive paths", Some(Duration::from_secs(10)), || {
        let mut rng = StdRng::seed_from_u64(5);
        let lm = LatencyModel::default();
        for trial in 0..500 {
            let n = rng.gen_range(1..=12);
            let lat: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=3)).collect();
            // Random labels so node order is not a topological order.
            let mut label: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                label.swap(i, rng.gen_range(0..=i));
            }
            let density = rng.gen_range(0.1..0.6);
            let mut edges = Vec::new();
            let mut succ = vec![Vec::new(); n];
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(density) {
                        edges.push((label[i], label[j]));
                        succ[label[i]].push(label[j]);
                    }
                }
            }
            let dg = DepGraph::from_edges(&lat, &edges);
            let cp = critical_path(&dg, &lm).map_err(|e| e.to_string())?;
            let oracle = exhaustive_longest_path(&lat, &succ);
            ensure(cp == oracle, || format!("trial {trial}: critical_path {cp}, enumeration {oracle}"))?;
        }
        Ok("500/500 match".into())
    });
}

/// Random program over a mix of one-qubit gates and CNOTs.
fn random_program(rng: &mut StdRng, n: usize, gates: usize) -> SourceCircuit {
    const ONE_Q: [&str; 6] = ["h", "x", "t", "s", "tdg", "sx"];
    let mut c = SourceCircuit::new(n);
    for _ in 0..gates {
        if n >= 2 && rng.gen_bool(0.5) {
            let a = rng.gen_range(0..n);
            let b = (a + rng.gen_range(1..n)) % n;
            c.push(RawGate::new("cx", &[a, b]));
        } else if rng.gen_bool(0.2) {
            let angle = ["pi/3", "-pi/4", "0.7", "2*pi/5"][rng.gen_range(0..4)];
            c.push(RawGate::with_params("rz", &[angle], &[rng.gen_range(0..n)]));
        } else {
            c.push(RawGate::new(ONE_Q[rng.gen_range(0..ONE_Q.len())], &[rng.gen_range(0..n)]));
        }
    }
    c
}

#[test]
fn c06_layers_equal_depth() {
    criterion(6, "layer count equals depth", Some(Duration::from_secs(10)), || {
        let mut rng = StdRng::seed_from_u64(6);
        let lm = LatencyModel::unit();
        for trial in 0..200 {
            let n = rng.gen_range(1..=10);
            let gates = rng.gen_range(0..80);
            let c = random_program(&mut rng, n, gates);
            let dg = build_dep_graph(&c);
            let layers = partition_layers(&dg, &lm).map_err(|e| e.to_string())?;
            let cp = critical_path(&dg, &lm).map_err(|e| e.to_string())?;
            ensure(layers.layers.len() as u64 == cp, || format!("trial {trial}: {} layers, depth {cp}", layers.layers.len()))?;
            for layer in &layers.layers {
                let mut seen = HashSet::new();
                for &g in layer {
                    for &q in &dg.nodes[g].qubits {
                        ensure(seen.insert(q), || format!("trial {trial}: qubit {q} twice in a layer"))?;
                    }
                }
            }
        }
        Ok("200/200 circuits".into())
    });
}

/// Fewest swaps making every target adjacent, by breadth-first search over
/// placements. `None` if no placement satisfies all targets.
fn bfs_min_swaps(g: &CouplingGraph, start: &[usize], targets: &[(usize, usize)]) -> Option<usize> {
    let adjacent = |place: &[usize]| targets.iter().all(|&(a, b)| g.is_adjacent(place[a], place[b]));
    let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    seen.insert(start.to_vec(), 0);
    queue.push_back(start.to_vec());
    while let Some(place) = queue.pop_front() {
        let d = seen[&place];
        if adjacent(&place) {
            return Some(d);
        }
        for &(x, y) in g.undirected_edges() {
            let mut next = place.clone();
            for p in next.iter_mut() {
                if *p == x {
                    *p = y;
                } else if *p == y {
                    *p = x;
                }
            }
            if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(next.clone()) {
                e.insert(d + 1);
                queue.push_back(next);
            }
        }
    }
    None
}

fn random_connected_graph(rng: &mut StdRng, n: usize) -> CouplingGraph {
    let mut edges = HashSet::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.insert((u, v));
    }
    for _ in 0..rng.gen_range(0..n) {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let mut edges: Vec<_> = edges.into_iter().collect();
    edges.sort();
    CouplingGraph::new("random", n, edges, true).unwrap()
}

fn apply_all(pi: &Mapping, swaps: &[SwapOp]) -> Mapping {
    let mut m = pi.clone();
    for &s in swaps {
        m.swap_in_place(s);
    }
    m
}

#[test]
fn c07_search_optimality() {
    criterion(7, "search optimality vs BFS", Some(Duration::from_secs(30)), || {
        let mut rng = StdRng::seed_from_u64(7);
        let params = SearchParams::default();
        let (mut solved, mut unreachable, mut trial) = (0, 0, 0);
        while solved + unreachable < 200 {
            trial += 1;
            let np = rng.gen_range(3..=5);
            let g = random_connected_graph(&mut rng, np);
            let nl = rng.gen_range(2..=np);
            let mut place: Vec<usize> = (0..np).collect();
            for i in (1..np).rev() {
                place.swap(i, rng.gen_range(0..=i));
            }
            place.truncate(nl);
            let pi = Mapping::from_placement(&place, nl, np).unwrap();
            let mut targets = Vec::new();
            for _ in 0..rng.gen_range(1..=3) {
                let a = rng.gen_range(0..nl);
                let b = (a + rng.gen_range(1..nl)) % nl;
                targets.push((a, b));
            }
            let blocked = targets.iter().any(|&(a, b)| !g.is_adjacent(place[a], place[b]));
            if !blocked {
                continue;
            }
            let oracle = bfs_min_swaps(&g, &place, &targets);
            match (resolve_conflicts(&pi, &targets, &g, &params), oracle) {
                (Ok(cands), Some(s_min)) => {
                    let found = cands.iter().map(|c| c.swap_count).min().unwrap();
                    ensure(found == s_min, || format!("trial {trial}: s_min {found}, BFS {s_min}"))?;
                    let cap = (params.k * s_min as f64).ceil() as usize;
                    for c in &cands {
                        ensure(c.swap_count <= cap, || format!("trial {trial}: candidate with {} swaps > {cap}", c.swap_count))?;
                        ensure(c.swap_count == c.swaps.len() && apply_all(&pi, &c.swaps) == c.final_mapping, || {
                            format!("trial {trial}: inconsistent candidate {:?}", c.swaps)
                        })?;
                        let fin = c.final_mapping.log_to_phys();
                        ensure(targets.iter().all(|&(a, b)| g.is_adjacent(fin[a], fin[b])), || format!("trial {trial}: candidate not a goal"))?;
                    }
                    solved += 1;
                }
                (Err(SearchError::Unreachable), None) => unreachable += 1,
                (got, want) => return Err(format!("trial {trial}: search {got:?}, BFS {want:?}")),
            }
        }
        Ok(format!("{solved} solved with optimal s_min, {unreachable} unreachable agreed"))
    });
}

#[test]
fn c08_end_to_end_soundness() {
    criterion(8, "end-to-end soundness", Some(Duration::from_secs(120)), || {
        let mut rng = StdRng::seed_from_u64(8);
        let topologies = [CouplingGraph::line(8).unwrap(), CouplingGraph::grid(3, 3).unwrap(), CouplingGraph::tokyo()];
        let lm = LatencyModel::default();
        let mut oracle_runs = 0;
        for trial in 0..300 {
            let g = &topologies[trial % 3];
            let n = rng.gen_range(1..=8);
            let gates = rng.gen_range(0..=60);
            let c = random_program(&mut rng, n, gates);
            for s in [Strategy::SlackQ, Strategy::MinSwap] {
                let (pi0, t) = route(&c, g, &lm, &strategy(s));
                let tag = format!("trial {trial} on {} ({})", g.name, s.name());
                check_compliance(&t, g).map_err(|v| format!("{tag}: {} violations", v.len()))?;
                check_equivalence(&c, &t, &pi0).map_err(|e| format!("{tag}: {e}"))?;
                if n <= 6 {
                    unitary_oracle_equivalence(&c, &t, &pi0).map_err(|e| format!("{tag}: {e}"))?;
                    oracle_runs += 1;
                }
            }
        }
        Ok(format!("600/600 routed ok, {oracle_runs} unitary oracle checks"))
    });
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slackq"))
}

fn run_ok(cmd: &mut Command) -> Result<String, String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{cmd:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn corpus() -> PathBuf {
    manifest("corpus")
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("column {name} missing"))
}

fn geomean(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp()
}

#[test]
fn c09_strategy_dominance() {
    criterion(9, "corpus geomean slackq <= min_swap", Some(Duration::from_secs(300)), || {
        let text = run_ok(bin().arg("bench").arg(corpus()))?;
        let (header, rows) = parse_csv(&text);
        let files: Vec<&Vec<String>> = rows.iter().filter(|r| r[0] != "summary").collect();
        ensure(files.len() >= 20, || format!("only {} corpus rows", files.len()))?;
        let cats: HashSet<&str> = files.iter().map(|r| r[col(&header, "category")].as_str()).collect();
        ensure(cats.contains("mini") && cats.contains("small"), || format!("categories {cats:?}"))?;
        let time = |r: &Vec<String>, s: &str| r[col(&header, &format!("{s}_time"))].parse::<f64>().unwrap().max(1.0);
        let gs = geomean(&files.iter().map(|r| time(r, "slackq")).collect::<Vec<_>>());
        let gm = geomean(&files.iter().map(|r| time(r, "min_swap")).collect::<Vec<_>>());
        let better = files.iter().filter(|r| time(r, "slackq") < time(r, "min_swap")).count();
        ensure(gs <= gm, || format!("geomean slackq {gs:.2} > min_swap {gm:.2}"))?;

        let fixtures = manifest("fixtures");
        let mut fig_times = Vec::new();
        for s in ["slackq", "min-swap"] {
            let dir = tempfile::tempdir().unwrap();
            let metrics = dir.path().join("m.json");
            run_ok(bin()
                .arg("route")
                .arg(fixtures.join("fig_motivation.qasm"))
                .args(["--topology", fixtures.join("fig1.json").to_str().unwrap(), "--unit-model", "--strategy", s])
                .arg("--metrics")
                .arg(&metrics))?;
            let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
            fig_times.push(doc["circuit_time"].as_u64().unwrap());
        }
        ensure(fig_times[0] < fig_times[1], || format!("motivation fixture: slackq {} vs min_swap {}", fig_times[0], fig_times[1]))?;
        Ok(format!(
            "{} files, geomean slackq {gs:.2} vs min_swap {gm:.2} ({:.3}x), strictly better on {better}; motivation fixture {} vs {}",
            files.len(),
            gm / gs,
            fig_times[0],
            fig_times[1]
        ))
    });
}

/// Drops wall-time columns and fields so reports can be compared bytewise.
fn strip_timing(csv_text: &str, json_text: &str) -> (String, String) {
    let (header, rows) = parse_csv(csv_text);
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !header[i].ends_with("_ms")).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(keep.iter().map(|&i| &header[i])).unwrap();
    for r in &rows {
        w.write_record(keep.iter().map(|&i| &r[i])).unwrap();
    }
    let mut doc: serde_json::Value = serde_json::from_str(json_text).unwrap();
    for entry in doc.as_array_mut().unwrap() {
        entry.as_object_mut().unwrap().remove("wall_time_ms");
    }
    (String::from_utf8(w.into_inner().unwrap()).unwrap(), serde_json::to_string_pretty(&doc).unwrap())
}

#[test]
fn c10_bench_determinism() {
    criterion(10, "bench determinism", None, || {
        let dir = tempfile::tempdir().unwrap();
        let mut reports = Vec::new();
        for run in 0..2 {
            let csv_path = dir.path().join(format!("bench{run}.csv"));
            let json_path = dir.path().join(format!("bench{run}.json"));
            run_ok(bin()
                .arg("bench")
                .arg(corpus())
                .args(["--topology", "grid:4x5"])
                .arg("--csv")
                .arg(&csv_path)
                .arg("--metrics")
                .arg(&json_path))?;
            let csv_text = std::fs::read_to_string(&csv_path).unwrap();
            let json_text = std::fs::read_to_string(&json_path).unwrap();
            reports.push(strip_timing(&csv_text, &json_text));
        }
        ensure(reports[0].0 == reports[1].0, || "CSV reports differ".into())?;
        ensure(reports[0].1 == reports[1].1, || "JSON reports differ".into())?;
        Ok(format!("CSV {} bytes and JSON {} bytes identical", reports[0].0.len(), reports[0].1.len()))
    });
}

#[test]
fn c11_sweep_best_not_worse() {
    criterion(11, "sweep best <= baseline", Some(Duration::from_secs(600)), || {
        let text = run_ok(bin().arg("sweep").arg(corpus()).args(["--expand", "1,2,4", "--deeper", "0,1,2"]))?;
        let (header, rows) = parse_csv(&text);
        let grid: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with('e')).collect();
        ensure(grid.len() == 9, || format!("{} grid columns", grid.len()))?;
        ensure(rows.len() >= 20, || format!("{} rows", rows.len()))?;
        let base = col(&header, "e1_d0");
        let best = col(&header, "best");
        let mut improved = 0;
        for r in &rows {
            let v = |i: usize| r[i].parse::<u64>().unwrap();
            let min = grid.iter().map(|&i| v(i)).min().unwrap();
            ensure(v(best) == min && v(best) <= v(base), || format!("{}: best {} baseline {}", r[0], v(best), v(base)))?;
            improved += usize::from(v(best) < v(base));
        }
        Ok(format!("{} files, best below baseline on {improved}", rows.len()))
    });
}
