//! Command-line front end.
//!
//! Exit codes: 0 success, 1 input error, 2 singular block, 3 no convergence,
//! divergence, failed recovery or method disagreement.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use geff::definiteness::{check_corollary2, check_sequential, is_psd_one_zero, COROLLARY_MAX_N};
use geff::effective::geff as geff_value;
use geff::io::{self, Network, EquilibriumFile};
use geff::numerics::{inertia, Inertia};
use geff::opf::{assemble_sdp, recover_rank1, solve_sdp, validate, SolverOptions};
use geff::power::{active_power_flow_graph, classify, power_flow_solve, EquilibriumKind, PowerNetwork};
use geff::sgraph::{laplacian, random_connected, NodeSetPair, SignedGraph};
use geff::simulate::{cct_search_with, simulate_with, FaultScenario, SimOptions, DEFAULT_CCT_TOL, DEFAULT_DT, DEFAULT_T_MAX};
use geff::Error;

#[derive(Parser)]
#[command(name = "geff", version, about = "Effective conductance, Laplacian definiteness and power-network stability tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Sequential,
    Bruteforce,
    Eigen,
}

#[derive(Subcommand)]
enum Cmd {
    /// Effective conductance between two node sets.
    Geff {
        #[arg(long)]
        network: String,
        /// Angles for a power network; the active power flow graph is used.
        #[arg(long)]
        equilibrium: Option<String>,
        #[arg(long = "set-a")]
        set_a: String,
        #[arg(long = "set-b")]
        set_b: String,
    },
    /// Decide whether the Laplacian is PSD with exactly one zero eigenvalue.
    CheckPsd {
        #[arg(long, required_unless_present = "fuzz")]
        network: Option<String>,
        #[arg(long)]
        equilibrium: Option<String>,
        #[arg(long, value_enum, default_value = "sequential")]
        method: Method,
        /// Cross-check all methods on this many random graphs instead.
        #[arg(long)]
        fuzz: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Classify an equilibrium of a power network.
    Classify {
        #[arg(long)]
        network: String,
        #[arg(long, conflicts_with = "solve_from", required_unless_present = "solve_from")]
        equilibrium: Option<String>,
        /// Solve the power flow from these angles first.
        #[arg(long = "solve-from")]
        solve_from: Option<String>,
        #[arg(long = "set-a", requires = "set_b")]
        set_a: Option<String>,
        #[arg(long = "set-b", requires = "set_a")]
        set_b: Option<String>,
    },
    /// Fault-on and post-fault time-domain simulation.
    Simulate {
        #[arg(long)]
        network: String,
        #[arg(long)]
        equilibrium: String,
        #[arg(long = "fault-bus")]
        fault_bus: String,
        #[arg(long = "fault-r")]
        fault_r: f64,
        #[arg(long = "t-clear")]
        t_clear: f64,
        #[arg(long = "t-end")]
        t_end: f64,
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
    },
    /// Critical clearing time by bisection.
    Cct {
        #[arg(long)]
        network: String,
        #[arg(long)]
        equilibrium: String,
        #[arg(long = "fault-bus")]
        fault_bus: String,
        #[arg(long = "fault-r")]
        fault_r: f64,
        #[arg(long, default_value_t = DEFAULT_CCT_TOL)]
        tol: f64,
        #[arg(long = "t-max", default_value_t = DEFAULT_T_MAX)]
        t_max: f64,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
    },
    /// Conductance-constrained optimal power flow.
    Opf {
        #[arg(long)]
        network: String,
        #[arg(long)]
        cost: String,
        #[arg(long, default_value_t = 0.0)]
        gmin: f64,
        #[arg(long = "set-a")]
        set_a: String,
        #[arg(long = "set-b")]
        set_b: String,
        #[arg(long = "no-geff")]
        no_geff: bool,
        /// Where to write the recovered equilibrium.
        #[arg(long)]
        out: Option<String>,
        /// Print the solver iteration log to stderr.
        #[arg(long)]
        verbose: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SingularBlock(_) => 2,
        Error::NoConvergence { .. } | Error::SingularJacobian | Error::NumericalFailure(_) | Error::RankRecoveryFailed(_) => 3,
        _ => 1,
    }
}

struct Failure {
    code: u8,
    message: String,
    partial: Value,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
            partial: Value::Null,
        }
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
        partial: Value::Null,
    }
}

type CmdResult = std::result::Result<Value, Failure>;

fn inertia_json(i: &Inertia) -> Value {
    json!({"n_plus": i.n_plus, "n_minus": i.n_minus, "n_zero": i.n_zero})
}

fn labels_of(g: &SignedGraph) -> Vec<String> {
    (0..g.node_count()).map(|k| g.label(k)).collect()
}

fn ids(labels: &[String], idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&k| labels[k].clone()).collect()
}

fn load_power(network: &str) -> Result<PowerNetwork, Failure> {
    Ok(io::read_power_network(network)?)
}

/// Signed graph from either schema; power networks need angles.
fn load_graph(network: &str, equilibrium: Option<&str>) -> Result<SignedGraph, Failure> {
    match (io::read_network(network)?, equilibrium) {
        (Network::Signed(g), None) => Ok(g),
        (Network::Signed(_), Some(_)) => Err(fail(1, "an equilibrium applies to power networks only")),
        (Network::Power(_), None) => Err(fail(1, "a power network needs --equilibrium")),
        (Network::Power(net), Some(path)) => {
            let (eq, net) = io::read_equilibrium(path, &net)?;
            let labels = net.buses().iter().map(|b| b.id.clone()).collect();
            Ok(active_power_flow_graph(&net, &eq.theta).with_labels(labels)?)
        }
    }
}

fn pair_from(labels: &[String], a: &str, b: &str) -> Result<NodeSetPair, Failure> {
    let a = io::parse_id_list(a, labels)?;
    let b = io::parse_id_list(b, labels)?;
    Ok(NodeSetPair::new(labels.len(), &a, &b)?)
}

fn bus_labels(net: &PowerNetwork) -> Vec<String> {
    net.buses().iter().map(|b| b.id.clone()).collect()
}

fn bus_index(net: &PowerNetwork, id: &str) -> Result<usize, Failure> {
    net.index_of(id).ok_or_else(|| fail(1, format!("unknown bus {id}")))
}

fn cmd_geff(network: &str, equilibrium: Option<&str>, set_a: &str, set_b: &str) -> CmdResult {
    let g = load_graph(network, equilibrium)?;
    let labels = labels_of(&g);
    let pair = pair_from(&labels, set_a, set_b)?;
    let mut report = json!({
        "command": "geff",
        "network": network,
        "equilibrium": equilibrium,
        "set_a": ids(&labels, pair.a()),
        "set_b": ids(&labels, pair.b()),
        "set_c": ids(&labels, &pair.c()),
    });
    match geff_value(&g, &pair) {
        Ok(v) => {
            report["geff"] = json!(v.geff);
            report["reff"] = serde_json::to_value(v.reff).expect("resistance serializes");
            report["diagnostics"] = json!({"eliminated_block": "nonsingular", "connected": true});
            Ok(report)
        }
        Err(e @ Error::SingularBlock(_)) => {
            report["diagnostics"] = json!({"eliminated_block": "singular", "message": e.to_string()});
            Err(Failure {
                code: 2,
                message: format!("eliminated block is singular, the pair violates the nonsingularity requirement: {e}"),
                partial: report,
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn sequential_json(g: &SignedGraph) -> Result<Value, Failure> {
    let labels = labels_of(g);
    let v = check_sequential(g)?;
    Ok(json!({
        "psd_one_zero": v.psd_one_zero,
        "witness": v.witness.as_ref().map(|w| ids(&labels, w.order())),
        "violation": v.violation.as_ref().map(|x| json!({
            "node": labels[x.node],
            "set_b": ids(&labels, &x.set_b),
            "geff": x.geff,
        })),
        "diagnostic": v.diagnostic,
        "inertia": inertia_json(&v.oracle_inertia),
    }))
}

fn cmd_check_psd(network: Option<&str>, equilibrium: Option<&str>, method: Method, fuzz: Option<usize>, seed: u64) -> CmdResult {
    if let Some(count) = fuzz {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut disagreements = Vec::new();
        let mut positives = 0usize;
        for k in 0..count {
            let n = rng.gen_range(3..=8);
            let neg = rng.gen_range(0..=4);
            let g = random_connected(&mut rng, n, 0.4, neg);
            let eig = is_psd_one_zero(&laplacian(&g));
            let seq = check_sequential(&g)?.psd_one_zero;
            let brute = check_corollary2(&g, COROLLARY_MAX_N)?;
            positives += usize::from(eig);
            if eig != seq || eig != brute {
                disagreements.push(json!({"instance": k, "n": n, "eigen": eig, "sequential": seq, "bruteforce": brute}));
            }
        }
        let report = json!({
            "command": "check-psd",
            "fuzz": count,
            "seed": seed,
            "psd_one_zero_instances": positives,
            "agree": disagreements.is_empty(),
            "disagreements": disagreements,
        });
        if report["agree"] == json!(false) {
            return Err(Failure {
                code: 3,
                message: "methods disagree".into(),
                partial: report,
            });
        }
        return Ok(report);
    }
    let network = network.expect("clap requires --network without --fuzz");
    let g = load_graph(network, equilibrium)?;
    let mut report = json!({
        "command": "check-psd",
        "network": network,
        "equilibrium": equilibrium,
    });
    match method {
        Method::Sequential => {
            report["method"] = json!("sequential");
            let v = sequential_json(&g)?;
            report["psd_one_zero"] = v["psd_one_zero"].clone();
            report["sequential"] = v;
        }
        Method::Bruteforce => {
            report["method"] = json!("bruteforce");
            report["psd_one_zero"] = json!(check_corollary2(&g, COROLLARY_MAX_N)?);
        }
        Method::Eigen => {
            g.ensure_connected()?;
            let i = inertia(&laplacian(&g), None)?;
            report["method"] = json!("eigen");
            report["psd_one_zero"] = json!(i.n_minus == 0 && i.n_zero == 1);
            report["inertia"] = inertia_json(&i);
        }
    }
    Ok(report)
}

fn cmd_classify(network: &str, equilibrium: Option<&str>, solve_from: Option<&str>, set_a: Option<&str>, set_b: Option<&str>) -> CmdResult {
    let net = load_power(network)?;
    let path = equilibrium.or(solve_from).expect("clap requires one equilibrium source");
    let (mut eq, net) = io::read_equilibrium(path, &net)?;
    let mut solved = None;
    if solve_from.is_some() {
        let seed = eq.clone();
        let sol = power_flow_solve(&net, &eq.theta)?.with_reference(eq.reference);
        let shift = (&sol.theta - &seed.theta).amax().to_degrees();
        solved = Some(shift);
        eq = sol;
    }
    let labels = bus_labels(&net);
    let c = classify(&net, &eq)?;
    let (class, m) = match c.variant {
        EquilibriumKind::NonHyperbolic => ("NonHyperbolic", None),
        EquilibriumKind::StableHyperbolic => ("StableHyperbolic", None),
        EquilibriumKind::UnstableType(m) => ("UnstableType", Some(m)),
    };
    let mut report = json!({
        "command": "classify",
        "network": network,
        "equilibrium": path,
        "solved": solve_from.is_some(),
        "max_shift_deg": solved,
        "theta_deg": EquilibriumFile::from_equilibrium(&net, &eq, false).theta_deg,
        "max_mismatch": eq.max_mismatch(&net),
        "class": class,
        "type": m,
        "critical_lines": c.critical_lines.iter().map(|&(i, j)| vec![labels[i].clone(), labels[j].clone()]).collect::<Vec<_>>(),
        "laplacian_inertia": inertia_json(&c.laplacian_inertia),
        "jdyn_inertia": inertia_json(&c.jdyn_inertia),
        "jdyn_max_real": c.max_real,
        "geff_route_stable": c.geff_route_stable,
        "spectral_route_stable": c.spectral_route_stable,
        "bound_holds": c.bound_holds,
    });
    if let (Some(a), Some(b)) = (set_a, set_b) {
        let pair = pair_from(&labels, a, b)?;
        let g = active_power_flow_graph(&net, &eq.theta);
        report["indicator"] = json!({
            "set_a": ids(&labels, pair.a()),
            "set_b": ids(&labels, pair.b()),
            "geff": geff_value(&g, &pair)?.geff,
        });
    }
    Ok(report)
}

/// Loads an equilibrium and refines it with the power flow so that it is an
/// exact rest point of the dynamics.
fn load_operating_point(network: &str, equilibrium: &str) -> Result<(PowerNetwork, geff::power::Equilibrium, f64), Failure> {
    let net = load_power(network)?;
    let (eq, net) = io::read_equilibrium(equilibrium, &net)?;
    let refined = power_flow_solve(&net, &eq.theta)?.with_reference(eq.reference);
    let shift = (&refined.theta - &eq.theta).amax();
    Ok((net, refined, shift))
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(network: &str, equilibrium: &str, fault_bus: &str, fault_r: f64, t_clear: f64, t_end: f64, out: &str, dt: f64) -> CmdResult {
    let (net, eq, shift) = load_operating_point(network, equilibrium)?;
    let bus = bus_index(&net, fault_bus)?;
    let fault = FaultScenario::new(bus, fault_r, t_clear)?;
    let opts = SimOptions { dt, ..SimOptions::default() };
    let traj = simulate_with(&net, &eq, &fault, t_end, &opts)?;
    let file = File::create(out).map_err(|e| fail(1, format!("{out}: {e}")))?;
    io::write_trajectory_csv(BufWriter::new(file), &net, &traj).map_err(|e| fail(1, format!("{out}: {e}")))?;
    let report = json!({
        "command": "simulate",
        "network": network,
        "equilibrium": equilibrium,
        "equilibrium_refinement_deg": shift.to_degrees(),
        "fault": {"bus": fault_bus, "ground_resistance": fault_r, "t_clear": t_clear, "drain": fault.drain(&net)},
        "t_end": t_end,
        "dt": dt,
        "samples": traj.times.len(),
        "verdict": if traj.stable { "Stable" } else { "Unstable" },
        "diverged": traj.diverged,
        "tail_spread_deg": traj.tail_spread.to_degrees(),
        "csv": out,
    });
    if traj.diverged {
        return Err(Failure {
            code: 3,
            message: format!("trajectory diverged; partial CSV kept at {out}"),
            partial: report,
        });
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn cmd_cct(network: &str, equilibrium: &str, fault_bus: &str, fault_r: f64, tol: f64, t_max: f64, dt: f64) -> CmdResult {
    let (net, eq, shift) = load_operating_point(network, equilibrium)?;
    let bus = bus_index(&net, fault_bus)?;
    let r = cct_search_with(&net, &eq, bus, fault_r, t_max, tol, dt)?;
    Ok(json!({
        "command": "cct",
        "network": network,
        "equilibrium": equilibrium,
        "equilibrium_refinement_deg": shift.to_degrees(),
        "fault": {"bus": fault_bus, "ground_resistance": fault_r},
        "tol": tol,
        "t_max": t_max,
        "dt": dt,
        "cct": r.cct,
        "unstable_equilibrium": r.unstable_equilibrium,
        "monotone": r.is_monotone(),
        "trace": r.trace.iter().map(|&(t, s)| json!({"t_clear": t, "stable": s})).collect::<Vec<_>>(),
    }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_opf(network: &str, cost: &str, gmin: f64, set_a: &str, set_b: &str, no_geff: bool, out: Option<&str>, verbose: bool) -> CmdResult {
    let net = load_power(network)?;
    let costs = io::CostFile::read(cost)?;
    let labels = bus_labels(&net);
    let pair = pair_from(&labels, set_a, set_b)?;
    let prob = costs.problem(&net, (!no_geff).then_some(gmin), pair)?;
    let prog = assemble_sdp(&prob)?;
    let opts = SolverOptions {
        verbose,
        ..SolverOptions::default()
    };
    let relaxed = solve_sdp(&prog, &prob, &opts)?;
    let mut report = json!({
        "command": "opf",
        "network": network,
        "cost": cost,
        "g_min": (!no_geff).then_some(gmin),
        "set_a": ids(&labels, prob.pair.a()),
        "set_b": ids(&labels, prob.pair.b()),
        "variables": prog.program.n_vars,
        "constraints": prog.program.constraint_count(),
        "psd_blocks": prog.program.blocks.len(),
        "relaxed": {
            "status": format!("{:?}", relaxed.status),
            "objective": relaxed.objective,
            "rank_ratio": relaxed.rank_ratio,
            "iterations": relaxed.iterations,
        },
    });
    let sol = match recover_rank1(&prog, &prob, &relaxed, &opts) {
        Ok(s) => s,
        Err(e) => {
            return Err(Failure {
                code: exit_code(&e),
                message: e.to_string(),
                partial: report,
            })
        }
    };
    let eq = sol.recovered.as_ref().expect("recovery yields an equilibrium");
    let check = validate(&sol, &prob);
    let solved_net = net.with_injections(&sol.p)?;
    if let Some(path) = out {
        let text = EquilibriumFile::from_equilibrium(&solved_net, eq, true).to_json();
        std::fs::write(path, text + "\n").map_err(|e| fail(1, format!("{path}: {e}")))?;
    }
    let v: &DVector<f64> = sol.voltages.as_ref().expect("recovery yields voltages");
    report["status"] = json!(format!("{:?}", sol.status));
    report["objective"] = json!(sol.objective);
    report["rank_ratio"] = json!(sol.rank_ratio);
    report["penalty_rounds"] = json!(sol.penalty_rounds);
    report["P"] = json!(io::injections_by_id(&net, &sol.p));
    report["V"] = json!(io::injections_by_id(&net, v));
    report["theta_deg"] = json!(EquilibriumFile::from_equilibrium(&net, eq, false).theta_deg);
    report["geff"] = json!(check.geff);
    report["lmi_geff"] = json!(check.lmi_geff);
    report["max_mismatch"] = json!(check.max_mismatch);
    report["violations"] = json!(check.violations);
    report["equilibrium_file"] = json!(out);
    Ok(report)
}

fn run(cli: Cli) -> CmdResult {
    match cli.cmd {
        Cmd::Geff {
            network,
            equilibrium,
            set_a,
            set_b,
        } => cmd_geff(&network, equilibrium.as_deref(), &set_a, &set_b),
        Cmd::CheckPsd {
            network,
            equilibrium,
            method,
            fuzz,
            seed,
        } => cmd_check_psd(network.as_deref(), equilibrium.as_deref(), method, fuzz, seed),
        Cmd::Classify {
            network,
            equilibrium,
            solve_from,
            set_a,
            set_b,
        } => cmd_classify(&network, equilibrium.as_deref(), solve_from.as_deref(), set_a.as_deref(), set_b.as_deref()),
        Cmd::Simulate {
            network,
            equilibrium,
            fault_bus,
            fault_r,
            t_clear,
            t_end,
            out,
            dt,
        } => cmd_simulate(&network, &equilibrium, &fault_bus, fault_r, t_clear, t_end, &out, dt),
        Cmd::Cct {
            network,
            equilibrium,
            fault_bus,
            fault_r,
            tol,
            t_max,
            dt,
        } => cmd_cct(&network, &equilibrium, &fault_bus, fault_r, tol, t_max, dt),
        Cmd::Opf {
            network,
            cost,
            gmin,
            set_a,
            set_b,
            no_geff,
            out,
            verbose,
        } => cmd_opf(&network, &cost, gmin, &set_a, &set_b, no_geff, out.as_deref(), verbose),
    }
}

fn print(mut report: Value) {
    if let Value::Object(map) = &mut report {
        map.insert("schema".into(), json!(io::REPORT_SCHEMA));
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            print(report);
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            let mut report = match f.partial {
                Value::Null => json!({}),
                v => v,
            };
            report["error"] = json!({"code": f.code, "message": f.message});
            print(report);
            ExitCode::from(f.code)
        }
    }
}
