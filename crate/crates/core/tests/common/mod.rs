#![allow(dead_code)]

use std::path::PathBuf;

use geff::io::{self, CostFile};
use geff::numerics::SymMatrix;
use geff::opf::OpfProblem;
use geff::power::{power_flow_solve, Equilibrium, PowerNetwork};
use geff::sgraph::{NodeSetPair, SignedGraph};
use nalgebra::DMatrix;
use rand::Rng;

pub const SCHEMES: [&str; 5] = ["A", "B", "C", "D", "E"];

/// Operating points after optimisation, degrees, bus 1 as reference.
pub const THETA_D: [f64; 9] = [0.0, -16.69, -7.79, -6.81, -21.25, -14.89, -38.15, -42.34, -38.44];
pub const THETA_E: [f64; 9] = [0.0, -41.55, -16.00, -9.78, -41.55, -24.67, -53.00, -54.79, -51.68];

/// Published clearing times in scheme order C, B, E, A, D.
pub const CCT_ORDER: [&str; 5] = ["C", "B", "E", "A", "D"];
pub const CCT_PUBLISHED: [f64; 5] = [0.0, 0.22, 0.87, 0.95, 1.12];

pub fn data(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("data");
    p.push(name);
    p.to_string_lossy().into_owned()
}

pub fn six_bus() -> PowerNetwork {
    io::read_power_network(&data("6bus.json")).expect("bundled network loads")
}

/// Tabulated angles with the injections stored alongside them.
pub fn scheme(name: &str) -> (Equilibrium, PowerNetwork) {
    io::read_equilibrium(&data(&format!("eq_{name}.json")), &six_bus()).expect("bundled equilibrium loads")
}

/// Tabulated angles refined to an exact power-flow solution.
pub fn solved_scheme(name: &str) -> (Equilibrium, PowerNetwork) {
    let (eq, net) = scheme(name);
    let sol = power_flow_solve(&net, &eq.theta).expect("power flow converges").with_reference(eq.reference);
    (sol, net)
}

/// Bus-index pair from 1-based bus ids.
pub fn bus_pair(a: &[usize], b: &[usize]) -> NodeSetPair {
    let z = |s: &[usize]| s.iter().map(|k| k - 1).collect::<Vec<_>>();
    NodeSetPair::new(9, &z(a), &z(b)).unwrap()
}

pub fn opf_problem(g_min: Option<f64>) -> OpfProblem {
    let cost = CostFile::read(&data("6bus_cost.json")).unwrap();
    cost.problem(&six_bus(), g_min, bus_pair(&[1], &[2, 3])).unwrap()
}

/// Angles relative to bus 1, degrees.
pub fn relative_degrees(eq: &Equilibrium) -> Vec<f64> {
    let d = eq.degrees();
    d.iter().map(|x| x - d[0]).collect()
}

pub fn random_sym<R: Rng>(rng: &mut R, n: usize) -> SymMatrix {
    SymMatrix::new(DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)))
}

/// Random disjoint nonempty sets covering a random subset of the nodes.
pub fn random_pair<R: Rng>(rng: &mut R, n: usize) -> NodeSetPair {
    loop {
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let a: Vec<usize> = (0..n).filter(|&k| labels[k] == 1).collect();
        let b: Vec<usize> = (0..n).filter(|&k| labels[k] == 2).collect();
        if !a.is_empty() && !b.is_empty() {
            return NodeSetPair::new(n, &a, &b).unwrap();
        }
    }
}

pub fn positive_graph<R: Rng>(rng: &mut R, n: usize) -> SignedGraph {
    geff::sgraph::random_connected(rng, n, 0.4, 0)
}
