//! Fixed-step RK4 integration of the swing dynamics under a resistive ground
//! fault, and critical-clearing-time search.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::power::{classify, BusKind, Equilibrium, EquilibriumKind, PowerNetwork};

pub const DEFAULT_DT: f64 = 1e-3;
/// Angles beyond this magnitude abort the run as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e4;
/// Fraction of the run, counted from the end, over which the verdict is taken.
pub const VERDICT_WINDOW: f64 = 0.2;
/// Post-clearing observation time used by [`cct_search`].
pub const POST_FAULT_HORIZON: f64 = 20.0;
pub const DEFAULT_T_MAX: f64 = 2.0;
pub const DEFAULT_CCT_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FaultScenario {
    pub bus: usize,
    pub ground_resistance: f64,
    pub t_clear: f64,
}

impl FaultScenario {
    pub fn new(bus: usize, ground_resistance: f64, t_clear: f64) -> Result<Self> {
        if !(ground_resistance > 0.0 && ground_resistance.is_finite()) {
            return Err(Error::InvalidNetwork("fault resistance must be positive".into()));
        }
        if !(t_clear >= 0.0 && t_clear.is_finite()) {
            return Err(Error::InvalidNetwork("clearing time must be non-negative".into()));
        }
        Ok(FaultScenario {
            bus,
            ground_resistance,
            t_clear,
        })
    }

    /// Active power drawn by the fault at the bus voltage.
    pub fn drain(&self, net: &PowerNetwork) -> f64 {
        let v = net.buses()[self.bus].v_set;
        v * v / self.ground_resistance
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub theta: Vec<DVector<f64>>,
    pub omega: Vec<DVector<f64>>,
    pub stable: bool,
    pub diverged: bool,
    /// Largest generator angle spread over the verdict window.
    pub tail_spread: f64,
}

/// Right-hand side of the first-order system: angles of all buses followed
/// by generator speeds.
struct Dynamics<'a> {
    net: &'a PowerNetwork,
    gens: Vec<usize>,
    gen_slot: Vec<Option<usize>>,
    p: DVector<f64>,
}

impl<'a> Dynamics<'a> {
    fn new(net: &'a PowerNetwork) -> Self {
        let gens = net.generators();
        let mut gen_slot = vec![None; net.bus_count()];
        for (s, &k) in gens.iter().enumerate() {
            gen_slot[k] = Some(s);
        }
        Dynamics {
            net,
            gens,
            gen_slot,
            p: net.injections(),
        }
    }

    fn eval(&self, x: &DVector<f64>, drain_bus: Option<(usize, f64)>, damping: &[f64], out: &mut DVector<f64>) {
        let n = self.net.bus_count();
        let theta = x.rows(0, n).clone_owned();
        let mut mis = &self.p - self.net.flows(&theta);
        if let Some((b, pf)) = drain_bus {
            mis[b] -= pf;
        }
        let buses = self.net.buses();
        for i in 0..n {
            match self.gen_slot[i] {
                Some(s) => {
                    let w = x[n + s];
                    out[i] = w;
                    out[n + s] = (mis[i] - damping[i] * w) / buses[i].m;
                }
                None => out[i] = mis[i] / damping[i],
            }
        }
    }
}

/// Integration settings shared by [`simulate`] and the CCT search.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub dt: f64,
    /// Replaces every generator damping coefficient when set.
    pub generator_damping: Option<f64>,
    pub record: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dt: DEFAULT_DT,
            generator_damping: None,
            record: true,
        }
    }
}

pub fn simulate(net: &PowerNetwork, eq: &Equilibrium, fault: &FaultScenario, t_end: f64, dt: f64) -> Result<Trajectory> {
    simulate_with(net, eq, fault, t_end, &SimOptions { dt, ..SimOptions::default() })
}

pub fn simulate_with(
    net: &PowerNetwork,
    eq: &Equilibrium,
    fault: &FaultScenario,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let n = net.bus_count();
    if eq.theta.len() != n {
        return Err(Error::InvalidNetwork("equilibrium length differs from bus count".into()));
    }
    if fault.bus >= n {
        return Err(Error::InvalidNetwork(format!("fault bus {} out of range", fault.bus)));
    }
    if !(opts.dt > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidNetwork("time step and horizon must be positive".into()));
    }
    let dyns = Dynamics::new(net);
    let damping: Vec<f64> = net
        .buses()
        .iter()
        .map(|b| match (b.kind, opts.generator_damping) {
            (BusKind::Generator, Some(d)) => d,
            _ => b.d,
        })
        .collect();
    let g = dyns.gens.len();
    let steps = (t_end / opts.dt).round() as usize;
    let clear_step = (fault.t_clear / opts.dt).round() as usize;
    let window_start = ((1.0 - VERDICT_WINDOW) * steps as f64).floor() as usize;
    let drain = fault.drain(net);

    let mut x = DVector::zeros(n + g);
    x.rows_mut(0, n).copy_from(&eq.theta);
    let (mut k1, mut k2, mut k3, mut k4) = (x.clone(), x.clone(), x.clone(), x.clone());
    let mut traj = Trajectory {
        times: Vec::new(),
        theta: Vec::new(),
        omega: Vec::new(),
        stable: true,
        diverged: false,
        tail_spread: 0.0,
    };
    let record = |traj: &mut Trajectory, t: f64, x: &DVector<f64>| {
        traj.times.push(t);
        traj.theta.push(x.rows(0, n).clone_owned());
        traj.omega.push(x.rows(n, g).clone_owned());
    };
    if opts.record {
        record(&mut traj, 0.0, &x);
    }
    let spread = |x: &DVector<f64>| -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &k in &dyns.gens {
            lo = lo.min(x[k]);
            hi = hi.max(x[k]);
        }
        if g == 0 {
            0.0
        } else {
            hi - lo
        }
    };
    if window_start == 0 {
        traj.tail_spread = spread(&x);
    }
    let h = opts.dt;
    for s in 0..steps {
        let fault_on = if s < clear_step { Some((fault.bus, drain)) } else { None };
        dyns.eval(&x, fault_on, &damping, &mut k1);
        dyns.eval(&(&x + &k1 * (h / 2.0)), fault_on, &damping, &mut k2);
        dyns.eval(&(&x + &k2 * (h / 2.0)), fault_on, &damping, &mut k3);
        dyns.eval(&(&x + &k3 * h), fault_on, &damping, &mut k4);
        x += (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
        let t = (s + 1) as f64 * h;
        if opts.record {
            record(&mut traj, t, &x);
        }
        if !x.iter().all(|v| v.is_finite()) || x.rows(0, n).amax() > DIVERGENCE_LIMIT {
            traj.diverged = true;
            traj.stable = false;
            traj.tail_spread = f64::INFINITY;
            return Ok(traj);
        }
        if s + 1 >= window_start {
            traj.tail_spread = traj.tail_spread.max(spread(&x));
        }
    }
    traj.stable = traj.tail_spread < PI;
    Ok(traj)
}

#[derive(Debug, Clone, Serialize)]
pub struct CctResult {
    pub cct: f64,
    /// Every evaluated clearing time and its verdict, in evaluation order.
    pub trace: Vec<(f64, bool)>,
    /// Set when the operating point is not a stable equilibrium.
    pub unstable_equilibrium: bool,
}

impl CctResult {
    /// True when no stable clearing time exceeds an unstable one in the trace.
    pub fn is_monotone(&self) -> bool {
        let min_unstable = self.trace.iter().filter(|(_, s)| !s).map(|(t, _)| *t).fold(f64::INFINITY, f64::min);
        self.trace.iter().all(|&(t, s)| !s || t < min_unstable)
    }
}

/// Bisection on the clearing time over `[0, t_max]`; each candidate is run
/// for [`POST_FAULT_HORIZON`] seconds after clearing.
pub fn cct_search(
    net: &PowerNetwork,
    eq: &Equilibrium,
    bus: usize,
    ground_resistance: f64,
    t_max: f64,
    tol: f64,
) -> Result<CctResult> {
    cct_search_with(net, eq, bus, ground_resistance, t_max, tol, DEFAULT_DT)
}

pub fn cct_search_with(
    net: &PowerNetwork,
    eq: &Equilibrium,
    bus: usize,
    ground_resistance: f64,
    t_max: f64,
    tol: f64,
    dt: f64,
) -> Result<CctResult> {
    if !(t_max > 0.0 && tol > 0.0) {
        return Err(Error::InvalidNetwork("t_max and tol must be positive".into()));
    }
    let class = classify(net, eq)?;
    if class.variant != EquilibriumKind::StableHyperbolic {
        return Ok(CctResult {
            cct: 0.0,
            trace: Vec::new(),
            unstable_equilibrium: true,
        });
    }
    let opts = SimOptions {
        dt,
        record: false,
        ..SimOptions::default()
    };
    let mut trace = Vec::new();
    let verdict = |t: f64, trace: &mut Vec<(f64, bool)>| -> Result<bool> {
        let f = FaultScenario::new(bus, ground_resistance, t)?;
        let s = simulate_with(net, eq, &f, t + POST_FAULT_HORIZON, &opts)?.stable;
        trace.push((t, s));
        Ok(s)
    };
    if verdict(t_max, &mut trace)? {
        return Ok(CctResult {
            cct: t_max,
            trace,
            unstable_equilibrium: false,
        });
    }
    let (mut lo, mut hi) = (0.0, t_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if verdict(mid, &mut trace)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CctResult {
        cct: lo,
        trace,
        unstable_equilibrium: false,
    })
}

/// Kinetic plus potential energy of the lossless undamped system.
pub fn energy(net: &PowerNetwork, theta: &DVector<f64>, omega: &DVector<f64>) -> f64 {
    let gens = net.generators();
    let kinetic: f64 = gens.iter().zip(omega.iter()).map(|(&k, w)| 0.5 * net.buses()[k].m * w * w).sum();
    let potential: f64 = net
        .lines()
        .iter()
        .zip(net.couplings())
        .map(|(l, k)| -k * (theta[l.from] - theta[l.to]).cos())
        .sum::<f64>()
        - net.injections().dot(theta);
    kinetic + potential
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power::{power_flow_solve, Bus, Line};

    fn net() -> PowerNetwork {
        let b = |id: &str, kind, m, p| Bus {
            id: String::from(id),
            kind,
            v_set: 1.0,
            m,
            d: 1.0,
            p,
        };
        PowerNetwork::new(
            vec![
                b("1", BusKind::Generator, 2.0, 0.6),
                b("2", BusKind::Generator, 3.0, 0.2),
                b("3", BusKind::Load, 0.0, -0.8),
            ],
            vec![
                Line { from: 0, to: 2, b: 2.0 },
                Line { from: 1, to: 2, b: 2.0 },
                Line { from: 0, to: 1, b: 1.0 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn equilibrium_is_invariant() {
        let n = net();
        let eq = power_flow_solve(&n, &DVector::zeros(3)).unwrap();
        let f = FaultScenario::new(0, 0.1, 0.0).unwrap();
        let t = simulate(&n, &eq, &f, 2.0, 1e-3).unwrap();
        assert!(t.stable);
        for th in &t.theta {
            assert!((th - &eq.theta).amax() < 1e-9);
        }
        assert_eq!(t.times.len(), 2001);
    }

    #[test]
    fn long_fault_separates() {
        let n = net();
        let eq = power_flow_solve(&n, &DVector::zeros(3)).unwrap();
        let f = FaultScenario::new(0, 0.1, 10.0).unwrap();
        let t = simulate(&n, &eq, &f, 10.0, 1e-3).unwrap();
        assert!(!t.stable);
    }

    #[test]
    fn undamped_generators_conserve_energy() {
        let b = |id: &str, p| Bus {
            id: String::from(id),
            kind: BusKind::Generator,
            v_set: 1.0,
            m: 2.0,
            d: 1.0,
            p,
        };
        let n = PowerNetwork::new(
            vec![b("1", 0.5), b("2", -0.2), b("3", -0.3)],
            vec![Line { from: 0, to: 1, b: 2.0 }, Line { from: 1, to: 2, b: 1.5 }, Line { from: 0, to: 2, b: 1.0 }],
        )
        .unwrap();
        let eq = power_flow_solve(&n, &DVector::zeros(3)).unwrap();
        let mut start = eq.clone();
        start.theta[0] += 0.3;
        let opts = SimOptions {
            dt: 1e-3,
            generator_damping: Some(0.0),
            record: true,
        };
        let f = FaultScenario::new(0, 1.0, 0.0).unwrap();
        let t = simulate_with(&n, &start, &f, 2.0, &opts).unwrap();
        let e0 = energy(&n, &t.theta[0], &t.omega[0]);
        for (th, w) in t.theta.iter().zip(&t.omega) {
            assert!((energy(&n, th, w) - e0).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_fault_rejected() {
        assert!(FaultScenario::new(0, 0.0, 1.0).is_err());
        assert!(FaultScenario::new(0, 0.1, -1.0).is_err());
    }

    #[test]
    fn bisection_brackets_boundary() {
        let n = net();
        let eq = power_flow_solve(&n, &DVector::zeros(3)).unwrap();
        let r = cct_search(&n, &eq, 2, 0.5, 2.0, 0.01).unwrap();
        assert!(r.is_monotone());
        assert!(r.cct > 0.0);
        if r.cct < 2.0 {
            let f = FaultScenario::new(2, 0.5, r.cct).unwrap();
            assert!(simulate(&n, &eq, &f, r.cct + POST_FAULT_HORIZON, 1e-3).unwrap().stable);
            let f = FaultScenario::new(2, 0.5, r.cct + 0.01).unwrap();
            assert!(!simulate(&n, &eq, &f, r.cct + 0.01 + POST_FAULT_HORIZON, 1e-3).unwrap().stable);
        }
    }
}
