mod common;

use common::*;
use geff::simulate::{cct_search, energy, simulate, simulate_with, FaultScenario, SimOptions};

const FAULT_BUS: usize = 3;
const FAULT_R: f64 = 0.02;

#[test]
fn fault_drains_bus_power() {
    let net = six_bus();
    let f = FaultScenario::new(FAULT_BUS, FAULT_R, 1.0).unwrap();
    assert!((f.drain(&net) - 55.125).abs() < 1e-12);
    assert!(FaultScenario::new(FAULT_BUS, 0.0, 1.0).is_err());
    assert!(FaultScenario::new(FAULT_BUS, FAULT_R, -1.0).is_err());
}

#[test]
fn one_second_fault_separates_normal_point() {
    let (eq, net) = solved_scheme("A");
    let t = simulate(&net, &eq, &FaultScenario::new(FAULT_BUS, FAULT_R, 1.0).unwrap(), 10.0, 1e-3).unwrap();
    assert!(!t.stable);
    // generator 1 is the one that slips
    let last = t.theta.last().unwrap();
    assert!((last[0] - last[1]).abs() > std::f64::consts::PI);
}

#[test]
fn one_second_fault_is_survived_after_redispatch() {
    let (eq, net) = solved_scheme("D");
    let t = simulate(&net, &eq, &FaultScenario::new(FAULT_BUS, FAULT_R, 1.0).unwrap(), 10.0, 1e-3).unwrap();
    assert!(t.stable);
    let (eq, net) = solved_scheme("E");
    let t = simulate(&net, &eq, &FaultScenario::new(FAULT_BUS, FAULT_R, 1.0).unwrap(), 10.0, 1e-3).unwrap();
    assert!(!t.stable);
}

#[test]
fn zero_clearing_time_is_flat() {
    let (eq, net) = solved_scheme("D");
    let t = simulate(&net, &eq, &FaultScenario::new(FAULT_BUS, FAULT_R, 0.0).unwrap(), 5.0, 1e-3).unwrap();
    assert!(t.stable);
    for (th, w) in t.theta.iter().zip(&t.omega) {
        assert!((th - &eq.theta).amax() < 1e-9);
        assert!(w.amax() < 1e-9);
    }
}

#[test]
fn clearing_time_table() {
    let frozen = [0.0, 0.21875, 0.875, 0.953125, 1.125];
    for (s, want) in CCT_ORDER.iter().zip(frozen) {
        let (eq, net) = solved_scheme(s);
        let r = cct_search(&net, &eq, FAULT_BUS, FAULT_R, 2.0, 0.01).unwrap();
        assert_eq!(r.cct, want, "{s}");
        assert!(r.is_monotone(), "{s}");
        assert_eq!(r.unstable_equilibrium, *s == "C");
    }
}

#[test]
fn energy_decays_after_clearing() {
    let (eq, net) = solved_scheme("D");
    let opts = SimOptions::default();
    let t = simulate_with(&net, &eq, &FaultScenario::new(FAULT_BUS, FAULT_R, 0.5).unwrap(), 10.0, &opts).unwrap();
    let k0 = t.times.iter().position(|&x| x >= 0.5).unwrap();
    let e: Vec<f64> = (k0..t.times.len()).step_by(100).map(|k| energy(&net, &t.theta[k], &t.omega[k])).collect();
    assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{e:?}");
}
