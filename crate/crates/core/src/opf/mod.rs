//! Stability-constrained optimal power flow through its semidefinite
//! relaxation, with rank-one recovery of the operating point.

pub mod sdp;

use std::collections::HashMap;

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::effective::geff_laplacian;
use crate::error::{Error, Result};
use crate::numerics::{sym_eigen, SymMatrix};
use crate::power::{active_power_flow_graph, BusKind, Equilibrium, PowerNetwork};
use crate::sgraph::{laplacian, NodeSetPair};

pub use sdp::{LmiBlock, SdpProgram, SdpStatus, SolverOptions};

/// Eigenvalue ratio at which the relaxed solution is accepted as rank one.
pub const RANK_ONE_RATIO: f64 = 1e6;
/// Lower bound imposed on `Re U_ij` for every line.
pub const RE_FLOOR: f64 = 1e-6;
/// Initial penalty weight relative to the relaxed objective.
pub const PENALTY_SCALE: f64 = 1e-5;
pub const MAX_PENALTY_ROUNDS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticCost {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl QuadraticCost {
    pub fn eval(&self, p: f64) -> f64 {
        self.c2 * p * p + self.c1 * p + self.c0
    }
}

#[derive(Debug, Clone)]
pub struct OpfProblem {
    pub net: PowerNetwork,
    /// Cost per generator bus.
    pub cost: Vec<(usize, QuadraticCost)>,
    pub p_min: DVector<f64>,
    pub p_max: DVector<f64>,
    /// Line angle limit in radians.
    pub theta_max: f64,
    /// Conductance floor; `None` drops the conductance constraint.
    pub g_min: Option<f64>,
    pub pair: NodeSetPair,
}

impl OpfProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.net.bus_count();
        if self.p_min.len() != n || self.p_max.len() != n {
            return Err(Error::InvalidProblem("bound vectors must have one entry per bus".into()));
        }
        if let Some(k) = (0..n).find(|&k| self.p_min[k] > self.p_max[k]) {
            return Err(Error::InvalidProblem(format!("bounds inverted at bus {}", self.net.buses()[k].id)));
        }
        if !(self.theta_max > 0.0 && self.theta_max < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidProblem("angle limit must lie in (0, 90°)".into()));
        }
        if self.pair.order() != n {
            return Err(Error::InvalidProblem("pair order differs from bus count".into()));
        }
        let buses = self.net.buses();
        if self.pair.a().iter().chain(self.pair.b()).any(|&k| buses[k].kind != BusKind::Generator) {
            return Err(Error::InvalidProblem("coherent groups must contain generator buses only".into()));
        }
        for (k, c) in &self.cost {
            if *k >= n || buses[*k].kind != BusKind::Generator {
                return Err(Error::InvalidProblem(format!("cost attached to non-generator bus {k}")));
            }
            if c.c2 < 0.0 {
                return Err(Error::InvalidProblem("quadratic cost coefficients must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn cost_of(&self, p: &DVector<f64>) -> f64 {
        self.cost.iter().map(|(k, c)| c.eval(p[*k])).sum()
    }
}

/// Assembled program with the variable layout needed to read results back.
#[derive(Debug, Clone)]
pub struct OpfProgram {
    pub program: SdpProgram,
    pub n: usize,
    diag: Vec<usize>,
    re: HashMap<(usize, usize), usize>,
    im: HashMap<(usize, usize), usize>,
    /// Linear expression of each bus injection in the decision variables.
    p_expr: Vec<Vec<(usize, f64)>>,
    pub has_geff: bool,
}

impl OpfProgram {
    pub fn u_block(&self) -> usize {
        0
    }

    fn injection(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n, self.p_expr.iter().map(|row| row.iter().map(|&(k, c)| c * z[k]).sum()))
    }

    fn u_matrix(&self, z: &DVector<f64>) -> DMatrix<Complex<f64>> {
        let n = self.n;
        let mut u = DMatrix::from_element(n, n, Complex::new(0.0, 0.0));
        for i in 0..n {
            u[(i, i)] = Complex::new(z[self.diag[i]], 0.0);
            for j in (i + 1)..n {
                let z_ij = Complex::new(z[self.re[&(i, j)]], z[self.im[&(i, j)]]);
                u[(i, j)] = z_ij;
                u[(j, i)] = z_ij.conj();
            }
        }
        u
    }
}

/// Builds the relaxed program. `U` is a full Hermitian matrix; its diagonal is
/// fixed by equalities and every off-diagonal entry is a decision variable.
pub fn assemble_sdp(prob: &OpfProblem) -> Result<OpfProgram> {
    prob.validate()?;
    let net = &prob.net;
    let n = net.bus_count();
    let mut next = 0usize;
    let mut alloc = || {
        next += 1;
        next - 1
    };
    let diag: Vec<usize> = (0..n).map(|_| alloc()).collect();
    let mut re = HashMap::new();
    let mut im = HashMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            re.insert((i, j), alloc());
            im.insert((i, j), alloc());
        }
    }
    let epi: Vec<Option<usize>> = prob.cost.iter().map(|(_, c)| if c.c2 > 0.0 { Some(alloc()) } else { None }).collect();
    let n_vars = next;

    let mut p_expr = vec![Vec::new(); n];
    for l in net.lines() {
        let (i, j) = (l.from.min(l.to), l.from.max(l.to));
        let v = im[&(i, j)];
        // P_i gains B·Im U_ij, P_j gains B·Im U_ji = −B·Im U_ij
        p_expr[i].push((v, l.b));
        p_expr[j].push((v, -l.b));
    }

    let mut prog = SdpProgram::new(n_vars);
    for (slot, (k, c)) in prob.cost.iter().enumerate() {
        for &(v, coef) in &p_expr[*k] {
            prog.objective[v] += c.c1 * coef;
        }
        prog.objective_constant += c.c0;
        if let Some(t) = epi[slot] {
            prog.objective[t] += 1.0;
        }
    }

    // realified U
    let mut ublk = LmiBlock::new("U", 2 * n);
    for i in 0..n {
        ublk.add_term(diag[i], i, i, 1.0);
        ublk.add_term(diag[i], i + n, i + n, 1.0);
        for j in (i + 1)..n {
            let r = re[&(i, j)];
            let m = im[&(i, j)];
            ublk.add_term(r, i, j, 1.0);
            ublk.add_term(r, i + n, j + n, 1.0);
            ublk.add_term(m, i + n, j, 1.0);
            ublk.add_term(m, j + n, i, -1.0);
        }
    }
    prog.blocks.push(ublk);

    for i in 0..n {
        let v = net.buses()[i].v_set;
        prog.equalities.push((vec![(diag[i], 1.0)], v * v));
    }

    for k in 0..n {
        let (lo, hi) = (prob.p_min[k], prob.p_max[k]);
        let id = &net.buses()[k].id;
        if lo == hi {
            prog.equalities.push((p_expr[k].clone(), lo));
            continue;
        }
        if lo.is_finite() {
            let mut b = LmiBlock::new(format!("pmin_{id}"), 1);
            b.add_constant(0, 0, -lo);
            for &(v, c) in &p_expr[k] {
                b.add_term(v, 0, 0, c);
            }
            prog.blocks.push(b);
        }
        if hi.is_finite() {
            let mut b = LmiBlock::new(format!("pmax_{id}"), 1);
            b.add_constant(0, 0, hi);
            for &(v, c) in &p_expr[k] {
                b.add_term(v, 0, 0, -c);
            }
            prog.blocks.push(b);
        }
    }

    let tan = prob.theta_max.tan();
    for l in net.lines() {
        let (i, j) = (l.from.min(l.to), l.from.max(l.to));
        let (r, m) = (re[&(i, j)], im[&(i, j)]);
        let tag = format!("{}_{}", net.buses()[i].id, net.buses()[j].id);
        for sign in [1.0, -1.0] {
            let mut b = LmiBlock::new(format!("angle_{tag}_{}", if sign > 0.0 { "lo" } else { "hi" }), 1);
            b.add_term(r, 0, 0, tan);
            b.add_term(m, 0, 0, sign);
            prog.blocks.push(b);
        }
        let mut b = LmiBlock::new(format!("re_{tag}"), 1);
        b.add_constant(0, 0, -RE_FLOOR);
        b.add_term(r, 0, 0, 1.0);
        prog.blocks.push(b);
    }

    if let Some(gmin) = prob.g_min {
        let c = prob.pair.c();
        let row = |k: usize| -> Option<usize> {
            if prob.pair.a().contains(&k) {
                Some(0)
            } else {
                c.iter().position(|&x| x == k).map(|p| p + 1)
            }
        };
        let mut h = LmiBlock::new("geff", c.len() + 1);
        h.add_constant(0, 0, -gmin);
        for l in net.lines() {
            let (i, j) = (l.from.min(l.to), l.from.max(l.to));
            let r = re[&(i, j)];
            let (ri, rj) = (row(i), row(j));
            if ri.is_some() && ri == rj {
                continue;
            }
            if let Some(a) = ri {
                h.add_term(r, a, a, l.b);
            }
            if let Some(b) = rj {
                h.add_term(r, b, b, l.b);
            }
            if let (Some(a), Some(b)) = (ri, rj) {
                h.add_term(r, a, b, -l.b);
            }
        }
        prog.blocks.push(h);
    }

    for (slot, (k, c)) in prob.cost.iter().enumerate() {
        if let Some(t) = epi[slot] {
            let s = c.c2.sqrt();
            let mut b = LmiBlock::new(format!("cost_{}", net.buses()[*k].id), 2);
            b.add_constant(0, 0, 1.0);
            for &(v, coef) in &p_expr[*k] {
                b.add_term(v, 0, 1, s * coef);
            }
            b.add_term(t, 1, 1, 1.0);
            prog.blocks.push(b);
        }
    }

    Ok(OpfProgram {
        program: prog,
        n,
        diag,
        re,
        im,
        p_expr,
        has_geff: prob.g_min.is_some(),
    })
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub u: DMatrix<Complex<f64>>,
    pub p: DVector<f64>,
    /// Generation cost at the returned point, excluding any rank penalty.
    pub objective: f64,
    pub status: SdpStatus,
    pub rank_ratio: f64,
    pub recovered: Option<Equilibrium>,
    pub voltages: Option<DVector<f64>>,
    pub iterations: usize,
    pub penalty_rounds: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub complementarity: f64,
    pub log: Vec<sdp::IterationLog>,
}

/// Leading eigenpair of a Hermitian matrix via its real embedding, and the
/// ratio of the two largest eigenvalues.
fn leading(u: &DMatrix<Complex<f64>>) -> Result<(f64, DVector<Complex<f64>>, f64)> {
    let n = u.nrows();
    let r = crate::numerics::hermitian_realify(&((u + u.adjoint()) * Complex::new(0.5, 0.0)))?;
    let e = sym_eigen(&r)?;
    let l1 = e.eigenvalues[2 * n - 1];
    let l2 = if n > 1 { e.eigenvalues[2 * n - 3] } else { 0.0 };
    let x = e.eigenvectors.column(2 * n - 1);
    let v = DVector::from_fn(n, |i, _| Complex::new(x[i], x[i + n]));
    let v = &v / Complex::new(v.norm(), 0.0);
    let ratio = if l2 <= 0.0 { f64::INFINITY } else { l1 / l2 };
    Ok((l1, v, ratio))
}

fn finish(prog: &OpfProgram, prob: &OpfProblem, res: sdp::SdpResult, rounds: usize) -> Result<SdpSolution> {
    let u = prog.u_matrix(&res.z);
    let p = prog.injection(&res.z);
    let (_, _, ratio) = leading(&u)?;
    Ok(SdpSolution {
        u,
        objective: prob.cost_of(&p),
        p,
        status: res.status,
        rank_ratio: ratio,
        recovered: None,
        voltages: None,
        iterations: res.iterations,
        penalty_rounds: rounds,
        primal_residual: res.primal_residual,
        dual_residual: res.dual_residual,
        gap: res.gap,
        complementarity: res.complementarity(),
        log: res.log,
    })
}

/// Solves the relaxation as assembled, without rank recovery.
pub fn solve_sdp(prog: &OpfProgram, prob: &OpfProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    let res = sdp::solve(&prog.program, opts)?;
    finish(prog, prob, res, 0)
}

fn extract(sol: &mut SdpSolution, reference: usize) -> Result<()> {
    let (l1, v, _) = leading(&sol.u)?;
    let phase = v[reference].arg();
    let theta = DVector::from_iterator(v.len(), v.iter().map(|z| z.arg() - phase));
    let wrapped = theta.map(|t| (t + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI);
    sol.recovered = Some(Equilibrium::new(wrapped, reference));
    sol.voltages = Some(v.map(|z| z.norm() * l1.sqrt()));
    Ok(())
}

/// Reads the operating point off the leading eigenvector. When the relaxed
/// solution is not numerically rank one, re-solves with the reweighted
/// penalty `ε·(tr U − vᴴ U v)`, `v` the previous leading eigenvector, raising
/// `ε` tenfold per round from `1e-5·|objective|`.
pub fn recover_rank1(prog: &OpfProgram, prob: &OpfProblem, sol: &SdpSolution, opts: &SolverOptions) -> Result<SdpSolution> {
    if sol.status != SdpStatus::Optimal {
        return Err(Error::RankRecoveryFailed(sol.rank_ratio));
    }
    let reference = prob.net.reference();
    let mut current = sol.clone();
    if current.rank_ratio >= RANK_ONE_RATIO {
        extract(&mut current, reference)?;
        return Ok(current);
    }
    let base = PENALTY_SCALE * sol.objective.abs().max(1.0);
    for round in 1..=MAX_PENALTY_ROUNDS {
        let eps = base * 10f64.powi(round as i32 - 1);
        let (_, v, _) = leading(&current.u)?;
        let mut penalised = prog.clone();
        let obj = &mut penalised.program.objective;
        for i in 0..prog.n {
            obj[prog.diag[i]] += eps * (1.0 - v[i].norm_sqr());
            for j in (i + 1)..prog.n {
                let w = v[i].conj() * v[j];
                obj[prog.re[&(i, j)]] -= eps * 2.0 * w.re;
                obj[prog.im[&(i, j)]] += eps * 2.0 * w.im;
            }
        }
        let res = sdp::solve(&penalised.program, opts)?;
        let next = finish(prog, prob, res, round)?;
        if next.status != SdpStatus::Optimal {
            return Err(Error::RankRecoveryFailed(next.rank_ratio));
        }
        current = next;
        if current.rank_ratio >= RANK_ONE_RATIO {
            extract(&mut current, reference)?;
            return Ok(current);
        }
    }
    Err(Error::RankRecoveryFailed(current.rank_ratio))
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// Largest gap between the relaxed injections and the flows implied by the
    /// recovered angles.
    pub max_mismatch: f64,
    pub geff: Option<f64>,
    /// Conductance read from the relaxed `U` through `W_q(U)`.
    pub lmi_geff: Option<f64>,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const VALIDATE_TOL: f64 = 1e-5;

pub fn validate(sol: &SdpSolution, prob: &OpfProblem) -> ValidationReport {
    let net = &prob.net;
    let mut violations = Vec::new();
    let Some(eq) = &sol.recovered else {
        return ValidationReport {
            max_mismatch: f64::NAN,
            geff: None,
            lmi_geff: None,
            violations: vec!["no recovered operating point".into()],
        };
    };
    let flows = net.flows(&eq.theta);
    let max_mismatch = (&flows - &sol.p).amax();
    if max_mismatch > VALIDATE_TOL {
        violations.push(format!("power-flow mismatch {max_mismatch:.3e}"));
    }
    for k in 0..net.bus_count() {
        let id = &net.buses()[k].id;
        if flows[k] < prob.p_min[k] - VALIDATE_TOL {
            violations.push(format!("bus {id}: P = {:.6} below minimum {}", flows[k], prob.p_min[k]));
        }
        if flows[k] > prob.p_max[k] + VALIDATE_TOL {
            violations.push(format!("bus {id}: P = {:.6} above maximum {}", flows[k], prob.p_max[k]));
        }
    }
    for l in net.lines() {
        let d = (eq.theta[l.from] - eq.theta[l.to]).abs();
        if d > prob.theta_max + 1e-6 {
            violations.push(format!(
                "line ({},{}): angle {:.3}° exceeds limit",
                net.buses()[l.from].id,
                net.buses()[l.to].id,
                d.to_degrees()
            ));
        }
    }
    let g = crate::effective::geff(&active_power_flow_graph(net, &eq.theta), &prob.pair).ok().map(|v| v.geff);
    let lmi_geff = {
        let mut w = DMatrix::zeros(prob.net.bus_count(), prob.net.bus_count());
        for l in net.lines() {
            let x = l.b * sol.u[(l.from, l.to)].re;
            w[(l.from, l.from)] += x;
            w[(l.to, l.to)] += x;
            w[(l.from, l.to)] -= x;
            w[(l.to, l.from)] -= x;
        }
        geff_laplacian(&SymMatrix::new(w), &prob.pair).ok().map(|v| v.geff)
    };
    if let Some(gmin) = prob.g_min {
        match g {
            Some(v) if v >= gmin - 1e-4 => {}
            Some(v) => violations.push(format!("conductance {v:.6} below floor {gmin}")),
            None => violations.push("conductance undefined at recovered point".into()),
        }
    }
    ValidationReport {
        max_mismatch,
        geff: g,
        lmi_geff,
        violations,
    }
}

/// Convenience: laplacian-based conductance of the recovered point.
pub fn recovered_geff(sol: &SdpSolution, prob: &OpfProblem) -> Option<f64> {
    let eq = sol.recovered.as_ref()?;
    let g = active_power_flow_graph(&prob.net, &eq.theta);
    geff_laplacian(&laplacian(&g), &prob.pair).ok().map(|v| v.geff)
}
