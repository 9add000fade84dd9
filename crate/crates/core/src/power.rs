//! Structure-preserving power network model: equilibria, the active power
//! flow graph and small-disturbance classification.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::definiteness::check_sequential;
use crate::effective::geff;
use crate::error::{Error, Result};
use crate::numerics::{inertia, inertia_of_spectrum, solve_sym, Inertia, SymMatrix};
use crate::sgraph::{NodeSetPair, SignedGraph};

/// Newton stops once the largest mismatch falls below this (p.u.).
pub const PF_TOL: f64 = 1e-10;
pub const PF_MAX_ITER: usize = 50;
pub const PF_MAX_HALVINGS: usize = 8;
/// Real parts above this count as unstable.
pub const REAL_PART_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Generator,
    Load,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub kind: BusKind,
    pub v_set: f64,
    /// Inertia, zero for load buses.
    pub m: f64,
    pub d: f64,
    pub p: f64,
}

/// Inductive line with susceptance magnitude `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerNetwork {
    buses: Vec<Bus>,
    lines: Vec<Line>,
}

impl PowerNetwork {
    pub fn new(buses: Vec<Bus>, lines: Vec<Line>) -> Result<Self> {
        let n = buses.len();
        if n < 2 {
            return Err(Error::InvalidNetwork("need at least two buses".into()));
        }
        for b in &buses {
            if !(b.v_set > 0.0 && b.v_set.is_finite()) {
                return Err(Error::InvalidNetwork(format!("bus {} has V_set {}", b.id, b.v_set)));
            }
            if !(b.d > 0.0 && b.d.is_finite()) {
                return Err(Error::InvalidNetwork(format!("bus {} needs D > 0", b.id)));
            }
            if b.kind == BusKind::Generator && !(b.m > 0.0 && b.m.is_finite()) {
                return Err(Error::InvalidNetwork(format!("generator {} needs M > 0", b.id)));
            }
            if !b.p.is_finite() {
                return Err(Error::InvalidNetwork(format!("bus {} has non-finite P", b.id)));
            }
        }
        for l in &lines {
            if !(l.b > 0.0 && l.b.is_finite()) {
                return Err(Error::InvalidNetwork(format!("line ({},{}) needs B > 0", l.from, l.to)));
            }
        }
        let net = PowerNetwork { buses, lines };
        net.topology()
            .map_err(|e| Error::InvalidNetwork(e.to_string()))?
            .ensure_connected()
            .map_err(|_| Error::InvalidNetwork("network is not connected".into()))?;
        Ok(net)
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn generators(&self) -> Vec<usize> {
        self.indices(BusKind::Generator)
    }

    pub fn loads(&self) -> Vec<usize> {
        self.indices(BusKind::Load)
    }

    fn indices(&self, kind: BusKind) -> Vec<usize> {
        (0..self.buses.len()).filter(|&i| self.buses[i].kind == kind).collect()
    }

    /// Angle reference used for the reduced models: the highest-index bus.
    pub fn reference(&self) -> usize {
        self.buses.len() - 1
    }

    pub fn injections(&self) -> DVector<f64> {
        DVector::from_iterator(self.buses.len(), self.buses.iter().map(|b| b.p))
    }

    pub fn with_injections(&self, p: &DVector<f64>) -> Result<PowerNetwork> {
        if p.len() != self.buses.len() {
            return Err(Error::InvalidNetwork("injection vector length differs from bus count".into()));
        }
        let mut out = self.clone();
        for (b, &v) in out.buses.iter_mut().zip(p.iter()) {
            b.p = v;
        }
        Ok(out)
    }

    /// Coupling `V_i V_j B_ij` of each line.
    pub fn couplings(&self) -> Vec<f64> {
        self.lines
            .iter()
            .map(|l| self.buses[l.from].v_set * self.buses[l.to].v_set * l.b)
            .collect()
    }

    fn topology(&self) -> Result<SignedGraph> {
        let labels = self.buses.iter().map(|b| b.id.clone()).collect();
        SignedGraph::new(self.buses.len(), self.lines.iter().map(|l| (l.from, l.to, l.b)))?.with_labels(labels)
    }

    /// Active power leaving each bus, `Σ_j V_i V_j B_ij sin θ_ij`.
    pub fn flows(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.buses.len());
        for (l, k) in self.lines.iter().zip(self.couplings()) {
            let f = k * (theta[l.from] - theta[l.to]).sin();
            out[l.from] += f;
            out[l.to] -= f;
        }
        out
    }

    pub fn mismatch(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.injections() - self.flows(theta)
    }

    /// Laplacian of the active power flow graph at `theta`.
    pub fn flow_laplacian(&self, theta: &DVector<f64>) -> SymMatrix {
        let n = self.buses.len();
        let mut l = DMatrix::zeros(n, n);
        for (ln, k) in self.lines.iter().zip(self.couplings()) {
            let w = k * (theta[ln.from] - theta[ln.to]).cos();
            let (i, j) = (ln.from, ln.to);
            l[(i, i)] += w;
            l[(j, j)] += w;
            l[(i, j)] -= w;
            l[(j, i)] -= w;
        }
        SymMatrix::new(l)
    }
}

/// Per-bus angles in radians with a designated zero-angle bus.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub theta: DVector<f64>,
    pub reference: usize,
}

impl Equilibrium {
    /// Shifts the angles so that `theta[reference] == 0`.
    pub fn new(theta: DVector<f64>, reference: usize) -> Self {
        let shift = theta[reference];
        Equilibrium {
            theta: theta.map(|t| t - shift),
            reference,
        }
    }

    pub fn from_degrees(deg: &[f64], reference: usize) -> Self {
        Self::new(DVector::from_iterator(deg.len(), deg.iter().map(|d| d.to_radians())), reference)
    }

    pub fn with_reference(&self, reference: usize) -> Self {
        Self::new(self.theta.clone(), reference)
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.theta.iter().map(|t| t.to_degrees()).collect()
    }

    /// Largest absolute power-flow mismatch.
    pub fn max_mismatch(&self, net: &PowerNetwork) -> f64 {
        net.mismatch(&self.theta).amax()
    }
}

fn check_balance(net: &PowerNetwork) -> Result<()> {
    let sum = net.injections().sum();
    if sum.abs() > 1e-9 {
        return Err(Error::InvalidNetwork(format!("injections sum to {sum:.3e}, expected 0")));
    }
    Ok(())
}

/// Damped Newton iteration on the mismatch of every bus except the reference.
pub fn power_flow_solve(net: &PowerNetwork, theta0: &DVector<f64>) -> Result<Equilibrium> {
    check_balance(net)?;
    let n = net.bus_count();
    if theta0.len() != n {
        return Err(Error::InvalidNetwork("initial guess length differs from bus count".into()));
    }
    let r = net.reference();
    let free: Vec<usize> = (0..n).filter(|&k| k != r).collect();
    let mut theta = theta0.map(|t| t - theta0[r]);
    let mut res = net.mismatch(&theta);
    let mut norm = res.amax();
    for _ in 0..PF_MAX_ITER {
        if norm <= PF_TOL {
            return Ok(Equilibrium::new(theta, r));
        }
        let f = net.flow_laplacian(&theta).principal(&free);
        let rhs = DMatrix::from_iterator(free.len(), 1, free.iter().map(|&k| res[k]));
        let step = solve_sym(&f, &rhs).map_err(|e| match e {
            Error::SingularBlock(_) => Error::SingularJacobian,
            other => other,
        })?;
        let mut alpha = 1.0;
        let mut halvings = 0;
        loop {
            let mut trial = theta.clone();
            for (row, &k) in free.iter().enumerate() {
                trial[k] += alpha * step[row];
            }
            let tres = net.mismatch(&trial);
            let tnorm = tres.amax();
            if tnorm < norm || halvings == PF_MAX_HALVINGS {
                theta = trial;
                res = tres;
                norm = tnorm;
                break;
            }
            alpha *= 0.5;
            halvings += 1;
        }
    }
    if norm <= PF_TOL {
        return Ok(Equilibrium::new(theta, r));
    }
    Err(Error::NoConvergence {
        iterations: PF_MAX_ITER,
        mismatch: norm,
    })
}

/// Graph with edge weights `V_i V_j B_ij cos θ_ij` on the network topology.
pub fn active_power_flow_graph(net: &PowerNetwork, theta: &DVector<f64>) -> SignedGraph {
    let labels: Vec<String> = net.buses().iter().map(|b| b.id.clone()).collect();
    let edges = net.lines().iter().zip(net.couplings()).map(|(l, k)| {
        let w = k * (theta[l.from] - theta[l.to]).cos();
        // an exactly orthogonal line carries no weight; keep it as the smallest
        // nonzero value so the topology is preserved
        (l.from, l.to, if w == 0.0 { f64::MIN_POSITIVE } else { w })
    });
    SignedGraph::new(net.bus_count(), edges)
        .and_then(|g| g.with_labels(labels))
        .expect("network topology was validated on construction")
}

/// Lines whose flow-graph weight is negative, as bus index pairs.
pub fn critical_lines(net: &PowerNetwork, eq: &Equilibrium) -> Vec<(usize, usize)> {
    net.lines()
        .iter()
        .zip(net.couplings())
        .filter(|(l, k)| k * (eq.theta[l.from] - eq.theta[l.to]).cos() < 0.0)
        .map(|(l, _)| (l.from, l.to))
        .collect()
}

/// State matrix of the linearised dynamics with the highest-index bus as angle
/// reference; states are relative angles followed by generator speeds.
#[derive(Debug, Clone)]
pub struct DynJacobian {
    pub matrix: DMatrix<f64>,
    pub spectrum: Vec<Complex<f64>>,
}

impl DynJacobian {
    pub fn max_real(&self) -> f64 {
        self.spectrum.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inertia(&self) -> Inertia {
        let re = DVector::from_iterator(self.spectrum.len(), self.spectrum.iter().map(|z| z.re));
        inertia_of_spectrum(&re, REAL_PART_TOL)
    }

    /// Eigenvalues with real part above the instability tolerance.
    pub fn unstable(&self) -> Vec<Complex<f64>> {
        self.spectrum.iter().copied().filter(|z| z.re > REAL_PART_TOL).collect()
    }
}

pub fn jacobian_dyn(net: &PowerNetwork, eq: &Equilibrium) -> DynJacobian {
    let n = net.bus_count();
    let r = net.reference();
    let gens = net.generators();
    let loads = net.loads();
    let g = gens.len();
    let free: Vec<usize> = (0..n).filter(|&k| k != r).collect();
    let f = net.flow_laplacian(&eq.theta).principal(&free).into_inner();
    // T = [I_{n-1}, -1] with columns indexed by bus
    let t_col = |bus: usize| -> DVector<f64> {
        if bus == r {
            DVector::from_element(n - 1, -1.0)
        } else {
            let mut v = DVector::zeros(n - 1);
            v[free.iter().position(|&k| k == bus).unwrap()] = 1.0;
            v
        }
    };
    let tg = DMatrix::from_columns(&gens.iter().map(|&k| t_col(k)).collect::<Vec<_>>());
    let mut tl_dinv_tlt = DMatrix::zeros(n - 1, n - 1);
    for &k in &loads {
        let c = t_col(k);
        tl_dinv_tlt += &c * c.transpose() / net.buses()[k].d;
    }
    let minv = DMatrix::from_diagonal(&DVector::from_iterator(g, gens.iter().map(|&k| 1.0 / net.buses()[k].m)));
    let dg = DMatrix::from_diagonal(&DVector::from_iterator(g, gens.iter().map(|&k| net.buses()[k].d)));

    let dim = n - 1 + g;
    let mut j = DMatrix::zeros(dim, dim);
    j.view_mut((0, 0), (n - 1, n - 1)).copy_from(&(-&tl_dinv_tlt * &f));
    if g > 0 {
        j.view_mut((0, n - 1), (n - 1, g)).copy_from(&tg);
        j.view_mut((n - 1, 0), (g, n - 1)).copy_from(&(-&minv * tg.transpose() * &f));
        j.view_mut((n - 1, n - 1), (g, g)).copy_from(&(-&minv * dg));
    }
    let spectrum = j.complex_eigenvalues().iter().copied().collect();
    DynJacobian { matrix: j, spectrum }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "class", content = "m")]
pub enum EquilibriumKind {
    NonHyperbolic,
    StableHyperbolic,
    UnstableType(usize),
}

#[derive(Debug, Clone)]
pub struct EquilibriumClass {
    pub variant: EquilibriumKind,
    pub jdyn_inertia: Inertia,
    pub laplacian_inertia: Inertia,
    pub critical_lines: Vec<(usize, usize)>,
    /// Verdict of the sequential-inclusion conductance test.
    pub geff_route_stable: bool,
    /// Verdict read from the state-matrix spectrum.
    pub spectral_route_stable: bool,
    pub max_real: f64,
    pub bound_holds: bool,
}

pub fn classify(net: &PowerNetwork, eq: &Equilibrium) -> Result<EquilibriumClass> {
    let l = net.flow_laplacian(&eq.theta);
    let r = net.reference();
    let free: Vec<usize> = (0..net.bus_count()).filter(|&k| k != r).collect();
    let f_inertia = inertia(&l.principal(&free), None)?;
    let l_inertia = inertia(&l, None)?;
    let crit = critical_lines(net, eq);
    let apfg = active_power_flow_graph(net, &eq.theta);
    let geff_route_stable = check_sequential(&apfg)?.psd_one_zero;
    let jd = jacobian_dyn(net, eq);
    let j_inertia = jd.inertia();
    let variant = if f_inertia.n_zero > 0 {
        EquilibriumKind::NonHyperbolic
    } else if l_inertia.n_minus == 0 && l_inertia.n_zero == 1 {
        EquilibriumKind::StableHyperbolic
    } else {
        EquilibriumKind::UnstableType(l_inertia.n_minus)
    };
    let m = match variant {
        EquilibriumKind::UnstableType(m) => m,
        _ => 0,
    };
    Ok(EquilibriumClass {
        variant,
        jdyn_inertia: j_inertia,
        laplacian_inertia: l_inertia,
        bound_holds: m <= crit.len(),
        critical_lines: crit,
        geff_route_stable,
        spectral_route_stable: j_inertia.n_plus == 0 && j_inertia.n_zero == 0,
        max_real: jd.max_real(),
    })
}

/// Effective conductance of the active power flow graph between two bus sets.
pub fn stability_indicator(net: &PowerNetwork, eq: &Equilibrium, pair: &NodeSetPair) -> Result<f64> {
    Ok(geff(&active_power_flow_graph(net, &eq.theta), pair)?.geff)
}

/// Restoring coefficient `(1/m_a + 1/m_b)·geff` of the two-group swing model.
pub fn coherent_swing(net: &PowerNetwork, eq: &Equilibrium, gen_pair: &NodeSetPair) -> Result<f64> {
    let buses = net.buses();
    let mass = |set: &[usize]| -> Result<f64> {
        set.iter()
            .map(|&k| match buses[k].kind {
                BusKind::Generator => Ok(buses[k].m),
                BusKind::Load => Err(Error::InvalidPair(format!("bus {} is not a generator", buses[k].id))),
            })
            .sum()
    };
    let ma = mass(gen_pair.a())?;
    let mb = mass(gen_pair.b())?;
    Ok((1.0 / ma + 1.0 / mb) * stability_indicator(net, eq, gen_pair)?)
}
