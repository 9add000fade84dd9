//! Extended effective conductance and resistance between node sets, with the
//! traditional pairwise definitions and the circuit interpretations.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::definiteness::is_psd_one_zero;
use crate::error::{Error, Result};
use crate::numerics::{pseudo_inverse, schur_complement, solve_sym, SymMatrix, PINV_RTOL};
use crate::sgraph::{cluster_matrix, laplacian, NodeSetPair, SignedGraph};

/// Relative threshold on `|geff| / ‖L‖` below which the sets are open-circuited.
pub const OPEN_CIRCUIT_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resistance {
    Finite(f64),
    Infinite,
}

impl Resistance {
    pub fn value(&self) -> f64 {
        match self {
            Resistance::Finite(r) => *r,
            Resistance::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Resistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resistance::Finite(r) => write!(f, "{r}"),
            Resistance::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Resistance {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Resistance::Finite(r) => s.serialize_f64(*r),
            Resistance::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveValue {
    pub geff: f64,
    pub reff: Resistance,
}

/// Potentials and injections with `V_a` held at 1 and `V_b` grounded.
#[derive(Debug, Clone)]
pub struct BoundaryCircuitSolution {
    pub potentials: DVector<f64>,
    pub injections: DVector<f64>,
    pub total_current: f64,
}

/// Effective conductance `e_aᵀ (L / L_cc) e_a` of a Laplacian.
///
/// The pair is canonicalised so that swapping the two sets gives a bitwise
/// identical result.
pub fn geff_laplacian(l: &SymMatrix, pair: &NodeSetPair) -> Result<EffectiveValue> {
    if pair.order() != l.order() {
        return Err(Error::InvalidPair("pair order differs from graph order".into()));
    }
    let first = if pair.a()[0] < pair.b()[0] { pair.a() } else { pair.b() };
    let mut keep: Vec<usize> = pair.a().iter().chain(pair.b()).copied().collect();
    keep.sort_unstable();
    let s = schur_complement(l, &keep)?;
    let ind = DVector::from_iterator(keep.len(), keep.iter().map(|k| if first.contains(k) { 1.0 } else { 0.0 }));
    let g = s.quad_form(&ind);
    let reff = if g.abs() <= OPEN_CIRCUIT_RTOL * l.norm() {
        Resistance::Infinite
    } else {
        Resistance::Finite(1.0 / g)
    };
    Ok(EffectiveValue { geff: g, reff })
}

pub fn geff(g: &SignedGraph, pair: &NodeSetPair) -> Result<EffectiveValue> {
    g.ensure_connected()?;
    geff_laplacian(&laplacian(g), pair)
}

/// Pairwise resistance `(e_i − e_j)ᵀ L† (e_i − e_j)` and its reciprocal, with no
/// definiteness check.
pub fn traditional_resistance(g: &SignedGraph, i: usize, j: usize) -> Result<(f64, f64)> {
    let n = g.node_count();
    if i == j || i >= n || j >= n {
        return Err(Error::InvalidPair(format!("need two distinct nodes, got {i} and {j}")));
    }
    let p = pseudo_inverse(&laplacian(g), PINV_RTOL)?;
    let r = p[(i, i)] + p[(j, j)] - 2.0 * p[(i, j)];
    Ok((r, 1.0 / r))
}

pub fn boundary_solve(g: &SignedGraph, pair: &NodeSetPair) -> Result<BoundaryCircuitSolution> {
    g.ensure_connected()?;
    let l = laplacian(g);
    let n = l.order();
    let c = pair.c();
    let mut v = DVector::zeros(n);
    for &k in pair.a() {
        v[k] = 1.0;
    }
    if !c.is_empty() {
        let l_ca = l.block(&c, pair.a());
        let rhs = -(l_ca * DVector::from_element(pair.a().len(), 1.0));
        let vc = solve_sym(&l.principal(&c), &DMatrix::from_column_slice(c.len(), 1, rhs.as_slice()))?;
        for (r, &k) in c.iter().enumerate() {
            v[k] = vc[r];
        }
    }
    let inj = l.matrix() * &v;
    let total = pair.a().iter().map(|&k| inj[k]).sum();
    Ok(BoundaryCircuitSolution {
        potentials: v,
        injections: inj,
        total_current: total,
    })
}

fn require_psd_one_zero(l: &SymMatrix) -> Result<()> {
    if is_psd_one_zero(l) {
        Ok(())
    } else {
        Err(Error::NotPsdOneZero)
    }
}

/// Closed-form minimiser of `iᵀ L† i` subject to unit current out of `V_a`,
/// into `V_b`, and none at `V_c`. Returns the current vector and its energy.
pub fn min_energy_current(g: &SignedGraph, pair: &NodeSetPair) -> Result<(DVector<f64>, f64)> {
    g.ensure_connected()?;
    let l = laplacian(g);
    require_psd_one_zero(&l)?;
    let ab: Vec<usize> = pair.a().iter().chain(pair.b()).copied().collect();
    let s = schur_complement(&l, &ab)?;
    let na = pair.a().len();
    let ones_a = DVector::from_iterator(ab.len(), (0..ab.len()).map(|k| if k < na { 1.0 } else { 0.0 }));
    let g_ab = s.quad_form(&ones_a);
    let boundary = s.matrix() * &ones_a;
    let mut i = DVector::zeros(l.order());
    for (r, &k) in ab.iter().enumerate() {
        i[k] = boundary[r] / g_ab;
    }
    let p = pseudo_inverse(&l, PINV_RTOL)?;
    let energy = p.quad_form(&i);
    Ok((i, energy))
}

/// Resistance as the potential difference across the clustered Laplacian.
pub fn clustered_reff(g: &SignedGraph, pair: &NodeSetPair) -> Result<f64> {
    g.ensure_connected()?;
    let l = laplacian(g);
    require_psd_one_zero(&l)?;
    let p = pseudo_inverse(&cluster_matrix(&l, pair), PINV_RTOL)?;
    Ok(p[(0, 0)] + p[(1, 1)] - 2.0 * p[(0, 1)])
}
