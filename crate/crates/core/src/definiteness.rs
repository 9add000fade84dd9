//! Deciding whether a signed Laplacian is PSD with exactly one zero eigenvalue.

use serde::Serialize;

use crate::effective::{geff_laplacian, OPEN_CIRCUIT_RTOL};
use crate::error::{Error, Result};
use crate::numerics::{inertia, Inertia, SymMatrix};
use crate::sgraph::{laplacian, negative_nodes, NodeSetPair, SequentialInclusion, SignedGraph};

/// Default node limit for exhaustive pair enumeration.
pub const COROLLARY_MAX_N: usize = 10;

/// The step at which the sequential check failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub node: usize,
    pub set_b: Vec<usize>,
    /// `None` when the eliminated block was singular.
    pub geff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefinitenessVerdict {
    pub psd_one_zero: bool,
    pub witness: Option<SequentialInclusion>,
    pub violation: Option<Violation>,
    pub oracle_inertia: Inertia,
    pub diagnostic: Option<String>,
}

/// Spectral test: inertia equals `(n − 1, 0, 1)`.
pub fn is_psd_one_zero(l: &SymMatrix) -> bool {
    match inertia(l, None) {
        Ok(i) => i.n_minus == 0 && i.n_zero == 1,
        Err(_) => false,
    }
}

fn positive(g: f64, l: &SymMatrix) -> bool {
    g > OPEN_CIRCUIT_RTOL * l.norm()
}

/// Sequential-inclusion test over the endpoints of negative edges, visited in
/// ascending order.
pub fn check_sequential(g: &SignedGraph) -> Result<DefinitenessVerdict> {
    let order = negative_nodes(g);
    check_sequential_order(g, &order)
}

/// Sequential-inclusion test with a caller-chosen visiting order of the
/// negative-edge endpoints.
pub fn check_sequential_order(g: &SignedGraph, order: &[usize]) -> Result<DefinitenessVerdict> {
    g.ensure_connected()?;
    let l = laplacian(g);
    let oracle = inertia(&l, None)?;
    let mut verdict = DefinitenessVerdict {
        psd_one_zero: true,
        witness: None,
        violation: None,
        oracle_inertia: oracle,
        diagnostic: None,
    };
    let mut set_b: Vec<usize> = order.iter().take(1).copied().collect();
    for &j in order.iter().skip(1) {
        let pair = NodeSetPair::new(g.node_count(), &[j], &set_b)?;
        match geff_laplacian(&l, &pair) {
            Ok(v) if positive(v.geff, &l) => set_b.push(j),
            Ok(v) => {
                verdict.psd_one_zero = false;
                verdict.violation = Some(Violation {
                    node: j,
                    set_b,
                    geff: Some(v.geff),
                });
                return Ok(verdict);
            }
            Err(Error::SingularBlock(msg)) => {
                verdict.psd_one_zero = false;
                verdict.diagnostic = Some(format!("singular complement block, leading blocks of a PSD-one-zero Laplacian are nonsingular ({msg})"));
                verdict.violation = Some(Violation {
                    node: j,
                    set_b,
                    geff: None,
                });
                return Ok(verdict);
            }
            Err(e) => return Err(e),
        }
    }
    verdict.witness = Some(SequentialInclusion::new(order.to_vec())?);
    Ok(verdict)
}

/// Exhaustive test: every pair of disjoint nonempty node sets has positive
/// effective conductance.
pub fn check_corollary2(g: &SignedGraph, max_n: usize) -> Result<bool> {
    let n = g.node_count();
    if n > max_n {
        return Err(Error::TooLarge { n, max: max_n });
    }
    g.ensure_connected()?;
    if n < 2 {
        return Ok(false);
    }
    let l = laplacian(g);
    // base-3 labels: 0 → V_c, 1 → V_a, 2 → V_b; each unordered pair is visited
    // once by requiring the lowest labelled node to sit in V_a
    let total = 3usize.pow(n as u32);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for code in 0..total {
        a.clear();
        b.clear();
        let mut c = code;
        for k in 0..n {
            match c % 3 {
                1 => a.push(k),
                2 => b.push(k),
                _ => {}
            }
            c /= 3;
        }
        if a.is_empty() || b.is_empty() || a[0] > b[0] {
            continue;
        }
        let pair = NodeSetPair::new(n, &a, &b)?;
        match geff_laplacian(&l, &pair) {
            Ok(v) if positive(v.geff, &l) => {}
            Ok(_) | Err(Error::SingularBlock(_)) => return Ok(false),
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

/// Number of negative Laplacian eigenvalues and number of negative edges.
pub fn negative_eigenvalue_bound(g: &SignedGraph) -> Result<(usize, usize)> {
    let i = inertia(&laplacian(g), None)?;
    Ok((i.n_minus, g.negative_edges().len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle(w01: f64) -> SignedGraph {
        SignedGraph::new(3, [(0, 1, w01), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    fn four_cycle() -> SignedGraph {
        SignedGraph::new(4, [(0, 1, -1.0 / 3.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)]).unwrap()
    }

    #[test]
    fn spectral_examples() {
        assert!(is_psd_one_zero(&laplacian(&triangle(1.0))));
        assert!(!is_psd_one_zero(&laplacian(&four_cycle())));
        let i = inertia(&laplacian(&four_cycle()), None).unwrap();
        assert_eq!(i.n_zero, 2);
    }

    #[test]
    fn sequential_examples() {
        let v = check_sequential(&triangle(1.0)).unwrap();
        assert!(v.psd_one_zero);
        assert!(v.witness.unwrap().is_empty());

        let v = check_sequential(&triangle(-10.0)).unwrap();
        assert!(!v.psd_one_zero);
        let viol = v.violation.unwrap();
        assert_eq!((viol.node, viol.set_b.as_slice()), (1, &[0][..]));
        assert!((viol.geff.unwrap() + 9.5).abs() < 1e-12);
        assert_eq!(v.oracle_inertia.n_minus, 1);
    }

    #[test]
    fn sequential_open_circuit_step() {
        let v = check_sequential(&four_cycle()).unwrap();
        assert!(!v.psd_one_zero);
        let viol = v.violation.unwrap();
        assert_eq!((viol.node, viol.set_b), (1, vec![0]));
    }

    #[test]
    fn sequential_single_negative_node_is_vacuous() {
        // one negative edge always touches two nodes, so a lone V_- node only
        // arises through an explicit order
        let v = check_sequential_order(&triangle(1.0), &[2]).unwrap();
        assert!(v.psd_one_zero);
    }

    #[test]
    fn corollary_examples() {
        assert!(check_corollary2(&triangle(1.0), COROLLARY_MAX_N).unwrap());
        assert!(!check_corollary2(&triangle(-10.0), COROLLARY_MAX_N).unwrap());
        let big = SignedGraph::new(11, (0..10).map(|k| (k, k + 1, 1.0))).unwrap();
        assert_eq!(check_corollary2(&big, COROLLARY_MAX_N), Err(Error::TooLarge { n: 11, max: 10 }));
    }

    #[test]
    fn bound_examples() {
        assert_eq!(negative_eigenvalue_bound(&triangle(1.0)).unwrap(), (0, 0));
        assert_eq!(negative_eigenvalue_bound(&triangle(-10.0)).unwrap(), (1, 1));
    }
}
