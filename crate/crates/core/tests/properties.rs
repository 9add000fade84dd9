mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use geff::definiteness::{check_corollary2, check_sequential, check_sequential_order, is_psd_one_zero, negative_eigenvalue_bound};
use geff::effective::{boundary_solve, clustered_reff, geff, geff_laplacian, min_energy_current, traditional_resistance};
use geff::numerics::{inertia, schur_complement, sym_eigen, SymMatrix};
use geff::sgraph::{incidence_matrix, kron_reduce, laplacian, negative_nodes, random_connected, NodeSetPair, SignedGraph};

fn graph_strategy(max_n: usize, max_neg: usize) -> impl Strategy<Value = SignedGraph> {
    (2..=max_n, 0..=max_neg, any::<u64>()).prop_map(|(n, neg, seed)| {
        let mut rng = StdRng::seed_from_u64(seed);
        random_connected(&mut rng, n, 0.4, neg)
    })
}

fn pair_strategy(g: SignedGraph) -> impl Strategy<Value = (SignedGraph, NodeSetPair)> {
    let n = g.node_count();
    prop::collection::vec(0u8..3, n).prop_filter_map("needs two nonempty sets", move |labels| {
        let a: Vec<usize> = (0..n).filter(|&k| labels[k] == 1).collect();
        let b: Vec<usize> = (0..n).filter(|&k| labels[k] == 2).collect();
        NodeSetPair::new(n, &a, &b).ok().map(|p| (g.clone(), p))
    })
}

fn close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0)
}

fn well_conditioned(l: &SymMatrix, pair: &NodeSetPair) -> bool {
    let c = pair.c();
    if c.is_empty() {
        return true;
    }
    let e = sym_eigen(&l.principal(&c)).unwrap().eigenvalues;
    let small = e.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    small > 1e-6 * e.amax()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn incidence_factorises_laplacian(g in graph_strategy(10, 3)) {
        let e = incidence_matrix(&g);
        for col in e.column_iter() {
            prop_assert!(col.sum().abs() < 1e-15);
        }
        let w = DVector::from_iterator(g.edges().len(), g.edges().iter().map(|x| x.w));
        let l = &e * nalgebra::DMatrix::from_diagonal(&w) * e.transpose();
        prop_assert!((l - laplacian(&g).matrix()).amax() < 1e-12);
    }

    #[test]
    fn definiteness_methods_agree(g in graph_strategy(7, 4)) {
        let eig = is_psd_one_zero(&laplacian(&g));
        prop_assert_eq!(check_sequential(&g).unwrap().psd_one_zero, eig);
        prop_assert_eq!(check_corollary2(&g, 7).unwrap(), eig);
        let (m, e) = negative_eigenvalue_bound(&g).unwrap();
        prop_assert!(m <= e);
    }

    #[test]
    fn sequential_verdict_is_order_free(g in graph_strategy(9, 4), seed in any::<u64>()) {
        let mut order = negative_nodes(&g);
        let base = check_sequential(&g).unwrap().psd_one_zero;
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut StdRng::seed_from_u64(seed));
        prop_assert_eq!(check_sequential_order(&g, &order).unwrap().psd_one_zero, base);
    }

    #[test]
    fn swap_symmetry_is_exact((g, pair) in graph_strategy(10, 3).prop_flat_map(pair_strategy)) {
        let l = laplacian(&g);
        if let Ok(v) = geff_laplacian(&l, &pair) {
            let w = geff_laplacian(&l, &pair.swapped()).unwrap();
            prop_assert_eq!(v.geff.to_bits(), w.geff.to_bits());
        }
    }

    #[test]
    fn boundary_current_matches((g, pair) in graph_strategy(10, 2).prop_flat_map(pair_strategy)) {
        let l = laplacian(&g);
        prop_assume!(well_conditioned(&l, &pair));
        let v = geff(&g, &pair).unwrap();
        let s = boundary_solve(&g, &pair).unwrap();
        prop_assert!(close(s.total_current, v.geff, 1e-9));
        for k in pair.c() {
            prop_assert!(s.injections[k].abs() < 1e-8 * l.norm());
        }
    }

    #[test]
    fn kron_reduction_preserves_conductance((g, pair) in graph_strategy(10, 2).prop_flat_map(pair_strategy), mask in any::<u16>()) {
        let n = g.node_count();
        let l = laplacian(&g);
        prop_assume!(well_conditioned(&l, &pair));
        let elim: Vec<usize> = pair.c().into_iter().filter(|&k| mask & (1 << k) != 0).collect();
        prop_assume!(!elim.is_empty());
        let Ok(red) = kron_reduce(&g, &elim) else { return Ok(()) };
        let keep: Vec<usize> = (0..n).filter(|k| !elim.contains(k)).collect();
        let map = |s: &[usize]| s.iter().map(|k| keep.iter().position(|x| x == k).unwrap()).collect::<Vec<_>>();
        let rp = NodeSetPair::new(keep.len(), &map(pair.a()), &map(pair.b())).unwrap();
        let before = geff_laplacian(&l, &pair).unwrap().geff;
        let after = geff_laplacian(&laplacian(&red), &rp).unwrap().geff;
        prop_assert!(close(before, after, 1e-9), "{} vs {}", before, after);
    }

    #[test]
    fn haynsworth_additivity(seed in any::<u64>(), n in 4usize..=10, k in 1usize..4) {
        let mut rng = StdRng::seed_from_u64(seed);
        let h = common::random_sym(&mut rng, n);
        let keep: Vec<usize> = (0..k).collect();
        let drop: Vec<usize> = (k..n).collect();
        if let Ok(s) = schur_complement(&h, &keep) {
            let lhs = inertia(&h, None).unwrap();
            let rhs = inertia(&s, None).unwrap() + inertia(&h.principal(&drop), None).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn energy_routes_agree((g, pair) in graph_strategy(9, 0).prop_flat_map(pair_strategy)) {
        let reff = geff(&g, &pair).unwrap().reff.value();
        let (current, energy) = min_energy_current(&g, &pair).unwrap();
        prop_assert!(close(energy, reff, 1e-8));
        prop_assert!(close(clustered_reff(&g, &pair).unwrap(), reff, 1e-8));
        prop_assert!(current.sum().abs() < 1e-10);
        let out: f64 = pair.a().iter().map(|&k| current[k]).sum();
        prop_assert!(close(out, 1.0, 1e-10));
    }

    #[test]
    fn singleton_pairs_match_pairwise_resistance(g in graph_strategy(9, 0), i in 0usize..9, j in 0usize..9) {
        let n = g.node_count();
        let (i, j) = (i % n, j % n);
        prop_assume!(i != j);
        let (r, c) = traditional_resistance(&g, i, j).unwrap();
        let v = geff(&g, &NodeSetPair::new(n, &[i], &[j]).unwrap()).unwrap();
        prop_assert!(close(v.geff, c, 1e-9));
        prop_assert!(close(v.reff.value(), r, 1e-9));
    }
}
