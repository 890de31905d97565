//! Invariants of the projection onto the two-well Reeb graph.

use proptest::prelude::*;
use reebflow::hamiltonian::{Hamiltonian, HamiltonianSpec};
use reebflow::reeb::{build_reeb, GraphPoint, Reeb};
use std::sync::OnceLock;

fn two_well() -> &'static (Hamiltonian, Reeb) {
    static CELL: OnceLock<(Hamiltonian, Reeb)> = OnceLock::new();
    CELL.get_or_init(|| {
        let h = Hamiltonian::new(HamiltonianSpec::two_well(), 3.0).unwrap();
        let cps = h.find_critical_points(96).unwrap().points;
        let reeb = build_reeb(&h, &cps, 2.0, 200).unwrap();
        (h, reeb)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_keeps_the_level(x in -2.5f64..2.5, y in -2.5f64..2.5) {
        let (h, r) = two_well();
        let z = h.value([x, y]);
        prop_assume!(z < r.z_max());
        let p = r.project(h, [x, y]).unwrap();
        prop_assert!((p.z - z).abs() < 1e-12);
        prop_assert!(r.graph.edges[p.k].contains(p.z));
    }

    #[test]
    fn projection_is_symmetric_within_a_level(x in -2.5f64..2.5, y in -2.5f64..2.5) {
        // The two-well potential is even in y, so both points share a component.
        let (h, r) = two_well();
        prop_assume!(h.value([x, y]) < r.z_max());
        prop_assume!((h.value([x, y]) - h.value([x, -y])).abs() < 1e-12);
        prop_assert_eq!(r.project(h, [x, y]).unwrap().k, r.project(h, [x, -y]).unwrap().k);
    }

    #[test]
    fn graph_distance_is_a_metric(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, i in 0usize..3, j in 0usize..3, k in 0usize..3) {
        let (_, r) = two_well();
        let g = &r.graph;
        let at = |s: f64, e: usize| {
            let e = e % g.edges.len();
            GraphPoint { z: g.edges[e].z_lo + s * (g.edges[e].z_hi - g.edges[e].z_lo), k: e }
        };
        let (p, q, w) = (at(a, i), at(b, j), at(c, k));
        prop_assert!((g.distance(p, q) - g.distance(q, p)).abs() < 1e-12);
        prop_assert!(g.distance(p, q) >= (p.z - q.z).abs() - 1e-12);
        prop_assert!(g.distance(p, w) <= g.distance(p, q) + g.distance(q, w) + 1e-12);
    }
}
