mod support;

use proptest::prelude::*;
use scnoise_core::capnet::{equivalent_capacitance, redistribute, CapMatrix, ChargeState};
use scnoise_core::circuit::Capacitor;
use scnoise_core::{Circuit, ExtCap, NodeId, PhaseId};

use support::{oracle_ceq, rel, switched_network};

use support::PF;

fn network() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
    (2usize..=8).prop_flat_map(|n| {
        let edge = (0..n, 0..n, 0.1f64..10.0).prop_filter("no self loops", |(a, b, _)| a != b);
        (Just(n), prop::collection::vec(edge, 1..=16))
    })
}

fn caps(edges: &[(usize, usize, f64)]) -> Vec<Capacitor> {
    edges
        .iter()
        .enumerate()
        .map(|(i, &(a, b, w))| Capacitor {
            name: format!("C{i}"),
            a: NodeId(a),
            b: NodeId(b),
            value: w * PF,
        })
        .collect()
}

fn ceq(n: usize, edges: &[(usize, usize, f64)], k: usize, l: usize) -> ExtCap {
    let m = CapMatrix::build(&caps(edges), &[], NodeId(0), n);
    equivalent_capacitance(&m, NodeId(k), NodeId(l))
}

fn finite(c: ExtCap) -> f64 {
    c.finite().expect("finite capacitance")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_laplacian_oracle((n, edges) in network()) {
        for k in 0..n {
            for l in 0..n {
                let got = ceq(n, &edges, k, l);
                match oracle_ceq(n, &edges, k, l) {
                    None => prop_assert!(got.is_infinite()),
                    Some(want) => {
                        let got = finite(got) / PF;
                        prop_assert!(rel(got, want) < 1e-9 || (want - got).abs() < 1e-9, "{k},{l}: {got} vs {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn symmetric((n, edges) in network()) {
        for k in 0..n {
            for l in (k + 1)..n {
                let (a, b) = (finite(ceq(n, &edges, k, l)), finite(ceq(n, &edges, l, k)));
                prop_assert!(rel(a, b) < 1e-12 || (a - b).abs() < 1e-24);
            }
        }
    }

    #[test]
    fn parallel_adds((n, edges) in network(), extra in 0.1f64..10.0) {
        let mut more = edges.clone();
        more.push((0, n - 1, extra));
        let before = finite(ceq(n, &edges, 0, n - 1));
        let after = finite(ceq(n, &more, 0, n - 1));
        prop_assert!(rel(after, before + extra * PF) < 1e-9);
    }

    #[test]
    fn series_combines(c1 in 0.1f64..10.0, c2 in 0.1f64..10.0) {
        let got = finite(ceq(3, &[(0, 1, c1), (1, 2, c2)], 0, 2)) / PF;
        prop_assert!(rel(got, c1 * c2 / (c1 + c2)) < 1e-12);
    }

    #[test]
    fn monotone_in_every_capacitor((n, edges) in network(), pick in any::<prop::sample::Index>(), grow in 1.0f64..5.0) {
        let mut bigger = edges.clone();
        let i = pick.index(edges.len());
        bigger[i].2 *= grow;
        for k in 0..n {
            for l in (k + 1)..n {
                let (a, b) = (finite(ceq(n, &edges, k, l)), finite(ceq(n, &bigger, k, l)));
                prop_assert!(b >= a * (1.0 - 1e-12), "{k},{l}: {a} -> {b}");
            }
        }
    }

    #[test]
    fn shorted_port_is_infinite((n, edges) in network()) {
        let m = CapMatrix::build(&caps(&edges), &[(NodeId(0), NodeId(n - 1))], NodeId(0), n);
        prop_assert!(equivalent_capacitance(&m, NodeId(0), NodeId(n - 1)).is_infinite());
    }
}

/// Net plate charge per supernode of `phase`, excluding the grounded one.
fn node_charge(c: &Circuit, phase: PhaseId, q: &ChargeState) -> Vec<(usize, f64)> {
    let pv = c.phase_view(phase).unwrap();
    let groups = pv.node_groups();
    let ground = groups[c.ground.0];
    let mut totals = std::collections::BTreeMap::new();
    for (i, k) in c.capacitors.iter().enumerate() {
        *totals.entry(groups[k.a.0]).or_insert(0.0) += q.get(i);
        *totals.entry(groups[k.b.0]).or_insert(0.0) -= q.get(i);
    }
    totals.into_iter().filter(|(g, _)| *g != ground).collect()
}

fn charges(c: &Circuit, seed: &[f64]) -> ChargeState {
    ChargeState((0..c.capacitors.len()).map(|i| seed[i % seed.len()] * 1e-12).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn redistribution_conserves_charge(c in switched_network(), seed in prop::collection::vec(-1.0f64..1.0, 1..8)) {
        let q0 = charges(&c, &seed);
        let scale = q0.0.iter().map(|q| q.abs()).sum::<f64>().max(1e-30);
        for ph in c.phase_ids() {
            let q1 = redistribute(&c.phase_view(ph).unwrap(), &q0).unwrap();
            for ((g0, a), (g1, b)) in node_charge(&c, ph, &q0).into_iter().zip(node_charge(&c, ph, &q1)) {
                prop_assert_eq!(g0, g1);
                prop_assert!((a - b).abs() <= 1e-12 * scale, "supernode {}: {} -> {}", g0, a, b);
            }
        }
    }

    #[test]
    fn redistribution_is_linear(c in switched_network(), s1 in prop::collection::vec(-1.0f64..1.0, 1..8), s2 in prop::collection::vec(-1.0f64..1.0, 1..8), k in -3.0f64..3.0) {
        let (qa, qb) = (charges(&c, &s1), charges(&c, &s2));
        let sum = ChargeState(qa.0.iter().zip(&qb.0).map(|(x, y)| x + k * y).collect());
        let pv = c.phase_view(PhaseId(0)).unwrap();
        let (ra, rb, rs) = (redistribute(&pv, &qa).unwrap(), redistribute(&pv, &qb).unwrap(), redistribute(&pv, &sum).unwrap());
        let scale = rs.0.iter().chain(&ra.0).map(|q| q.abs()).fold(1e-24, f64::max);
        for i in 0..c.capacitors.len() {
            prop_assert!((rs.get(i) - ra.get(i) - k * rb.get(i)).abs() <= 1e-9 * scale);
        }
    }
}
