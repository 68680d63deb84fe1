#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::prelude::*;
use scnoise_core::{Circuit, CircuitBuilder};

pub const FS: f64 = 44.4e3;
pub const GM: f64 = 100e-6;

pub fn passive_lp(alpha: f64, c: f64) -> Circuit {
    CircuitBuilder::new("passive-lp")
        .fs(FS)
        .phases(&["p1", "p2"])
        .ground("gnd")
        .vsrc("VIN", "in", 0.0)
        .cap("Ca", "x", "gnd", alpha * c)
        .cap("C", "out", "gnd", c)
        .switch("S1", "in", "x", &["p1"], None)
        .switch("S2", "x", "out", &["p2"], None)
        .readout("out", "gnd", "p1")
        .memory("C")
        .build()
        .unwrap()
}

pub fn integrator(alpha: f64, alpha_in: f64, alpha_l: f64, gamma: f64, c: f64) -> Circuit {
    CircuitBuilder::new("integrator")
        .fs(FS)
        .phases(&["p1", "p2"])
        .ground("gnd")
        .vsrc("VIN", "in", 0.0)
        .cap("Ca", "p", "q", alpha * c)
        .cap("C", "vg", "out", c)
        .cap("Cin", "vg", "gnd", alpha_in * c)
        .cap("CL", "out", "gnd", alpha_l * c)
        .switch("S1", "in", "p", &["p1"], None)
        .switch("S2", "p", "gnd", &["p2"], None)
        .switch("S3", "q", "gnd", &["p1"], None)
        .switch("S4", "q", "vg", &["p2"], None)
        .ota("A", "vg", "out", GM, gamma)
        .readout("out", "gnd", "p1")
        .build()
        .unwrap()
}

pub fn active_lp(alpha: f64, alpha_in: f64, alpha_l: f64, gamma: f64, c: f64) -> Circuit {
    CircuitBuilder::new("active-lp")
        .fs(FS)
        .phases(&["p1", "p2"])
        .ground("gnd")
        .vsrc("VIN", "in", 0.0)
        .cap("C1", "a1", "b1", alpha * c)
        .cap("C2", "a2", "b2", alpha * c)
        .cap("C", "vg", "out", c)
        .cap("Cin", "vg", "gnd", alpha_in * c)
        .cap("CL", "out", "gnd", alpha_l * c)
        .switch("S1", "in", "a1", &["p1"], None)
        .switch("S2", "a1", "gnd", &["p2"], None)
        .switch("S3", "b1", "gnd", &["p1"], None)
        .switch("S4", "b1", "vg", &["p2"], None)
        .switch("S5", "a2", "gnd", &["p1"], None)
        .switch("S6", "b2", "gnd", &["p1"], None)
        .switch("S7", "a2", "vg", &["p2"], None)
        .switch("S8", "b2", "out", &["p2"], None)
        .ota("A", "vg", "out", GM, gamma)
        .readout("out", "gnd", "p1")
        .build()
        .unwrap()
}

/// Weighted graph Laplacian; capacitances act as conductances.
pub fn laplacian(n: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for &(a, b, w) in edges {
        if a == b {
            continue;
        }
        l[(a, a)] += w;
        l[(b, b)] += w;
        l[(a, b)] -= w;
        l[(b, a)] -= w;
    }
    l
}

pub fn connected(n: usize, edges: &[(usize, usize, f64)], k: usize, l: usize) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![k];
    seen[k] = true;
    while let Some(x) = stack.pop() {
        for &(a, b, _) in edges {
            for (u, v) in [(a, b), (b, a)] {
                if u == x && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    seen[l]
}

/// Equivalent capacitance through the Laplacian pseudo-inverse:
/// `1 / ((e_k - e_l)ᵀ L⁺ (e_k - e_l))`. `None` stands for an infinite value.
pub fn oracle_ceq(n: usize, edges: &[(usize, usize, f64)], k: usize, l: usize) -> Option<f64> {
    if k == l {
        return None;
    }
    if !connected(n, edges, k, l) {
        return Some(0.0);
    }
    let lap = laplacian(n, edges);
    let scale = lap.amax();
    let eig = (lap / scale).symmetric_eigen();
    let mut pinv = DMatrix::zeros(n, n);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > 1e-10 {
            let v = eig.eigenvectors.column(i);
            pinv += v * v.transpose() / lambda;
        }
    }
    let r = pinv[(k, k)] + pinv[(l, l)] - 2.0 * pinv[(k, l)];
    Some(scale / r)
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub const PF: f64 = 1e-12;

/// Random passive two-phase circuit, node 0 grounded.
pub fn switched_network() -> impl Strategy<Value = Circuit> {
    (3usize..=7).prop_flat_map(|n| {
        let edge = (0..n, 0..n).prop_filter("distinct", |(a, b)| a != b);
        let cap = (edge.clone(), 0.1f64..10.0);
        let sw = (edge, 0usize..2);
        (prop::collection::vec(cap, 1..=10), prop::collection::vec(sw, 1..=6)).prop_map(|(cs, ss)| {
            let name = |i: usize| if i == 0 { "gnd".to_string() } else { format!("n{i}") };
            let mut b = CircuitBuilder::new("random");
            b.fs(1e3).phases(&["p1", "p2"]).ground("gnd");
            for (i, ((x, y), v)) in cs.iter().enumerate() {
                b.cap(&format!("C{i}"), &name(*x), &name(*y), v * PF);
            }
            for (i, ((x, y), ph)) in ss.iter().enumerate() {
                b.switch(&format!("S{i}"), &name(*x), &name(*y), &[["p1", "p2"][*ph]], None);
            }
            let (x, y) = cs[0].0;
            b.readout(&name(x), &name(y), "p1");
            b.build().unwrap()
        })
    })
}

