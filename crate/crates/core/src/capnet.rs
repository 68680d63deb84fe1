//! Capacitor-only network algebra.
//!
//! Capacitances are treated as conductances of a resistive graph: the
//! equivalent capacitance between two nodes is the reciprocal of their
//! two-point effective resistance. Settled charge redistribution solves the
//! nodal charge balance with OTA inputs pinned at virtual ground.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::circuit::{Capacitor, Circuit, NodeId, PhaseView, UnionFind};
use crate::linalg::{Lu, Mat};

/// A capacitance that may be infinite (port nodes shorted together).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtCap {
    Finite(f64),
    Infinite,
}

impl ExtCap {
    /// `1/C`, with `1/INFINITE = 0`. A zero capacitance gives `+inf`.
    pub fn reciprocal(self) -> f64 {
        match self {
            ExtCap::Finite(c) => 1.0 / c,
            ExtCap::Infinite => 0.0,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtCap::Finite(c) => Some(c),
            ExtCap::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtCap::Infinite)
    }
}

impl PartialOrd for ExtCap {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        use core::cmp::Ordering;
        match (self, other) {
            (ExtCap::Finite(a), ExtCap::Finite(b)) => a.partial_cmp(b),
            (ExtCap::Finite(_), ExtCap::Infinite) => Some(Ordering::Less),
            (ExtCap::Infinite, ExtCap::Finite(_)) => Some(Ordering::Greater),
            (ExtCap::Infinite, ExtCap::Infinite) => Some(Ordering::Equal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CapError {
    #[error("observed node `{0}` is driven")]
    ObserveDriven(String),
    #[error("indeterminate node `{0}`: no capacitive path to a driven node")]
    Indeterminate(String),
    #[error("node `{0}` is driven to a nonzero potential but shorted to ground")]
    DrivenGround(String),
    #[error("conflicting potentials driven on merged node `{0}`")]
    ConflictingDrive(String),
    #[error("singular charge balance around OTA {0}: no capacitive feedback in this phase")]
    SingularOta(String),
    #[error("singular charge balance: floating network")]
    Singular,
}

/// Nodal capacitance matrix over supernodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CapMatrix {
    /// Supernode index of each circuit node.
    pub supernode: Vec<usize>,
    /// Symmetric nodal matrix in farads, ground row included.
    pub matrix: Mat,
    pub ground: usize,
}

impl CapMatrix {
    /// Merges `shorts` and assembles the matrix. Capacitors with both
    /// terminals in one supernode are dropped.
    pub fn build(
        caps: &[Capacitor],
        shorts: &[(NodeId, NodeId)],
        ground: NodeId,
        node_count: usize,
    ) -> Self {
        let mut uf = UnionFind::new(node_count);
        for &(a, b) in shorts {
            uf.union(a.0, b.0);
        }
        let mut label = BTreeMap::new();
        let mut supernode = Vec::with_capacity(node_count);
        for i in 0..node_count {
            let root = uf.find(i);
            let next = label.len();
            supernode.push(*label.entry(root).or_insert(next));
        }
        let n = label.len().max(1);
        let mut matrix = Mat::zeros(n, n);
        for c in caps {
            let (i, j) = (supernode[c.a.0], supernode[c.b.0]);
            if i == j {
                continue;
            }
            matrix[(i, i)] += c.value;
            matrix[(j, j)] += c.value;
            matrix[(i, j)] -= c.value;
            matrix[(j, i)] -= c.value;
        }
        let ground = if node_count == 0 { 0 } else { supernode[ground.0] };
        Self {
            supernode,
            matrix,
            ground,
        }
    }

    pub fn size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn of(&self, n: NodeId) -> usize {
        self.supernode[n.0]
    }

    /// Component label per supernode, following nonzero couplings only.
    /// Supernodes listed in `cut` are treated as absent and get `usize::MAX`.
    pub fn components(&self, cut: &[usize]) -> Vec<usize> {
        let n = self.size();
        let mut uf = UnionFind::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if self.matrix[(i, j)] != 0.0 && !cut.contains(&i) && !cut.contains(&j) {
                    uf.union(i, j);
                }
            }
        }
        (0..n)
            .map(|i| if cut.contains(&i) { usize::MAX } else { uf.find(i) })
            .collect()
    }

    fn submatrix(&self, keep: &[usize]) -> Mat {
        let mut m = Mat::zeros(keep.len(), keep.len());
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                m[(a, b)] = self.matrix[(i, j)];
            }
        }
        m
    }
}

/// Equivalent capacitance seen between nodes `k` and `l`.
pub fn equivalent_capacitance(m: &CapMatrix, k: NodeId, l: NodeId) -> ExtCap {
    let (sk, sl) = (m.of(k), m.of(l));
    if sk == sl {
        return ExtCap::Infinite;
    }
    let comp = m.components(&[]);
    if comp[sk] != comp[sl] {
        return ExtCap::Finite(0.0);
    }
    // Ground `sl`, inject unit current at `sk`: R_eff = potential at `sk`.
    let keep: Vec<usize> = (0..m.size())
        .filter(|&i| comp[i] == comp[sk] && i != sl)
        .collect();
    let reduced = m.submatrix(&keep);
    let pos = keep.iter().position(|&i| i == sk).expect("port supernode kept");
    let mut rhs = vec![0.0; keep.len()];
    rhs[pos] = 1.0;
    match Lu::factor(&reduced) {
        Ok(lu) => ExtCap::Finite(1.0 / lu.solve(&rhs)[pos]),
        Err(_) => ExtCap::Finite(0.0),
    }
}

/// Potential of `observe` when the `driven` nodes are held at the given
/// potentials, ground at 0 V, and every other supernode floats uncharged.
pub fn transfer_gain(
    m: &CapMatrix,
    node_names: &[String],
    driven: &[(NodeId, f64)],
    observe: NodeId,
) -> Result<f64, CapError> {
    let n = m.size();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    fixed[m.ground] = Some(0.0);
    for &(node, v) in driven {
        let s = m.of(node);
        match fixed[s] {
            Some(_) if s == m.ground && v != 0.0 => {
                return Err(CapError::DrivenGround(node_names[node.0].clone()))
            }
            Some(prev) if prev != v => {
                return Err(CapError::ConflictingDrive(node_names[node.0].clone()))
            }
            _ => fixed[s] = Some(v),
        }
    }
    let so = m.of(observe);
    if driven.iter().any(|&(d, _)| m.of(d) == so) {
        return Err(CapError::ObserveDriven(node_names[observe.0].clone()));
    }
    if let Some(v) = fixed[so] {
        return Ok(v);
    }
    let comp = m.components(&[]);
    let anchored = |c: usize| (0..n).any(|i| comp[i] == c && fixed[i].is_some());
    if !anchored(comp[so]) {
        return Err(CapError::Indeterminate(node_names[observe.0].clone()));
    }
    let free: Vec<usize> = (0..n)
        .filter(|&i| fixed[i].is_none() && comp[i] == comp[so])
        .collect();
    let a = m.submatrix(&free);
    let rhs: Vec<f64> = free
        .iter()
        .map(|&i| {
            -(0..n)
                .filter_map(|j| fixed[j].map(|v| m.matrix[(i, j)] * v))
                .sum::<f64>()
        })
        .collect();
    let lu = Lu::factor(&a).map_err(|_| CapError::Indeterminate(node_names[observe.0].clone()))?;
    let v = lu.solve(&rhs);
    Ok(v[free.iter().position(|&i| i == so).expect("observe is free")])
}

/// Per-capacitor charges in coulombs, indexed like [`Circuit::capacitors`].
///
/// The charge of a capacitor is the charge on its `a` plate.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeState(pub Vec<f64>);

impl ChargeState {
    pub fn zeros(c: &Circuit) -> Self {
        Self(vec![0.0; c.capacitors.len()])
    }

    pub fn unit(c: &Circuit, cap: usize) -> Self {
        let mut q = Self::zeros(c);
        q.0[cap] = 1.0;
        q
    }

    pub fn get(&self, cap: usize) -> f64 {
        self.0[cap]
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.iter().map(|q| q * s).collect())
    }

    pub fn named<'c>(&self, c: &'c Circuit) -> BTreeMap<&'c str, f64> {
        c.capacitors
            .iter()
            .zip(&self.0)
            .map(|(cap, &q)| (cap.name.as_str(), q))
            .collect()
    }
}

/// Settled redistribution result: charges and node potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct Settled {
    pub charges: ChargeState,
    /// Potential of every circuit node in volts.
    pub potentials: Vec<f64>,
}

/// Settled end-of-phase charges starting from `q0`.
pub fn redistribute(pv: &PhaseView<'_>, q0: &ChargeState) -> Result<ChargeState, CapError> {
    let zero = vec![0.0; pv.circuit.capacitors.len()];
    settle(pv, q0, &zero).map(|s| s.charges)
}

/// Settles the phase with an ideal series emf in each capacitor, so that
/// `q = C (v_a - v_b - emf)`.
pub fn settle(pv: &PhaseView<'_>, q0: &ChargeState, emf: &[f64]) -> Result<Settled, CapError> {
    let c = pv.circuit;
    let groups = pv.node_groups();
    let fixed_root = groups[c.ground.0];
    let mut index = BTreeMap::new();
    for &g in &groups {
        if g != fixed_root {
            let next = index.len();
            index.entry(g).or_insert(next);
        }
    }
    let n = index.len();
    let var = |node: NodeId| index.get(&groups[node.0]).copied();

    let mut a = Mat::zeros(n, n);
    let mut rhs = vec![0.0; n];
    for (ci, cap) in c.capacitors.iter().enumerate() {
        let (va, vb) = (var(cap.a), var(cap.b));
        if groups[cap.a.0] == groups[cap.b.0] {
            continue;
        }
        let drive = cap.value * emf[ci];
        if let Some(i) = va {
            a[(i, i)] += cap.value;
            if let Some(j) = vb {
                a[(i, j)] -= cap.value;
            }
            rhs[i] += q0.0[ci] + drive;
        }
        if let Some(j) = vb {
            a[(j, j)] += cap.value;
            if let Some(i) = va {
                a[(j, i)] -= cap.value;
            }
            rhs[j] -= q0.0[ci] + drive;
        }
    }

    // Supernodes cut off from the fixed node and from every OTA output only
    // conserve charge relative to each other: pin one potential per island.
    let mut uf = UnionFind::new(n + 1);
    for cap in &c.capacitors {
        let to = |x: Option<usize>| x.unwrap_or(n);
        uf.union(to(var(cap.a)), to(var(cap.b)));
    }
    let mut ota_rows = Vec::new();
    for ota in &c.otas {
        if let Some(o) = var(ota.output) {
            ota_rows.push((o, var(ota.input), ota));
        }
    }
    // Replacement rows use the matrix's own scale so pivoting stays relative.
    let unit = c.capacitors.iter().map(|k| k.value).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let anchor = uf.find(n);
    let mut pinned = BTreeMap::new();
    for i in 0..n {
        let root = uf.find(i);
        let has_ota = ota_rows.iter().any(|&(o, _, _)| uf.find(o) == root);
        if root != anchor && !has_ota {
            pinned.entry(root).or_insert(i);
        }
    }
    for &i in pinned.values() {
        for j in 0..n {
            a[(i, j)] = 0.0;
        }
        a[(i, i)] = unit;
        rhs[i] = 0.0;
    }
    for &(o, input, _) in &ota_rows {
        for j in 0..n {
            a[(o, j)] = 0.0;
        }
        if let Some(i) = input {
            a[(o, i)] = unit;
        }
        rhs[o] = 0.0;
    }

    let v = if n == 0 {
        Vec::new()
    } else {
        let lu = Lu::factor(&a).map_err(|_| match ota_rows.first() {
            Some(&(_, _, ota)) => CapError::SingularOta(ota.name.clone()),
            None => CapError::Singular,
        })?;
        lu.solve(&rhs)
    };
    let potentials: Vec<f64> = (0..c.nodes.len())
        .map(|i| var(NodeId(i)).map_or(0.0, |k| v[k]))
        .collect();
    let charges = c
        .capacitors
        .iter()
        .enumerate()
        .map(|(ci, cap)| cap.value * (potentials[cap.a.0] - potentials[cap.b.0] - emf[ci]))
        .collect();
    Ok(Settled {
        charges: ChargeState(charges),
        potentials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::CircuitBuilder;

    fn cap(name: &str, a: usize, b: usize, v: f64) -> Capacitor {
        Capacitor {
            name: name.into(),
            a: NodeId(a),
            b: NodeId(b),
            value: v,
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| alloc::format!("n{i}")).collect()
    }

    #[test]
    fn parallel_merge() {
        let m = CapMatrix::build(&[cap("a", 1, 2, 1e-12), cap("b", 1, 2, 2e-12)], &[], NodeId(0), 3);
        let (i, j) = (m.of(NodeId(1)), m.of(NodeId(2)));
        assert_eq!(m.matrix[(i, j)], -3e-12);
    }

    #[test]
    fn shorted_cap_is_dropped() {
        let m = CapMatrix::build(&[cap("a", 1, 2, 1e-12)], &[(NodeId(1), NodeId(2))], NodeId(0), 3);
        assert_eq!(m.size(), 2);
        assert!(m.matrix.is_zero());
        assert_eq!(equivalent_capacitance(&m, NodeId(1), NodeId(2)), ExtCap::Infinite);
    }

    #[test]
    fn single_and_series() {
        let m = CapMatrix::build(&[cap("a", 1, 0, 3e-12)], &[], NodeId(0), 2);
        let c = equivalent_capacitance(&m, NodeId(1), NodeId(0)).finite().unwrap();
        assert!((c - 3e-12).abs() < 1e-24);
        let m = CapMatrix::build(&[cap("a", 0, 1, 2.0), cap("b", 1, 2, 3.0)], &[], NodeId(0), 3);
        let c = equivalent_capacitance(&m, NodeId(0), NodeId(2)).finite().unwrap();
        assert!((c - 1.2).abs() < 1e-12);
    }

    #[test]
    fn disconnected_is_zero() {
        let m = CapMatrix::build(&[cap("a", 1, 0, 1.0), cap("b", 2, 3, 1.0)], &[], NodeId(0), 4);
        assert_eq!(equivalent_capacitance(&m, NodeId(1), NodeId(2)), ExtCap::Finite(0.0));
    }

    #[test]
    fn two_cap_divider() {
        // in=1, C1 in->x, C x->gnd
        let m = CapMatrix::build(&[cap("C1", 1, 2, 1.0), cap("C", 2, 0, 4.0)], &[], NodeId(0), 3);
        let g = transfer_gain(&m, &names(3), &[(NodeId(1), 1.0)], NodeId(2)).unwrap();
        assert!((g - 0.2).abs() < 1e-15);
        assert!(matches!(
            transfer_gain(&m, &names(3), &[(NodeId(1), 1.0)], NodeId(1)),
            Err(CapError::ObserveDriven(_))
        ));
    }

    #[test]
    fn indeterminate_node() {
        let m = CapMatrix::build(&[cap("a", 1, 0, 1.0), cap("b", 2, 3, 1.0)], &[], NodeId(0), 4);
        assert!(matches!(
            transfer_gain(&m, &names(4), &[(NodeId(1), 1.0)], NodeId(2)),
            Err(CapError::Indeterminate(_))
        ));
    }

    fn passive(alpha: f64) -> Circuit {
        let mut b = CircuitBuilder::new("p");
        b.fs(1e3)
            .phases(&["p1", "p2"])
            .ground("gnd")
            .vsrc("VIN", "in", 0.0)
            .cap("Ca", "x", "gnd", alpha)
            .cap("C", "out", "gnd", 1.0)
            .switch("S1", "in", "x", &["p1"], None)
            .switch("S2", "x", "out", &["p2"], None)
            .readout("out", "gnd", "p1");
        b.build().unwrap()
    }

    #[test]
    fn passive_sharing() {
        let alpha = 0.25;
        let c = passive(alpha);
        let pv = c.phase_view_by_name("p2").unwrap();
        let q = redistribute(&pv, &ChargeState::unit(&c, 0)).unwrap();
        assert!((q.get(0) - alpha / (1.0 + alpha)).abs() < 1e-15);
        assert!((q.get(1) - 1.0 / (1.0 + alpha)).abs() < 1e-15);
        let zero = redistribute(&pv, &ChargeState::zeros(&c)).unwrap();
        assert!(zero.0.iter().all(|&q| q == 0.0));
    }

    #[test]
    fn isolated_capacitor_keeps_charge() {
        let c = passive(1.0);
        let pv = c.phase_view_by_name("p1").unwrap();
        let q = redistribute(&pv, &ChargeState(vec![0.7, 0.3])).unwrap();
        assert_eq!(q.0, vec![0.0, 0.3]);
    }

    #[test]
    fn ota_without_feedback_is_singular() {
        let mut b = CircuitBuilder::new("open");
        b.fs(1e3)
            .phases(&["p1"])
            .ground("gnd")
            .cap("C", "vg", "gnd", 1.0)
            .cap("CL", "out", "gnd", 1.0)
            .ota("A", "vg", "out", 1e-4, 1.0)
            .readout("out", "gnd", "p1");
        let c = b.build().unwrap();
        let pv = c.phase_view_by_name("p1").unwrap();
        assert_eq!(
            redistribute(&pv, &ChargeState::zeros(&c)),
            Err(CapError::SingularOta("A".into()))
        );
    }
}
