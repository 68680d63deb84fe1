//! Transient-noise Monte-Carlo simulation.
//!
//! Each phase is a linear time-invariant network `C dv/dt + G v = i_n`
//! with white current noise from closed switches and OTAs, discretised by
//! backward Euler in increment form,
//! `(C/dt + G) Δ = −G v + i_n`, `v ← v + Δ`.
//!
//! Steps are never taken one at a time during [`Simulation::run_single`]:
//! `s` consecutive steps compose exactly into `v ← v + Ψ_s v + L_s ξ`, where
//! `I + Ψ_s` is the `s`-th power of the one-step map and `L_s L_sᵀ` the
//! accumulated noise covariance, so the statistics are identical to
//! stepping while the cost does not depend on `dt`.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::circuit::{Circuit, CircuitError, NodeId, PhaseId, PhaseView, UnionFind};
use crate::linalg::{psd_factor, spectral_radius_bound, symmetric_eigen, Lu, Mat};
use crate::K_B;

/// Automatic step is `1/(AUTO_DT_FACTOR · ρ)`, `ρ` bounding the fastest pole
/// in rad/s.
pub const AUTO_DT_FACTOR: f64 = 200.0;
/// Largest tolerated gap between the end-of-phase map and its limit.
pub const SETTLE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum McError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("floating island during {phase}: {nodes:?} have no capacitive or conductive path to a fixed node")]
    FloatingIsland { phase: String, nodes: Vec<String> },
    #[error("singular system matrix during {0}")]
    Singular(String),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dt {
    Auto,
    /// Seconds; rounded down so each phase holds a whole number of steps.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub runs: usize,
    pub periods: usize,
    pub dt: Dt,
    pub seed: u64,
    /// Overrides the circuit temperature.
    pub temperature: Option<f64>,
    /// Steps between recorded points; `None` records phase ends only.
    pub record: Option<u64>,
    /// When false, closed switches are noiseless.
    pub switch_noise: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            runs: 1000,
            periods: 10,
            dt: Dt::Auto,
            seed: 0,
            temperature: None,
            record: None,
            switch_noise: true,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<(), McError> {
        if self.runs == 0 {
            return Err(McError::Config("runs must be at least 1"));
        }
        if self.periods == 0 {
            return Err(McError::Config("periods must be at least 1"));
        }
        if let Dt::Fixed(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(McError::Config("dt must be positive"));
            }
        }
        if self.record == Some(0) {
            return Err(McError::Config("record stride must be at least 1"));
        }
        Ok(())
    }
}

/// White current source between two states (`None` = fixed node).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSource {
    pub name: String,
    pub from: Option<usize>,
    pub into: Option<usize>,
    /// One-sided PSD in A²/Hz.
    pub psd: f64,
}

/// Nodal equations of one phase over the non-fixed nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSystem {
    pub phase: PhaseId,
    /// Farads.
    pub c: Mat,
    /// Siemens, including VCCS stamps.
    pub g: Mat,
    pub noise: Vec<NoiseSource>,
}

/// Circuit nodes carried as state: every node except ground and sources.
pub fn state_nodes(c: &Circuit) -> Vec<NodeId> {
    (0..c.nodes.len()).map(NodeId).filter(|&n| !c.is_fixed(n)).collect()
}

fn state_index(c: &Circuit) -> Vec<Option<usize>> {
    let mut idx = vec![None; c.nodes.len()];
    for (k, n) in state_nodes(c).into_iter().enumerate() {
        idx[n.0] = Some(k);
    }
    idx
}

pub fn compile_phase(pv: &PhaseView<'_>, temperature: f64, switch_noise: bool) -> Result<PhaseSystem, McError> {
    let c = pv.circuit;
    let idx = state_index(c);
    let n = state_nodes(c).len();

    let mut uf = UnionFind::new(c.nodes.len());
    for k in &c.capacitors {
        uf.union(k.a.0, k.b.0);
    }
    for (a, b) in pv.closed_edges() {
        uf.union(a.0, b.0);
    }
    let anchored: BTreeSet<usize> = (0..c.nodes.len())
        .filter(|&i| c.is_fixed(NodeId(i)))
        .map(|i| uf.find(i))
        .collect();
    let floating: Vec<String> = (0..c.nodes.len())
        .filter(|&i| !anchored.contains(&uf.find(i)))
        .map(|i| c.nodes[i].clone())
        .collect();
    if !floating.is_empty() {
        return Err(McError::FloatingIsland {
            phase: pv.name().into(),
            nodes: floating,
        });
    }

    let stamp = |m: &mut Mat, a: Option<usize>, b: Option<usize>, v: f64| {
        if let Some(i) = a {
            m[(i, i)] += v;
        }
        if let Some(j) = b {
            m[(j, j)] += v;
        }
        if let (Some(i), Some(j)) = (a, b) {
            m[(i, j)] -= v;
            m[(j, i)] -= v;
        }
    };
    let mut cm = Mat::zeros(n, n);
    for k in &c.capacitors {
        stamp(&mut cm, idx[k.a.0], idx[k.b.0], k.value);
    }
    let kt4 = 4.0 * K_B * temperature;
    let mut g = Mat::zeros(n, n);
    let mut noise = Vec::new();
    for &i in &pv.closed {
        let s = &c.switches[i];
        stamp(&mut g, idx[s.a.0], idx[s.b.0], s.gon);
        noise.push(NoiseSource {
            name: s.name.clone(),
            from: idx[s.b.0],
            into: idx[s.a.0],
            psd: if switch_noise { kt4 * s.gon } else { 0.0 },
        });
    }
    for o in &c.otas {
        if let (Some(out), Some(inp)) = (idx[o.output.0], idx[o.input.0]) {
            g[(out, inp)] += o.gm;
        }
        noise.push(NoiseSource {
            name: o.name.clone(),
            from: None,
            into: idx[o.output.0],
            psd: kt4 * o.gamma * o.gm,
        });
    }
    Ok(PhaseSystem {
        phase: pv.phase,
        c: cm,
        g,
        noise,
    })
}

impl PhaseSystem {
    pub fn dim(&self) -> usize {
        self.c.rows()
    }

    /// Covariance of the discretised noise current vector for step `dt`.
    fn current_covariance(&self, dt: f64) -> Mat {
        let mut w = Mat::zeros(self.dim(), self.dim());
        for s in &self.noise {
            let var = s.psd / (2.0 * dt);
            if var == 0.0 {
                continue;
            }
            if let Some(i) = s.into {
                w[(i, i)] += var;
            }
            if let Some(j) = s.from {
                w[(j, j)] += var;
            }
            if let (Some(i), Some(j)) = (s.into, s.from) {
                w[(i, j)] -= var;
                w[(j, i)] -= var;
            }
        }
        w
    }

    fn system(&self, dt: f64) -> Result<Lu, McError> {
        Lu::factor(&self.c.scale(1.0 / dt).add(&self.g)).map_err(|_| McError::Singular(alloc::format!("{:?}", self.phase)))
    }

    /// Bound on the fastest pole magnitude in rad/s.
    pub fn pole_bound(&self) -> f64 {
        let n = self.dim();
        if n == 0 || self.g.is_zero() {
            return 0.0;
        }
        let (cap, v) = symmetric_eigen(&self.c);
        let top = cap.iter().fold(0.0f64, |m, &x| m.max(x));
        let tol = 1e-9 * top;
        let range: Vec<usize> = (0..n).filter(|&i| cap[i] > tol).collect();
        let null: Vec<usize> = (0..n).filter(|&i| cap[i] <= tol).collect();
        let gt = v.transpose().mul(&self.g).mul(&v);
        let pick = |rows: &[usize], cols: &[usize]| {
            let mut m = Mat::zeros(rows.len(), cols.len());
            for (a, &i) in rows.iter().enumerate() {
                for (b, &j) in cols.iter().enumerate() {
                    m[(a, b)] = gt[(i, j)];
                }
            }
            m
        };
        let mut reduced = pick(&range, &range);
        if !null.is_empty() {
            if let Ok(lu) = Lu::factor(&pick(&null, &null)) {
                let corr = pick(&range, &null).mul(&lu.solve_mat(&pick(&null, &range)));
                reduced = reduced.add(&corr.scale(-1.0));
            }
        }
        for (a, &i) in range.iter().enumerate() {
            for b in 0..range.len() {
                reduced[(a, b)] /= cap[i];
            }
        }
        spectral_radius_bound(&reduced, 30)
    }
}

fn normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// One backward-Euler step.
pub fn step<R: RngCore + ?Sized>(s: &PhaseSystem, v: &[f64], dt: f64, rng: &mut R) -> Result<Vec<f64>, McError> {
    let lu = s.system(dt)?;
    let n = s.dim();
    let mut rhs = s.g.mul_vec(v);
    for x in rhs.iter_mut() {
        *x = -*x;
    }
    for src in &s.noise {
        let i = libm::sqrt(src.psd / (2.0 * dt)) * normal(rng);
        if let Some(k) = src.into {
            rhs[k] += i;
        }
        if let Some(k) = src.from {
            rhs[k] -= i;
        }
    }
    let d = lu.solve(&rhs);
    Ok((0..n).map(|k| v[k] + d[k]).collect())
}

/// `s` composed steps: `v ← v + psi·v + noise`, noise covariance `cov`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub psi: Mat,
    pub cov: Mat,
}

impl Block {
    fn identity(n: usize) -> Self {
        Self {
            psi: Mat::zeros(n, n),
            cov: Mat::zeros(n, n),
        }
    }

    /// Single step of length `dt`.
    pub fn one_step(s: &PhaseSystem, dt: f64) -> Result<Self, McError> {
        let lu = s.system(dt)?;
        let psi = lu.solve_mat(&s.g).scale(-1.0);
        let half = lu.solve_mat(&s.current_covariance(dt));
        let mut cov = lu.solve_mat(&half.transpose());
        cov.symmetrize();
        Ok(Self { psi, cov })
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Block) -> Block {
        let pa = &self.psi;
        let pb = &next.psi;
        let psi = pa.add(pb).add(&pb.mul(pa));
        let x = pb.mul(&self.cov);
        let mut cov = self.cov.add(&x).add(&x.transpose()).add(&x.mul(&pb.transpose())).add(&next.cov);
        cov.symmetrize();
        Block { psi, cov }
    }

    pub fn power(&self, mut s: u64) -> Block {
        let mut acc = Block::identity(self.psi.rows());
        let mut base = self.clone();
        while s > 0 {
            if s & 1 == 1 {
                acc = acc.then(&base);
            }
            s >>= 1;
            if s > 0 {
                base = base.then(&base);
            }
        }
        acc
    }
}

/// Precomputed block ready for sampling.
#[derive(Debug, Clone)]
struct Chunk {
    psi: Mat,
    factor: Mat,
    /// Columns of `factor` that are not identically zero.
    active: Vec<usize>,
    steps: u64,
}

impl Chunk {
    fn new(b: &Block, steps: u64) -> Self {
        let factor = psd_factor(&b.cov);
        let active = (0..factor.cols())
            .filter(|&j| (0..factor.rows()).any(|i| factor[(i, j)] != 0.0))
            .collect();
        Self {
            psi: b.psi.clone(),
            factor,
            active,
            steps,
        }
    }

    fn apply<R: RngCore + ?Sized>(&self, v: &mut [f64], rng: &mut R, xi: &mut [f64]) {
        let n = v.len();
        xi.iter_mut().for_each(|x| *x = 0.0);
        for &j in &self.active {
            xi[j] = normal(rng);
        }
        let mut d = self.psi.mul_vec(v);
        self.factor.mul_vec_add(xi, &mut d);
        for k in 0..n {
            v[k] += d[k];
        }
    }
}

/// End-of-phase map far from its settled limit.
#[derive(Debug, Clone, PartialEq)]
pub struct SettleWarning {
    pub phase: String,
    pub deviation: f64,
}

impl core::fmt::Display for SettleWarning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "phase {} not settled (deviation {:.3e}): Ron·C or Ceq/Gm not ≪ T/2",
            self.phase, self.deviation
        )
    }
}

/// A circuit compiled for repeated Monte-Carlo runs.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: McConfig,
    dim: usize,
    nodes: Vec<NodeId>,
    phases: Vec<Vec<Chunk>>,
    readout: (Option<usize>, Option<usize>),
    readout_phase: usize,
    /// Effective step in seconds.
    pub dt: f64,
    pub steps_per_phase: u64,
    /// Fastest pole bound over all phases, rad/s.
    pub pole_max: f64,
    pub warnings: Vec<SettleWarning>,
    /// Recorded time instants in seconds.
    pub times: Vec<f64>,
    /// Index into `times` of each period's readout.
    pub readout_index: Vec<usize>,
}

impl Simulation {
    pub fn new(c: &Circuit, cfg: McConfig) -> Result<Self, McError> {
        cfg.validate()?;
        let temperature = cfg.temperature.unwrap_or(c.temperature);
        let systems = c
            .phase_ids()
            .map(|ph| compile_phase(&c.phase_view(ph)?, temperature, cfg.switch_noise))
            .collect::<Result<Vec<_>, McError>>()?;
        let t_phase = c.phase_duration();
        let pole_max = systems.iter().map(|s| s.pole_bound()).fold(0.0, f64::max);
        let dt_req = match cfg.dt {
            Dt::Fixed(dt) => dt,
            Dt::Auto if pole_max > 0.0 => 1.0 / (AUTO_DT_FACTOR * pole_max),
            Dt::Auto => t_phase,
        };
        let steps_per_phase = libm::ceil(t_phase / dt_req).max(1.0) as u64;
        let dt = t_phase / steps_per_phase as f64;
        let stride = cfg.record.unwrap_or(steps_per_phase).min(steps_per_phase);

        let mut phases = Vec::with_capacity(systems.len());
        let mut warnings = Vec::new();
        for s in &systems {
            let one = Block::one_step(s, dt)?;
            let full = one.power(steps_per_phase);
            let mut limit = full.clone();
            for _ in 0..20 {
                limit = limit.then(&limit);
            }
            let deviation = full.psi.add(&limit.psi.scale(-1.0)).max_abs();
            if deviation > SETTLE_TOL {
                warnings.push(SettleWarning {
                    phase: c.phase_name(s.phase).into(),
                    deviation,
                });
            }
            let whole = steps_per_phase / stride;
            let rest = steps_per_phase % stride;
            let block = if stride == steps_per_phase { full } else { one.power(stride) };
            let mut chunks = vec![Chunk::new(&block, stride); whole as usize];
            if rest > 0 {
                chunks.push(Chunk::new(&one.power(rest), rest));
            }
            phases.push(chunks);
        }

        let idx = state_index(c);
        let mut times = Vec::new();
        let mut readout_index = Vec::new();
        let nph = c.phases.len();
        for p in 0..cfg.periods {
            for (k, chunks) in phases.iter().enumerate() {
                let start = (p * nph + k) as f64 * t_phase;
                let mut done = 0;
                for ch in chunks {
                    done += ch.steps;
                    times.push(start + done as f64 * dt);
                }
                if k == c.readout.phase.0 {
                    readout_index.push(times.len() - 1);
                }
            }
        }
        Ok(Self {
            cfg,
            dim: idx.iter().flatten().count(),
            nodes: state_nodes(c),
            phases,
            readout: (idx[c.readout.a.0], idx[c.readout.b.0]),
            readout_phase: c.readout.phase.0,
            dt,
            steps_per_phase,
            pole_max,
            warnings,
            times,
            readout_index,
        })
    }

    pub fn config(&self) -> &McConfig {
        &self.cfg
    }

    pub fn readout_phase(&self) -> usize {
        self.readout_phase
    }

    fn rng(&self, run: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(run as u64);
        rng
    }

    fn port(&self, v: &[f64]) -> f64 {
        let at = |i: Option<usize>| i.map_or(0.0, |k| v[k]);
        at(self.readout.0) - at(self.readout.1)
    }

    /// Readout voltage at every recorded instant plus the final state.
    pub fn run_states(&self, run: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = self.rng(run);
        let mut v = vec![0.0; self.dim];
        let mut xi = vec![0.0; self.dim];
        let mut trace = Vec::with_capacity(self.times.len());
        for _ in 0..self.cfg.periods {
            for chunks in &self.phases {
                for ch in chunks {
                    ch.apply(&mut v, &mut rng, &mut xi);
                    trace.push(self.port(&v));
                }
            }
        }
        (trace, v)
    }

    pub fn run_single(&self, run: usize) -> Vec<f64> {
        self.run_states(run).0
    }

    /// Final voltage of `node`, 0 for fixed nodes.
    pub fn node_voltage(&self, state: &[f64], node: NodeId) -> f64 {
        self.nodes.iter().position(|&n| n == node).map_or(0.0, |k| state[k])
    }

    pub fn ensemble(&self, traces: Vec<Vec<f64>>) -> TraceEnsemble {
        TraceEnsemble::new(self, traces)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEnsemble {
    /// Seconds.
    pub times: Vec<f64>,
    /// Readout voltage per run and recorded instant.
    pub samples: Vec<Vec<f64>>,
    /// Ensemble RMS per recorded instant.
    pub rms: Vec<f64>,
    pub readout_index: Vec<usize>,
    /// Ensemble RMS at the readout of periods `1..=periods`.
    pub readout_rms: Vec<f64>,
    pub dt: f64,
    pub steps_per_phase: u64,
    pub warnings: Vec<SettleWarning>,
}

impl TraceEnsemble {
    fn new(sim: &Simulation, samples: Vec<Vec<f64>>) -> Self {
        let runs = samples.len().max(1) as f64;
        let rms: Vec<f64> = (0..sim.times.len())
            .map(|t| libm::sqrt(samples.iter().map(|r| r[t] * r[t]).sum::<f64>() / runs))
            .collect();
        let readout_rms = sim.readout_index.iter().map(|&i| rms[i]).collect();
        Self {
            times: sim.times.clone(),
            samples,
            rms,
            readout_index: sim.readout_index.clone(),
            readout_rms,
            dt: sim.dt,
            steps_per_phase: sim.steps_per_phase,
            warnings: sim.warnings.clone(),
        }
    }

    pub fn runs(&self) -> usize {
        self.samples.len()
    }

    /// Readout voltages per run, one per period.
    pub fn readouts(&self) -> Vec<Vec<f64>> {
        self.samples
            .iter()
            .map(|r| self.readout_index.iter().map(|&i| r[i]).collect())
            .collect()
    }

    /// Standard error of an RMS estimate from this ensemble.
    pub fn standard_error(&self, rms: f64) -> f64 {
        rms * libm::sqrt(1.0 / (2.0 * self.runs() as f64))
    }
}

/// Runs every Monte-Carlo realisation sequentially.
pub fn run(c: &Circuit, cfg: McConfig) -> Result<TraceEnsemble, McError> {
    let sim = Simulation::new(c, cfg)?;
    let traces = (0..cfg.runs).map(|r| sim.run_single(r)).collect();
    Ok(sim.ensemble(traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::CircuitBuilder;

    fn rc(gon: f64, cap: f64) -> Circuit {
        let mut b = CircuitBuilder::new("rc");
        b.fs(1e3)
            .phases(&["p1", "p2"])
            .ground("gnd")
            .cap("C", "x", "gnd", cap)
            .switch("S", "x", "gnd", &["p1", "p2"], Some(gon))
            .readout("x", "gnd", "p1");
        b.build().unwrap()
    }

    #[test]
    fn one_state_pole() {
        let c = rc(1e-3, 1e-12);
        let s = compile_phase(&c.phase_view(PhaseId(0)).unwrap(), 300.0, true).unwrap();
        assert_eq!(s.dim(), 1);
        let p = s.pole_bound();
        assert!((p - 1e9).abs() < 1e-3 * 1e9, "{p}");
    }

    #[test]
    fn frozen_step_is_identity() {
        let s = PhaseSystem {
            phase: PhaseId(0),
            c: Mat::from_rows(&[&[1.0, -0.5], &[-0.5, 1.0]]),
            g: Mat::zeros(2, 2),
            noise: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = [0.3, -1.7];
        assert_eq!(step(&s, &v, 1e-9, &mut rng).unwrap(), v.to_vec());
    }

    #[test]
    fn deterministic_decay() {
        let c = rc(1e-3, 1e-12);
        let mut s = compile_phase(&c.phase_view(PhaseId(0)).unwrap(), 300.0, true).unwrap();
        s.noise.clear();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dt = 1e-12;
        let mut v = vec![1.0];
        for _ in 0..1000 {
            v = step(&s, &v, dt, &mut rng).unwrap();
        }
        // tau = 1 ns, 1 ns elapsed
        assert!((v[0] - libm::exp(-1.0)).abs() < 1e-3);
    }

    #[test]
    fn block_power_matches_repeated_composition() {
        let c = rc(1e-3, 1e-12);
        let s = compile_phase(&c.phase_view(PhaseId(0)).unwrap(), 300.0, true).unwrap();
        let one = Block::one_step(&s, 1e-11).unwrap();
        let mut seq = Block::identity(1);
        for _ in 0..13 {
            seq = seq.then(&one);
        }
        let pow = one.power(13);
        assert!((seq.psi[(0, 0)] - pow.psi[(0, 0)]).abs() < 1e-14);
        assert!((seq.cov[(0, 0)] - pow.cov[(0, 0)]).abs() < 1e-12 * seq.cov[(0, 0)]);
    }

    #[test]
    fn stationary_covariance_is_kt_over_c() {
        let c = rc(1e-3, 1e-12);
        let s = compile_phase(&c.phase_view(PhaseId(0)).unwrap(), 300.0, true).unwrap();
        let dt = 1e-12;
        let settled = Block::one_step(&s, dt).unwrap().power(1 << 20);
        let want = K_B * 300.0 / 1e-12;
        // backward Euler bias is dt/(2 tau)
        let got = settled.cov[(0, 0)] * (1.0 + 0.5 * dt / 1e-9);
        assert!((got - want).abs() < 1e-6 * want, "{got} vs {want}");
    }

    #[test]
    fn floating_island_detected() {
        let mut b = CircuitBuilder::new("f");
        b.fs(1e3)
            .phases(&["p1"])
            .ground("gnd")
            .cap("C", "x", "gnd", 1e-12)
            .cap("Cf", "y", "z", 1e-12)
            .readout("x", "gnd", "p1");
        let c = b.build().unwrap();
        assert!(matches!(
            compile_phase(&c.phase_view(PhaseId(0)).unwrap(), 300.0, true),
            Err(McError::FloatingIsland { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = McConfig {
            runs: 0,
            ..McConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = McConfig {
            dt: Dt::Fixed(-1.0),
            ..McConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
