//! Per-period noise bookkeeping.
//!
//! Every sampling event (a capacitor disconnected at the end of a phase)
//! freezes a noise charge. The charge is followed through the remaining
//! phases of the period to find how much of it lands on the memory
//! capacitor, and the memory capacitor's own retention per period closes
//! the recursion `Q(n+1) = λ² Q(n) + Σ prop² C² V²`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::bode::{self, BodeCaps, BodeError, Variance};
use crate::capnet::{redistribute, settle, CapError, ChargeState};
use crate::circuit::{Circuit, CircuitError, NodeId, PhaseId, UnionFind};
use crate::stage::{self, ApproxReport, FrequencyMeta};
use crate::K_B;

/// `λ` closer than this to 1 is treated as exactly 1.
pub const UNITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Bode(#[from] BodeError),
    #[error(transparent)]
    Cap(#[from] CapError),
    #[error("readout phase `{0}` must be the first phase")]
    ReadoutNotFirst(String),
    #[error("ambiguous auto-plan during {phase}: {caps:?} sample jointly and none is the memory capacitor; add `inject` directives")]
    Ambiguous { phase: String, caps: Vec<String> },
    #[error("injection through {cap} during {phase} cannot hold charge")]
    Degenerate { phase: String, cap: String },
    #[error("memory capacitor charge grows by {0} per period")]
    Unstable(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub phase: PhaseId,
    pub port: (NodeId, NodeId),
    /// Capacitor converting the port voltage variance into charge.
    pub cap: usize,
    /// Farads.
    pub conv_cap: f64,
    /// Magnitude of the fraction of the sampled charge on the memory
    /// capacitor at the end of the period.
    pub prop_coeff: f64,
    pub bode: BodeCaps,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recursion {
    pub lambda: f64,
    /// C² per period.
    pub inj_var: f64,
    /// Farads.
    pub mem_cap: f64,
}

impl Recursion {
    pub fn divergent(&self) -> bool {
        self.lambda == 1.0
    }

    /// Steady-state charge variance, `None` when divergent.
    pub fn steady(&self) -> Option<f64> {
        (!self.divergent()).then(|| self.inj_var / (1.0 - self.lambda * self.lambda))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePlan {
    pub injections: Vec<Injection>,
    /// Index of the memory capacitor.
    pub memory: usize,
    pub lambda: f64,
    /// Readout voltage per coulomb on the memory capacitor.
    pub readout_gain: f64,
    pub readout: BodeCaps,
}

/// True when a terminal of the capacitor is a switch endpoint that is
/// neither an OTA terminal nor a fixed node.
pub fn is_switched(c: &Circuit, cap: usize) -> bool {
    let k = &c.capacitors[cap];
    switched_terminal(c, k.a) || switched_terminal(c, k.b)
}

fn switched_terminal(c: &Circuit, n: NodeId) -> bool {
    c.switches.iter().any(|s| s.a == n || s.b == n)
        && !c.otas.iter().any(|o| o.input == n || o.output == n)
        && !c.is_fixed(n)
}

fn auto_ports(c: &Circuit, memory: usize) -> Result<Vec<(PhaseId, usize)>, PlanError> {
    let mem = &c.capacitors[memory];
    let mut ports = Vec::new();
    for ph in c.phase_ids() {
        let pv = c.phase_view(ph)?;
        let groups = pv.node_groups();
        let fixed = groups[c.ground.0];
        let touched: BTreeSet<NodeId> = pv.closed_edges().flat_map(|(a, b)| [a, b]).collect();
        let candidates: Vec<usize> = (0..c.capacitors.len())
            .filter(|&i| {
                let k = &c.capacitors[i];
                [k.a, k.b].iter().any(|&n| switched_terminal(c, n) && touched.contains(&n))
            })
            .collect();
        let live = |i: usize| -> Vec<usize> {
            let k = &c.capacitors[i];
            [groups[k.a.0], groups[k.b.0]]
                .into_iter()
                .filter(|&g| g != fixed)
                .collect()
        };
        let mut uf = UnionFind::new(candidates.len());
        for x in 0..candidates.len() {
            for y in (x + 1)..candidates.len() {
                let (gx, gy) = (live(candidates[x]), live(candidates[y]));
                if gx.iter().any(|g| gy.contains(g)) {
                    uf.union(x, y);
                }
            }
        }
        let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (x, &ci) in candidates.iter().enumerate() {
            clusters.entry(uf.find(x)).or_default().push(ci);
        }
        for members in clusters.values() {
            if members.len() == 1 {
                ports.push((ph, members[0]));
                continue;
            }
            let supernodes: Vec<usize> = members.iter().flat_map(|&i| live(i)).collect();
            if supernodes.contains(&groups[mem.a.0]) || supernodes.contains(&groups[mem.b.0]) {
                ports.push((ph, memory));
            } else {
                return Err(PlanError::Ambiguous {
                    phase: c.phase_name(ph).into(),
                    caps: members.iter().map(|&i| c.capacitors[i].name.clone()).collect(),
                });
            }
        }
    }
    let mut seen = BTreeSet::new();
    ports.retain(|p| seen.insert(*p));
    Ok(ports)
}

/// Fraction of a charge sampled on `cap` at the end of `phase` that sits on
/// the memory capacitor at the end of the period.
pub fn propagation(c: &Circuit, phase: PhaseId, cap: usize, memory: usize) -> Result<f64, PlanError> {
    let pv = c.phase_view(phase)?;
    let mut emf = vec![0.0; c.capacitors.len()];
    emf[cap] = 1.0;
    let s = settle(&pv, &ChargeState::zeros(c), &emf)?;
    let qx = s.charges.get(cap);
    if !(qx.abs() > 1e-12 * c.capacitors[cap].value) {
        return Err(PlanError::Degenerate {
            phase: c.phase_name(phase).into(),
            cap: c.capacitors[cap].name.clone(),
        });
    }
    let mut q = s.charges.scale(1.0 / qx);
    for k in (phase.0 + 1)..c.phases.len() {
        q = redistribute(&c.phase_view(PhaseId(k))?, &q)?;
    }
    Ok(q.get(memory).abs())
}

/// Fraction of the memory charge surviving one full period.
pub fn retention(c: &Circuit, memory: usize) -> Result<f64, PlanError> {
    let mut q = ChargeState::unit(c, memory);
    for ph in c.phase_ids() {
        q = redistribute(&c.phase_view(ph)?, &q)?;
    }
    let lambda = q.get(memory).abs();
    if (lambda - 1.0).abs() < UNITY_TOL {
        Ok(1.0)
    } else if lambda > 1.0 {
        Err(PlanError::Unstable(lambda))
    } else {
        Ok(lambda)
    }
}

pub fn build_plan(c: &Circuit) -> Result<NoisePlan, PlanError> {
    let r = c.readout;
    let readout = bode::extract(c, r.phase, (r.a, r.b))?;
    if r.phase != PhaseId(0) {
        return Err(PlanError::ReadoutNotFirst(c.phase_name(r.phase).into()));
    }
    let memory = c.memory_capacitor()?;
    let ports: Vec<(PhaseId, (NodeId, NodeId), usize)> = if c.injections.is_empty() {
        auto_ports(c, memory)?
            .into_iter()
            .map(|(ph, i)| (ph, (c.capacitors[i].a, c.capacitors[i].b), i))
            .collect()
    } else {
        c.injections.iter().map(|d| (d.phase, d.port, d.cap)).collect()
    };
    let injections = ports
        .into_iter()
        .map(|(phase, port, cap)| {
            Ok(Injection {
                phase,
                port,
                cap,
                conv_cap: c.capacitors[cap].value,
                prop_coeff: propagation(c, phase, cap, memory)?,
                bode: bode::extract(c, phase, port)?,
            })
        })
        .collect::<Result<Vec<_>, PlanError>>()?;
    let lambda = retention(c, memory)?;
    let settled = settle(
        &c.phase_view(r.phase)?,
        &ChargeState::unit(c, memory),
        &vec![0.0; c.capacitors.len()],
    )?;
    let readout_gain = settled.potentials[r.a.0] - settled.potentials[r.b.0];
    Ok(NoisePlan {
        injections,
        memory,
        lambda,
        readout_gain,
        readout,
    })
}

/// Port variance and charge variance for one injection.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionResult {
    pub injection: Injection,
    pub variance: Variance,
    /// Charge variance reaching the memory capacitor, C².
    pub charge_var: Option<f64>,
    /// Switch share of `charge_var` normalised by `kT·C_mem`.
    pub beta_sw: Option<f64>,
    /// OTA share of `charge_var` per unit γ normalised by `kT·C_mem`.
    pub beta_ota: f64,
}

fn injection_result(c: &Circuit, plan: &NoisePlan, inj: &Injection, temperature: f64) -> Result<InjectionResult, PlanError> {
    let variance = bode::variance(c, &inj.bode, temperature)?;
    let w = inj.prop_coeff * inj.prop_coeff * inj.conv_cap * inj.conv_cap;
    let norm = K_B * temperature * c.capacitors[plan.memory].value;
    Ok(InjectionResult {
        injection: inj.clone(),
        variance,
        charge_var: variance.value().map(|v| w * v),
        beta_sw: inj.bode.switch_part(temperature).map(|v| w * v / norm),
        beta_ota: w * inj.bode.ota_part_per_gamma(temperature) / norm,
    })
}

/// Charge variance added to the memory capacitor per period; `None` when
/// some port variance is unbounded.
pub fn period_injection(c: &Circuit, plan: &NoisePlan, temperature: f64) -> Result<Option<f64>, PlanError> {
    let mut sum = 0.0;
    for inj in &plan.injections {
        match injection_result(c, plan, inj, temperature)?.charge_var {
            Some(q) => sum += q,
            None => return Ok(None),
        }
    }
    Ok(Some(sum))
}

/// Memory charge variance after `n` periods starting from zero.
pub fn evolve(r: &Recursion, n: u64) -> f64 {
    if r.divergent() {
        return n as f64 * r.inj_var;
    }
    let l2 = r.lambda * r.lambda;
    r.inj_var / (1.0 - l2) * (1.0 - libm::pow(l2, n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodPoint {
    /// Completed periods before the readout.
    pub n: u64,
    /// V².
    pub sampled: f64,
    /// V².
    pub total: f64,
}

/// Normalised steady-state contributions, `kT/C_mem` units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thetas {
    pub ota: f64,
    pub sw: f64,
    pub direct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport {
    pub temperature: f64,
    pub periods: u64,
    pub plan: NoisePlan,
    pub injections: Vec<InjectionResult>,
    pub recursion: Recursion,
    pub unbounded: bool,
    pub divergent: bool,
    /// Sampled output variance after `periods` periods, V².
    pub sampled: f64,
    pub sampled_steady: Option<f64>,
    pub direct: f64,
    pub total: f64,
    pub total_steady: Option<f64>,
    pub rms: f64,
    pub per_period: Vec<PeriodPoint>,
    /// Per-period switch and OTA charge shares, `kT·C_mem` units.
    pub beta_sw: f64,
    pub beta_ota: f64,
    pub thetas: Option<Thetas>,
    pub meta: Option<FrequencyMeta>,
    pub approx: Option<ApproxReport>,
}

impl NoiseReport {
    /// Analytic RMS at the readout following `n` completed periods.
    pub fn rms_at(&self, n: u64) -> f64 {
        let s = evolve(&self.recursion, n);
        libm::sqrt(s * self.plan.readout_gain * self.plan.readout_gain + self.direct)
    }
}

pub fn report(c: &Circuit, n: u64, temperature: f64) -> Result<NoiseReport, PlanError> {
    let plan = build_plan(c)?;
    report_with_plan(c, plan, n, temperature)
}

pub fn report_with_plan(c: &Circuit, plan: NoisePlan, n: u64, temperature: f64) -> Result<NoiseReport, PlanError> {
    let injections = plan
        .injections
        .iter()
        .map(|inj| injection_result(c, &plan, inj, temperature))
        .collect::<Result<Vec<_>, _>>()?;
    let inj_var: Option<f64> = injections.iter().map(|r| r.charge_var).sum();
    let direct_var = bode::variance(c, &plan.readout, temperature)?;
    let unbounded = inj_var.is_none() || direct_var.value().is_none();
    let mem_cap = c.capacitors[plan.memory].value;
    let recursion = Recursion {
        lambda: plan.lambda,
        inj_var: inj_var.unwrap_or(f64::INFINITY),
        mem_cap,
    };
    let divergent = recursion.divergent();
    let g2 = plan.readout_gain * plan.readout_gain;
    let direct = direct_var.value().unwrap_or(f64::INFINITY);
    let per_period: Vec<PeriodPoint> = (0..=n)
        .map(|k| {
            let sampled = g2 * evolve(&recursion, k);
            PeriodPoint {
                n: k,
                sampled,
                total: sampled + direct,
            }
        })
        .collect();
    let sampled = per_period[n as usize].sampled;
    let sampled_steady = recursion.steady().map(|q| g2 * q);
    let beta_sw: f64 = injections.iter().map(|r| r.beta_sw.unwrap_or(f64::INFINITY)).sum();
    let beta_ota: f64 = injections.iter().map(|r| r.beta_ota).sum();
    let thetas = (!divergent && !unbounded).then(|| {
        let scale = g2 * mem_cap * mem_cap / (1.0 - plan.lambda * plan.lambda);
        Thetas {
            ota: beta_ota * scale,
            sw: beta_sw * scale,
            direct: plan.readout.ota_part_per_gamma(temperature) * mem_cap / (K_B * temperature),
        }
    });
    let meta = stage::recognize(c, &plan).map(|s| s.frequency_meta(c.fs));
    let approx = stage::recognize(c, &plan).and_then(|s| s.approx(temperature, n));
    Ok(NoiseReport {
        temperature,
        periods: n,
        injections,
        recursion,
        unbounded,
        divergent,
        sampled,
        sampled_steady,
        direct,
        total: sampled + direct,
        total_steady: sampled_steady.map(|s| s + direct),
        rms: libm::sqrt(sampled + direct),
        per_period,
        beta_sw,
        beta_ota,
        thetas,
        meta,
        approx,
        plan,
    })
}
