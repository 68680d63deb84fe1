//! JSON report document. All quantities are SI: farads, siemens, volts,
//! V², C², seconds, hertz.

use serde::{Deserialize, Serialize};

use scnoise_core::bode::BodeCaps;
use scnoise_core::compare::Comparison;
use scnoise_core::mcsim::TraceEnsemble;
use scnoise_core::plan::{NoiseReport, Thetas};
use scnoise_core::stage::ApproxReport;
use scnoise_core::{Circuit, ExtCap, NodeId};

pub const SCHEMA: &str = include_str!("../schema/report.schema.json");

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Number of farads, or the string `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CapValue {
    Finite(f64),
    Infinite(String),
}

impl From<ExtCap> for CapValue {
    fn from(c: ExtCap) -> Self {
        match c {
            ExtCap::Finite(v) => CapValue::Finite(v),
            ExtCap::Infinite => CapValue::Infinite("inf".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool: Tool,
    pub circuit: String,
    pub parameters: Parameters,
    pub phases: Vec<PhaseTable>,
    pub plan: PlanDoc,
    pub report: NoiseDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approx: Option<ApproxDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub temperature_k: f64,
    pub fs_hz: f64,
    pub periods: u64,
    pub phases: Vec<String>,
    pub capacitors: Vec<CapDoc>,
    pub switches: Vec<SwitchDoc>,
    pub otas: Vec<OtaDoc>,
    pub sources: Vec<SourceDoc>,
    pub readout: ReadoutDoc,
    pub memory: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapDoc {
    pub name: String,
    pub a: String,
    pub b: String,
    pub farads: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchDoc {
    pub name: String,
    pub a: String,
    pub b: String,
    pub closed_in: Vec<String>,
    pub gon_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtaDoc {
    pub name: String,
    pub input: String,
    pub output: String,
    pub gm_s: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDoc {
    pub name: String,
    pub node: String,
    pub volts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutDoc {
    pub phase: String,
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTable {
    pub phase: String,
    pub ports: Vec<BodeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodeDoc {
    /// `injection` or `readout`.
    pub role: String,
    pub port: [String; 2],
    pub c_inf_f: CapValue,
    pub c_inf_prime_f: CapValue,
    pub c_zero_f: CapValue,
    pub hfb: f64,
    pub gamma_eff: f64,
    pub ota: Option<String>,
    pub variance_v2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDoc {
    pub memory: String,
    pub lambda: f64,
    pub readout_gain_v_per_c: f64,
    pub injections: Vec<InjectionDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionDoc {
    pub phase: String,
    pub port: [String; 2],
    pub cap: String,
    pub conv_cap_f: f64,
    pub prop_coeff: f64,
    pub variance_v2: Option<f64>,
    pub charge_var_c2: Option<f64>,
    pub beta_sw: Option<f64>,
    pub beta_ota: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionDoc {
    pub lambda: f64,
    pub inj_var_c2: Option<f64>,
    pub mem_cap_f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaDoc {
    pub ota: f64,
    pub sw: f64,
    pub direct: f64,
}

impl From<Thetas> for ThetaDoc {
    fn from(t: Thetas) -> Self {
        Self {
            ota: t.ota,
            sw: t.sw,
            direct: t.direct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodDoc {
    pub n: u64,
    pub sampled_v2: f64,
    pub total_v2: f64,
    pub rms_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyDoc {
    pub stage: String,
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    pub fc_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDoc {
    pub periods: u64,
    pub divergent: bool,
    pub unbounded: bool,
    pub recursion: RecursionDoc,
    pub sampled_v2: Option<f64>,
    pub sampled_steady_v2: Option<f64>,
    pub direct_v2: Option<f64>,
    pub total_v2: Option<f64>,
    pub total_steady_v2: Option<f64>,
    pub rms_v: Option<f64>,
    pub beta_sw: Option<f64>,
    pub beta_ota: f64,
    pub thetas: Option<ThetaDoc>,
    pub per_period: Vec<PeriodDoc>,
    pub frequency: Option<FrequencyDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxDoc {
    pub stage: String,
    pub sampled_v2: f64,
    pub sampled_steady_v2: Option<f64>,
    pub direct_v2: f64,
    pub total_v2: f64,
    pub total_steady_v2: Option<f64>,
    pub rms_v: f64,
    pub thetas: Option<ThetaDoc>,
}

impl From<&ApproxReport> for ApproxDoc {
    fn from(a: &ApproxReport) -> Self {
        Self {
            stage: a.stage.into(),
            sampled_v2: a.sampled,
            sampled_steady_v2: a.sampled_steady,
            direct_v2: a.direct,
            total_v2: a.total,
            total_steady_v2: a.total_steady,
            rms_v: a.total.sqrt(),
            thetas: a.thetas.map(Into::into),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub runs: usize,
    pub periods: usize,
    pub seed: u64,
    pub dt_s: f64,
    pub steps_per_phase: u64,
    pub readout_rms_v: Vec<f64>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonDoc {
    pub pass: bool,
    pub rows: Vec<CompareRowDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRowDoc {
    pub period: usize,
    pub analytic_rms_v: f64,
    pub mc_rms_v: f64,
    pub rel_err: f64,
    pub std_err_v: f64,
    pub pass: bool,
}

impl From<&Comparison> for ComparisonDoc {
    fn from(c: &Comparison) -> Self {
        Self {
            pass: c.pass,
            rows: c
                .rows
                .iter()
                .map(|r| CompareRowDoc {
                    period: r.period,
                    analytic_rms_v: r.analytic_rms,
                    mc_rms_v: r.mc_rms,
                    rel_err: r.rel_err,
                    std_err_v: r.std_err,
                    pass: r.pass,
                })
                .collect(),
        }
    }
}

pub fn mc_summary(ens: &TraceEnsemble, runs: usize, periods: usize, seed: u64, cmp: Option<&Comparison>) -> McSummary {
    McSummary {
        runs,
        periods,
        seed,
        dt_s: ens.dt,
        steps_per_phase: ens.steps_per_phase,
        readout_rms_v: ens.readout_rms.clone(),
        warnings: ens.warnings.iter().map(|w| w.to_string()).collect(),
        comparison: cmp.map(Into::into),
    }
}

fn port(c: &Circuit, p: (NodeId, NodeId)) -> [String; 2] {
    [c.node_name(p.0).into(), c.node_name(p.1).into()]
}

fn bode_doc(c: &Circuit, b: &BodeCaps, role: &str, temperature: f64) -> BodeDoc {
    BodeDoc {
        role: role.into(),
        port: port(c, b.port),
        c_inf_f: b.c_inf.into(),
        c_inf_prime_f: b.c_inf_prime.into(),
        c_zero_f: b.c_zero.into(),
        hfb: b.hfb,
        gamma_eff: b.gamma_eff,
        ota: b.ota.map(|i| c.otas[i].name.clone()),
        variance_v2: scnoise_core::bode::variance(c, b, temperature).ok().and_then(|v| v.value()),
    }
}

impl Tool {
    pub fn current() -> Self {
        Tool {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

impl Parameters {
    pub fn new(c: &Circuit, temperature: f64, periods: u64, memory: Option<usize>) -> Self {
        let name = |id: NodeId| c.node_name(id).to_string();
    Parameters {
        temperature_k: temperature,
        fs_hz: c.fs,
        periods,
        phases: c.phases.clone(),
        capacitors: c
            .capacitors
            .iter()
            .map(|k| CapDoc {
                name: k.name.clone(),
                a: name(k.a),
                b: name(k.b),
                farads: k.value,
            })
            .collect(),
        switches: c
            .switches
            .iter()
            .map(|s| SwitchDoc {
                name: s.name.clone(),
                a: name(s.a),
                b: name(s.b),
                closed_in: s.closed_in.iter().map(|&p| c.phase_name(p).into()).collect(),
                gon_s: s.gon,
            })
            .collect(),
        otas: c
            .otas
            .iter()
            .map(|o| OtaDoc {
                name: o.name.clone(),
                input: name(o.input),
                output: name(o.output),
                gm_s: o.gm,
                gamma: o.gamma,
            })
            .collect(),
        sources: c
            .sources
            .iter()
            .map(|s| SourceDoc {
                name: s.name.clone(),
                node: name(s.node),
                volts: s.value,
            })
            .collect(),
        readout: ReadoutDoc {
            phase: c.phase_name(c.readout.phase).into(),
            a: name(c.readout.a),
            b: name(c.readout.b),
        },
        memory: memory.map(|m| c.capacitors[m].name.clone()),
    }
    }
}

/// Output of a bare Monte-Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDocument {
    pub tool: Tool,
    pub circuit: String,
    pub parameters: Parameters,
    pub mc: McSummary,
}

impl SimulationDocument {
    pub fn new(c: &Circuit, mc: McSummary) -> Self {
        SimulationDocument {
            tool: Tool::current(),
            circuit: c.name.clone(),
            parameters: Parameters::new(c, c.temperature, mc.periods as u64, c.memory_capacitor().ok()),
            mc,
        }
    }
}

/// Output of a comparison swept over the OTA excess noise factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDocument {
    pub tool: Tool,
    pub circuit: String,
    pub parameters: Parameters,
    pub runs: usize,
    pub seed: u64,
    pub pass: bool,
    pub sweep: Vec<SweepRowDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRowDoc {
    pub gamma: f64,
    pub analytic_rms_v: f64,
    pub mc_rms_v: f64,
    pub std_err_v: f64,
    pub pass: bool,
}

impl SweepDocument {
    pub fn new(c: &Circuit, runs: usize, periods: usize, seed: u64, sweep: Vec<SweepRowDoc>) -> Self {
        SweepDocument {
            tool: Tool::current(),
            circuit: c.name.clone(),
            parameters: Parameters::new(c, c.temperature, periods as u64, c.memory_capacitor().ok()),
            runs,
            seed,
            pass: sweep.iter().all(|r| r.pass),
            sweep,
        }
    }
}

impl ReportDocument {
    pub fn new(c: &Circuit, r: &NoiseReport, with_approx: bool) -> Self {
        let t = r.temperature;
        let parameters = Parameters::new(c, t, r.periods, Some(r.plan.memory));

        let phases = c
            .phase_ids()
            .map(|ph| {
                let mut ports: Vec<BodeDoc> = r
                    .plan
                    .injections
                    .iter()
                    .filter(|i| i.phase == ph)
                    .map(|i| bode_doc(c, &i.bode, "injection", t))
                    .collect();
                if r.plan.readout.phase == ph {
                    ports.push(bode_doc(c, &r.plan.readout, "readout", t));
                }
                PhaseTable {
                    phase: c.phase_name(ph).into(),
                    ports,
                }
            })
            .collect();

        let plan = PlanDoc {
            memory: c.capacitors[r.plan.memory].name.clone(),
            lambda: r.plan.lambda,
            readout_gain_v_per_c: r.plan.readout_gain,
            injections: r
                .injections
                .iter()
                .map(|i| InjectionDoc {
                    phase: c.phase_name(i.injection.phase).into(),
                    port: port(c, i.injection.port),
                    cap: c.capacitors[i.injection.cap].name.clone(),
                    conv_cap_f: i.injection.conv_cap,
                    prop_coeff: i.injection.prop_coeff,
                    variance_v2: i.variance.value(),
                    charge_var_c2: i.charge_var,
                    beta_sw: i.beta_sw,
                    beta_ota: i.beta_ota,
                })
                .collect(),
        };

        let report = NoiseDoc {
            periods: r.periods,
            divergent: r.divergent,
            unbounded: r.unbounded,
            recursion: RecursionDoc {
                lambda: r.recursion.lambda,
                inj_var_c2: finite(r.recursion.inj_var),
                mem_cap_f: r.recursion.mem_cap,
            },
            sampled_v2: finite(r.sampled),
            sampled_steady_v2: r.sampled_steady.and_then(finite),
            direct_v2: finite(r.direct),
            total_v2: finite(r.total),
            total_steady_v2: r.total_steady.and_then(finite),
            rms_v: finite(r.rms),
            beta_sw: finite(r.beta_sw),
            beta_ota: r.beta_ota,
            thetas: r.thetas.map(Into::into),
            per_period: r
                .per_period
                .iter()
                .filter(|p| p.total.is_finite())
                .map(|p| PeriodDoc {
                    n: p.n,
                    sampled_v2: p.sampled,
                    total_v2: p.total,
                    rms_v: p.total.sqrt(),
                })
                .collect(),
            frequency: r.meta.as_ref().map(|m| FrequencyDoc {
                stage: m.stage.into(),
                numerator: m.numerator.clone(),
                denominator: m.denominator.clone(),
                fc_hz: m.fc,
            }),
        };

        Self {
            tool: Tool::current(),
            circuit: c.name.clone(),
            parameters,
            phases,
            plan,
            report,
            approx: if with_approx { r.approx.as_ref().map(Into::into) } else { None },
            mc: None,
        }
    }
}
