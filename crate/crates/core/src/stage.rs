//! Recognition of the three classic first-order stages and their
//! small-ratio closed forms.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::circuit::{Circuit, NodeId};
use crate::plan::{is_switched, NoisePlan, Thetas};
use crate::K_B;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stage {
    /// Sampling capacitor `αC` sharing charge with a grounded `C`.
    PassiveLp { alpha: f64, c: f64 },
    /// Stray-insensitive integrator.
    Integrator {
        alpha: f64,
        alpha_in: f64,
        alpha_l: f64,
        gamma: f64,
        c: f64,
    },
    /// Damped integrator: input capacitor `α1·C`, damping capacitor `α2·C`.
    ActiveLp {
        alpha1: f64,
        alpha2: f64,
        alpha_in: f64,
        alpha_l: f64,
        gamma: f64,
        c: f64,
    },
}

/// z-domain transfer function in powers of `z⁻¹` plus the cutoff frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMeta {
    pub stage: &'static str,
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    /// Hertz.
    pub fc: Option<f64>,
}

/// Small-ratio closed-form values, V².
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxReport {
    pub stage: &'static str,
    pub sampled: f64,
    pub sampled_steady: Option<f64>,
    pub direct: f64,
    pub total: f64,
    pub total_steady: Option<f64>,
    pub thetas: Option<Thetas>,
}

fn between(c: &Circuit, x: NodeId, y: NodeId) -> f64 {
    c.capacitors
        .iter()
        .filter(|k| (k.a == x && k.b == y) || (k.a == y && k.b == x))
        .map(|k| k.value)
        .sum()
}

pub fn recognize(c: &Circuit, plan: &NoisePlan) -> Option<Stage> {
    let m = &c.capacitors[plan.memory];
    let cm = m.value;
    let switched: Vec<usize> = (0..c.capacitors.len())
        .filter(|&i| i != plan.memory && is_switched(c, i))
        .collect();
    match (c.otas.as_slice(), switched.as_slice()) {
        ([], &[x]) if c.capacitors.len() == 2 && plan.lambda < 1.0 => Some(Stage::PassiveLp {
            alpha: c.capacitors[x].value / cm,
            c: cm,
        }),
        ([ota], sw) => {
            let bridges_direct =
                (m.a == ota.input && m.b == ota.output) || (m.a == ota.output && m.b == ota.input);
            if !bridges_direct {
                return None;
            }
            let alpha_in = between(c, ota.input, c.ground) / cm;
            let alpha_l = between(c, ota.output, c.ground) / cm;
            match *sw {
                [x] if plan.lambda == 1.0 => Some(Stage::Integrator {
                    alpha: c.capacitors[x].value / cm,
                    alpha_in,
                    alpha_l,
                    gamma: ota.gamma,
                    c: cm,
                }),
                [x, y] if plan.lambda < 1.0 => {
                    let bridges = |i: usize| {
                        let k = &c.capacitors[i];
                        c.phase_ids().any(|ph| {
                            let g = c.phase_view(ph).expect("declared phase").node_groups();
                            let (gi, go) = (g[ota.input.0], g[ota.output.0]);
                            let (ga, gb) = (g[k.a.0], g[k.b.0]);
                            (ga == gi && gb == go) || (ga == go && gb == gi)
                        })
                    };
                    let (c1, c2) = match (bridges(x), bridges(y)) {
                        (false, true) => (x, y),
                        (true, false) => (y, x),
                        _ => return None,
                    };
                    Some(Stage::ActiveLp {
                        alpha1: c.capacitors[c1].value / cm,
                        alpha2: c.capacitors[c2].value / cm,
                        alpha_in,
                        alpha_l,
                        gamma: ota.gamma,
                        c: cm,
                    })
                }
                _ => None,
            }
        }
        _ => None,
    }
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::PassiveLp { .. } => "passive-lp",
            Stage::Integrator { .. } => "integrator",
            Stage::ActiveLp { .. } => "active-lp",
        }
    }

    pub fn frequency_meta(&self, fs: f64) -> FrequencyMeta {
        let (numerator, denominator, fc) = match *self {
            Stage::PassiveLp { alpha, .. } => (
                vec![0.0, alpha],
                vec![1.0 + alpha, -1.0],
                Some(alpha / (1.0 + alpha) * fs / (2.0 * PI)),
            ),
            Stage::Integrator { alpha, .. } => (vec![alpha], vec![1.0, -1.0], None),
            Stage::ActiveLp { alpha1, alpha2, .. } => (
                vec![0.0, alpha1],
                vec![1.0 + alpha2, -1.0],
                Some(alpha2 * fs / (2.0 * PI)),
            ),
        };
        FrequencyMeta {
            stage: self.name(),
            numerator,
            denominator,
            fc,
        }
    }

    /// Closed forms valid for small capacitor ratios, after `n` periods.
    pub fn approx(&self, temperature: f64, n: u64) -> Option<ApproxReport> {
        let kt = K_B * temperature;
        let decay = |alpha: f64| 1.0 - libm::pow(1.0 + alpha, -2.0 * n as f64);
        let (sampled, sampled_steady, direct, thetas) = match *self {
            Stage::PassiveLp { alpha, c } => {
                let steady = kt / c;
                (steady * decay(alpha), Some(steady), 0.0, None)
            }
            Stage::Integrator {
                alpha,
                alpha_in,
                alpha_l,
                gamma,
                c,
            } => {
                let q = kt * alpha * c * (1.0 + (alpha_l + alpha_in + gamma * alpha) / (alpha_l + alpha + alpha_in));
                let direct = gamma * kt / (c * (alpha_l + alpha_in));
                (n as f64 * q / (c * c), None, direct, None)
            }
            Stage::ActiveLp {
                alpha1,
                alpha2,
                alpha_in,
                alpha_l,
                gamma,
                c,
            } => {
                if alpha1 != alpha2 {
                    return None;
                }
                let a = alpha1;
                let t = Thetas {
                    ota: (a + alpha_in) * (a + alpha_in) / (2.0 * a * (alpha_l + a + alpha_in)),
                    sw: 1.0
                        + 0.5 * (1.0 + alpha_l * alpha_l / ((alpha_l + alpha_in) * (alpha_l + a + alpha_in))),
                    direct: 1.0 / (alpha_l + alpha_in),
                };
                let steady = kt / c * (gamma * t.ota + t.sw);
                (steady * decay(a), Some(steady), kt / c * gamma * t.direct, Some(t))
            }
        };
        Some(ApproxReport {
            stage: self.name(),
            sampled,
            sampled_steady,
            direct,
            total: sampled + direct,
            total_steady: sampled_steady.map(|s| s + direct),
            thetas,
        })
    }
}
