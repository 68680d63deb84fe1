//! Extended Bode theorem.
//!
//! For a port `(k, l)` during one phase, three capacitor-only networks are
//! derived from the circuit:
//!
//! * `C∞`: every switch open, every OTA deleted;
//! * `C∞′`: closed switches shorted, OTAs deleted;
//! * `C0`: as `C∞′` with every OTA output shorted to ground.
//!
//! Voltage sources are always shorted to ground. The port noise variance is
//! `kT [1/C∞ + (γ/h − 1)/C∞′ − (γ/h)/C0]`, where `h` is the capacitive
//! feedback gain of the OTA coupled to the port.

use alloc::string::String;
use alloc::vec::Vec;

use crate::capnet::{equivalent_capacitance, transfer_gain, CapError, CapMatrix, ExtCap};
use crate::circuit::{Circuit, CircuitError, NodeId, PhaseId};
use crate::K_B;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BodeError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Cap(#[from] CapError),
    #[error("multi-OTA port unsupported: {otas:?} all couple to port ({a}, {b}) during {phase}")]
    MultiOta {
        phase: String,
        a: String,
        b: String,
        otas: Vec<String>,
    },
    #[error("OTA {0} has no capacitive feedback path from output to input")]
    NoFeedback(String),
    #[error("inconsistent extraction at port ({a}, {b}) during {phase}: variance {value:e} V²")]
    Inconsistent {
        phase: String,
        a: String,
        b: String,
        value: f64,
    },
}

/// Noise voltage variance in V².
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variance {
    Finite(f64),
    Unbounded,
}

impl Variance {
    pub fn value(self) -> Option<f64> {
        match self {
            Variance::Finite(v) => Some(v),
            Variance::Unbounded => None,
        }
    }

    pub fn rms(self) -> Option<f64> {
        self.value().map(libm::sqrt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodeCaps {
    pub phase: PhaseId,
    pub port: (NodeId, NodeId),
    pub c_inf: ExtCap,
    pub c_inf_prime: ExtCap,
    pub c_zero: ExtCap,
    /// Feedback gain of the coupled OTA; 1 when none couples.
    pub hfb: f64,
    /// Noise excess factor of the coupled OTA; 0 when none couples.
    pub gamma_eff: f64,
    /// Index of the coupled OTA.
    pub ota: Option<usize>,
}

impl BodeCaps {
    /// Switch contribution `kT (1/C∞ − 1/C∞′)` in V², `None` when unbounded.
    pub fn switch_part(&self, temperature: f64) -> Option<f64> {
        if self.c_inf == ExtCap::Finite(0.0) {
            return None;
        }
        Some(K_B * temperature * (self.c_inf.reciprocal() - self.c_inf_prime.reciprocal()))
    }

    /// OTA contribution per unit γ, `(kT/h)(1/C∞′ − 1/C0)` in V².
    pub fn ota_part_per_gamma(&self, temperature: f64) -> f64 {
        if self.ota.is_none() {
            return 0.0;
        }
        K_B * temperature / self.hfb * (self.c_inf_prime.reciprocal() - self.c_zero.reciprocal())
    }
}

fn caps_matrix(c: &Circuit, shorts: &[(NodeId, NodeId)]) -> CapMatrix {
    CapMatrix::build(&c.capacitors, shorts, c.ground, c.nodes.len())
}

/// Builds the three equivalent networks for `port` during `phase`.
pub fn extract(c: &Circuit, phase: PhaseId, port: (NodeId, NodeId)) -> Result<BodeCaps, BodeError> {
    let pv = c.phase_view(phase)?;
    let ties: Vec<_> = c.source_ties().collect();
    let shorted = pv.shorts();
    let mut grounded = shorted.clone();
    grounded.extend(c.otas.iter().map(|o| (o.output, c.ground)));

    let m_open = caps_matrix(c, &ties);
    let m_short = caps_matrix(c, &shorted);
    let m_zero = caps_matrix(c, &grounded);
    let (k, l) = port;

    // OTAs sharing a capacitive component with a non-ground port terminal.
    let comp = m_short.components(&[m_short.ground]);
    let port_comps: Vec<usize> = [k, l]
        .iter()
        .map(|&n| m_short.of(n))
        .filter(|&s| s != m_short.ground)
        .map(|s| comp[s])
        .collect();
    let coupled: Vec<usize> = c
        .otas
        .iter()
        .enumerate()
        .filter(|(_, o)| {
            [o.input, o.output].iter().any(|&n| {
                let s = m_short.of(n);
                s != m_short.ground && port_comps.contains(&comp[s])
            })
        })
        .map(|(i, _)| i)
        .collect();
    if coupled.len() > 1 {
        return Err(BodeError::MultiOta {
            phase: c.phase_name(phase).into(),
            a: c.node_name(k).into(),
            b: c.node_name(l).into(),
            otas: coupled.iter().map(|&i| c.otas[i].name.clone()).collect(),
        });
    }

    let (hfb, gamma_eff, ota) = match coupled.first() {
        None => (1.0, 0.0, None),
        Some(&i) => {
            let o = &c.otas[i];
            let (si, so) = (m_short.of(o.input), m_short.of(o.output));
            let h = if si == so || so == m_short.ground {
                1.0
            } else {
                transfer_gain(&m_short, &c.nodes, &[(o.output, 1.0)], o.input)?
            };
            if !(h > 0.0) {
                return Err(BodeError::NoFeedback(o.name.clone()));
            }
            (h, o.gamma, Some(i))
        }
    };

    Ok(BodeCaps {
        phase,
        port,
        c_inf: equivalent_capacitance(&m_open, k, l),
        c_inf_prime: equivalent_capacitance(&m_short, k, l),
        c_zero: equivalent_capacitance(&m_zero, k, l),
        hfb,
        gamma_eff,
        ota,
    })
}

/// Port noise variance from the extracted capacitances.
pub fn variance(c: &Circuit, b: &BodeCaps, temperature: f64) -> Result<Variance, BodeError> {
    let Some(sw) = b.switch_part(temperature) else {
        return Ok(Variance::Unbounded);
    };
    let v = sw + b.gamma_eff * b.ota_part_per_gamma(temperature);
    let scale = K_B * temperature * b.c_inf.reciprocal();
    if v < -1e-9 * scale {
        return Err(BodeError::Inconsistent {
            phase: c.phase_name(b.phase).into(),
            a: c.node_name(b.port.0).into(),
            b: c.node_name(b.port.1).into(),
            value: v,
        });
    }
    Ok(Variance::Finite(v.max(0.0)))
}

/// Port noise variance during `phase` at the circuit temperature.
pub fn port_variance(c: &Circuit, phase: PhaseId, port: (NodeId, NodeId)) -> Result<Variance, BodeError> {
    let b = extract(c, phase, port)?;
    variance(c, &b, c.temperature)
}

/// Continuous-time noise present at the readout port during the readout phase.
pub fn direct_noise(c: &Circuit, temperature: f64) -> Result<Variance, BodeError> {
    let r = c.readout;
    let b = extract(c, r.phase, (r.a, r.b))?;
    variance(c, &b, temperature)
}
