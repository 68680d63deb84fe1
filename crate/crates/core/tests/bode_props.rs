mod support;

use proptest::prelude::*;
use scnoise_core::bode::{extract, variance, BodeError};
use scnoise_core::plan::{build_plan, report};
use scnoise_core::{Circuit, CircuitBuilder, PhaseId, K_B};

use support::{active_lp, integrator, rel, switched_network};

const T: f64 = 300.0;
const C: f64 = 5e-12;

fn kt() -> f64 {
    K_B * T
}

fn every_port(c: &Circuit) -> impl Iterator<Item = (PhaseId, usize)> + '_ {
    c.phase_ids().flat_map(move |ph| (0..c.capacitors.len()).map(move |i| (ph, i)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn passive_networks_have_no_ota_term(c in switched_network()) {
        for (ph, i) in every_port(&c) {
            let k = &c.capacitors[i];
            let b = extract(&c, ph, (k.a, k.b)).unwrap();
            prop_assert_eq!(b.c_inf_prime, b.c_zero);
            prop_assert_eq!((b.hfb, b.gamma_eff), (1.0, 0.0));
            let v = variance(&c, &b, T).unwrap();
            prop_assert!(v.value().is_none_or(|v| v >= 0.0));
        }
    }

    #[test]
    fn active_variances_non_negative(
        alpha in 0.01f64..1.0,
        alpha_in in 0.0f64..0.5,
        alpha_l in 0.05f64..5.0,
        gamma in 0.0f64..4.0,
        which in 0usize..2,
    ) {
        let c = if which == 0 {
            integrator(alpha, alpha_in.max(1e-4), alpha_l, gamma, C)
        } else {
            active_lp(alpha, alpha_in.max(1e-4), alpha_l, gamma, C)
        };
        for (ph, i) in every_port(&c) {
            let k = &c.capacitors[i];
            let b = extract(&c, ph, (k.a, k.b)).unwrap();
            let v = variance(&c, &b, T).unwrap();
            prop_assert!(v.value().is_none_or(|v| v >= 0.0), "{}: {:?}", k.name, v);
        }
    }
}

fn beta_ota2(a: f64, ai: f64, al: f64) -> f64 {
    (a + ai).powi(2) / ((1.0 + a) * (al * (1.0 + 2.0 * a + ai) + (1.0 + a) * (a + ai)))
}

fn beta_sw2(a: f64, ai: f64, al: f64) -> f64 {
    a * ((al + ai) * (al + a + ai) + al * al)
        / ((al * (1.0 + ai) + ai) * (al * (1.0 + 2.0 * a + ai) + (1.0 + a) * (a + ai)))
}

#[test]
fn active_lp_betas_match_closed_forms() {
    for a in [0.05, 0.1, 0.2] {
        for al in [0.1, 1.0] {
            for ai in [0.004, 0.04] {
                for g in [0.0, 1.0, 2.0] {
                    let c = active_lp(a, ai, al, g, C);
                    let r = report(&c, 10, T).unwrap();
                    let mem = c.capacitor("C").unwrap();
                    let p2 = r
                        .injections
                        .iter()
                        .find(|i| i.injection.phase == PhaseId(1) && i.injection.cap == mem)
                        .unwrap();
                    assert!(rel(p2.beta_ota, beta_ota2(a, ai, al)) < 1e-9, "β_ota α={a} αL={al} αin={ai}");
                    assert!(rel(p2.beta_sw.unwrap(), beta_sw2(a, ai, al)) < 1e-9, "β_sw α={a} αL={al} αin={ai}");
                    assert!(rel(r.beta_ota, beta_ota2(a, ai, al)) < 1e-9);
                    let sw1: f64 = r
                        .injections
                        .iter()
                        .filter(|i| i.injection.phase == PhaseId(0))
                        .map(|i| i.beta_sw.unwrap())
                        .sum();
                    assert!(rel(sw1, 2.0 * a / (1.0 + a).powi(2)) < 1e-9);
                    let v = p2.variance.value().unwrap();
                    let want = kt() / C * (g * beta_ota2(a, ai, al) + beta_sw2(a, ai, al));
                    assert!(rel(v, want) < 1e-9);
                }
            }
        }
    }
}

#[test]
fn feedback_gains() {
    for (a, ai, al) in [(0.1, 0.004, 1.0), (0.1, 0.004, 0.1), (0.25, 0.04, 2.0)] {
        let ic = integrator(a, ai, al, 2.0, C);
        let ip = build_plan(&ic).unwrap();
        let i2 = ip.injections.iter().find(|i| i.phase == PhaseId(1)).unwrap();
        assert!(rel(i2.bode.hfb, 1.0 / (1.0 + a + ai)) < 1e-12);
        assert!(rel(ip.readout.hfb, 1.0 / (1.0 + ai)) < 1e-12);

        let ac = active_lp(a, ai, al, 2.0, C);
        let ap = build_plan(&ac).unwrap();
        let a2 = ap.injections.iter().find(|i| i.phase == PhaseId(1)).unwrap();
        assert!(rel(a2.bode.hfb, (1.0 + a) / (1.0 + 2.0 * a + ai)) < 1e-12);
        assert!(rel(ap.readout.hfb, 1.0 / (1.0 + ai)) < 1e-12);
    }
}

/// Sampled variance across the integrating capacitor during Φ2, from a
/// direct nodal derivation of the three Bode networks.
fn integrator_p2(a: f64, ai: f64, al: f64, g: f64) -> f64 {
    kt() / (a * C) * (ai * (1.0 + al) + al + g * a) / (al * (1.0 + a + ai) + a + ai)
}

fn integrator_direct(ai: f64, al: f64, g: f64) -> f64 {
    g * kt() / C * (1.0 + ai).powi(2) / (al * (1.0 + ai) + ai)
}

#[test]
fn integrator_exact_forms() {
    for a in [0.05, 0.1, 0.2] {
        for al in [0.1, 1.0] {
            for ai in [0.004, 0.04] {
                for g in [0.0, 1.0, 2.0] {
                    let c = integrator(a, ai, al, g, C);
                    let r = report(&c, 10, T).unwrap();
                    let p2 = r.injections.iter().find(|i| i.injection.phase == PhaseId(1)).unwrap();
                    assert!(rel(p2.variance.value().unwrap(), integrator_p2(a, ai, al, g)) < 1e-9);
                    if g > 0.0 {
                        assert!(rel(r.direct, integrator_direct(ai, al, g)) < 1e-9);
                    } else {
                        assert!(r.direct.abs() < 1e-9 * kt() / C);
                    }
                }
            }
        }
    }
}

#[test]
fn small_ratio_limit() {
    // α = αin → 0: exact values approach the simplified forms.
    let (a, ai, al, g) = (1e-4, 1e-4, 1.0, 2.0);
    let c = integrator(a, ai, al, g, C);
    let r = report(&c, 10, T).unwrap();
    let p2 = r.injections.iter().find(|i| i.injection.phase == PhaseId(1)).unwrap();
    let simple = kt() / (a * C) * (al + ai + g * a) / (al + a + ai);
    assert!(rel(p2.variance.value().unwrap(), simple) < 1e-3);
    assert!(rel(r.direct, g * kt() / (al * C + ai * C)) < 1e-3);

    let c = active_lp(a, ai, al, g, C);
    let r = report(&c, 10, T).unwrap();
    let approx = r.approx.as_ref().unwrap();
    assert!(rel(r.total_steady.unwrap(), approx.total_steady.unwrap()) < 1e-3);
}

#[test]
fn two_otas_on_one_port() {
    let c = CircuitBuilder::new("two")
        .fs(1e3)
        .phases(&["p1"])
        .ground("gnd")
        .cap("C1", "x", "y", 1e-12)
        .cap("C2", "y", "z", 1e-12)
        .cap("C3", "x", "gnd", 1e-12)
        .cap("C4", "z", "gnd", 1e-12)
        .switch("S1", "x", "gnd", &["p1"], None)
        .ota("A1", "x", "y", 1e-4, 1.0)
        .ota("A2", "y", "z", 1e-4, 1.0)
        .readout("y", "gnd", "p1")
        .build()
        .unwrap();
    let k = &c.capacitors[0];
    let err = extract(&c, PhaseId(0), (k.a, k.b)).unwrap_err();
    assert!(matches!(err, BodeError::MultiOta { .. }));
    assert!(err.to_string().contains("multi-OTA port unsupported"));
}
