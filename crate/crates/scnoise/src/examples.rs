//! Built-in fixture circuits.

use scnoise_core::Circuit;

use crate::netlist;

pub struct Example {
    pub name: &'static str,
    pub description: &'static str,
    pub text: &'static str,
}

pub const EXAMPLES: &[Example] = &[
    Example {
        name: "passive-lp-a1",
        description: "passive SC low-pass, C = αC = 5 pF",
        text: include_str!("../fixtures/passive-lp-a1.scn"),
    },
    Example {
        name: "passive-lp-a4",
        description: "passive SC low-pass, α = 1/4, C = 20 pF",
        text: include_str!("../fixtures/passive-lp-a4.scn"),
    },
    Example {
        name: "integrator",
        description: "stray-insensitive integrator, α = 0.1, C = CL = 5 pF, Cin = 20 fF",
        text: include_str!("../fixtures/integrator.scn"),
    },
    Example {
        name: "active-lp",
        description: "OTA-based SC low-pass, α = 0.1, C = CL = 5 pF, Cin = 20 fF",
        text: include_str!("../fixtures/active-lp.scn"),
    },
    Example {
        name: "active-lp-small-cl",
        description: "OTA-based SC low-pass, α = 0.1, C = 5 pF, CL = 0.5 pF, Cin = 20 fF",
        text: include_str!("../fixtures/active-lp-small-cl.scn"),
    },
];

pub fn find(name: &str) -> Option<&'static Example> {
    EXAMPLES.iter().find(|e| e.name == name)
}

pub fn builtin_examples() -> Vec<(&'static str, Circuit)> {
    EXAMPLES
        .iter()
        .map(|e| (e.name, netlist::parse(e.text).expect("fixture parses")))
        .collect()
}
