//! Switched-capacitor circuit model.
//!
//! A [`Circuit`] is an immutable, validated network of capacitors, switches,
//! OTAs and ideal sources clocked by an ordered list of non-overlapping
//! phases. Nodes are referenced by [`NodeId`]; names are kept for reporting.
//! Build one with [`CircuitBuilder`].

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// Default switch on-conductance (1 mS).
pub const DEFAULT_GON: f64 = 1e-3;
/// Default temperature in kelvin.
pub const DEFAULT_TEMPERATURE: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhaseId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Capacitor {
    pub name: String,
    pub a: NodeId,
    pub b: NodeId,
    /// Farads.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Switch {
    pub name: String,
    pub a: NodeId,
    pub b: NodeId,
    /// Phases during which the switch conducts, sorted and deduplicated.
    pub closed_in: Vec<PhaseId>,
    /// On-conductance in siemens.
    pub gon: f64,
}

impl Switch {
    pub fn is_closed(&self, phase: PhaseId) -> bool {
        self.closed_in.binary_search(&phase).is_ok()
    }
}

/// Single-ended OTA modelled as a VCCS: the output current is
/// `-gm * v(input)`, with the non-inverting input at ground.
#[derive(Debug, Clone, PartialEq)]
pub struct Ota {
    pub name: String,
    /// Inverting input (the virtual ground).
    pub input: NodeId,
    pub output: NodeId,
    /// Transconductance in siemens.
    pub gm: f64,
    /// Noise excess factor `gm * R_nth`.
    pub gamma: f64,
}

/// Ideal voltage source from `node` to ground. Zeroed in noise analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub name: String,
    pub node: NodeId,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Readout {
    pub phase: PhaseId,
    pub a: NodeId,
    pub b: NodeId,
}

/// Explicit noise-charge injection: the voltage variance across `port`
/// during `phase`, converted to charge through capacitor `cap`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InjectDirective {
    pub phase: PhaseId,
    pub port: (NodeId, NodeId),
    /// Index into [`Circuit::capacitors`].
    pub cap: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CircuitError {
    #[error("no ground node declared")]
    MissingGround,
    #[error("no phases declared")]
    MissingPhases,
    #[error("no readout declared")]
    MissingReadout,
    #[error("sampling frequency not declared")]
    MissingFs,
    #[error("undeclared node `{0}`")]
    UndeclaredNode(String),
    #[error("unknown phase `{0}`")]
    UnknownPhase(String),
    #[error("duplicate phase `{0}`")]
    DuplicatePhase(String),
    #[error("duplicate element name `{0}`")]
    DuplicateElement(String),
    #[error("unknown capacitor `{0}`")]
    UnknownCapacitor(String),
    #[error("{element}: {what} must be positive, got {value}")]
    NonPositive {
        element: String,
        what: &'static str,
        value: f64,
    },
    #[error("{element}: {what} must be non-negative, got {value}")]
    Negative {
        element: String,
        what: &'static str,
        value: f64,
    },
    #[error("{0}: terminals identical")]
    IdenticalTerminals(String),
    #[error("{0}: closed in no phase")]
    NeverClosed(String),
    #[error("readout nodes identical")]
    DegenerateReadout,
    #[error("no memory capacitor: declare one with `memory`, or bridge an OTA input and output in every phase")]
    NoMemory,
    #[error("memory capacitor is ambiguous: {0:?} all bridge an OTA in every phase")]
    AmbiguousMemory(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub name: String,
    /// Kelvin.
    pub temperature: f64,
    /// Sampling (clock) frequency in hertz.
    pub fs: f64,
    pub phases: Vec<String>,
    pub nodes: Vec<String>,
    pub ground: NodeId,
    pub capacitors: Vec<Capacitor>,
    pub switches: Vec<Switch>,
    pub otas: Vec<Ota>,
    pub sources: Vec<Source>,
    pub readout: Readout,
    /// Index into `capacitors`, when declared.
    pub memory: Option<usize>,
    pub injections: Vec<InjectDirective>,
}

impl Circuit {
    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n == name).map(NodeId)
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.0]
    }

    pub fn phase(&self, name: &str) -> Option<PhaseId> {
        self.phases.iter().position(|p| p == name).map(PhaseId)
    }

    pub fn phase_name(&self, id: PhaseId) -> &str {
        &self.phases[id.0]
    }

    pub fn phase_ids(&self) -> impl Iterator<Item = PhaseId> {
        (0..self.phases.len()).map(PhaseId)
    }

    pub fn capacitor(&self, name: &str) -> Option<usize> {
        self.capacitors.iter().position(|c| c.name == name)
    }

    /// Clock period in seconds.
    pub fn period(&self) -> f64 {
        1.0 / self.fs
    }

    /// Duration of one phase: the period split evenly across phases.
    pub fn phase_duration(&self) -> f64 {
        self.period() / self.phases.len() as f64
    }

    /// Ground plus every source node: all held at 0 V during noise analysis.
    pub fn is_fixed(&self, n: NodeId) -> bool {
        n == self.ground || self.sources.iter().any(|s| s.node == n)
    }

    /// Edges tying every source node to ground.
    pub fn source_ties(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.sources.iter().map(move |s| (s.node, self.ground))
    }

    pub fn phase_view(&self, phase: PhaseId) -> Result<PhaseView<'_>, CircuitError> {
        if phase.0 >= self.phases.len() {
            return Err(CircuitError::UnknownPhase(phase.0.to_string()));
        }
        let (closed, open) = (0..self.switches.len()).partition(|&i| self.switches[i].is_closed(phase));
        Ok(PhaseView {
            circuit: self,
            phase,
            closed,
            open,
        })
    }

    pub fn phase_view_by_name(&self, name: &str) -> Result<PhaseView<'_>, CircuitError> {
        let id = self
            .phase(name)
            .ok_or_else(|| CircuitError::UnknownPhase(name.to_string()))?;
        self.phase_view(id)
    }

    /// The declared memory capacitor, or the unique capacitor bridging an
    /// OTA input and output (after merging closed switches) in every phase.
    pub fn memory_capacitor(&self) -> Result<usize, CircuitError> {
        if let Some(m) = self.memory {
            return Ok(m);
        }
        let mut found = Vec::new();
        for (ci, cap) in self.capacitors.iter().enumerate() {
            let bridges_everywhere = self.phase_ids().all(|ph| {
                let pv = self.phase_view(ph).expect("declared phase");
                let groups = pv.node_groups();
                let (ga, gb) = (groups[cap.a.0], groups[cap.b.0]);
                ga != gb
                    && self.otas.iter().any(|o| {
                        let (gi, go) = (groups[o.input.0], groups[o.output.0]);
                        (ga == gi && gb == go) || (ga == go && gb == gi)
                    })
            });
            if bridges_everywhere {
                found.push(ci);
            }
        }
        match found.len() {
            0 => Err(CircuitError::NoMemory),
            1 => Ok(found[0]),
            _ => Err(CircuitError::AmbiguousMemory(
                found.iter().map(|&i| self.capacitors[i].name.clone()).collect(),
            )),
        }
    }

    /// Copy of the circuit with every OTA's noise excess factor replaced.
    pub fn with_gamma(&self, gamma: f64) -> Circuit {
        let mut c = self.clone();
        for o in &mut c.otas {
            o.gamma = gamma;
        }
        c
    }
}

/// The circuit as seen during one clock phase.
#[derive(Debug, Clone)]
pub struct PhaseView<'c> {
    pub circuit: &'c Circuit,
    pub phase: PhaseId,
    /// Indices of switches conducting in this phase.
    pub closed: Vec<usize>,
    /// Indices of switches open in this phase.
    pub open: Vec<usize>,
}

impl<'c> PhaseView<'c> {
    pub fn name(&self) -> &'c str {
        self.circuit.phase_name(self.phase)
    }

    pub fn closed_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.closed.iter().map(move |&i| {
            let s = &self.circuit.switches[i];
            (s.a, s.b)
        })
    }

    /// Closed switches plus the source-to-ground ties.
    pub fn shorts(&self) -> Vec<(NodeId, NodeId)> {
        self.closed_edges().chain(self.circuit.source_ties()).collect()
    }

    /// Representative label per node after merging `shorts()`.
    pub fn node_groups(&self) -> Vec<usize> {
        let mut uf = UnionFind::new(self.circuit.nodes.len());
        for (a, b) in self.shorts() {
            uf.union(a.0, b.0);
        }
        (0..self.circuit.nodes.len()).map(|i| uf.find(i)).collect()
    }
}

/// Disjoint-set forest with path halving.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so labels are deterministic
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Accumulates elements by node name and validates on [`build`](Self::build).
#[derive(Debug, Clone, Default)]
pub struct CircuitBuilder {
    name: String,
    temperature: Option<f64>,
    fs: Option<f64>,
    phases: Vec<String>,
    ground: Option<String>,
    caps: Vec<(String, String, String, f64)>,
    switches: Vec<(String, String, String, Vec<String>, Option<f64>)>,
    otas: Vec<(String, String, String, f64, f64)>,
    sources: Vec<(String, String, f64)>,
    readout: Option<(String, String, String)>,
    memory: Option<String>,
    injections: Vec<(String, String, String, String)>,
}

impl CircuitBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn name(&mut self, name: impl Into<String>) -> &mut Self {
        self.name = name.into();
        self
    }

    pub fn temperature(&mut self, kelvin: f64) -> &mut Self {
        self.temperature = Some(kelvin);
        self
    }

    pub fn fs(&mut self, hertz: f64) -> &mut Self {
        self.fs = Some(hertz);
        self
    }

    pub fn phases<S: AsRef<str>>(&mut self, phases: &[S]) -> &mut Self {
        self.phases = phases.iter().map(|p| p.as_ref().to_string()).collect();
        self
    }

    pub fn ground(&mut self, node: impl Into<String>) -> &mut Self {
        self.ground = Some(node.into());
        self
    }

    pub fn cap(&mut self, name: &str, a: &str, b: &str, farads: f64) -> &mut Self {
        self.caps.push((name.into(), a.into(), b.into(), farads));
        self
    }

    pub fn switch<S: AsRef<str>>(
        &mut self,
        name: &str,
        a: &str,
        b: &str,
        phases: &[S],
        gon: Option<f64>,
    ) -> &mut Self {
        let ph = phases.iter().map(|p| p.as_ref().to_string()).collect();
        self.switches.push((name.into(), a.into(), b.into(), ph, gon));
        self
    }

    pub fn ota(&mut self, name: &str, input: &str, output: &str, gm: f64, gamma: f64) -> &mut Self {
        self.otas.push((name.into(), input.into(), output.into(), gm, gamma));
        self
    }

    pub fn vsrc(&mut self, name: &str, node: &str, volts: f64) -> &mut Self {
        self.sources.push((name.into(), node.into(), volts));
        self
    }

    pub fn readout(&mut self, a: &str, b: &str, phase: &str) -> &mut Self {
        self.readout = Some((a.into(), b.into(), phase.into()));
        self
    }

    pub fn memory(&mut self, cap: &str) -> &mut Self {
        self.memory = Some(cap.into());
        self
    }

    pub fn inject(&mut self, phase: &str, a: &str, b: &str, cap: &str) -> &mut Self {
        self.injections.push((phase.into(), a.into(), b.into(), cap.into()));
        self
    }

    pub fn build(&self) -> Result<Circuit, CircuitError> {
        let ground_name = self.ground.clone().ok_or(CircuitError::MissingGround)?;
        if self.phases.is_empty() {
            return Err(CircuitError::MissingPhases);
        }
        let mut phase_ids = BTreeMap::new();
        for (i, p) in self.phases.iter().enumerate() {
            if phase_ids.insert(p.clone(), PhaseId(i)).is_some() {
                return Err(CircuitError::DuplicatePhase(p.clone()));
            }
        }
        let phase = |p: &str| {
            phase_ids
                .get(p)
                .copied()
                .ok_or_else(|| CircuitError::UnknownPhase(p.to_string()))
        };

        // Nodes are declared by element terminals (and the ground statement).
        let mut nodes: Vec<String> = Vec::new();
        let declare = |n: &str, nodes: &mut Vec<String>| {
            if !nodes.iter().any(|x| x == n) {
                nodes.push(n.to_string());
            }
        };
        declare(&ground_name, &mut nodes);
        for (_, a, b, _) in &self.caps {
            declare(a, &mut nodes);
            declare(b, &mut nodes);
        }
        for (_, a, b, _, _) in &self.switches {
            declare(a, &mut nodes);
            declare(b, &mut nodes);
        }
        for (_, i, o, _, _) in &self.otas {
            declare(i, &mut nodes);
            declare(o, &mut nodes);
        }
        for (_, n, _) in &self.sources {
            declare(n, &mut nodes);
        }
        let node = |n: &str| {
            nodes
                .iter()
                .position(|x| x == n)
                .map(NodeId)
                .ok_or_else(|| CircuitError::UndeclaredNode(n.to_string()))
        };

        let mut names: Vec<&str> = Vec::new();
        let all_names = self
            .caps
            .iter()
            .map(|c| c.0.as_str())
            .chain(self.switches.iter().map(|s| s.0.as_str()))
            .chain(self.otas.iter().map(|o| o.0.as_str()))
            .chain(self.sources.iter().map(|s| s.0.as_str()));
        for n in all_names {
            if names.contains(&n) {
                return Err(CircuitError::DuplicateElement(n.to_string()));
            }
            names.push(n);
        }

        let positive = |element: &str, what: &'static str, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(value)
            } else {
                Err(CircuitError::NonPositive {
                    element: element.to_string(),
                    what,
                    value,
                })
            }
        };

        let mut capacitors = Vec::with_capacity(self.caps.len());
        for (name, a, b, v) in &self.caps {
            let (a, b) = (node(a)?, node(b)?);
            if a == b {
                return Err(CircuitError::IdenticalTerminals(name.clone()));
            }
            capacitors.push(Capacitor {
                name: name.clone(),
                a,
                b,
                value: positive(name, "capacitance", *v)?,
            });
        }

        let mut switches = Vec::with_capacity(self.switches.len());
        for (name, a, b, ph, gon) in &self.switches {
            let (a, b) = (node(a)?, node(b)?);
            if a == b {
                return Err(CircuitError::IdenticalTerminals(name.clone()));
            }
            let mut closed_in = ph.iter().map(|p| phase(p)).collect::<Result<Vec<_>, _>>()?;
            closed_in.sort();
            closed_in.dedup();
            if closed_in.is_empty() {
                return Err(CircuitError::NeverClosed(name.clone()));
            }
            switches.push(Switch {
                name: name.clone(),
                a,
                b,
                closed_in,
                gon: positive(name, "on-conductance", gon.unwrap_or(DEFAULT_GON))?,
            });
        }

        let mut otas = Vec::with_capacity(self.otas.len());
        for (name, i, o, gm, gamma) in &self.otas {
            let (input, output) = (node(i)?, node(o)?);
            if input == output {
                return Err(CircuitError::IdenticalTerminals(name.clone()));
            }
            if !(*gamma >= 0.0 && gamma.is_finite()) {
                return Err(CircuitError::Negative {
                    element: name.clone(),
                    what: "gamma",
                    value: *gamma,
                });
            }
            otas.push(Ota {
                name: name.clone(),
                input,
                output,
                gm: positive(name, "gm", *gm)?,
                gamma: *gamma,
            });
        }

        let sources = self
            .sources
            .iter()
            .map(|(name, n, v)| {
                Ok(Source {
                    name: name.clone(),
                    node: node(n)?,
                    value: *v,
                })
            })
            .collect::<Result<Vec<_>, CircuitError>>()?;

        let (ra, rb, rp) = self.readout.clone().ok_or(CircuitError::MissingReadout)?;
        let readout = Readout {
            phase: phase(&rp)?,
            a: node(&ra)?,
            b: node(&rb)?,
        };
        if readout.a == readout.b {
            return Err(CircuitError::DegenerateReadout);
        }

        let cap_index = |n: &str| {
            capacitors
                .iter()
                .position(|c| c.name == n)
                .ok_or_else(|| CircuitError::UnknownCapacitor(n.to_string()))
        };
        let memory = self.memory.as_deref().map(cap_index).transpose()?;
        let injections = self
            .injections
            .iter()
            .map(|(p, a, b, c)| {
                Ok(InjectDirective {
                    phase: phase(p)?,
                    port: (node(a)?, node(b)?),
                    cap: cap_index(c)?,
                })
            })
            .collect::<Result<Vec<_>, CircuitError>>()?;

        let temperature = self.temperature.unwrap_or(DEFAULT_TEMPERATURE);
        positive(&self.name, "temperature", temperature)?;
        let fs = positive(&self.name, "fs", self.fs.ok_or(CircuitError::MissingFs)?)?;

        Ok(Circuit {
            name: self.name.clone(),
            temperature,
            fs,
            phases: self.phases.clone(),
            ground: node(&ground_name)?,
            nodes: nodes.clone(),
            capacitors,
            switches,
            otas,
            sources,
            readout,
            memory,
            injections,
        })
    }
}
