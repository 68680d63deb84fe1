//! Line-oriented netlist format.
//!
//! ```text
//! circuit passive-lp
//! fs 44.4k
//! phases p1 p2
//! ground gnd
//! vsrc VIN in 0
//! cap Ca x gnd 5p
//! switch S1 in x phase=p1 gon=1m
//! readout out gnd phase=p1
//! ```
//!
//! One statement per line; `#` starts a comment. Numbers accept the
//! suffixes `f p n u m k meg`.

use std::collections::HashMap;
use std::fmt::Write as _;

use scnoise_core::circuit::{Circuit, CircuitBuilder, CircuitError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetlistError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: {source}")]
    InvalidAt { line: usize, source: CircuitError },
    #[error("{0}")]
    Invalid(CircuitError),
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let body = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in body.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &body[s..i],
                    column: body[..s].chars().count() + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &body[s..],
            column: body[..s].chars().count() + 1,
        });
    }
    out
}

/// Parses a number with an optional engineering suffix.
pub fn parse_value(text: &str) -> Option<f64> {
    let lower = text.to_ascii_lowercase();
    let (mantissa, exp) = if let Some(m) = lower.strip_suffix("meg") {
        (m, 6)
    } else {
        match lower.chars().last()? {
            'f' => (&lower[..lower.len() - 1], -15),
            'p' => (&lower[..lower.len() - 1], -12),
            'n' => (&lower[..lower.len() - 1], -9),
            'u' => (&lower[..lower.len() - 1], -6),
            'm' => (&lower[..lower.len() - 1], -3),
            'k' => (&lower[..lower.len() - 1], 3),
            _ => (lower.as_str(), 0),
        }
    };
    if mantissa.is_empty() || mantissa.contains(|c: char| c.is_ascii_alphabetic() && c != 'e') {
        return None;
    }
    let v: f64 = match mantissa.split_once('e') {
        None => format!("{mantissa}e{exp}").parse().ok()?,
        Some((m, e)) => {
            let e: i32 = e.parse().ok()?;
            format!("{m}e{}", e.checked_add(exp)?).parse().ok()?
        }
    };
    v.is_finite().then_some(v)
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
}

impl<'a> Line<'a> {
    fn err(&self, column: usize, message: impl Into<String>) -> NetlistError {
        NetlistError::Syntax {
            line: self.number,
            column,
            message: message.into(),
        }
    }

    fn end_column(&self) -> usize {
        self.tokens.last().map_or(1, |t| t.column + t.text.chars().count())
    }

    fn positional(&self, i: usize, what: &str) -> Result<Token<'a>, NetlistError> {
        match self.tokens.get(i) {
            Some(t) if !t.text.contains('=') => Ok(*t),
            Some(t) => Err(self.err(t.column, format!("expected {what}, found `{}`", t.text))),
            None => Err(self.err(self.end_column(), format!("missing {what}"))),
        }
    }

    fn value(&self, t: Token<'_>, what: &str) -> Result<f64, NetlistError> {
        parse_value(t.text).ok_or_else(|| self.err(t.column, format!("invalid {what} `{}`", t.text)))
    }

    fn positive(&self, t: Token<'_>, what: &str) -> Result<f64, NetlistError> {
        let v = self.value(t, what)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.err(t.column, format!("{what} must be positive, got `{}`", t.text)))
        }
    }

    /// Splits `key=value` arguments from position `from` on.
    fn keywords(&self, from: usize, allowed: &[&str]) -> Result<HashMap<&'a str, (Token<'a>, &'a str)>, NetlistError> {
        let mut out = HashMap::new();
        for t in self.tokens.iter().skip(from) {
            let Some((k, v)) = t.text.split_once('=') else {
                return Err(self.err(t.column, format!("unexpected argument `{}`", t.text)));
            };
            if !allowed.contains(&k) {
                return Err(self.err(t.column, format!("unknown key `{k}`")));
            }
            if v.is_empty() {
                return Err(self.err(t.column, format!("empty value for `{k}`")));
            }
            if out.insert(k, (*t, v)).is_some() {
                return Err(self.err(t.column, format!("repeated key `{k}`")));
            }
        }
        Ok(out)
    }

    fn required(
        &self,
        kw: &HashMap<&'a str, (Token<'a>, &'a str)>,
        key: &str,
    ) -> Result<(Token<'a>, &'a str), NetlistError> {
        kw.get(key)
            .copied()
            .ok_or_else(|| self.err(self.end_column(), format!("missing `{key}=`")))
    }

    fn keyed_positive(&self, (t, v): (Token<'_>, &str), what: &str) -> Result<f64, NetlistError> {
        let x = parse_value(v).ok_or_else(|| self.err(t.column, format!("invalid {what} `{v}`")))?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(self.err(t.column, format!("{what} must be positive, got `{v}`")))
        }
    }

    fn arity(&self, n: usize) -> Result<(), NetlistError> {
        match self.tokens.get(n) {
            Some(t) => Err(self.err(t.column, format!("unexpected argument `{}`", t.text))),
            None => Ok(()),
        }
    }
}

pub fn parse(text: &str) -> Result<Circuit, NetlistError> {
    let mut b = CircuitBuilder::new("circuit");
    let mut element_lines: HashMap<String, usize> = HashMap::new();
    let mut seen_singletons: HashMap<&str, usize> = HashMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line = Line {
            number: i + 1,
            tokens: tokenize(raw),
        };
        let Some(head) = line.tokens.first().copied() else {
            continue;
        };
        let keyword = head.text;
        if matches!(keyword, "circuit" | "temp" | "fs" | "phases" | "ground" | "readout" | "memory") {
            if let Some(prev) = seen_singletons.insert(keyword, line.number) {
                return Err(line.err(head.column, format!("`{keyword}` already given on line {prev}")));
            }
        }
        let mut name_of = |t: Token<'_>| -> Result<(), NetlistError> {
            if let Some(prev) = element_lines.insert(t.text.to_string(), line.number) {
                return Err(line.err(
                    t.column,
                    format!("duplicate element name `{}` (first on line {prev})", t.text),
                ));
            }
            Ok(())
        };
        match keyword {
            "circuit" => {
                b.name(line.positional(1, "circuit name")?.text);
                line.arity(2)?;
            }
            "temp" => {
                b.temperature(line.positive(line.positional(1, "temperature")?, "temperature")?);
                line.arity(2)?;
            }
            "fs" => {
                b.fs(line.positive(line.positional(1, "sampling frequency")?, "sampling frequency")?);
                line.arity(2)?;
            }
            "phases" => {
                let ids: Vec<&str> = line.tokens[1..].iter().map(|t| t.text).collect();
                if ids.is_empty() {
                    return Err(line.err(line.end_column(), "missing phase identifiers"));
                }
                if let Some(t) = line.tokens[1..].iter().find(|t| t.text.contains('=')) {
                    return Err(line.err(t.column, format!("invalid phase identifier `{}`", t.text)));
                }
                b.phases(&ids);
            }
            "ground" => {
                b.ground(line.positional(1, "ground node")?.text);
                line.arity(2)?;
            }
            "cap" => {
                let name = line.positional(1, "capacitor name")?;
                let a = line.positional(2, "node")?;
                let bn = line.positional(3, "node")?;
                let v = line.positive(line.positional(4, "capacitance")?, "capacitance")?;
                line.arity(5)?;
                if a.text == bn.text {
                    return Err(line.err(bn.column, format!("capacitor {}: terminals identical", name.text)));
                }
                name_of(name)?;
                b.cap(name.text, a.text, bn.text, v);
            }
            "switch" => {
                let name = line.positional(1, "switch name")?;
                let a = line.positional(2, "node")?;
                let bn = line.positional(3, "node")?;
                if a.text == bn.text {
                    return Err(line.err(bn.column, format!("switch {}: terminals identical", name.text)));
                }
                let kw = line.keywords(4, &["phase", "gon"])?;
                let phases: Vec<&str> = line.required(&kw, "phase")?.1.split(',').collect();
                if phases.iter().any(|p| p.is_empty()) {
                    let t = kw["phase"].0;
                    return Err(line.err(t.column, "empty phase identifier"));
                }
                let gon = kw.get("gon").map(|&p| line.keyed_positive(p, "on-conductance")).transpose()?;
                name_of(name)?;
                b.switch(name.text, a.text, bn.text, &phases, gon);
            }
            "ota" => {
                let name = line.positional(1, "OTA name")?;
                let kw = line.keywords(2, &["in", "out", "gm", "gamma"])?;
                let input = line.required(&kw, "in")?.1;
                let output = line.required(&kw, "out")?;
                if input == output.1 {
                    return Err(line.err(output.0.column, format!("OTA {}: input and output identical", name.text)));
                }
                let gm = line.keyed_positive(line.required(&kw, "gm")?, "gm")?;
                let (gt, gv) = line.required(&kw, "gamma")?;
                let gamma = parse_value(gv).ok_or_else(|| line.err(gt.column, format!("invalid gamma `{gv}`")))?;
                if gamma < 0.0 {
                    return Err(line.err(gt.column, format!("gamma must be non-negative, got `{gv}`")));
                }
                name_of(name)?;
                b.ota(name.text, input, output.1, gm, gamma);
            }
            "vsrc" => {
                let name = line.positional(1, "source name")?;
                let node = line.positional(2, "node")?;
                let v = line.value(line.positional(3, "voltage")?, "voltage")?;
                line.arity(4)?;
                name_of(name)?;
                b.vsrc(name.text, node.text, v);
            }
            "readout" => {
                let a = line.positional(1, "node")?;
                let bn = line.positional(2, "node")?;
                let kw = line.keywords(3, &["phase"])?;
                b.readout(a.text, bn.text, line.required(&kw, "phase")?.1);
            }
            "memory" => {
                b.memory(line.positional(1, "capacitor name")?.text);
                line.arity(2)?;
            }
            "inject" => {
                let kw = line.keywords(1, &["phase", "port", "cap"])?;
                let phase = line.required(&kw, "phase")?.1;
                let (pt, port) = line.required(&kw, "port")?;
                let Some((pa, pb)) = port.split_once(',').filter(|(x, y)| !x.is_empty() && !y.is_empty()) else {
                    return Err(line.err(pt.column, format!("port must be `nodeA,nodeB`, got `{port}`")));
                };
                b.inject(phase, pa, pb, line.required(&kw, "cap")?.1);
            }
            other => return Err(line.err(head.column, format!("unknown statement `{other}`"))),
        }
    }

    b.build().map_err(|e| {
        let named = match &e {
            CircuitError::NonPositive { element, .. } | CircuitError::Negative { element, .. } => Some(element),
            CircuitError::IdenticalTerminals(n) | CircuitError::NeverClosed(n) => Some(n),
            _ => None,
        };
        match named.and_then(|n| element_lines.get(n)) {
            Some(&line) => NetlistError::InvalidAt { line, source: e },
            None => NetlistError::Invalid(e),
        }
    })
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Writes a circuit back in netlist form. Parsing the output yields an
/// identical circuit.
pub fn serialize(c: &Circuit) -> String {
    let mut s = String::new();
    let n = |id: scnoise_core::NodeId| c.node_name(id);
    let _ = writeln!(s, "circuit {}", c.name);
    let _ = writeln!(s, "temp {}", num(c.temperature));
    let _ = writeln!(s, "fs {}", num(c.fs));
    let _ = writeln!(s, "phases {}", c.phases.join(" "));
    let _ = writeln!(s, "ground {}", n(c.ground));
    for k in &c.capacitors {
        let _ = writeln!(s, "cap {} {} {} {}", k.name, n(k.a), n(k.b), num(k.value));
    }
    for sw in &c.switches {
        let phases: Vec<&str> = sw.closed_in.iter().map(|&p| c.phase_name(p)).collect();
        let _ = writeln!(
            s,
            "switch {} {} {} phase={} gon={}",
            sw.name,
            n(sw.a),
            n(sw.b),
            phases.join(","),
            num(sw.gon)
        );
    }
    for o in &c.otas {
        let _ = writeln!(
            s,
            "ota {} in={} out={} gm={} gamma={}",
            o.name,
            n(o.input),
            n(o.output),
            num(o.gm),
            num(o.gamma)
        );
    }
    for src in &c.sources {
        let _ = writeln!(s, "vsrc {} {} {}", src.name, n(src.node), num(src.value));
    }
    let r = c.readout;
    let _ = writeln!(s, "readout {} {} phase={}", n(r.a), n(r.b), c.phase_name(r.phase));
    if let Some(m) = c.memory {
        let _ = writeln!(s, "memory {}", c.capacitors[m].name);
    }
    for d in &c.injections {
        let _ = writeln!(
            s,
            "inject phase={} port={},{} cap={}",
            c.phase_name(d.phase),
            n(d.port.0),
            n(d.port.1),
            c.capacitors[d.cap].name
        );
    }
    s
}
