//! `scnoise` subcommands.
//!
//! Exit codes: 0 success, 1 usage, 2 unreadable or invalid netlist,
//! 3 analysis or simulation failure, 4 Monte-Carlo disagreement.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use scnoise_core::compare::{self, Comparison};
use scnoise_core::mcsim::{Dt, McConfig, TraceEnsemble};
use scnoise_core::plan::{self, NoiseReport};
use scnoise_core::{Circuit, ExtCap};

use crate::report::{self, ReportDocument, SimulationDocument, SweepDocument, SweepRowDoc};
use crate::{examples, netlist, sim};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_ANALYSIS: i32 = 3;
pub const EXIT_COMPARE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "scnoise", version, about = "Thermal noise of switched-capacitor circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic noise report.
    Analyze(AnalyzeArgs),
    /// Monte-Carlo transient simulation.
    Simulate(SimulateArgs),
    /// Analytic report checked against Monte-Carlo.
    Compare(CompareArgs),
    /// List or print the built-in circuits.
    Examples(ExamplesArgs),
}

#[derive(Debug, Args)]
struct Input {
    /// Netlist file, or `builtin:NAME`.
    netlist: String,
    /// Temperature override in kelvin.
    #[arg(long)]
    temp: Option<f64>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: Input,
    /// Completed clock periods.
    #[arg(long, default_value_t = 100)]
    periods: u64,
    /// Print the JSON report.
    #[arg(long)]
    json: bool,
    /// Exact network evaluation (default).
    #[arg(long, conflicts_with = "approx")]
    exact: bool,
    /// Closed-form small-ratio approximations of the recognised stage.
    #[arg(long)]
    approx: bool,
}

#[derive(Debug, Args)]
struct McArgs {
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    /// Clock periods to simulate; one readout per period.
    #[arg(long, default_value_t = 40)]
    periods: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Time step in seconds, or `auto`.
    #[arg(long, default_value = "auto", value_parser = parse_dt)]
    dt: Dt,
    /// Record every N steps instead of phase ends only.
    #[arg(long)]
    record: Option<u64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    mc: McArgs,
    /// Write `time_s,rms_v`.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write `time_s,run,node_v`.
    #[arg(long)]
    csv_runs: Option<PathBuf>,
    /// Treat settling warnings as errors.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    mc: McArgs,
    /// Sweep OTA noise factor over `start:stop:count`, comparing the last readout.
    #[arg(long, value_parser = parse_sweep)]
    gamma_sweep: Option<Sweep>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ExamplesArgs {
    /// Print the netlist of one example.
    #[arg(long)]
    emit: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Sweep {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.start + step * i as f64).collect()
    }
}

pub fn parse_sweep(s: &str) -> Result<Sweep, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts[..] else {
        return Err(format!("expected start:stop:count, got `{s}`"));
    };
    let num = |t: &str| netlist::parse_value(t).ok_or_else(|| format!("invalid number `{t}`"));
    let (start, stop) = (num(a)?, num(b)?);
    let count: usize = n.parse().map_err(|_| format!("invalid count `{n}`"))?;
    if count == 0 || start < 0.0 || stop < 0.0 {
        return Err("count must be at least 1 and bounds non-negative".into());
    }
    Ok(Sweep { start, stop, count })
}

fn parse_dt(s: &str) -> Result<Dt, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Dt::Auto);
    }
    match netlist::parse_value(s) {
        Some(v) if v > 0.0 => Ok(Dt::Fixed(v)),
        _ => Err(format!("expected a positive time step or `auto`, got `{s}`")),
    }
}

#[derive(Debug)]
enum Failure {
    Parse(String),
    Analysis(String),
    Disagree,
    Io(io::Error),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

fn analysis(e: impl std::fmt::Display) -> Failure {
    Failure::Analysis(e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => analyze(a, out),
        Command::Simulate(a) => simulate(a, out, err),
        Command::Compare(a) => compare_cmd(a, out, err),
        Command::Examples(a) => examples_cmd(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Parse(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_PARSE
        }
        Err(Failure::Analysis(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_ANALYSIS
        }
        Err(Failure::Io(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ANALYSIS
        }
        Err(Failure::Disagree) => EXIT_COMPARE,
    }
}

fn load(input: &Input) -> Result<Circuit, Failure> {
    let (origin, text) = if let Some(name) = input.netlist.strip_prefix("builtin:") {
        let ex = examples::find(name).ok_or_else(|| Failure::Parse(format!("no built-in example `{name}`")))?;
        (input.netlist.clone(), ex.text.to_string())
    } else {
        let text = std::fs::read_to_string(&input.netlist)
            .map_err(|e| Failure::Parse(format!("{}: {e}", input.netlist)))?;
        (input.netlist.clone(), text)
    };
    let mut c = netlist::parse(&text).map_err(|e| Failure::Parse(format!("{origin}: {e}")))?;
    if let Some(t) = input.temp {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::Parse(format!("temperature must be positive, got {t}")));
        }
        c.temperature = t;
    }
    Ok(c)
}

fn uv(v: f64) -> String {
    if v.is_finite() {
        format!("{:.3} µV", v * 1e6)
    } else {
        "unbounded".into()
    }
}

fn pf(c: ExtCap) -> String {
    match c {
        ExtCap::Finite(v) => format!("{:.4}", v * 1e12),
        ExtCap::Infinite => "inf".into(),
    }
}

fn analyze(a: AnalyzeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let c = load(&a.input)?;
    let r = plan::report(&c, a.periods, c.temperature).map_err(analysis)?;
    if a.approx && r.approx.is_none() {
        return Err(Failure::Analysis(
            "no closed-form approximation for this circuit; use --exact".into(),
        ));
    }
    if a.json {
        let doc = ReportDocument::new(&c, &r, a.approx);
        writeln!(out, "{}", serde_json::to_string_pretty(&doc).map_err(analysis)?)?;
        return Ok(());
    }
    write_human(&c, &r, a.approx, out)?;
    Ok(())
}

fn write_human(c: &Circuit, r: &NoiseReport, approx: bool, out: &mut dyn Write) -> io::Result<()> {
    writeln!(
        out,
        "circuit {}  fs {:.4} kHz  T {} K  periods {}",
        c.name,
        c.fs / 1e3,
        r.temperature,
        r.periods
    )?;
    if let Some(m) = &r.meta {
        let fc = m.fc.map_or("n/a".into(), |f| format!("{:.2} Hz", f));
        writeln!(out, "stage {}  H(z) num {:?} den {:?}  fc {}", m.stage, m.numerator, m.denominator, fc)?;
    }
    writeln!(out)?;
    writeln!(
        out,
        "{:<6} {:<10} {:<14} {:>10} {:>10} {:>10} {:>8} {:>6} {:>12}",
        "phase", "role", "port", "C∞ pF", "C∞' pF", "C0 pF", "h", "γ", "rms"
    )?;
    let mut rows: Vec<(&scnoise_core::BodeCaps, &str)> =
        r.plan.injections.iter().map(|i| (&i.bode, "injection")).collect();
    rows.push((&r.plan.readout, "readout"));
    for (b, role) in rows {
        let port = format!("({},{})", c.node_name(b.port.0), c.node_name(b.port.1));
        let v = scnoise_core::bode::variance(c, b, r.temperature).ok().and_then(|v| v.rms());
        writeln!(
            out,
            "{:<6} {:<10} {:<14} {:>10} {:>10} {:>10} {:>8.4} {:>6.3} {:>12}",
            c.phase_name(b.phase),
            role,
            port,
            pf(b.c_inf),
            pf(b.c_inf_prime),
            pf(b.c_zero),
            b.hfb,
            b.gamma_eff,
            v.map_or("unbounded".into(), uv)
        )?;
    }
    writeln!(out)?;
    writeln!(
        out,
        "memory {}  λ {:.6}  readout gain {:.4e} V/C",
        c.capacitors[r.plan.memory].name, r.plan.lambda, r.plan.readout_gain
    )?;
    for i in &r.injections {
        writeln!(
            out,
            "  inject {} via {}: conv {:.4} pF  prop {:.6}  β_sw {}  β_ota {:.6}",
            c.phase_name(i.injection.phase),
            c.capacitors[i.injection.cap].name,
            i.injection.conv_cap * 1e12,
            i.injection.prop_coeff,
            i.beta_sw.map_or("unbounded".into(), |b| format!("{b:.6}")),
            i.beta_ota
        )?;
    }
    writeln!(out)?;
    let ap = r.approx.as_ref().filter(|_| approx);
    let line = |out: &mut dyn Write, label: &str, exact: f64, apx: Option<f64>| -> io::Result<()> {
        match apx {
            Some(x) => writeln!(out, "{label:<22} {:>14}   approx {:>14}", uv(exact.sqrt()), uv(x.sqrt())),
            None => writeln!(out, "{label:<22} {:>14}", uv(exact.sqrt())),
        }
    };
    line(out, &format!("sampled (n = {})", r.periods), r.sampled, ap.map(|a| a.sampled))?;
    line(out, "direct", r.direct, ap.map(|a| a.direct))?;
    line(out, &format!("total (n = {})", r.periods), r.total, ap.map(|a| a.total))?;
    match r.total_steady {
        Some(t) => line(out, "total steady", t, ap.and_then(|a| a.total_steady))?,
        None if r.divergent => writeln!(
            out,
            "{:<22} diverges, {:.4e} V² per period",
            "total steady",
            r.recursion.inj_var / (r.recursion.mem_cap * r.recursion.mem_cap)
        )?,
        None => writeln!(out, "{:<22} unbounded", "total steady")?,
    }
    if let Some(t) = r.thetas {
        writeln!(out, "θ_ota {:.6}  θ_sw {:.6}  θ_direct {:.6}", t.ota, t.sw, t.direct)?;
    }
    Ok(())
}

fn mc_config(m: &McArgs, c: &Circuit) -> McConfig {
    McConfig {
        runs: m.runs,
        periods: m.periods,
        dt: m.dt,
        seed: m.seed,
        temperature: Some(c.temperature),
        record: m.record,
        switch_noise: true,
    }
}

fn warn(ens: &TraceEnsemble, err: &mut dyn Write) {
    for w in &ens.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
}

fn create(path: &PathBuf) -> Result<File, Failure> {
    File::create(path).map_err(|e| Failure::Analysis(format!("{}: {e}", path.display())))
}

fn simulate(a: SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let c = load(&a.input)?;
    let cfg = mc_config(&a.mc, &c);
    let ens = sim::run_parallel(&c, cfg).map_err(analysis)?;
    warn(&ens, err);
    if a.strict && !ens.warnings.is_empty() {
        return Err(Failure::Analysis("settling warnings with --strict".into()));
    }
    if let Some(p) = &a.csv {
        sim::write_rms_csv(&ens, create(p)?).map_err(analysis)?;
    }
    if let Some(p) = &a.csv_runs {
        sim::write_runs_csv(&ens, create(p)?).map_err(analysis)?;
    }
    if a.json {
        let doc = SimulationDocument::new(&c, report::mc_summary(&ens, cfg.runs, cfg.periods, cfg.seed, None));
        writeln!(out, "{}", serde_json::to_string_pretty(&doc).map_err(analysis)?)?;
        return Ok(());
    }
    writeln!(
        out,
        "circuit {}  runs {}  dt {:.4e} s  steps/phase {}  seed {}",
        c.name, cfg.runs, ens.dt, ens.steps_per_phase, cfg.seed
    )?;
    writeln!(out, "{:>6} {:>14} {:>12}", "period", "readout rms", "std err")?;
    for (k, &r) in ens.readout_rms.iter().enumerate() {
        writeln!(out, "{:>6} {:>14} {:>12}", k + 1, uv(r), uv(ens.standard_error(r)))?;
    }
    Ok(())
}

fn write_comparison(cmp: &Comparison, out: &mut dyn Write) -> io::Result<()> {
    writeln!(
        out,
        "{:>6} {:>14} {:>14} {:>9} {:>12}  ",
        "period", "analytic", "monte-carlo", "rel", "std err"
    )?;
    for r in &cmp.rows {
        writeln!(
            out,
            "{:>6} {:>14} {:>14} {:>8.2}% {:>12}  {}",
            r.period,
            uv(r.analytic_rms),
            uv(r.mc_rms),
            r.rel_err * 100.0,
            uv(r.std_err),
            if r.pass { "ok" } else { "FAIL" }
        )?;
    }
    Ok(())
}

fn compare_cmd(a: CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let c = load(&a.input)?;
    let cfg = mc_config(&a.mc, &c);
    let analytic_periods = (cfg.periods - 1) as u64;

    if let Some(sweep) = a.gamma_sweep {
        let mut rows = Vec::new();
        for g in sweep.points() {
            let cg = c.with_gamma(g);
            let r = plan::report(&cg, analytic_periods, cg.temperature).map_err(analysis)?;
            let ens = sim::run_parallel(&cg, cfg).map_err(analysis)?;
            warn(&ens, err);
            let an = r.rms_at(analytic_periods);
            let mc = *ens.readout_rms.last().expect("at least one period");
            let se = ens.standard_error(mc);
            rows.push(SweepRowDoc {
                gamma: g,
                analytic_rms_v: an,
                mc_rms_v: mc,
                std_err_v: se,
                pass: compare::agrees(an, mc, se),
            });
        }
        let pass = rows.iter().all(|r| r.pass);
        if a.json {
            let doc = SweepDocument::new(&c, cfg.runs, cfg.periods, cfg.seed, rows);
            writeln!(out, "{}", serde_json::to_string_pretty(&doc).map_err(analysis)?)?;
        } else {
            writeln!(out, "{:>8} {:>14} {:>14} {:>12}", "gamma", "analytic", "monte-carlo", "std err")?;
            for r in &rows {
                writeln!(
                    out,
                    "{:>8.3} {:>14} {:>14} {:>12}  {}",
                    r.gamma,
                    uv(r.analytic_rms_v),
                    uv(r.mc_rms_v),
                    uv(r.std_err_v),
                    if r.pass { "ok" } else { "FAIL" }
                )?;
            }
            writeln!(out, "{}", if pass { "PASS" } else { "FAIL" })?;
        }
        return if pass { Ok(()) } else { Err(Failure::Disagree) };
    }

    let r = plan::report(&c, analytic_periods, c.temperature).map_err(analysis)?;
    let ens = sim::run_parallel(&c, cfg).map_err(analysis)?;
    warn(&ens, err);
    let cmp = compare::compare(&r, &ens).map_err(analysis)?;
    if a.json {
        let mut doc = ReportDocument::new(&c, &r, false);
        doc.mc = Some(report::mc_summary(&ens, cfg.runs, cfg.periods, cfg.seed, Some(&cmp)));
        writeln!(out, "{}", serde_json::to_string_pretty(&doc).map_err(analysis)?)?;
    } else {
        writeln!(out, "circuit {}  runs {}  dt {:.4e} s  seed {}", c.name, cfg.runs, ens.dt, cfg.seed)?;
        write_comparison(&cmp, out)?;
        if cmp.pass {
            writeln!(out, "PASS")?;
        } else {
            let bad: Vec<String> = cmp.failures().map(|r| r.period.to_string()).collect();
            writeln!(out, "FAIL: periods {}", bad.join(", "))?;
        }
    }
    if cmp.pass {
        Ok(())
    } else {
        Err(Failure::Disagree)
    }
}

fn examples_cmd(a: ExamplesArgs, out: &mut dyn Write) -> Result<(), Failure> {
    match a.emit {
        Some(name) => {
            let ex = examples::find(&name).ok_or_else(|| Failure::Parse(format!("no built-in example `{name}`")))?;
            write!(out, "{}", ex.text)?;
        }
        None => {
            for e in examples::EXAMPLES {
                writeln!(out, "{:<20} {}", e.name, e.description)?;
            }
        }
    }
    Ok(())
}
