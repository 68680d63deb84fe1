use std::path::PathBuf;
use std::process::Command;

use scnoise::cli::{run, EXIT_ANALYSIS, EXIT_COMPARE, EXIT_OK, EXIT_PARSE, EXIT_USAGE};
use scnoise::examples::EXAMPLES;

struct Output {
    code: i32,
    out: String,
    err: String,
}

fn invoke(args: &[&str]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["scnoise"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    Output {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}.scn", env!("CARGO_MANIFEST_DIR"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("scnoise-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn line_with<'a>(text: &'a str, prefix: &str) -> &'a str {
    text.lines().find(|l| l.starts_with(prefix)).unwrap_or_else(|| panic!("no `{prefix}` in\n{text}"))
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_scnoise");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code().unwrap();
    assert_eq!(status(&["analyze", &fixture("passive-lp-a1")]), EXIT_OK);
    assert_eq!(status(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(status(&["analyze", "/nonexistent/x.scn"]), EXIT_PARSE);
    assert_eq!(status(&["--help"]), EXIT_OK);
}

#[test]
fn analyze_headline_values() {
    let o = invoke(&["analyze", &fixture("passive-lp-a1")]);
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    assert!(line_with(&o.out, "total steady").ends_with("28.782 µV"), "{}", o.out);
    let o = invoke(&["analyze", &fixture("passive-lp-a4")]);
    assert!(line_with(&o.out, "total steady").ends_with("14.391 µV"));
    let o = invoke(&["analyze", &fixture("integrator")]);
    assert!(line_with(&o.out, "direct").ends_with("40.704 µV"));
    assert!(line_with(&o.out, "total steady").contains("diverges"));
    let o = invoke(&["analyze", &fixture("active-lp-small-cl")]);
    assert!(line_with(&o.out, "total steady").ends_with("133.391 µV"));
}

#[test]
fn approx_mode() {
    let o = invoke(&["analyze", "builtin:active-lp", "--approx"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    assert!(o.out.contains("57.858 µV"), "{}", o.out);
    let o = invoke(&["analyze", "builtin:passive-lp-a1", "--exact", "--approx"]);
    assert_eq!(o.code, EXIT_USAGE);
}

#[test]
fn parse_errors_carry_positions() {
    let path = scratch("bad.scn");
    std::fs::write(&path, "fs 1k\nphases a\nground gnd\ncap C1 x gnd -5p\n").unwrap();
    let o = invoke(&["analyze", path.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_PARSE);
    assert!(o.err.contains("line 4, column 14"), "{}", o.err);
}

#[test]
fn multi_ota_port_is_rejected() {
    let path = scratch("two-ota.scn");
    std::fs::write(
        &path,
        "fs 1k\nphases p1\nground gnd\ncap C1 x y 1p\ncap C2 y z 1p\ncap C3 x gnd 1p\ncap C4 z gnd 1p\n\
         switch S1 x gnd phase=p1\nota A1 in=x out=y gm=100u gamma=1\nota A2 in=y out=z gm=100u gamma=1\n\
         readout y gnd phase=p1\nmemory C1\n",
    )
    .unwrap();
    let o = invoke(&["analyze", path.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_ANALYSIS);
    assert!(o.err.contains("multi-OTA port unsupported"), "{}", o.err);
}

#[test]
fn csv_output_is_deterministic() {
    let (a, b) = (scratch("a.csv"), scratch("b.csv"));
    let (ra, rb) = (scratch("ra.csv"), scratch("rb.csv"));
    for (rms, runs) in [(&a, &ra), (&b, &rb)] {
        let o = invoke(&[
            "simulate",
            "builtin:passive-lp-a4",
            "--runs",
            "40",
            "--periods",
            "6",
            "--seed",
            "7",
            "--csv",
            rms.to_str().unwrap(),
            "--csv-runs",
            runs.to_str().unwrap(),
        ]);
        assert_eq!(o.code, EXIT_OK, "{}", o.err);
    }
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a, b);
    assert!(a.starts_with(b"time_s,rms_v\n"));
    assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), 1 + 2 * 6);
    let (ra, rb) = (std::fs::read(ra).unwrap(), std::fs::read(rb).unwrap());
    assert_eq!(ra, rb);
    assert!(ra.starts_with(b"time_s,run,node_v\n"));
    assert_eq!(ra.iter().filter(|&&c| c == b'\n').count(), 1 + 40 * 2 * 6);
}

#[test]
fn compare_passes_on_fixtures() {
    for name in ["passive-lp-a4", "integrator", "active-lp-small-cl"] {
        let o = invoke(&["compare", &format!("builtin:{name}"), "--runs", "2000", "--periods", "30"]);
        assert_eq!(o.code, EXIT_OK, "{name}\n{}", o.out);
        assert!(o.out.trim_end().ends_with("PASS"));
    }
}

#[test]
fn compare_flags_a_wrong_model() {
    let text = format!("{}inject phase=p2 port=out,gnd cap=C\n", EXAMPLES[0].text);
    let path = scratch("wrong.scn");
    std::fs::write(&path, text).unwrap();
    let o = invoke(&["compare", path.to_str().unwrap(), "--runs", "400", "--periods", "10"]);
    assert_eq!(o.code, EXIT_COMPARE);
    let last = o.out.trim_end().lines().last().unwrap();
    assert!(last.starts_with("FAIL: periods "), "{last}");
    assert!(last.contains("10"));
}

#[test]
fn gamma_sweep_runs() {
    let o = invoke(&["compare", "builtin:active-lp-small-cl", "--runs", "1000", "--periods", "20", "--gamma-sweep", "0:4:3"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.out);
    assert_eq!(o.out.lines().count(), 5);
    let o = invoke(&["compare", "builtin:active-lp", "--gamma-sweep", "0:4"]);
    assert_eq!(o.code, EXIT_USAGE);
}

#[test]
fn examples_list_and_emit() {
    let o = invoke(&["examples"]);
    assert_eq!(o.code, EXIT_OK);
    for e in EXAMPLES {
        assert!(o.out.lines().any(|l| l.starts_with(e.name)), "{}", e.name);
    }
    for e in EXAMPLES {
        let o = invoke(&["examples", "--emit", e.name]);
        assert_eq!(o.out, e.text);
        let path = scratch(&format!("{}.scn", e.name));
        std::fs::write(&path, &o.out).unwrap();
        let from_file = invoke(&["analyze", path.to_str().unwrap(), "--json"]);
        let builtin = invoke(&["analyze", &format!("builtin:{}", e.name), "--json"]);
        assert_eq!(from_file.out, builtin.out);
    }
    assert_eq!(invoke(&["examples", "--emit", "nope"]).code, EXIT_PARSE);
}

#[test]
fn temperature_override_scales_variance() {
    let json = |args: &[&str]| -> serde_json::Value { serde_json::from_str(&invoke(args).out).unwrap() };
    let a = json(&["analyze", "builtin:passive-lp-a1", "--json"]);
    let b = json(&["analyze", "builtin:passive-lp-a1", "--json", "--temp", "600"]);
    let v = |d: &serde_json::Value| d["report"]["total_steady_v2"].as_f64().unwrap();
    assert!((v(&b) / v(&a) - 2.0).abs() < 1e-12);
}
