//! Parallel Monte-Carlo driver and CSV output.

use std::io::Write;

use rayon::prelude::*;

use scnoise_core::mcsim::{McConfig, McError, Simulation, TraceEnsemble};
use scnoise_core::Circuit;

/// Runs every trajectory on the rayon pool. Each run draws from its own
/// stream, so the result does not depend on thread count.
pub fn run_parallel(c: &Circuit, cfg: McConfig) -> Result<TraceEnsemble, McError> {
    let sim = Simulation::new(c, cfg)?;
    let traces: Vec<Vec<f64>> = (0..sim.config().runs).into_par_iter().map(|r| sim.run_single(r)).collect();
    Ok(sim.ensemble(traces))
}

/// `time_s,rms_v`
pub fn write_rms_csv<W: Write>(ens: &TraceEnsemble, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_s", "rms_v"])?;
    for (t, r) in ens.times.iter().zip(&ens.rms) {
        w.write_record([t.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `time_s,run,node_v`, one row per recorded sample of every run.
pub fn write_runs_csv<W: Write>(ens: &TraceEnsemble, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_s", "run", "node_v"])?;
    for (run, trace) in ens.samples.iter().enumerate() {
        for (t, v) in ens.times.iter().zip(trace) {
            w.write_record([t.to_string(), run.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
