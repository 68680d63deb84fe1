//! Command-line front end, netlist format, report documents and the parallel
//! Monte-Carlo driver for `scnoise-core`.

pub mod cli;
pub mod examples;
pub mod netlist;
pub mod report;
pub mod sim;
