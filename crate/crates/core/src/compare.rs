//! Analytic versus Monte-Carlo agreement.

use alloc::vec::Vec;

use crate::mcsim::TraceEnsemble;
use crate::plan::NoiseReport;

/// Relative tolerance floor of a comparison.
pub const REL_TOL: f64 = 0.05;
/// Standard errors tolerated.
pub const SE_TOL: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompareError {
    #[error("analytic report covers {analytic} readouts, simulation has {mc}")]
    MismatchedPeriods { analytic: usize, mc: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    /// 1-based period of the readout.
    pub period: usize,
    /// Volts.
    pub analytic_rms: f64,
    pub mc_rms: f64,
    pub rel_err: f64,
    pub std_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    pub pass: bool,
}

impl Comparison {
    pub fn failures(&self) -> impl Iterator<Item = &CompareRow> {
        self.rows.iter().filter(|r| !r.pass)
    }
}

/// `|mc − an| ≤ max(3·SE, 5%·an)`.
pub fn agrees(analytic: f64, mc: f64, std_err: f64) -> bool {
    (mc - analytic).abs() <= (SE_TOL * std_err).max(REL_TOL * analytic)
}

/// Readout of period `k` is compared with the analytic value after `k − 1`
/// completed periods.
pub fn compare(analytic: &NoiseReport, mc: &TraceEnsemble) -> Result<Comparison, CompareError> {
    let an: Vec<f64> = analytic.per_period.iter().map(|p| libm::sqrt(p.total)).collect();
    compare_values(&an, mc)
}

/// As [`compare`] with explicit analytic RMS values indexed by completed periods.
pub fn compare_values(analytic_rms: &[f64], mc: &TraceEnsemble) -> Result<Comparison, CompareError> {
    if analytic_rms.len() < mc.readout_rms.len() {
        return Err(CompareError::MismatchedPeriods {
            analytic: analytic_rms.len(),
            mc: mc.readout_rms.len(),
        });
    }
    let rows: Vec<CompareRow> = mc
        .readout_rms
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let a = analytic_rms[k];
            let se = mc.standard_error(m);
            CompareRow {
                period: k + 1,
                analytic_rms: a,
                mc_rms: m,
                rel_err: if a > 0.0 { (m - a) / a } else { 0.0 },
                std_err: se,
                pass: agrees(a, m, se),
            }
        })
        .collect();
    let pass = rows.iter().all(|r| r.pass);
    Ok(Comparison { rows, pass })
}

/// Least-squares fit of `Var(R[k+m] − R[k]) = m·slope + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    /// Variance growth per period, V².
    pub slope: f64,
    /// Twice the variance not carried between readouts, V².
    pub intercept: f64,
}

/// Pools readout increments over every run and start period. Lag `m` is
/// weighted by `(P − m)/m³`, the inverse of its sampling variance up to a
/// constant.
pub fn increment_slope(readouts: &[Vec<f64>]) -> Option<SlopeFit> {
    let periods = readouts.first()?.len();
    if periods < 3 {
        return None;
    }
    let lags: Vec<(f64, f64, f64)> = (1..periods)
        .map(|m| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for r in readouts {
                for k in 0..(periods - m) {
                    let d = r[k + m] - r[k];
                    sum += d * d;
                    count += 1;
                }
            }
            let x = m as f64;
            (x, sum / count as f64, (periods - m) as f64 / (x * x * x))
        })
        .collect();
    let w: f64 = lags.iter().map(|l| l.2).sum();
    let mx = lags.iter().map(|l| l.2 * l.0).sum::<f64>() / w;
    let my = lags.iter().map(|l| l.2 * l.1).sum::<f64>() / w;
    let sxy: f64 = lags.iter().map(|l| l.2 * (l.0 - mx) * (l.1 - my)).sum();
    let sxx: f64 = lags.iter().map(|l| l.2 * (l.0 - mx) * (l.0 - mx)).sum();
    let slope = sxy / sxx;
    Some(SlopeFit {
        slope,
        intercept: my - slope * mx,
    })
}
