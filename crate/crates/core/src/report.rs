//! CSV emitters. Floats are written in shortest round-trip form.

use std::io::Write;

use crate::error::{Error, Result};
use crate::exact::ClusterDistribution;
use crate::series::CoeffSequence;
use crate::sim::{EmpiricalDistribution, SimStats};

fn table<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let io = |e: csv::Error| Error::Incompatible(format!("csv output failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Incompatible(format!("csv output failed: {e}")))
}

fn float(v: f64) -> String {
    format!("{v:?}")
}

/// Columns `i,n_i`.
pub fn write_distribution_csv<W: Write>(out: W, dist: &ClusterDistribution) -> Result<()> {
    table(out, &["i", "n_i"], dist.counts.iter().enumerate().map(|(k, &v)| vec![(k + 1).to_string(), float(v)]))
}

/// Columns `m,c_m`; exact values as integers or `p/q`.
pub fn write_coeffs_csv<W: Write>(out: W, seq: &CoeffSequence) -> Result<()> {
    table(out, &["m", "c_m"], seq.to_strings().into_iter().enumerate().map(|(m, v)| vec![m.to_string(), v]))
}

/// Columns `size,count,stderr`: time-averaged cluster count per size.
pub fn write_histogram_csv<W: Write>(out: W, emp: &EmpiricalDistribution) -> Result<()> {
    table(
        out,
        &["size", "count", "stderr"],
        emp.n_hat
            .iter()
            .zip(&emp.stderr)
            .enumerate()
            .map(|(k, (&n, &se))| vec![(k + 1).to_string(), float(n), float(se)]),
    )
}

/// Columns `size,count`: avalanche counts after burn-in.
pub fn write_avalanche_csv<W: Write>(out: W, stats: &SimStats) -> Result<()> {
    table(
        out,
        &["size", "count"],
        stats.avalanche_hist.iter().enumerate().map(|(k, &c)| vec![(k + 1).to_string(), c.to_string()]),
    )
}
