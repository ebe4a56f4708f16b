//! CSV emitters for the series produced by the oracle and the simulator.

use std::io::Write;

use crate::error::Result;
use crate::exactdist::LltSeries;
use crate::montecarlo::{CltReport, HitSeries};

/// Columns: n, A_n, p_n, prediction, ratio.
pub fn write_llt_csv<W: Write>(writer: W, series: &LltSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "A_n", "p_n", "prediction", "ratio"])?;
    for row in &series.rows {
        w.write_record([
            row.n.to_string(),
            format!("{:.12e}", row.a_n),
            format!("{:.12e}", row.p_n),
            format!("{:.12e}", row.prediction),
            format!("{:.12e}", row.ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: n, cov11, cov12, cov22, normality_stat, p_value.
pub fn write_clt_csv<W: Write>(writer: W, report: &CltReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "cov11", "cov12", "cov22", "normality_stat", "p_value"])?;
    for c in &report.checkpoints {
        w.write_record([
            c.n.to_string(),
            format!("{:.12e}", c.cov[0][0]),
            format!("{:.12e}", c.cov[0][1]),
            format!("{:.12e}", c.cov[1][1]),
            c.normality_stat.map_or(String::new(), |s| format!("{s:.6e}")),
            c.p_value.map_or(String::new(), |p| format!("{p:.4}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: n, p_hat, lo, hi.
pub fn write_hits_csv<W: Write>(writer: W, series: &HitSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "p_hat", "lo", "hi"])?;
    for (i, p) in series.p_hat.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            format!("{p:.8e}"),
            format!("{:.8e}", series.lo[i]),
            format!("{:.8e}", series.hi[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
