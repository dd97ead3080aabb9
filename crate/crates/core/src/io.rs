//! CSV and JSON writers for executions, observer and tracking runs.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::analysis::DwellEstimate;
use crate::error::{Error, Result};
use crate::hybrid::HybridExecution;
use crate::observer::ObserverRun;
use crate::tracking::TrackingRun;
use crate::Vector;

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("i/o: {e}"))
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

fn push_vec(row: &mut Vec<String>, v: &Vector) {
    row.extend(v.iter().map(|&c| fmt(c)));
}

fn dim(rows: &[Vector]) -> usize {
    rows.first().map_or(0, |v| v.len())
}

/// Execution as `t,interval_index,event,x_1..x_n`. Jumps appear as a `pre`
/// row and a `post` row at the same time.
pub fn write_execution_csv<W: Write>(exec: &HybridExecution, out: W) -> Result<()> {
    let n = exec.initial_state().len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "interval_index".into(), "event".into()];
    header.extend(indexed("x", n));
    w.write_record(&header).map_err(io_err)?;
    for (j, arc) in exec.arcs.iter().enumerate() {
        let last = arc.samples.len().saturating_sub(1);
        for (i, s) in arc.samples.iter().enumerate() {
            let event = if j > 0 && i == 0 {
                "post"
            } else if j < exec.jumps.len() && i == last {
                "pre"
            } else {
                "flow"
            };
            let mut row = vec![fmt(s.t), j.to_string(), event.to_string()];
            push_vec(&mut row, &s.x);
            w.write_record(&row).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Glued trajectory as `t,zeta_1..zeta_m`.
pub fn write_glued_csv<W: Write>(times: &[f64], zeta: &[Vector], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(indexed("zeta", dim(zeta)));
    w.write_record(&header).map_err(io_err)?;
    for (t, z) in times.iter().zip(zeta) {
        let mut row = vec![fmt(*t)];
        push_vec(&mut row, z);
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Observer run as `t,x_*,zeta_hat_*,zeta_bar_*,x_hat_*,e_glued,e_state`.
pub fn write_observer_csv<W: Write>(run: &ObserverRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(indexed("x", dim(&run.x)));
    header.extend(indexed("zeta_hat", dim(&run.zeta_hat)));
    header.extend(indexed("zeta_bar", dim(&run.zeta_bar)));
    header.extend(indexed("x_hat", dim(&run.x_hat)));
    header.push("e_glued".into());
    header.push("e_state".into());
    w.write_record(&header).map_err(io_err)?;
    let errs = run.errors();
    for i in 0..run.times.len() {
        let mut row = vec![fmt(run.times[i])];
        push_vec(&mut row, &run.x[i]);
        push_vec(&mut row, &run.zeta_hat[i]);
        push_vec(&mut row, &run.zeta_bar[i]);
        push_vec(&mut row, &run.x_hat[i]);
        row.push(fmt(run.e_glued[i]));
        row.push(fmt(errs[i]));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Tracking run as `t,x_*,r_*,zeta_*,zeta_r_*,u_*,u_r_*,glued_err,state_err`.
pub fn write_tracking_csv<W: Write>(run: &TrackingRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(indexed("x", dim(&run.x)));
    header.extend(indexed("r", dim(&run.r)));
    header.extend(indexed("zeta", dim(&run.zeta)));
    header.extend(indexed("zeta_r", dim(&run.zeta_r)));
    header.extend(indexed("u", dim(&run.u)));
    header.extend(indexed("u_r", dim(&run.u_r)));
    header.push("glued_err".into());
    header.push("state_err".into());
    w.write_record(&header).map_err(io_err)?;
    for i in 0..run.times.len() {
        let mut row = vec![fmt(run.times[i])];
        for v in [&run.x[i], &run.r[i], &run.zeta[i], &run.zeta_r[i], &run.u[i], &run.u_r[i]] {
            push_vec(&mut row, v);
        }
        row.push(fmt(run.glued_err[i]));
        row.push(fmt(run.state_err[i]));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Dwell estimate as `eps,raw_alpha,alpha`.
pub fn write_dwell_csv<W: Write>(est: &DwellEstimate, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eps", "raw_alpha", "alpha"]).map_err(io_err)?;
    for k in 0..est.eps_grid.len() {
        w.write_record([fmt(est.eps_grid[k]), fmt(est.raw_alpha[k]), fmt(est.alpha_values[k])])
            .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value).map_err(io_err)
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(std::io::BufWriter<std::fs::File>) -> Result<()>,
{
    let file = std::fs::File::create(path).map_err(io_err)?;
    f(std::io::BufWriter::new(file))
}
