//! CSV trace of an optimization run.

use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::optimizer::IterRecord;

pub const COLUMNS: [&str; 14] = [
    "iter",
    "stage",
    "eps",
    "eta",
    "gamma",
    "F_total",
    "F_misfit",
    "F_perimdiff",
    "F_mm",
    "F_reg",
    "step",
    "pixel_err",
    "d_min_pct",
    "nonbinary_px",
];

/// Leading comment line; the only part of a trace that varies between
/// identical runs.
pub fn timestamp_line() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# ilt trace, unix time {secs}\n")
}

pub fn row(r: &IterRecord) -> String {
    let o = &r.objective;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        r.iter,
        r.stage,
        r.eps,
        r.eta,
        r.gamma,
        o.total,
        o.misfit,
        o.perim_diff,
        o.mm,
        o.reg,
        r.step,
        r.pixel_err,
        r.d_min_pct,
        r.nonbinary_px
    )
}

/// Header, column names, the initial state as iteration 0, then one row
/// per iteration.
pub fn render(initial: &IterRecord, records: &[IterRecord]) -> String {
    let mut out = timestamp_line();
    writeln!(out, "{}", COLUMNS.join(",")).expect("writing to a String");
    out.push_str(&row(initial));
    for r in records {
        out.push_str(&row(r));
    }
    out
}

/// Drops the timestamp line so traces of separate runs can be compared.
pub fn strip_timestamp(csv: &str) -> &str {
    if csv.starts_with('#') {
        csv.split_once('\n').map_or("", |(_, rest)| rest)
    } else {
        csv
    }
}
