//! Simulation log records and their CSV form.
//!
//! Values are rounded to nine significant digits when a record is created,
//! so writing and re-reading a log reproduces the records exactly.

use std::io::{Read, Write};
use std::path::Path;

use trajplan_core::{Error, Result};

use crate::sim::CycleTiming;

pub const LOG_HEADER: [&str; 20] = [
    "t_s",
    "x_m",
    "y_m",
    "psi_rad",
    "delta_rad",
    "v_mps",
    "d_perp_m",
    "psi_r_rad",
    "s_r_m",
    "u_steer_rate_radps",
    "u_accel_mps2",
    "xi_hat_v_perp_mps",
    "xi_hat_a_perp_mps2",
    "xi_hat_psi_rad",
    "xi_hat_kappa_1pm",
    "xi_hat_d_perp_m",
    "xi_hat_v_mps",
    "kappa_ref_1pm",
    "v_tar_mps",
    "a_perp_mps2",
];

const COLUMNS: usize = LOG_HEADER.len();

pub const TIMING_HEADER: [&str; 4] = ["t_s", "course_us", "vehicle_us", "cycle_us"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimLogRecord {
    pub t: f64,
    pub state: [f64; 8],
    pub control: [f64; 2],
    /// Target representative state at the current reference point.
    pub xi_hat: [f64; 6],
    pub kappa_ref: f64,
    pub v_tar: f64,
    /// Achieved lateral acceleration `v^2 kappa_v`.
    pub a_perp: f64,
}

/// Canonical text form: nine significant digits, negative zero printed as zero.
pub fn format_value(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.8e}")
}

/// Rounds to the value that [`format_value`] represents.
pub fn quantize(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    format_value(v).parse().unwrap_or(v)
}

impl SimLogRecord {
    fn fields(&self) -> [f64; COLUMNS] {
        let mut out = [0.0; COLUMNS];
        out[0] = self.t;
        out[1..9].copy_from_slice(&self.state);
        out[9..11].copy_from_slice(&self.control);
        out[11..17].copy_from_slice(&self.xi_hat);
        out[17] = self.kappa_ref;
        out[18] = self.v_tar;
        out[19] = self.a_perp;
        out
    }

    fn from_fields(f: &[f64]) -> Self {
        let mut r = Self {
            t: f[0],
            state: [0.0; 8],
            control: [0.0; 2],
            xi_hat: [0.0; 6],
            kappa_ref: f[17],
            v_tar: f[18],
            a_perp: f[19],
        };
        r.state.copy_from_slice(&f[1..9]);
        r.control.copy_from_slice(&f[9..11]);
        r.xi_hat.copy_from_slice(&f[11..17]);
        r
    }
}

pub fn write_log<W: Write>(out: W, records: &[SimLogRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LOG_HEADER)?;
    for r in records {
        w.write_record(r.fields().iter().map(|&v| format_value(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log<R: Read>(input: R) -> Result<Vec<SimLogRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(LOG_HEADER) {
        return Err(Error::Io("unexpected log header".into()));
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let fields: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Io(format!("bad log value {f:?}: {e}"))))
            .collect::<Result<_>>()?;
        if fields.len() != COLUMNS {
            return Err(Error::Io(format!("expected {COLUMNS} columns, got {}", fields.len())));
        }
        records.push(SimLogRecord::from_fields(&fields));
    }
    Ok(records)
}

pub fn write_log_file(path: impl AsRef<Path>, records: &[SimLogRecord]) -> Result<()> {
    write_log(std::io::BufWriter::new(std::fs::File::create(path)?), records)
}

pub fn read_log_file(path: impl AsRef<Path>) -> Result<Vec<SimLogRecord>> {
    read_log(std::fs::File::open(path)?)
}

pub fn write_timings<W: Write>(out: W, timings: &[CycleTiming]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TIMING_HEADER)?;
    for t in timings {
        w.write_record([t.t, t.course_us, t.vehicle_us, t.cycle_us].map(format_value))?;
    }
    w.flush()?;
    Ok(())
}
