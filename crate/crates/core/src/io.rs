//! CSV trajectory and grid files.
//!
//! Floats are written with the shortest representation that parses back to
//! the same value, so a write/read cycle is exact.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::simulate::Trajectory;

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Column data of a trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryColumns {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub filter_states: Vec<f64>,
    pub outputs: Vec<f64>,
    pub transformed: Vec<Vec<f64>>,
}

impl From<&Trajectory> for TrajectoryColumns {
    fn from(t: &Trajectory) -> Self {
        Self {
            times: t.times.clone(),
            states: t.states.clone(),
            filter_states: t.filter_states.clone(),
            outputs: t.outputs.clone(),
            transformed: t.transformed.clone(),
        }
    }
}

/// `t,x1..xn,eta,y_hat,xt1..xtn`.
/// Shortest text that parses back to `v`, switching to exponent form outside
/// `[1e-5, 1e16)` so tiny magnitudes stay readable.
pub fn format_float(v: f64) -> String {
    let m = v.abs();
    if m == 0.0 || !m.is_finite() || (1e-5..1e16).contains(&m) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.push("eta".into());
    h.push("y_hat".into());
    h.extend((1..=n).map(|i| format!("xt{i}")));
    h
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let n = traj.params.n;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(n)).map_err(csv_error)?;
    let mut row = Vec::with_capacity(2 * n + 3);
    for i in 0..traj.len() {
        row.clear();
        row.push(format_float(traj.times[i]));
        row.extend(traj.states[i].iter().map(|&v| format_float(v)));
        row.push(format_float(traj.filter_states[i]));
        row.push(format_float(traj.outputs[i]));
        row.extend(traj.transformed[i].iter().map(|&v| format_float(v)));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<TrajectoryColumns> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 5 || !(header.len() - 3).is_multiple_of(2) {
        return Err(Error::Format(format!(
            "unexpected trajectory header with {} columns",
            header.len()
        )));
    }
    let n = (header.len() - 3) / 2;
    if header != trajectory_header(n) {
        return Err(Error::Format(format!(
            "unexpected trajectory header `{}`",
            header.join(",")
        )));
    }
    let mut cols = TrajectoryColumns {
        times: Vec::new(),
        states: Vec::new(),
        filter_states: Vec::new(),
        outputs: Vec::new(),
        transformed: Vec::new(),
    };
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let values: Vec<f64> = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {}: `{f}`: {e}", line + 1)))
            })
            .collect::<Result<_>>()?;
        cols.times.push(values[0]);
        cols.states.push(values[1..=n].to_vec());
        cols.filter_states.push(values[n + 1]);
        cols.outputs.push(values[n + 2]);
        cols.transformed.push(values[n + 3..].to_vec());
    }
    Ok(cols)
}

/// Writes `names...,value` rows.
pub fn write_grid_csv<W: Write>(
    axis_names: &[String],
    rows: &[(Vec<f64>, f64)],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = axis_names.iter().map(String::as_str).collect();
    header.push("value");
    w.write_record(&header).map_err(csv_error)?;
    for (coords, value) in rows {
        let mut row: Vec<String> = coords.iter().map(|&v| format_float(v)).collect();
        row.push(format_float(*value));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Reads a grid file back into `(header, rows)`.
pub fn read_grid_csv<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            let rec = rec.map_err(csv_error)?;
            rec.iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::Format(format!("`{f}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}
