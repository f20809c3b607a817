//! Plant files (JSON) and trajectory exports (CSV).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LtiSystem, Trajectory};
use crate::error::{Error, Result};

/// On-disk plant: matrices as row-major nested arrays plus sensor labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub sensor_labels: Vec<String>,
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::dims(what, format!("{ncols} entries per row"), "ragged rows"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl PlantFile {
    pub fn from_system(sys: &LtiSystem, sensor_labels: Vec<String>) -> Self {
        Self {
            a: to_rows(sys.a()),
            b: to_rows(sys.b()),
            c: to_rows(sys.c()),
            x0: sys.x0().iter().copied().collect(),
            sensor_labels,
        }
    }

    pub fn to_system(&self) -> Result<LtiSystem> {
        let sys = LtiSystem::new(
            from_rows(&self.a, "A")?,
            from_rows(&self.b, "B")?,
            from_rows(&self.c, "C")?,
            DVector::from_vec(self.x0.clone()),
        )?;
        if !self.sensor_labels.is_empty() && self.sensor_labels.len() != sys.p() {
            return Err(Error::dims("sensor_labels", sys.p(), self.sensor_labels.len()));
        }
        Ok(sys)
    }

    /// Labels, defaulting to `s1, s2, ..`.
    pub fn labels(&self) -> Vec<String> {
        if self.sensor_labels.is_empty() {
            (1..=self.c.len()).map(|k| format!("s{k}")).collect()
        } else {
            self.sensor_labels.clone()
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

/// Writes `t, u_1..u_m, yhat_1..yhat_r, ytilde_1..ytilde_q`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.m()).map(|i| format!("u_{i}")));
    header.extend((1..=traj.r()).map(|i| format!("yhat_{i}")));
    header.extend((1..=traj.q()).map(|i| format!("ytilde_{i}")));
    w.write_record(&header)?;
    for i in 0..traj.len() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push((traj.t0 + i).to_string());
        rec.extend(traj.u_at(i).iter().map(|v| v.to_string()));
        rec.extend(traj.y_hat_at(i).iter().map(|v| v.to_string()));
        rec.extend(traj.y_tilde_at(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the format written by [`write_trajectory_csv`]. Rows must be
/// consecutive in `t`.
pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Trajectory> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.get(0) != Some("t") {
        return Err(Error::Parse("first trajectory column must be `t`".into()));
    }
    let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
    let (m, rr, q) = (count("u_"), count("yhat_"), count("ytilde_"));
    if 1 + m + rr + q != header.len() {
        return Err(Error::Parse(format!("unexpected trajectory columns: {header:?}")));
    }
    let mut t0 = None;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let t: usize = rec[0].parse().map_err(|e| Error::Parse(format!("t on row {}: {e}", row + 1)))?;
        let start = *t0.get_or_insert(t);
        if t != start + row {
            return Err(Error::Parse(format!("non-consecutive t = {t} on row {}", row + 1)));
        }
        let vals = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {e}", row + 1))))
            .collect::<Result<Vec<_>>>()?;
        cols.push(vals);
    }
    let len = cols.len();
    let u = DMatrix::from_fn(m, len, |i, t| cols[t][i]);
    let y_hat = DMatrix::from_fn(rr, len, |i, t| cols[t][m + i]);
    let y_tilde = DMatrix::from_fn(q, len, |i, t| cols[t][m + rr + i]);
    Trajectory::new(u, y_hat, y_tilde, t0.unwrap_or(0))
}
