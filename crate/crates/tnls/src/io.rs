//! CSV and JSON artifacts: fields, trajectories, modulation and virial series.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::Sample;
use crate::error::{Error, Result};
use crate::grid::{make_grid, ComplexField, RadialGrid};
use crate::modulation::TrackedSample;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn grid_header(g: &RadialGrid) -> String {
    format!("# dim={} r_max={} M={} stretch={}", g.dim, g.r_max, g.m, g.stretch)
}

/// Parse the `# dim=.. r_max=.. M=.. stretch=..` line.
fn parse_header(line: &str) -> Option<(usize, f64, usize, f64)> {
    let mut dim = None;
    let mut r_max = None;
    let mut m = None;
    let mut stretch = None;
    for kv in line.trim_start_matches('#').split_whitespace() {
        let (k, v) = kv.split_once('=')?;
        match k {
            "dim" => dim = v.parse().ok(),
            "r_max" => r_max = v.parse().ok(),
            "M" => m = v.parse().ok(),
            "stretch" => stretch = v.parse().ok(),
            _ => {}
        }
    }
    Some((dim?, r_max?, m?, stretch?))
}

pub fn write_field_csv(path: impl AsRef<Path>, f: &ComplexField) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    writeln!(out, "{}", grid_header(&f.grid)).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "re", "im"]).map_err(|e| Error::io(path, e))?;
    for (r, z) in f.grid.nodes.iter().zip(&f.values) {
        w.serialize((r, z.re, z.im)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a field CSV, rebuilding its grid from the header. Fails when the
/// node column does not reproduce the grid.
pub fn read_field_csv(path: impl AsRef<Path>) -> Result<ComplexField> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().unwrap_or("");
    let (dim, r_max, m, stretch) =
        parse_header(first).ok_or_else(|| Error::io(path, "missing '# dim= r_max= M= stretch=' header"))?;
    let grid = make_grid(dim, r_max, m, stretch)?;
    read_field_on(path, &text, &grid)
}

fn read_field_on(path: &Path, text: &str, grid: &Arc<RadialGrid>) -> Result<ComplexField> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut values = Vec::with_capacity(grid.m);
    for (i, rec) in rdr.deserialize::<(f64, f64, f64)>().enumerate() {
        let (r, re, im) = rec.map_err(|e| Error::io(path, e))?;
        let node = *grid.nodes.get(i).ok_or_else(|| Error::io(path, "more rows than grid nodes"))?;
        if (r - node).abs() > 1e-12 * node.max(1.0) {
            return Err(Error::io(path, format!("row {i}: r = {r} does not match grid node {node}")));
        }
        values.push(Complex64::new(re, im));
    }
    ComplexField::new(grid, values).map_err(|e| Error::io(path, e))
}

/// Write serializable rows with a header taken from the field names.
pub fn write_rows<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, v: &T) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, v).map_err(|e| Error::io(path, e))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub mass: f64,
    pub h1: f64,
    pub dee_signed: f64,
    pub potential_ratio: f64,
}

impl From<&Sample> for TrajectoryRow {
    fn from(s: &Sample) -> Self {
        TrajectoryRow {
            t: s.t,
            energy: s.energy,
            mass: s.mass,
            h1: s.h1,
            dee_signed: s.dee_signed,
            potential_ratio: s.potential_ratio,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModulationRow {
    pub t: f64,
    pub theta: f64,
    pub mu: f64,
    pub alpha: f64,
    pub dee_mag: f64,
    pub ortho_residual: f64,
    pub ok: bool,
}

impl From<&TrackedSample> for ModulationRow {
    fn from(s: &TrackedSample) -> Self {
        match &s.state {
            Some(st) => ModulationRow {
                t: s.t,
                theta: st.theta,
                mu: st.mu,
                alpha: st.alpha,
                dee_mag: s.dee_mag,
                ortho_residual: st.ortho_residual,
                ok: st.ok,
            },
            None => ModulationRow {
                t: s.t,
                theta: f64::NAN,
                mu: f64::NAN,
                alpha: f64::NAN,
                dee_mag: s.dee_mag,
                ortho_residual: f64::NAN,
                ok: false,
            },
        }
    }
}

pub fn write_trajectory_csv(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    write_rows(path, &samples.iter().map(TrajectoryRow::from).collect::<Vec<_>>())
}

pub fn write_modulation_csv(path: impl AsRef<Path>, series: &[TrackedSample]) -> Result<()> {
    write_rows(path, &series.iter().map(ModulationRow::from).collect::<Vec<_>>())
}

/// Long-format plot data: one (series, x, y) triple per row.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PlotData {
    rows: Vec<(String, f64, f64)>,
}

impl PlotData {
    pub fn push_series(&mut self, name: &str, xy: impl IntoIterator<Item = (f64, f64)>) {
        self.rows.extend(xy.into_iter().map(|(x, y)| (name.to_string(), x, y)));
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["series", "x", "y"]).map_err(|e| Error::io(path, e))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
