//! File formats.
//!
//! Trajectory CSV, one row per sample:
//!
//! ```text
//! t,x,y,vx,vy,theta_lifted,arc_index
//! ```
//!
//! `t` is time since the first launch, `theta_lifted` the continuous polar
//! angle along the arc the row belongs to, and `arc_index` counts arcs from
//! zero. Floats are written in shortest round-trip decimal form.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use boltzmann::orbits::PeriodicOrbit;
use boltzmann::symdyn::SemiconjugacyReport;
use boltzmann::{BallisticArc, Params};
use serde::Serialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "t,x,y,vx,vy,theta_lifted,arc_index";

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

pub struct TrajectoryWriter {
    out: BufWriter<File>,
    path: std::path::PathBuf,
    t0: f64,
    arcs: usize,
}

impl TrajectoryWriter {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let mut out = create(path)?;
        writeln!(out, "{CSV_HEADER}").map_err(|e| io_err(path, e))?;
        Ok(TrajectoryWriter { out, path: path.to_owned(), t0: 0.0, arcs: 0 })
    }

    pub fn push(&mut self, arc: &BallisticArc) -> Result<(), CliError> {
        for s in &arc.samples {
            writeln!(
                self.out,
                "{},{},{},{},{},{},{}",
                self.t0 + s.t,
                s.pos.x,
                s.pos.y,
                s.vel.x,
                s.vel.y,
                s.theta_lifted,
                self.arcs
            )
            .map_err(|e| io_err(&self.path, e))?;
        }
        self.t0 += arc.flight_time;
        self.arcs += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize, CliError> {
        self.out.flush().map_err(|e| io_err(&self.path, e))?;
        Ok(self.arcs)
    }
}

pub fn write_trajectory<'a>(path: &Path, arcs: impl IntoIterator<Item = &'a BallisticArc>) -> Result<usize, CliError> {
    let mut w = TrajectoryWriter::create(path)?;
    for a in arcs {
        w.push(a)?;
    }
    w.finish()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| io_err(path, e))
}

#[derive(Debug, Serialize)]
pub struct OrbitRecord {
    pub schema_version: u32,
    pub params: Params,
    pub word: Vec<i64>,
    pub bounce_x: Vec<f64>,
    #[serde(rename = "W")]
    pub w: f64,
    pub residuals: Vec<f64>,
    pub windings: Vec<i64>,
    pub flight_times: Vec<f64>,
    pub boundary_derivatives: Vec<[f64; 2]>,
    pub replay_closure: f64,
    /// Symbol check of the `word` command: the report, or the error that
    /// stopped it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semiconjugacy: Option<Result<SemiconjugacyReport, String>>,
}

impl OrbitRecord {
    pub fn new(o: &PeriodicOrbit, p: &Params) -> Self {
        OrbitRecord {
            schema_version: SCHEMA_VERSION,
            params: *p,
            word: o.word.symbols.clone(),
            bounce_x: o.bounce_x.clone(),
            w: o.w_value,
            residuals: o.residuals.clone(),
            windings: o.windings(),
            flight_times: o.flight_times(),
            boundary_derivatives: o.boundary_derivatives.clone(),
            replay_closure: o.replay_closure,
            semiconjugacy: None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Diagnostics<'a> {
    pub schema_version: u32,
    pub command: &'a str,
    pub error: String,
    pub diagnostics: Option<serde_json::Value>,
}
