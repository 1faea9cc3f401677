//! File formats: raw frames with JSON sidecars, interface polylines, diagnostics CSV and
//! the run manifest. Everything written here is a deterministic function of its input.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use atwflow_core::flow::{FlowTrace, StepRecord};
use atwflow_core::interface::Interface;
use atwflow_core::{Grid, ScalarField, SetState};
use serde::{Deserialize, Serialize};

use crate::AppError;

/// Sidecar describing one raw frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub nx: usize,
    pub ny: usize,
    pub origin: [f64; 2],
    pub spacing: f64,
    /// `u8` (indicator, 1 inside) or `f64le`.
    pub dtype: String,
    /// `indicator`, `level` (negative inside) or `function`.
    pub kind: String,
    pub step: usize,
    pub time: f64,
}

impl FrameMeta {
    fn new(grid: &Grid, dtype: &str, kind: &str, step: usize, time: f64) -> FrameMeta {
        FrameMeta {
            nx: grid.nx,
            ny: grid.ny,
            origin: grid.origin,
            spacing: grid.spacing,
            dtype: dtype.into(),
            kind: kind.into(),
            step,
            time,
        }
    }

    pub fn grid(&self) -> Result<Grid, AppError> {
        let ext = [self.nx as f64 * self.spacing, self.ny as f64 * self.spacing];
        Grid::new(self.nx, self.ny, self.origin, ext).map_err(|e| AppError::Input(e.to_string()))
    }
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> AppError {
    AppError::Input(format!("{}: {e}", path.display()))
}

pub fn create_dir(path: &Path) -> Result<(), AppError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), AppError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn write_sidecar(path: &Path, meta: &FrameMeta) -> Result<(), AppError> {
    let json = serde_json::to_string_pretty(meta).expect("frame metadata serializes");
    write_file(&path.with_extension("json"), json.as_bytes())
}

pub fn write_indicator(path: &Path, set: &SetState, step: usize, time: f64) -> Result<(), AppError> {
    let bytes: Vec<u8> = set.inside().iter().map(|&b| b as u8).collect();
    write_file(path, &bytes)?;
    write_sidecar(path, &FrameMeta::new(set.grid(), "u8", "indicator", step, time))
}

pub fn write_field(path: &Path, field: &ScalarField, kind: &str, step: usize, time: f64) -> Result<(), AppError> {
    let bytes: Vec<u8> = field.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_file(path, &bytes)?;
    write_sidecar(path, &FrameMeta::new(field.grid(), "f64le", kind, step, time))
}

pub fn read_meta(path: &Path) -> Result<FrameMeta, AppError> {
    let side = path.with_extension("json");
    let text = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::Input(format!("{}: {e}", side.display())))
}

pub fn read_field(path: &Path) -> Result<(FrameMeta, ScalarField), AppError> {
    let meta = read_meta(path)?;
    if meta.dtype != "f64le" {
        return Err(AppError::Input(format!("{}: expected f64le data", path.display())));
    }
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let field = ScalarField::from_vec(meta.grid()?, data).map_err(|e| AppError::Input(format!("{}: {e}", path.display())))?;
    Ok((meta, field))
}

/// `x,y` per vertex; closed loops repeat their first vertex; loops separated by blank lines.
pub fn polyline_csv(set: &SetState) -> String {
    let itf = Interface::extract(set);
    let mut out = String::from("x,y\n");
    for (k, pl) in itf.polylines.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        for p in &pl.points {
            let _ = writeln!(out, "{},{}", p[0], p[1]);
        }
        if pl.closed {
            if let Some(p) = pl.points.first() {
                let _ = writeln!(out, "{},{}", p[0], p[1]);
            }
        }
    }
    out
}

/// Columns of `diagnostics.csv`.
pub const DIAGNOSTICS_HEADER: &str = "step,time,energy,perimeter,area,symmetric_difference,hausdorff,\
perimeter_before,dissipation,forcing_work,dissipation_slack,euler_lagrange_median,euler_lagrange_max,\
fattening_cells,iterations,gap,velocity_sup,velocity_l2";

pub fn diagnostics_csv(records: &[StepRecord]) -> String {
    let mut out = String::from(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in records {
        let (elm, elx) = r.euler_lagrange.map_or((f64::NAN, f64::NAN), |s| (s.median, s.max));
        let d = &r.dissipation;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.time,
            r.energy,
            r.perimeter,
            r.area,
            r.symmetric_difference,
            r.hausdorff,
            d.perimeter_before,
            d.dissipation,
            d.forcing_work,
            d.slack,
            elm,
            elx,
            r.fattening_cells,
            r.iterations,
            r.gap,
            r.velocity_sup,
            r.velocity_l2
        );
    }
    out
}

/// One parsed row of `diagnostics.csv`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub perimeter: f64,
    pub area: f64,
    pub symmetric_difference: f64,
    pub hausdorff: f64,
    pub perimeter_before: f64,
    pub dissipation: f64,
    pub forcing_work: f64,
    pub dissipation_slack: f64,
    pub euler_lagrange_median: f64,
    pub euler_lagrange_max: f64,
    pub fattening_cells: usize,
    pub iterations: usize,
    pub gap: f64,
    pub velocity_sup: f64,
    pub velocity_l2: f64,
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRow>, AppError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| AppError::Input(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .collect::<Result<Vec<DiagnosticsRow>, _>>()
        .map_err(|e| AppError::Input(format!("{}: {e}", path.display())))
}

/// Frame file names of a trace directory.
pub fn level_frame(dir: &Path, step: usize) -> PathBuf {
    dir.join("frames").join(format!("level_{step:06}.f64"))
}

pub fn indicator_frame(dir: &Path, step: usize) -> PathBuf {
    dir.join("frames").join(format!("indicator_{step:06}.u8"))
}

pub fn polyline_file(dir: &Path, step: usize) -> PathBuf {
    dir.join("polylines").join(format!("interface_{step:06}.csv"))
}

/// Writes every recorded state of a trace plus `diagnostics.csv`.
pub fn write_trace(dir: &Path, trace: &FlowTrace) -> Result<(), AppError> {
    create_dir(&dir.join("frames"))?;
    create_dir(&dir.join("polylines"))?;
    for ((state, &step), &time) in trace.states.iter().zip(&trace.steps).zip(&trace.times) {
        write_indicator(&indicator_frame(dir, step), state, step, time)?;
        write_field(&level_frame(dir, step), state.level(), "level", step, time)?;
        write_file(&polyline_file(dir, step), polyline_csv(state).as_bytes())?;
    }
    write_file(&dir.join("diagnostics.csv"), diagnostics_csv(&trace.records).as_bytes())
}

/// Reads the level frames of a trace directory in step order: `(step, time, set)`.
pub fn read_states(dir: &Path) -> Result<Vec<(usize, f64, SetState)>, AppError> {
    let frames = dir.join("frames");
    let mut paths: Vec<PathBuf> = fs::read_dir(&frames)
        .map_err(|e| io_err(&frames, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "f64")
                && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("level_"))
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let (meta, field) = read_field(p)?;
            Ok((meta.step, meta.time, SetState::from_level(field)))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub scenario_sha256: String,
    pub steps: usize,
    pub termination: String,
    /// Excluded from the byte-for-byte reproducibility guarantee.
    pub wall_clock_seconds: f64,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), AppError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_file(&dir.join("manifest.json"), json.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use atwflow_core::Shape;

    #[test]
    fn field_frames_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::unit(16);
        let f = ScalarField::from_fn(g, |x| (x[0] * 7.0).sin() + x[1] / 3.0);
        let p = dir.path().join("u.f64");
        write_field(&p, &f, "function", 3, 0.25).unwrap();
        let (meta, back) = read_field(&p).unwrap();
        assert_eq!(back, f);
        assert_eq!((meta.step, meta.time, meta.kind.as_str()), (3, 0.25, "function"));
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 16 * 16 * 8);
    }

    #[test]
    fn polylines_close_their_loops() {
        let g = Grid::unit(32);
        let s = SetState::from_shape(g, &Shape::disk([0.5, 0.5], 0.25));
        let csv = polyline_csv(&s);
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert!(rows.len() > 10);
        assert_eq!(rows.first(), rows.last());
    }
}
