//! JSON scenario schema and its translation into solver objects.

use std::path::{Path, PathBuf};

use atwflow_core::distance::EikonalSettings;
use atwflow_core::flow::FlowConfig;
use atwflow_core::incremental::SolverSettings;
use atwflow_core::{AnisotropyModel, Expr, Family, Grid, ScalarField, SetState, Shape};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::AppError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(rename = "box", default)]
    pub domain: Domain,
    /// Cells per axis.
    pub grid: [usize; 2],
    #[serde(default)]
    pub phi: AnisotropySpec,
    /// Defaults to `phi`.
    #[serde(default)]
    pub psi: Option<AnisotropySpec>,
    #[serde(default)]
    pub forcing: ExprSpec,
    pub initial: ShapeSpec,
    /// A second initial set evolved alongside for the comparison check.
    #[serde(default)]
    pub comparison: Option<ShapeSpec>,
    pub h: f64,
    /// Truncated down to a multiple of `h`.
    pub horizon: f64,
    #[serde(default = "one")]
    pub record_stride: usize,
    #[serde(default = "four")]
    pub margin_cells: usize,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub ladder: LadderSpec,
}

fn one() -> usize {
    1
}

fn four() -> usize {
    4
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub origin: [f64; 2],
    pub extents: [f64; 2],
}

impl Default for Domain {
    fn default() -> Self {
        Domain {
            origin: [0.0, 0.0],
            extents: [1.0, 1.0],
        }
    }
}

/// A number or an expression in `x`, `y`, `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExprSpec {
    Number(f64),
    Text(String),
}

impl Default for ExprSpec {
    fn default() -> Self {
        ExprSpec::Number(0.0)
    }
}

impl ExprSpec {
    pub fn to_expr(&self) -> Result<Expr, AppError> {
        match self {
            ExprSpec::Number(v) => Ok(Expr::Const(*v)),
            ExprSpec::Text(s) => Expr::parse(s).map_err(|e| AppError::Input(e.to_string())),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnisotropySpec {
    #[default]
    Euclidean,
    Riemannian {
        a11: ExprSpec,
        a12: ExprSpec,
        a22: ExprSpec,
    },
    Lp {
        exponent: f64,
        epsilon: f64,
    },
    Drifted {
        drift: [f64; 2],
    },
    Modulated {
        base: Box<AnisotropySpec>,
        modulation: ExprSpec,
    },
}

impl AnisotropySpec {
    pub fn to_family(&self) -> Result<Family, AppError> {
        Ok(match self {
            AnisotropySpec::Euclidean => Family::Euclidean,
            AnisotropySpec::Riemannian { a11, a12, a22 } => Family::Riemannian {
                a11: a11.to_expr()?,
                a12: a12.to_expr()?,
                a22: a22.to_expr()?,
            },
            AnisotropySpec::Lp { exponent, epsilon } => Family::SmoothedLp {
                exponent: *exponent,
                epsilon: *epsilon,
            },
            AnisotropySpec::Drifted { drift } => Family::Drifted { drift: *drift },
            AnisotropySpec::Modulated { base, modulation } => base.to_family()?.modulated(modulation.to_expr()?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Disk {
        center: [f64; 2],
        radius: f64,
    },
    Ellipse {
        center: [f64; 2],
        semi_axes: [f64; 2],
        #[serde(default)]
        angle: f64,
    },
    HalfPlane {
        normal: [f64; 2],
        offset: f64,
    },
    Union(Vec<ShapeSpec>),
    Intersection(Vec<ShapeSpec>),
    Difference(Box<ShapeSpec>, Box<ShapeSpec>),
    Complement(Box<ShapeSpec>),
    /// One byte per cell, row-major, nonzero inside; relative to the scenario file.
    Indicator {
        path: PathBuf,
    },
}

impl ShapeSpec {
    fn to_shape(&self) -> Option<Shape> {
        Some(match self {
            ShapeSpec::Disk { center, radius } => Shape::Disk {
                center: *center,
                radius: *radius,
            },
            ShapeSpec::Ellipse {
                center,
                semi_axes,
                angle,
            } => Shape::Ellipse {
                center: *center,
                semi_axes: *semi_axes,
                angle: *angle,
            },
            ShapeSpec::HalfPlane { normal, offset } => Shape::HalfPlane {
                normal: *normal,
                offset: *offset,
            },
            ShapeSpec::Union(v) => Shape::Union(v.iter().map(|s| s.to_shape()).collect::<Option<_>>()?),
            ShapeSpec::Intersection(v) => {
                Shape::Intersection(v.iter().map(|s| s.to_shape()).collect::<Option<_>>()?)
            }
            ShapeSpec::Difference(a, b) => Shape::Difference(Box::new(a.to_shape()?), Box::new(b.to_shape()?)),
            ShapeSpec::Complement(a) => Shape::Complement(Box::new(a.to_shape()?)),
            ShapeSpec::Indicator { .. } => return None,
        })
    }

    /// Analytic shape, if the description has no raw indicator in it.
    pub fn shape(&self) -> Option<Shape> {
        self.to_shape()
    }

    pub fn to_set(&self, grid: Grid, base_dir: &Path) -> Result<SetState, AppError> {
        if let Some(shape) = self.to_shape() {
            shape.validate().map_err(|e| AppError::Input(e.to_string()))?;
            return Ok(SetState::from_shape(grid, &shape));
        }
        match self {
            ShapeSpec::Indicator { path } => {
                let full = base_dir.join(path);
                let bytes = std::fs::read(&full)
                    .map_err(|e| AppError::Input(format!("cannot read indicator {}: {e}", full.display())))?;
                let inside: Vec<bool> = bytes.iter().map(|&b| b != 0).collect();
                SetState::from_indicator(grid, &inside).map_err(|e| AppError::Input(e.to_string()))
            }
            _ => Err(AppError::Input(
                "indicator files cannot be combined with analytic shapes".into(),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub gap_tolerance: f64,
    pub max_iterations: usize,
    pub threshold: f64,
    pub forcing_samples: usize,
    pub eikonal_max_sweeps: usize,
    pub eikonal_tolerance: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let s = SolverSettings::default();
        SolverSpec {
            gap_tolerance: s.gap_tolerance,
            max_iterations: s.max_iterations,
            threshold: s.threshold,
            forcing_samples: s.forcing_samples,
            eikonal_max_sweeps: s.eikonal.max_sweeps,
            eikonal_tolerance: s.eikonal.tolerance,
        }
    }
}

impl SolverSpec {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            gap_tolerance: self.gap_tolerance,
            max_iterations: self.max_iterations,
            threshold: self.threshold,
            forcing_samples: self.forcing_samples,
            eikonal: EikonalSettings {
                max_sweeps: self.eikonal_max_sweeps,
                tolerance: self.eikonal_tolerance,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderSpec {
    pub levels: usize,
    /// `u₀`; defaults to minus the level function of `initial` (so `{u₀ > 0}` is `E₀`).
    pub function: Option<ExprSpec>,
}

impl Default for LadderSpec {
    fn default() -> Self {
        LadderSpec {
            levels: 64,
            function: None,
        }
    }
}

/// A parsed scenario together with the directory it was read from.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub scenario: Scenario,
    pub base_dir: PathBuf,
    /// SHA-256 of the scenario file bytes, hex.
    pub hash: String,
}

pub fn load(path: &Path) -> Result<Loaded, AppError> {
    let bytes = std::fs::read(path).map_err(|e| AppError::Input(format!("cannot read {}: {e}", path.display())))?;
    let scenario = parse(&bytes)?;
    Ok(Loaded {
        scenario,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        hash: sha256_hex(&bytes),
    })
}

/// Parses and validates; schema errors carry the path to the offending field.
pub fn parse(bytes: &[u8]) -> Result<Scenario, AppError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let scenario: Scenario = serde_path_to_error::deserialize(de)
        .map_err(|e| AppError::Input(format!("scenario field `{}`: {}", e.path(), e.inner())))?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Scenario {
    pub fn validate(&self) -> Result<(), AppError> {
        let bad = |m: &str| Err(AppError::Input(m.to_string()));
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("`h` must be positive");
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad("`horizon` must be nonnegative");
        }
        if self.grid[0] < 4 || self.grid[1] < 4 {
            return bad("`grid` needs at least 4 cells per axis");
        }
        if self.record_stride == 0 {
            return bad("`record_stride` must be at least 1");
        }
        if self.ladder.levels == 0 {
            return bad("`ladder.levels` must be at least 1");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, AppError> {
        Grid::new(self.grid[0], self.grid[1], self.domain.origin, self.domain.extents)
            .map_err(|e| AppError::Input(e.to_string()))
    }

    pub fn models(&self) -> Result<(AnisotropyModel, AnisotropyModel), AppError> {
        let build = |spec: &AnisotropySpec| {
            AnisotropyModel::on_box(spec.to_family()?, self.domain.origin, self.domain.extents)
                .map_err(|e| AppError::Input(e.to_string()))
        };
        let phi = build(&self.phi)?;
        let psi = match &self.psi {
            Some(spec) => build(spec)?,
            None => phi.clone(),
        };
        Ok((phi, psi))
    }

    pub fn forcing(&self) -> Result<Expr, AppError> {
        self.forcing.to_expr()
    }

    pub fn flow_config(&self) -> FlowConfig {
        let mut cfg = FlowConfig::new(self.h, self.horizon);
        cfg.record_stride = self.record_stride;
        cfg.margin_cells = self.margin_cells;
        cfg.solver = self.solver.settings();
        cfg
    }

    /// `u₀` sampled at cell centres.
    pub fn initial_function(&self, grid: Grid, base_dir: &Path) -> Result<ScalarField, AppError> {
        match &self.ladder.function {
            Some(spec) => {
                let e = spec.to_expr()?;
                Ok(ScalarField::from_fn(grid, |x| e.eval(x[0], x[1], 0.0)))
            }
            None => Ok(self.initial.to_set(grid, base_dir)?.level().map(|v| -v)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_takes_defaults() {
        let s = parse(br#"{"grid":[64,64],"initial":{"disk":{"center":[0.5,0.5],"radius":0.3}},"h":1e-3,"horizon":0.01}"#).unwrap();
        assert_eq!(s.phi, AnisotropySpec::Euclidean);
        assert_eq!(s.record_stride, 1);
        assert_eq!(s.ladder.levels, 64);
        assert_eq!(s.solver.settings(), SolverSettings::default());
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = parse(br#"{"grid":[64,64],"phi":{"family":"hexagonal"},"initial":{"disk":{"center":[0.5,0.5],"radius":0.3}},"h":1e-3,"horizon":0.01}"#)
            .unwrap_err();
        assert!(err.to_string().contains("phi"), "{err}");
        let err = parse(br#"{"grid":[64,64],"initial":{"disk":{"center":[0.5,0.5],"radius":0.3}},"h":-1,"horizon":0.01}"#).unwrap_err();
        assert!(err.to_string().contains("`h`"));
    }

    #[test]
    fn nested_specs_round_trip() {
        let s = parse(
            br#"{"grid":[64,64],
                 "phi":{"family":"modulated","base":{"family":"riemannian","a11":2,"a12":0,"a22":"1+0.5*x"},"modulation":"1+0.1*sin(y)"},
                 "forcing":"2*t",
                 "initial":{"difference":[{"disk":{"center":[0.5,0.5],"radius":0.3}},{"disk":{"center":[0.5,0.5],"radius":0.1}}]},
                 "h":1e-3,"horizon":0.01}"#,
        )
        .unwrap();
        let back: Scenario = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        s.models().unwrap();
        assert_eq!(s.forcing().unwrap().eval(0.0, 0.0, 0.5), 1.0);
    }

    #[test]
    fn hash_tracks_content() {
        assert_ne!(sha256_hex(b"{}"), sha256_hex(b"{ }"));
        assert_eq!(sha256_hex(b"abc").len(), 64);
    }
}
