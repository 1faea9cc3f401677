//! The `verify` subcommand: checks on a stored trace, written as Markdown and CSV.

use std::fmt::Write as _;
use std::path::Path;

use atwflow_core::distance::{self, Orientation};
use atwflow_core::flow::{self, FlowTrace};
use atwflow_core::verification::{self, WeakSettings};
use atwflow_core::{Extent, FrozenModel};

use crate::output;
use crate::runner::{self, Setup};
use crate::scenario::{self, Loaded};
use crate::AppError;

/// Every check, in report order.
pub const ALL_CHECKS: [&str; 7] = ["dissipation", "comparison", "holder", "velocity", "laws", "curvature", "distance"];

/// Checks whose failure makes `verify` exit nonzero.
const HARD: [&str; 2] = ["dissipation", "comparison"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Reported without a threshold.
    Info,
    /// Not applicable to this trace.
    Skip,
}

impl Status {
    fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Info => "info",
            Status::Skip => "skip",
        }
    }

    fn from_bool(ok: bool) -> Status {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub quantity: String,
    pub status: Status,
    pub measured: f64,
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    fn push(&mut self, check: &str, quantity: &str, status: Status, measured: f64, threshold: Option<f64>) {
        self.rows.push(CheckRow {
            check: check.into(),
            quantity: quantity.into(),
            status,
            measured,
            threshold,
        });
    }

    pub fn hard_failures(&self) -> Vec<&CheckRow> {
        self.rows
            .iter()
            .filter(|r| r.status == Status::Fail && HARD.contains(&r.check.as_str()))
            .collect()
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("check,quantity,status,measured,threshold\n");
        for r in &self.rows {
            let th = r.threshold.map_or(String::new(), |t| t.to_string());
            let _ = writeln!(out, "{},{},{},{},{}", r.check, r.quantity, r.status.label(), r.measured, th);
        }
        out
    }

    pub fn markdown(&self) -> String {
        let mut out = String::from("# Verification report\n\n| check | quantity | status | measured | threshold |\n|---|---|---|---|---|\n");
        for r in &self.rows {
            let th = r.threshold.map_or("-".to_string(), |t| format!("{t:.4e}"));
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:.4e} | {} |",
                r.check,
                r.quantity,
                r.status.label(),
                r.measured,
                th
            );
        }
        out
    }
}

/// Runs the selected checks (all when `checks` is empty) on the trace in `dir` and writes
/// `report.md` and `report.csv` there.
pub fn verify(dir: &Path, checks: &[String]) -> Result<VerifyReport, AppError> {
    for c in checks {
        if !ALL_CHECKS.contains(&c.as_str()) {
            return Err(AppError::Input(format!(
                "unknown check `{c}`; expected one of {}",
                ALL_CHECKS.join(", ")
            )));
        }
    }
    let selected = |name: &str| checks.is_empty() || checks.iter().any(|c| c == name);
    let scenario_path = dir.join("scenario.json");
    if !scenario_path.exists() {
        return Err(AppError::Input(format!("{}: not a trace directory", dir.display())));
    }
    let loaded: Loaded = scenario::load(&scenario_path)?;
    let setup = Setup::new(&loaded)?;
    let trace = runner::load_trace(dir, &loaded, &setup)?;
    let mut rep = VerifyReport::default();

    if selected("dissipation") {
        let p0 = trace.initial_perimeter;
        let worst = trace.records.iter().map(|r| r.dissipation.slack).fold(0.0, f64::max);
        rep.push("dissipation", "max slack", Status::from_bool(worst <= 0.02 * p0), worst, Some(0.02 * p0));
    }
    if selected("comparison") {
        let other = dir.join("comparison");
        if other.join("diagnostics.csv").exists() {
            let second = runner::load_trace(&other, &loaded, &setup)?;
            let cells = comparison_violations(&trace, &second);
            rep.push("comparison", "violating cells", Status::from_bool(cells == 0), cells as f64, Some(0.0));
        } else {
            rep.push("comparison", "violating cells", Status::Skip, 0.0, None);
        }
    }
    if selected("holder") {
        let c_psi = setup.psi.constants().c_psi;
        let h = flow::holder_report(&trace, c_psi);
        rep.push("holder", "holder constant", Status::from_bool(h.holder_constant.is_finite()), h.holder_constant, None);
        rep.push("holder", "envelope ratio", Status::from_bool(h.envelope_ratio <= 1.1), h.envelope_ratio, Some(1.1));
    }
    if selected("velocity") {
        let v = flow::velocity_report(&trace);
        rep.push("velocity", "sup|v|·sqrt(h)", Status::Info, v.sup_scaled, None);
        rep.push("velocity", "int int v^2", Status::Info, v.l2, None);
    }
    if selected("laws") {
        laws(&trace, &setup, &mut rep);
    }
    if selected("curvature") {
        match verification::curvature_cross_check(&trace.states[0], &setup.phi, &WeakSettings::default()) {
            Ok((_, a)) => rep.push("curvature", "weak vs pointwise (rel L2)", Status::from_bool(a.relative_l2 <= 0.08), a.relative_l2, Some(0.08)),
            Err(_) => rep.push("curvature", "weak vs pointwise (rel L2)", Status::Skip, 0.0, None),
        }
    }
    if selected("distance") {
        distance_checks(&trace, &setup, &mut rep)?;
    }
    output::write_file(&dir.join("report.csv"), rep.csv().as_bytes())?;
    output::write_file(&dir.join("report.md"), rep.markdown().as_bytes())?;
    Ok(rep)
}

/// Cells violating the inclusion suggested by the initial sets.
pub fn comparison_violations(a: &FlowTrace, b: &FlowTrace) -> usize {
    let (inner, outer) = if a.states[0].cells_not_in(&b.states[0]) == 0 {
        (a, b)
    } else if b.states[0].cells_not_in(&a.states[0]) == 0 {
        (b, a)
    } else {
        // Disjoint pairs: the first set must stay inside the complement of the second.
        let comp = b.states.iter().map(|s| s.complement()).collect();
        let outer = FlowTrace {
            states: comp,
            ..b.clone()
        };
        return flow::nesting_violations(a, &outer).iter().map(|v| v.1).sum();
    };
    flow::nesting_violations(inner, outer).iter().map(|v| v.1).sum()
}

fn laws(trace: &FlowTrace, setup: &Setup, rep: &mut VerifyReport) {
    let contiguous = trace.records.iter().all(|r| !r.boundary.is_empty());
    if trace.records.len() < 3 || !contiguous {
        rep.push("laws", "curvature law defect", Status::Skip, 0.0, None);
        rep.push("laws", "velocity law defect", Status::Skip, 0.0, None);
        return;
    }
    let e0 = &trace.states[0];
    let centroid = centroid(e0);
    let horizon = *trace.times.last().expect("nonempty trace");
    let tests = verification::default_battery(centroid, e0.equivalent_radius(), horizon);
    match verification::distributional_laws_check(trace, &setup.phi, &setup.psi, &setup.forcing, &tests, &WeakSettings::default()) {
        Ok(r) => {
            let c = r.max_curvature_defect();
            let v = r.max_velocity_defect();
            rep.push("laws", "curvature law defect", Status::from_bool(c <= 0.1), c, Some(0.1));
            rep.push("laws", "velocity law defect", Status::from_bool(v <= 0.1), v, Some(0.1));
            rep.push("laws", "int int H^2", Status::Info, r.curvature_l2, None);
        }
        Err(_) => {
            rep.push("laws", "curvature law defect", Status::Skip, 0.0, None);
            rep.push("laws", "velocity law defect", Status::Skip, 0.0, None);
        }
    }
}

pub fn centroid(set: &atwflow_core::SetState) -> [f64; 2] {
    let g = set.grid();
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (k, &inside) in set.inside().iter().enumerate() {
        if inside {
            let c = g.center_of(k);
            sx += c[0];
            sy += c[1];
            n += 1;
        }
    }
    if n == 0 {
        return [g.origin[0] + 0.5 * g.extents()[0], g.origin[1] + 0.5 * g.extents()[1]];
    }
    [sx / n as f64, sy / n as f64]
}

fn distance_checks(trace: &FlowTrace, setup: &Setup, rep: &mut VerifyReport) -> Result<(), AppError> {
    let set = &trace.states[0];
    if matches!(set.extent(), Extent::Empty | Extent::Full) {
        rep.push("distance", "eikonal residual median", Status::Skip, 0.0, None);
        return Ok(());
    }
    let solver = |e: atwflow_core::Error| AppError::Solver(e.to_string());
    let psi = FrozenModel::new(&setup.psi, &setup.grid).map_err(solver)?;
    let settings = atwflow_core::incremental::SolverSettings::default().eikonal;
    let sd = distance::signed_distance_model(set, &setup.psi, settings).map_err(solver)?;
    let res = distance::eikonal_residual(&sd.values, set, &psi);
    rep.push(
        "distance",
        "eikonal residual median",
        Status::from_bool(res.residual.median <= 0.05),
        res.residual.median,
        Some(0.05),
    );
    let euclid_model = atwflow_core::AnisotropyModel::euclidean();
    let euclid = distance::signed_distance_model(set, &euclid_model, settings).map_err(solver)?;
    let c_psi = setup.psi.constants().c_psi;
    let sw = distance::euclidean_sandwich_check(&sd.values, &euclid.values, c_psi, 3.0 * setup.grid.spacing);
    let frac = if sw.cells > 0 { sw.max_violation } else { 0.0 };
    rep.push("distance", "sandwich violation", Status::from_bool(frac <= 0.03), frac, Some(0.03));
    let rev = setup.psi.reversed();
    let a = distance::distance_to_set(set, &setup.psi, Orientation::FromSet, settings).map_err(solver)?;
    let b = distance::distance_to_set(set, &rev, Orientation::ToSet, settings).map_err(solver)?;
    let diff = a.max_abs_diff(&b);
    rep.push("distance", "reversal identity", Status::from_bool(diff == 0.0), diff, Some(0.0));
    Ok(())
}
