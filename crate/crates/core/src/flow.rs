//! The discrete flow `E_t = T_{h,t} E_{t−h}` and its diagnostics.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::incremental::{DissipationReport, SolverSettings, StepOperator};
use crate::interface::Interface;
use crate::set::{Extent, SetState};
use crate::stats::Summary;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    pub h: f64,
    /// Truncated down to a multiple of `h`.
    pub horizon: f64,
    /// Every `record_stride`-th state is kept in the trace.
    pub record_stride: usize,
    /// Minimal distance in cells between the boundary and the frame.
    pub margin_cells: usize,
    pub solver: SolverSettings,
    /// Keep per-segment boundary velocity samples (needed by the distributional laws).
    pub keep_boundary_samples: bool,
}

impl FlowConfig {
    pub fn new(h: f64, horizon: f64) -> FlowConfig {
        FlowConfig {
            h,
            horizon,
            record_stride: 1,
            margin_cells: 4,
            solver: SolverSettings::default(),
            keep_boundary_samples: true,
        }
    }

    /// Number of steps up to the horizon.
    pub fn steps(&self) -> usize {
        // Guard against 0.036 / 1e-3 = 35.99999...
        ((self.horizon / self.h) * (1.0 + 1e-12)).floor() as usize
    }
}

/// Normal velocity `v_h = sd^ψ_{E_{t−h}} / h` sampled at a boundary segment of `E_t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySample {
    pub x: Vec2,
    /// Outward unit normal.
    pub normal: Vec2,
    pub length: f64,
    pub v: f64,
}

/// Diagnostics of the step producing `E_t` from `E_{t−h}`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    /// `P_φ(E_t) + ∫_{E_t} (sd/h − F_h)`.
    pub energy: f64,
    pub perimeter: f64,
    pub area: f64,
    /// `|E_t △ E_{t−h}|`.
    pub symmetric_difference: f64,
    pub hausdorff: f64,
    pub dissipation: DissipationReport,
    pub euler_lagrange: Option<Summary>,
    pub fattening_cells: usize,
    pub iterations: usize,
    pub gap: f64,
    /// `sup |v_h|` over the cells of `E_t △ E_{t−h}` (0 when it is empty).
    pub velocity_sup: f64,
    /// `h ∫_{∂E_t} v_h²`.
    pub velocity_l2: f64,
    pub boundary: Vec<BoundarySample>,
}

/// How the flow ended before the horizon.
#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    Horizon,
    Extinction { time: f64 },
    Filled { time: f64 },
    Aborted(Error),
}

#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub h: f64,
    /// Recorded times `k·h`, starting at 0.
    pub times: Vec<f64>,
    /// Step index of each recorded state.
    pub steps: Vec<usize>,
    pub states: Vec<SetState>,
    /// One record per performed step.
    pub records: Vec<StepRecord>,
    pub initial_perimeter: f64,
    pub termination: Termination,
    /// `‖f‖_∞` over the box and the run, from the sampled forcing averages.
    pub forcing_sup: f64,
}

impl FlowTrace {
    /// The state in force at time `t` (piecewise constant, right-continuous).
    pub fn state_at(&self, t: f64) -> &SetState {
        let k = ((t / self.h) * (1.0 + 1e-12)).floor().max(0.0) as usize;
        let idx = self.steps.partition_point(|&s| s <= k).max(1) - 1;
        &self.states[idx]
    }

    pub fn final_state(&self) -> &SetState {
        self.states.last().expect("trace holds the initial state")
    }

    pub fn is_aborted(&self) -> bool {
        matches!(self.termination, Termination::Aborted(_))
    }

    /// Turns an aborted trace into its error.
    pub fn into_result(self) -> Result<FlowTrace> {
        match self.termination {
            Termination::Aborted(e) => Err(e),
            _ => Ok(self),
        }
    }
}

fn margin_ok(set: &SetState, margin: usize, step: usize) -> Result<()> {
    if let Some(d) = set.boundary_frame_distance() {
        if d < margin {
            return Err(Error::Margin {
                step,
                distance_cells: d as f64,
            });
        }
    }
    Ok(())
}

/// Runs the flow from `e0`. Errors after the start end the trace early and are stored
/// in [`FlowTrace::termination`].
pub fn run(e0: SetState, op: &StepOperator<'_>, cfg: &FlowConfig) -> Result<FlowTrace> {
    if !(cfg.h > 0.0 && cfg.h.is_finite()) {
        return Err(Error::Input(alloc::format!("time step must be positive, got {}", cfg.h)));
    }
    let enforce_margin = matches!(e0.extent(), Extent::Bounded | Extent::CoBounded);
    if enforce_margin {
        margin_ok(&e0, cfg.margin_cells, 0)?;
    }
    match e0.extent() {
        Extent::Empty | Extent::Full => return Err(Error::DegenerateSet("initial set is empty or full")),
        _ => {}
    }
    let grid = *e0.grid();
    let initial_perimeter = crate::incremental::perimeter(&e0, op.phi())?;
    let mut trace = FlowTrace {
        h: cfg.h,
        times: alloc::vec![0.0],
        steps: alloc::vec![0],
        states: alloc::vec![e0.clone()],
        records: Vec::new(),
        initial_perimeter,
        termination: Termination::Horizon,
        forcing_sup: 0.0,
    };
    let stride = cfg.record_stride.max(1);
    let mut current = e0;
    let mut current_iface = Interface::extract(&current);
    let n = cfg.steps();
    for k in 1..=n {
        // E_{kh} = T_{h,(k−1)h} E_{(k−1)h}.
        let t_prev = (k - 1) as f64 * cfg.h;
        let time = k as f64 * cfg.h;
        let step = match op.step(&current, cfg.h, t_prev) {
            Ok(s) => s,
            Err(e) => {
                trace.termination = Termination::Aborted(with_step(e, k));
                return Ok(trace);
            }
        };
        let fsup = step.forcing.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        trace.forcing_sup = trace.forcing_sup.max(fsup);
        if step.is_extinct() {
            trace.termination = Termination::Extinction { time };
            push_state(&mut trace, step.e_min, k, time);
            return Ok(trace);
        }
        if step.e_min.extent() == Extent::Full {
            trace.termination = Termination::Filled { time };
            push_state(&mut trace, step.e_min, k, time);
            return Ok(trace);
        }
        let record = match record_step(op, &current, &current_iface, &step, k, time, cfg) {
            Ok(r) => r,
            Err(e) => {
                trace.termination = Termination::Aborted(with_step(e, k));
                return Ok(trace);
            }
        };
        trace.records.push(record);
        current = step.e_min;
        current_iface = Interface::extract(&current);
        if k % stride == 0 || k == n {
            push_state(&mut trace, current.clone(), k, time);
        }
        if enforce_margin {
            if let Err(e) = margin_ok(&current, cfg.margin_cells, k) {
                trace.termination = Termination::Aborted(e);
                return Ok(trace);
            }
        }
    }
    let _ = grid;
    Ok(trace)
}

fn with_step(e: Error, step: usize) -> Error {
    match e {
        Error::Margin { distance_cells, .. } => Error::Margin { step, distance_cells },
        other => other,
    }
}

fn push_state(trace: &mut FlowTrace, s: SetState, k: usize, time: f64) {
    trace.times.push(time);
    trace.steps.push(k);
    trace.states.push(s);
}

fn record_step(
    op: &StepOperator<'_>,
    prev: &SetState,
    prev_iface: &Interface,
    step: &crate::incremental::StepResult,
    k: usize,
    time: f64,
    cfg: &FlowConfig,
) -> Result<StepRecord> {
    let h = cfg.h;
    let e = &step.e_min;
    let iface = Interface::extract(e);
    let perimeter = iface.perimeter(op.phi())?;
    let energy = op.energy(e, &step.sd, &step.forcing, h)?;
    let dissipation = op.dissipation_check(prev, step, h)?;
    let euler_lagrange = op.euler_lagrange_residual(step, h)?;
    let mut sup: f64 = 0.0;
    for (idx, (a, b)) in e.inside().iter().zip(prev.inside()).enumerate() {
        if a != b {
            sup = sup.max((step.sd.data()[idx] / h).abs());
        }
    }
    let mut l2 = 0.0;
    let mut boundary = Vec::new();
    for s in iface.segments() {
        let v = step.sd.sample(s.mid) / h;
        l2 += s.length * v * v * h;
        if cfg.keep_boundary_samples {
            boundary.push(BoundarySample {
                x: s.mid,
                normal: s.normal,
                length: s.length,
                v,
            });
        }
    }
    Ok(StepRecord {
        step: k,
        time,
        energy,
        perimeter,
        area: e.area(),
        symmetric_difference: e.symmetric_difference_area(prev),
        hausdorff: iface.hausdorff(prev_iface),
        dissipation,
        euler_lagrange,
        fattening_cells: step.diagnostics.fattening_cells,
        iterations: step.diagnostics.iterations,
        gap: step.diagnostics.gap,
        velocity_sup: sup,
        velocity_l2: l2,
        boundary,
    })
}

/// Time-regularity constants of a trace.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HolderReport {
    /// `sup_{s<t} |E_s △ E_t| / √(t − s)` over recorded pairs.
    pub holder_constant: f64,
    /// `max_t P_φ(E_t) − P_φ(E_0)`.
    pub perimeter_excess: f64,
    /// `max_k P_φ(E_{kh}) / ((1 + κh‖f‖²_∞)^k P_φ(E_0))` with `κ = 2c_ψ²`.
    pub envelope_ratio: f64,
}

pub fn holder_report(trace: &FlowTrace, c_psi: f64) -> HolderReport {
    let cov: Vec<Vec<f64>> = trace.states.iter().map(|s| s.coverage()).collect();
    let da = trace.states[0].grid().cell_area();
    let mut holder: f64 = 0.0;
    for a in 0..cov.len() {
        for b in a + 1..cov.len() {
            let dt = trace.times[b] - trace.times[a];
            let diff: f64 = cov[a].iter().zip(&cov[b]).map(|(x, y)| (x - y).abs()).sum();
            holder = holder.max(diff * da / dt.sqrt());
        }
    }
    let p0 = trace.initial_perimeter;
    let kappa = 2.0 * c_psi * c_psi;
    let growth = 1.0 + kappa * trace.h * trace.forcing_sup * trace.forcing_sup;
    let mut excess: f64 = 0.0;
    let mut ratio: f64 = 1.0;
    for r in &trace.records {
        excess = excess.max(r.perimeter - p0);
        ratio = ratio.max(r.perimeter / (growth.powi(r.step as i32) * p0));
    }
    HolderReport {
        holder_constant: holder,
        perimeter_excess: excess,
        envelope_ratio: ratio,
    }
}

/// Discrete velocity bounds of a trace.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VelocityReport {
    /// `max_t sup|v_h| · √h`.
    pub sup_scaled: f64,
    pub sup: f64,
    /// `∫₀^T ∫_{∂E_t} v_h²`.
    pub l2: f64,
}

pub fn velocity_report(trace: &FlowTrace) -> VelocityReport {
    let sup = trace.records.iter().fold(0.0f64, |a, r| a.max(r.velocity_sup));
    VelocityReport {
        sup_scaled: sup * trace.h.sqrt(),
        sup,
        l2: trace.records.iter().map(|r| r.velocity_l2).sum(),
    }
}

/// Cells of `inner` outside `outer` at each common recorded time.
pub fn nesting_violations(inner: &FlowTrace, outer: &FlowTrace) -> Vec<(f64, usize)> {
    let mut out = Vec::new();
    for (t, s) in inner.times.iter().zip(&inner.states) {
        if let Some(j) = outer.times.iter().position(|u| (u - t).abs() < 1e-9 * inner.h.max(outer.h)) {
            out.push((*t, s.cells_not_in(&outer.states[j])));
        }
    }
    out
}

/// `|E^{(a)}_t △ E^{(b)}_t|` at the recorded times shared by both traces.
pub fn refinement_gaps(a: &FlowTrace, b: &FlowTrace) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (t, s) in a.times.iter().zip(&a.states) {
        let tol = 1e-9 * a.h.max(b.h);
        if let Some(j) = b.times.iter().position(|u| (u - t).abs() < tol) {
            out.push((*t, s.symmetric_difference_area(&b.states[j])));
        }
    }
    out
}

/// Pairwise gaps along a ladder of traces ordered by decreasing `h`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RefinementReport {
    pub h: Vec<f64>,
    /// `gaps[i]` compares rung `i` with rung `i + 1`.
    pub gaps: Vec<Vec<(f64, f64)>>,
}

impl RefinementReport {
    /// True when every common positive time sees strictly shrinking gaps down the ladder.
    pub fn strictly_decreasing(&self) -> bool {
        self.violations().is_empty()
    }

    /// Times `t > 0` at which some gap fails to decrease.
    pub fn violations(&self) -> Vec<f64> {
        let mut bad = Vec::new();
        for w in self.gaps.windows(2) {
            for &(t, g0) in &w[0] {
                if t <= 0.0 {
                    continue;
                }
                if let Some(&(_, g1)) = w[1].iter().find(|(u, _)| (u - t).abs() < 1e-9) {
                    if !(g1 < g0) {
                        bad.push(t);
                    }
                }
            }
        }
        bad
    }
}

pub fn refinement_study(ladder: &[FlowTrace]) -> RefinementReport {
    RefinementReport {
        h: ladder.iter().map(|t| t.h).collect(),
        gaps: ladder.windows(2).map(|w| refinement_gaps(&w[0], &w[1])).collect(),
    }
}
