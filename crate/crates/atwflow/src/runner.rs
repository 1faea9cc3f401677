//! Run orchestration behind the subcommands.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use atwflow_core::flow::{self, FlowTrace, StepRecord, Termination};
use atwflow_core::incremental::{DissipationReport, StepOperator};
use atwflow_core::interface::Interface;
use atwflow_core::levelset::{self, LevelLadder, Reconstruction, Variant};
use atwflow_core::{AnisotropyModel, Expr, Grid, ScalarField, SetState};
use rayon::prelude::*;

use crate::output::{self, Manifest};
use crate::scenario::Loaded;
use crate::AppError;

/// Worker pool honouring `ATWFLOW_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool, AppError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("ATWFLOW_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| AppError::Input(format!("ATWFLOW_THREADS must be a positive integer, got `{v}`")))?;
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| AppError::Input(e.to_string()))
}

/// Solver objects built from a scenario.
pub struct Setup {
    pub grid: Grid,
    pub phi: AnisotropyModel,
    pub psi: AnisotropyModel,
    pub forcing: Expr,
}

impl Setup {
    pub fn new(loaded: &Loaded) -> Result<Setup, AppError> {
        let s = &loaded.scenario;
        let (phi, psi) = s.models()?;
        Ok(Setup {
            grid: s.grid()?,
            phi,
            psi,
            forcing: s.forcing()?,
        })
    }

    pub fn operator(&self, loaded: &Loaded) -> Result<StepOperator<'_>, AppError> {
        StepOperator::new(&self.grid, &self.phi, &self.psi, &self.forcing, loaded.scenario.solver.settings())
            .map_err(|e| AppError::Input(e.to_string()))
    }
}

fn termination_label(t: &Termination) -> String {
    match t {
        Termination::Horizon => "horizon".into(),
        Termination::Extinction { time } => format!("extinction at t={time}"),
        Termination::Filled { time } => format!("filled at t={time}"),
        Termination::Aborted(e) => format!("aborted: {e}"),
    }
}

fn solver_error(trace: &FlowTrace) -> Option<AppError> {
    match &trace.termination {
        Termination::Aborted(e) => Some(AppError::Solver(format!("after {} steps: {e}", trace.records.len()))),
        _ => None,
    }
}

fn copy_scenario(loaded: &Loaded, out: &Path) -> Result<(), AppError> {
    let json = serde_json::to_string_pretty(&loaded.scenario).expect("scenario serializes");
    output::write_file(&out.join("scenario.json"), json.as_bytes())
}

fn evolve(loaded: &Loaded, setup: &Setup, e0: SetState) -> Result<FlowTrace, AppError> {
    let op = setup.operator(loaded)?;
    flow::run(e0, &op, &loaded.scenario.flow_config()).map_err(|e| match e {
        atwflow_core::Error::Margin { .. } | atwflow_core::Error::DegenerateSet(_) => AppError::Input(e.to_string()),
        other => AppError::Solver(other.to_string()),
    })
}

/// `run`: evolves the initial set (and the comparison set, if any) and writes the trace.
pub fn run(loaded: &Loaded, out: &Path) -> Result<FlowTrace, AppError> {
    let start = Instant::now();
    let setup = Setup::new(loaded)?;
    let s = &loaded.scenario;
    let e0 = s.initial.to_set(setup.grid, &loaded.base_dir)?;
    let companion = s
        .comparison
        .as_ref()
        .map(|c| c.to_set(setup.grid, &loaded.base_dir))
        .transpose()?;
    output::create_dir(out)?;
    copy_scenario(loaded, out)?;
    let pool = thread_pool()?;
    let (main, other) = pool.install(|| {
        rayon::join(
            || evolve(loaded, &setup, e0),
            || companion.map(|c| evolve(loaded, &setup, c)).transpose(),
        )
    });
    let trace = main?;
    output::write_trace(out, &trace)?;
    if let Some(other) = other? {
        output::write_trace(&out.join("comparison"), &other)?;
        if let Some(e) = solver_error(&other) {
            return Err(e);
        }
    }
    output::write_manifest(
        out,
        &Manifest {
            tool: "atwflow".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: "run".into(),
            scenario_sha256: loaded.hash.clone(),
            steps: trace.records.len(),
            termination: termination_label(&trace.termination),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        },
    )?;
    match solver_error(&trace) {
        Some(e) => Err(e),
        None => Ok(trace),
    }
}

/// One ladder step with the levels solved concurrently.
pub fn ladder_step(
    pool: &rayon::ThreadPool,
    op: &StepOperator<'_>,
    ladder: &LevelLadder,
    h: f64,
    t: f64,
) -> Result<(LevelLadder, usize), AppError> {
    let sets: Vec<SetState> = pool.install(|| {
        ladder
            .sets
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                levelset::step_level(op, s, ladder.variant, h, t)
                    .map_err(|e| AppError::Solver(format!("level {i} at t={t}: {e}")))
            })
            .collect::<Result<_, _>>()
    })?;
    let mut sets = sets;
    let corrections = levelset::enforce_nesting(&mut sets);
    Ok((
        LevelLadder {
            levels: ladder.levels.clone(),
            sets,
            variant: ladder.variant,
        },
        corrections,
    ))
}

/// Per-step summary of a level-set run.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelsetRow {
    pub step: usize,
    pub time: f64,
    pub corrections_plus: Option<usize>,
    pub corrections_minus: Option<usize>,
    /// Cells with `u⁻ > u⁺` when both variants run.
    pub ordering_violations: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelsetOutcome {
    pub rows: Vec<LevelsetRow>,
    /// Reconstructed `(time, u)` per variant at the recorded steps.
    pub plus: Vec<(f64, ScalarField)>,
    pub minus: Vec<(f64, ScalarField)>,
}

impl LevelsetOutcome {
    pub fn total_corrections(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.corrections_plus.unwrap_or(0) + r.corrections_minus.unwrap_or(0))
            .sum()
    }

    pub fn total_ordering_violations(&self) -> usize {
        self.rows.iter().filter_map(|r| r.ordering_violations).sum()
    }
}

/// `levelset`: evolves ladders for the requested variants.
pub fn run_levelset(
    loaded: &Loaded,
    levels: usize,
    variants: &[Variant],
    out: Option<&Path>,
) -> Result<LevelsetOutcome, AppError> {
    let start = Instant::now();
    let s = &loaded.scenario;
    let setup = Setup::new(loaded)?;
    let op = setup.operator(loaded)?;
    let u0 = s.initial_function(setup.grid, &loaded.base_dir)?;
    let pool = thread_pool()?;
    let cfg = s.flow_config();
    let n = cfg.steps();
    if let Some(out) = out {
        output::create_dir(&out.join("functions"))?;
        copy_scenario(loaded, out)?;
    }
    let mut ladders: Vec<LevelLadder> = variants
        .iter()
        .map(|&v| LevelLadder::from_function(&u0, levels, v).map_err(|e| AppError::Input(e.to_string())))
        .collect::<Result<_, _>>()?;
    let mut outcome = LevelsetOutcome {
        rows: Vec::new(),
        plus: Vec::new(),
        minus: Vec::new(),
    };
    let record = |outcome: &mut LevelsetOutcome, ladders: &[LevelLadder], step: usize, time: f64| -> Result<Option<usize>, AppError> {
        let mut recon = Vec::new();
        for lad in ladders {
            let u = levelset::reconstruct(lad, Reconstruction::Lower);
            let tag = match lad.variant {
                Variant::Plus => "plus",
                Variant::Minus => "minus",
            };
            if let Some(out) = out {
                let dir = out.join("ladder").join(tag);
                output::create_dir(&dir)?;
                for (i, set) in lad.sets.iter().enumerate() {
                    output::write_indicator(&dir.join(format!("set_{i:03}_{step:06}.u8")), set, step, time)?;
                }
                output::write_field(
                    &out.join("functions").join(format!("{tag}_{step:06}.f64")),
                    &u,
                    "function",
                    step,
                    time,
                )?;
            }
            match lad.variant {
                Variant::Plus => outcome.plus.push((time, u.clone())),
                Variant::Minus => outcome.minus.push((time, u.clone())),
            }
            recon.push((lad.variant, u));
        }
        let plus = recon.iter().find(|r| r.0 == Variant::Plus);
        let minus = recon.iter().find(|r| r.0 == Variant::Minus);
        Ok(match (plus, minus) {
            (Some(p), Some(m)) => Some(levelset::ordering_violations(&m.1, &p.1)),
            _ => None,
        })
    };
    let ord = record(&mut outcome, &ladders, 0, 0.0)?;
    outcome.rows.push(LevelsetRow {
        step: 0,
        time: 0.0,
        corrections_plus: None,
        corrections_minus: None,
        ordering_violations: ord,
    });
    for k in 1..=n {
        let t_prev = (k - 1) as f64 * cfg.h;
        let time = k as f64 * cfg.h;
        let mut row = LevelsetRow {
            step: k,
            time,
            corrections_plus: None,
            corrections_minus: None,
            ordering_violations: None,
        };
        for lad in ladders.iter_mut() {
            let (next, corr) = ladder_step(&pool, &op, lad, cfg.h, t_prev)?;
            *lad = next;
            match lad.variant {
                Variant::Plus => row.corrections_plus = Some(corr),
                Variant::Minus => row.corrections_minus = Some(corr),
            }
        }
        if k % cfg.record_stride == 0 || k == n {
            row.ordering_violations = record(&mut outcome, &ladders, k, time)?;
        }
        outcome.rows.push(row);
    }
    if let Some(out) = out {
        let mut csv = String::from("step,time,corrections_plus,corrections_minus,ordering_violations\n");
        let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
        for r in &outcome.rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                r.step,
                r.time,
                opt(r.corrections_plus),
                opt(r.corrections_minus),
                opt(r.ordering_violations)
            );
        }
        output::write_file(&out.join("levelset.csv"), csv.as_bytes())?;
        output::write_manifest(
            out,
            &Manifest {
                tool: "atwflow".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: format!("levelset --levels {levels}"),
                scenario_sha256: loaded.hash.clone(),
                steps: n,
                termination: "horizon".into(),
                wall_clock_seconds: start.elapsed().as_secs_f64(),
            },
        )?;
    }
    Ok(outcome)
}

/// Rebuilds a trace from a run directory: states from the level frames, dissipation
/// and velocity diagnostics from `diagnostics.csv`, boundary velocities recomputed from
/// the signed distance of the previous state.
pub fn load_trace(dir: &Path, loaded: &Loaded, setup: &Setup) -> Result<FlowTrace, AppError> {
    let states = output::read_states(dir)?;
    if states.is_empty() {
        return Err(AppError::Input(format!("{}: no frames", dir.display())));
    }
    let rows = output::read_diagnostics(&dir.join("diagnostics.csv"))?;
    let op = setup.operator(loaded)?;
    let h = loaded.scenario.h;
    let contiguous = states.windows(2).all(|w| w[1].0 == w[0].0 + 1);
    let mut records = Vec::with_capacity(rows.len());
    let mut forcing_sup: f64 = 0.0;
    for (k, row) in rows.iter().enumerate() {
        let f = op.forcing_average(&setup.grid, row.time - h, h);
        forcing_sup = f.data().iter().fold(forcing_sup, |a, v| a.max(v.abs()));
        let mut boundary = Vec::new();
        if contiguous && k + 1 < states.len() {
            let (sd, _) = op
                .signed_distance(&states[k].2)
                .map_err(|e| AppError::Solver(e.to_string()))?;
            for seg in Interface::extract(&states[k + 1].2).segments() {
                boundary.push(flow::BoundarySample {
                    x: seg.mid,
                    normal: seg.normal,
                    length: seg.length,
                    v: sd.sample(seg.mid) / h,
                });
            }
        }
        records.push(StepRecord {
            step: row.step,
            time: row.time,
            energy: row.energy,
            perimeter: row.perimeter,
            area: row.area,
            symmetric_difference: row.symmetric_difference,
            hausdorff: row.hausdorff,
            dissipation: DissipationReport {
                perimeter_before: row.perimeter_before,
                perimeter_after: row.perimeter,
                dissipation: row.dissipation,
                forcing_work: row.forcing_work,
                slack: row.dissipation_slack,
            },
            euler_lagrange: None,
            fattening_cells: row.fattening_cells,
            iterations: row.iterations,
            gap: row.gap,
            velocity_sup: row.velocity_sup,
            velocity_l2: row.velocity_l2,
            boundary,
        });
    }
    let initial_perimeter = atwflow_core::incremental::perimeter(&states[0].2, &setup.phi)
        .map_err(|e| AppError::Solver(e.to_string()))?;
    Ok(FlowTrace {
        h,
        times: states.iter().map(|s| s.1).collect(),
        steps: states.iter().map(|s| s.0).collect(),
        states: states.into_iter().map(|s| s.2).collect(),
        records,
        initial_perimeter,
        termination: Termination::Horizon,
        forcing_sup,
    })
}

/// `convergence`: runs the scenario at each `h` of the ladder (coarsest first).
pub fn convergence(loaded: &Loaded, ladder: &[f64], out: Option<&Path>) -> Result<Vec<FlowTrace>, AppError> {
    if ladder.len() < 2 {
        return Err(AppError::Input("a convergence ladder needs at least two time steps".into()));
    }
    let mut hs = ladder.to_vec();
    hs.sort_by(|a, b| b.total_cmp(a));
    let setup = Setup::new(loaded)?;
    let e0 = loaded.scenario.initial.to_set(setup.grid, &loaded.base_dir)?;
    let pool = thread_pool()?;
    let traces: Vec<FlowTrace> = pool.install(|| {
        hs.par_iter()
            .map(|&h| {
                let mut l = loaded.clone();
                l.scenario.h = h;
                l.scenario.record_stride = 1;
                evolve(&l, &setup, e0.clone())
            })
            .collect::<Result<_, _>>()
    })?;
    for t in &traces {
        if let Some(e) = solver_error(t) {
            return Err(e);
        }
    }
    if let Some(out) = out {
        output::create_dir(out)?;
        copy_scenario(loaded, out)?;
        output::write_file(&out.join("convergence.csv"), convergence_csv(&traces).as_bytes())?;
        let mut vel = String::from("h,velocity_sup,velocity_sup_sqrt_h,velocity_l2\n");
        for t in &traces {
            let v = flow::velocity_report(t);
            let _ = writeln!(vel, "{},{},{},{}", t.h, v.sup, v.sup_scaled, v.l2);
        }
        output::write_file(&out.join("velocity.csv"), vel.as_bytes())?;
    }
    Ok(traces)
}

/// `time,gap_0,gap_1,…` with `gap_i = |E^{(h_i)}_t △ E^{(h_{i+1})}_t|` at the times of
/// the coarsest rung, then a `monotone` flag per row.
pub fn convergence_csv(traces: &[FlowTrace]) -> String {
    let rep = flow::refinement_study(traces);
    let mut out = String::from("time");
    for i in 0..rep.gaps.len() {
        let _ = write!(out, ",gap_{}_{}", rep.h[i], rep.h[i + 1]);
    }
    out.push_str(",monotone\n");
    let Some(first) = rep.gaps.first() else { return out };
    for &(t, _) in first {
        let vals: Vec<Option<f64>> = rep
            .gaps
            .iter()
            .map(|g| g.iter().find(|(u, _)| (u - t).abs() < 1e-9).map(|x| x.1))
            .collect();
        let monotone = vals.windows(2).all(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => b < a || t <= 0.0,
            _ => true,
        });
        let _ = write!(out, "{t}");
        for v in &vals {
            match v {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        let _ = writeln!(out, ",{}", monotone as u8);
    }
    out
}
