//! Parameter sweeps over inverter sizing, PV penetration, placement and
//! controller, and the front/rear comparison built from them.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::Config;
use crate::controllers::{solve_controller, ControlProblem, ControllerKind, OptimizationResult};
use crate::error::{Error, Result};
use crate::feeder::{FeederTopology, PlacementKind};
use crate::metrics::{energy_savings, voltage_variation, ScenarioMetrics};
use crate::profiles::DailyProfile;
use crate::qp::QpStatus;

pub const RESULTS_HEADER: [&str; 10] = [
    "s_max",
    "a",
    "placement",
    "controller",
    "delta_v",
    "loss_pu",
    "savings",
    "status",
    "iters",
    "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub s_max: f64,
    pub a: f64,
    pub placement: PlacementKind,
    pub controller: ControllerKind,
    pub seed: u64,
}

impl ScenarioSpec {
    fn key(&self) -> JobKey {
        JobKey {
            s_max: self.s_max.to_bits(),
            a: self.a.to_bits(),
            placement: self.placement,
            controller: self.controller,
        }
    }

    fn baseline_key(&self) -> JobKey {
        JobKey {
            controller: ControllerKind::NoControl,
            ..self.key()
        }
    }

    /// File-name stem for per-scenario detail output.
    pub fn stem(&self) -> String {
        format!("smax{}_a{}_{}_{}", self.s_max, self.a, self.placement, self.controller)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct JobKey {
    s_max: u64,
    a: u64,
    placement: PlacementKind,
    controller: ControllerKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioStatus {
    Solved,
    Infeasible,
    MaxIter,
    /// Solver reported success but the schedule fails a bound check.
    Violation(String),
    Error(String),
}

impl ScenarioStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioStatus::Solved => "solved",
            ScenarioStatus::Infeasible => "infeasible",
            ScenarioStatus::MaxIter => "max_iter",
            ScenarioStatus::Violation(_) => "violation",
            ScenarioStatus::Error(_) => "error",
        }
    }

    /// Solved or cleanly proven infeasible.
    pub fn is_conclusive(&self) -> bool {
        matches!(self, ScenarioStatus::Solved | ScenarioStatus::Infeasible)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub spec: ScenarioSpec,
    pub metrics: Option<ScenarioMetrics>,
    pub status: ScenarioStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub wall_ms: f64,
}

/// Grids to sweep; the Cartesian product is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub s_max: Vec<f64>,
    pub penetration: Vec<f64>,
    pub placements: Vec<PlacementKind>,
    pub controllers: Vec<ControllerKind>,
}

impl SweepPlan {
    pub fn from_config(cfg: &Config) -> Self {
        Self {
            s_max: cfg.s_max.clone(),
            penetration: cfg.penetration.clone(),
            placements: cfg.placements.clone(),
            controllers: cfg.controllers.clone(),
        }
    }

    /// Scenarios ordered by s_max, then penetration, placement, controller.
    pub fn specs(&self, seed: u64) -> Vec<ScenarioSpec> {
        let mut out = Vec::new();
        for &s_max in &self.s_max {
            for &a in &self.penetration {
                for &placement in &self.placements {
                    for &controller in &self.controllers {
                        out.push(ScenarioSpec {
                            s_max,
                            a,
                            placement,
                            controller,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.s_max.is_empty() || self.penetration.is_empty() || self.placements.is_empty() || self.controllers.is_empty() {
            return Err(Error::Argument("sweep grids must be non-empty".into()));
        }
        Ok(())
    }
}

/// A solved scenario, available to the sink for detail output.
pub struct ScenarioDetail<'a> {
    pub result: &'a ScenarioResult,
    pub outcome: Option<&'a OptimizationResult>,
}

struct JobOutput {
    outcome: std::result::Result<OptimizationResult, String>,
    wall_ms: f64,
}

fn run_job(cfg: &Config, topology: &FeederTopology, daily: &DailyProfile, spec: &ScenarioSpec) -> Result<OptimizationResult> {
    let placement = cfg.placement(spec.a, spec.placement)?;
    let profiles = cfg.node_profiles(daily, spec.s_max, &placement)?;
    let problem = ControlProblem {
        topology,
        profiles: &profiles,
        pv_nodes: placement.nodes(),
        b_max: cfg.b_max()?,
        epsilon: cfg.epsilon,
    };
    solve_controller(spec.controller, &problem, &cfg.controller_options())
}

fn guarded_job(cfg: &Config, topology: &FeederTopology, daily: &DailyProfile, spec: &ScenarioSpec) -> JobOutput {
    let start = Instant::now();
    let outcome = match catch_unwind(AssertUnwindSafe(|| run_job(cfg, topology, daily, spec))) {
        Ok(Ok(r)) => Ok(r),
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => Err(panic
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| panic.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "scenario panicked".into())),
    };
    JobOutput {
        outcome,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

fn scenario_status(r: &OptimizationResult) -> ScenarioStatus {
    match (r.feasible, r.solver.status) {
        (true, _) => ScenarioStatus::Solved,
        (false, QpStatus::Infeasible) => ScenarioStatus::Infeasible,
        (false, QpStatus::MaxIter) => ScenarioStatus::MaxIter,
        (false, QpStatus::Solved) => ScenarioStatus::Violation(r.binding.clone().unwrap_or_default()),
    }
}

fn assemble(spec: ScenarioSpec, job: &JobOutput, baseline: &JobOutput) -> ScenarioResult {
    match &job.outcome {
        Err(msg) => ScenarioResult {
            spec,
            metrics: None,
            status: ScenarioStatus::Error(msg.clone()),
            iterations: 0,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            wall_ms: job.wall_ms,
        },
        Ok(r) => {
            let status = scenario_status(r);
            let savings = match (&baseline.outcome, status == ScenarioStatus::Solved) {
                (Ok(b), true) if b.feasible => energy_savings(b.loss, r.loss).ok(),
                _ => None,
            };
            ScenarioResult {
                spec,
                metrics: Some(ScenarioMetrics {
                    delta_v: voltage_variation(&r.state),
                    loss: r.loss,
                    savings,
                }),
                status,
                iterations: r.solver.iterations,
                primal_residual: r.solver.primal_residual,
                dual_residual: r.solver.dual_residual,
                wall_ms: job.wall_ms,
            }
        }
    }
}

/// Runs every scenario of `plan` on the feeder realization of `seed`.
///
/// Scenarios are solved in parallel on up to `cfg.workers` threads. The
/// no-control baseline of each (s_max, a, placement) cell is solved once and
/// shared. `sink` sees results in plan order as soon as each one and every
/// earlier one is done. A failing scenario is recorded in its own row.
pub fn run_sweep<F>(cfg: &Config, plan: &SweepPlan, seed: u64, mut sink: F) -> Result<Vec<ScenarioResult>>
where
    F: FnMut(ScenarioDetail<'_>) -> Result<()>,
{
    plan.validate()?;
    cfg.validate()?;
    let topology = cfg.topology(seed)?;
    let daily = cfg.daily_profile()?;
    let specs = plan.specs(seed);

    // unique jobs, baselines included, in first-needed order
    let mut job_index: HashMap<JobKey, usize> = HashMap::new();
    let mut jobs: Vec<ScenarioSpec> = Vec::new();
    let mut needs: Vec<(usize, usize)> = Vec::with_capacity(specs.len());
    for spec in &specs {
        let mut slot = |s: ScenarioSpec, k: JobKey| {
            *job_index.entry(k).or_insert_with(|| {
                jobs.push(s);
                jobs.len() - 1
            })
        };
        let base = slot(
            ScenarioSpec {
                controller: ControllerKind::NoControl,
                ..*spec
            },
            spec.baseline_key(),
        );
        let own = slot(*spec, spec.key());
        needs.push((own, base));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    let (tx, rx) = mpsc::channel::<(usize, JobOutput)>();
    let mut done: Vec<Option<JobOutput>> = (0..jobs.len()).map(|_| None).collect();
    let mut results = Vec::with_capacity(specs.len());
    let mut sink_error = None;

    std::thread::scope(|scope| {
        let jobs = &jobs;
        let topology = &topology;
        let daily = &daily;
        let pool = &pool;
        scope.spawn(move || {
            pool.install(|| {
                jobs.par_iter().enumerate().for_each_with(tx, |tx, (i, spec)| {
                    let out = guarded_job(cfg, topology, daily, spec);
                    let _ = tx.send((i, out));
                });
            });
        });
        let mut next = 0;
        for (i, out) in rx {
            done[i] = Some(out);
            while next < specs.len() {
                let (own, base) = needs[next];
                let (Some(job), Some(baseline)) = (&done[own], &done[base]) else {
                    break;
                };
                let result = assemble(specs[next], job, baseline);
                if sink_error.is_none() {
                    let detail = ScenarioDetail {
                        result: &result,
                        outcome: job.outcome.as_ref().ok(),
                    };
                    if let Err(e) = sink(detail) {
                        sink_error = Some(e);
                    }
                }
                results.push(result);
                next += 1;
            }
        }
    });
    match sink_error {
        Some(e) => Err(e),
        None => Ok(results),
    }
}

pub fn write_results_header<W: Write>(w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record(RESULTS_HEADER)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_result_row<W: Write>(w: &mut csv::Writer<W>, r: &ScenarioResult) -> Result<()> {
    let m = r.metrics.as_ref();
    w.write_record([
        r.spec.s_max.to_string(),
        r.spec.a.to_string(),
        r.spec.placement.to_string(),
        r.spec.controller.to_string(),
        fmt_opt(m.map(|m| m.delta_v)),
        fmt_opt(m.map(|m| m.loss)),
        fmt_opt(m.and_then(|m| m.savings)),
        r.status.as_str().to_string(),
        r.iterations.to_string(),
        format!("{:.3}", r.wall_ms),
    ])?;
    Ok(())
}

/// Front/rear differences for one (s_max, a, controller) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementComparison {
    pub s_max: f64,
    pub a: f64,
    pub controller: ControllerKind,
    /// `delta_v(front) - delta_v(rear)`.
    pub delta_v_gap: Option<f64>,
    /// `savings(rear) - savings(front)`.
    pub savings_gap: Option<f64>,
    pub rear_dominates: Option<bool>,
    /// Rows of the pair left out because they did not solve.
    pub skipped: usize,
}

pub const COMPARISON_HEADER: [&str; 7] = [
    "s_max",
    "a",
    "controller",
    "delta_v_front_minus_rear",
    "savings_rear_minus_front",
    "rear_dominates",
    "skipped",
];

/// Pairs every front result with its rear counterpart.
pub fn compare_placements(results: &[ScenarioResult]) -> Result<Vec<PlacementComparison>> {
    let key = |r: &ScenarioResult| (r.spec.s_max.to_bits(), r.spec.a.to_bits(), r.spec.controller);
    let mut order = Vec::new();
    let mut pairs: HashMap<(u64, u64, ControllerKind), [Option<&ScenarioResult>; 2]> = HashMap::new();
    for r in results {
        let entry = pairs.entry(key(r)).or_insert_with(|| {
            order.push(key(r));
            [None, None]
        });
        let side = match r.spec.placement {
            PlacementKind::Front => 0,
            PlacementKind::Rear => 1,
        };
        entry[side].get_or_insert(r);
    }
    order
        .into_iter()
        .map(|k| {
            let [front, rear] = pairs[&k];
            let (Some(front), Some(rear)) = (front, rear) else {
                let any = front.or(rear).expect("entry has a row");
                return Err(Error::Pairing {
                    s_max: any.spec.s_max,
                    a: any.spec.a,
                    controller: any.spec.controller.to_string(),
                });
            };
            let usable = |r: &ScenarioResult| {
                r.status == ScenarioStatus::Solved && r.metrics.is_some_and(|m| m.savings.is_some())
            };
            let skipped = [front, rear].iter().filter(|r| !usable(r)).count();
            let (mut dv, mut sv, mut dom) = (None, None, None);
            if skipped == 0 {
                let (f, r) = (front.metrics.unwrap(), rear.metrics.unwrap());
                let (fs, rs) = (f.savings.unwrap(), r.savings.unwrap());
                dv = Some(f.delta_v - r.delta_v);
                sv = Some(rs - fs);
                dom = Some(r.delta_v <= f.delta_v && rs >= fs);
            }
            Ok(PlacementComparison {
                s_max: front.spec.s_max,
                a: front.spec.a,
                controller: front.spec.controller,
                delta_v_gap: dv,
                savings_gap: sv,
                rear_dominates: dom,
                skipped,
            })
        })
        .collect()
}

pub fn write_comparison<W: Write>(writer: W, rows: &[PlacementComparison]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COMPARISON_HEADER)?;
    for c in rows {
        w.write_record([
            c.s_max.to_string(),
            c.a.to_string(),
            c.controller.to_string(),
            fmt_opt(c.delta_v_gap),
            fmt_opt(c.savings_gap),
            c.rear_dominates.map(|b| b.to_string()).unwrap_or_default(),
            c.skipped.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<comparison csv>", e))?;
    Ok(())
}

/// Solver report line for one scenario.
pub fn write_solver_report<W: Write>(writer: W, outcome: &OptimizationResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["controller", "status", "iterations", "primal_res", "dual_res"])?;
    w.write_record([
        outcome.kind.to_string(),
        outcome.status_str().to_string(),
        outcome.solver.iterations.to_string(),
        outcome.solver.primal_residual.to_string(),
        outcome.solver.dual_residual.to_string(),
    ])?;
    w.flush().map_err(|e| Error::io("<solver csv>", e))?;
    Ok(())
}

/// Solves one scenario on the feeder realization `spec.seed`, together with
/// its no-control baseline, and returns the row plus the full outcome.
pub fn solve_scenario(cfg: &Config, spec: ScenarioSpec) -> Result<(ScenarioResult, Option<OptimizationResult>)> {
    if !(spec.s_max >= 1.0 && spec.s_max.is_finite()) {
        return Err(Error::Argument(format!("s_max must be >= 1, got {}", spec.s_max)));
    }
    if !(spec.a > 0.0 && spec.a <= 1.0) {
        return Err(Error::Argument(format!("penetration must be in (0, 1], got {}", spec.a)));
    }
    let plan = SweepPlan {
        s_max: vec![spec.s_max],
        penetration: vec![spec.a],
        placements: vec![spec.placement],
        controllers: vec![spec.controller],
    };
    let mut outcome = None;
    let mut results = run_sweep(cfg, &plan, spec.seed, |d| {
        outcome = d.outcome.cloned();
        Ok(())
    })?;
    let result = results.pop().ok_or_else(|| Error::Argument("empty scenario plan".into()))?;
    Ok((result, outcome))
}

/// Runs the sweep of `cfg` and writes `results.csv` (streamed, one row per
/// finished scenario) and `comparison.csv` into `out`. With `detail`, each
/// solved scenario also gets state, schedule and solver CSVs under
/// `out/detail`. The comparison is skipped when placements are not paired.
pub fn write_sweep(cfg: &Config, out: &Path, detail: bool) -> Result<Vec<ScenarioResult>> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let detail_dir = out.join("detail");
    if detail {
        fs::create_dir_all(&detail_dir).map_err(|e| Error::io(&detail_dir, e))?;
    }
    let create = |path: &Path| File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e));
    let results_path = out.join("results.csv");
    let mut writer = csv::Writer::from_writer(create(&results_path)?);
    write_results_header(&mut writer)?;

    let plan = SweepPlan::from_config(cfg);
    let results = run_sweep(cfg, &plan, cfg.seed, |d| {
        write_result_row(&mut writer, d.result)?;
        writer.flush().map_err(|e| Error::io(&results_path, e))?;
        if let (true, Some(outcome)) = (detail, d.outcome) {
            let stem = d.result.spec.stem();
            outcome.state.write_csv(create(&detail_dir.join(format!("{stem}_state.csv")))?)?;
            outcome.schedule.write_csv(create(&detail_dir.join(format!("{stem}_schedule.csv")))?)?;
            write_solver_report(create(&detail_dir.join(format!("{stem}_solver.csv")))?, outcome)?;
        }
        Ok(())
    })?;

    match compare_placements(&results) {
        Ok(rows) => write_comparison(create(&out.join("comparison.csv"))?, &rows)?,
        Err(Error::Pairing { .. }) => {}
        Err(e) => return Err(e),
    }
    Ok(results)
}
