//! Day-long loss minimization over battery charge rates and inverter VARs.
//!
//! Flows are linear in the controls, so total loss is a convex quadratic
//! in them. Each regime builds that quadratic program with a different set
//! of free variables:
//!
//! - `Global`: charge rates and PV inverter VARs.
//! - `Local`: VARs fixed by [`local_control_law`], charge rates free.
//! - `NoControl`: VARs zero, charge rates free. This is the savings baseline.
//! - `Passive`: nothing free; batteries idle and inverters off.
//!
//! State of charge is carried as auxiliary variables tied to the charge
//! rates by one balance row per battery and slot, which keeps the problem
//! banded in time.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distflow::{
    linear_flow, total_loss, BetaIndexing, ControlSchedule, LossModel, NetworkState, V0,
};
use crate::error::{Error, Result};
use crate::feeder::FeederTopology;
use crate::profiles::NodeProfiles;
use crate::qp::{solve_qp, CooMatrix, QpSettings, QpSolution, QpStatus, QuadraticProgram};

/// Diagonal regularization on charge-rate and VAR variables (in normalized
/// units) that picks a unique schedule among equal-loss ones.
pub const TIKHONOV: f64 = 1e-9;

/// Absolute slack when checking a returned schedule against its bounds.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Global,
    Local,
    NoControl,
    Passive,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Global,
        ControllerKind::Local,
        ControllerKind::NoControl,
        ControllerKind::Passive,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::Global => "global",
            ControllerKind::Local => "local",
            ControllerKind::NoControl => "no_control",
            ControllerKind::Passive => "passive",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "global" => Ok(ControllerKind::Global),
            "local" => Ok(ControllerKind::Local),
            "no_control" | "nocontrol" | "none" => Ok(ControllerKind::NoControl),
            "passive" => Ok(ControllerKind::Passive),
            _ => Err(Error::Argument(format!(
                "unknown controller '{s}' (expected global, local, no_control or passive)"
            ))),
        }
    }
}

/// End-of-day state of charge requirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalSoc {
    /// Only the capacity bounds apply.
    #[default]
    Free,
    /// Batteries end the day empty, as they started.
    Zero,
}

/// Reactive power an inverter supplies under the local rule: match the
/// node's own VAR demand, saturating at the inverter's capability.
pub fn local_control_law(q_c: f64, q_g_max: f64) -> f64 {
    debug_assert!(q_g_max >= 0.0);
    if q_c.abs() <= q_g_max {
        q_c
    } else {
        q_c.signum() * q_g_max
    }
}

/// Feeder, injections and equipment for one optimization.
#[derive(Debug, Clone, Copy)]
pub struct ControlProblem<'a> {
    pub topology: &'a FeederTopology,
    pub profiles: &'a NodeProfiles,
    /// Nodes that carry both PV and a battery, ascending.
    pub pv_nodes: &'a [usize],
    /// Battery capacity, per-unit energy.
    pub b_max: f64,
    /// Allowed voltage deviation from the substation voltage.
    pub epsilon: f64,
}

impl ControlProblem<'_> {
    fn validate(&self) -> Result<()> {
        let n = self.topology.n();
        if self.profiles.n() != n {
            return Err(Error::Argument(format!(
                "profiles cover {} nodes but the feeder has {n}",
                self.profiles.n()
            )));
        }
        if self.pv_nodes.iter().any(|&j| j == 0 || j > n) {
            return Err(Error::Placement(format!("PV nodes must lie in 1..={n}")));
        }
        if self.pv_nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Placement("PV nodes must be strictly ascending".into()));
        }
        if !(self.b_max >= 0.0 && self.b_max.is_finite()) {
            return Err(Error::Argument(format!("battery capacity must be >= 0, got {}", self.b_max)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Argument(format!("epsilon must be in (0, 1), got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControllerOptions {
    pub indexing: BetaIndexing,
    pub terminal_soc: TerminalSoc,
    /// Replaces the hard voltage bounds with a linear penalty of this weight
    /// (per slot, on the largest normalized violation).
    pub voltage_penalty: Option<f64>,
    pub qp: QpSettings,
}

/// Position of every variable in the program's decision vector.
///
/// Variables are grouped by slot: charge rates, then VARs (Global only),
/// then the state of charge at the end of the slot, then an optional
/// voltage slack.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableMap {
    slots: usize,
    batteries: Vec<usize>,
    var_nodes: Vec<usize>,
    slack: bool,
}

impl VariableMap {
    fn stride(&self) -> usize {
        2 * self.batteries.len() + self.var_nodes.len() + usize::from(self.slack)
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Nodes whose charge rates are decisions.
    pub fn batteries(&self) -> &[usize] {
        &self.batteries
    }

    /// Nodes whose VARs are decisions.
    pub fn var_nodes(&self) -> &[usize] {
        &self.var_nodes
    }

    /// `k`-th battery's charge rate in slot `t`.
    pub fn beta(&self, k: usize, t: usize) -> usize {
        t * self.stride() + k
    }

    /// `k`-th VAR node's output in slot `t`.
    pub fn var(&self, k: usize, t: usize) -> usize {
        t * self.stride() + self.batteries.len() + k
    }

    /// `k`-th battery's stored energy at the end of slot `t`.
    pub fn soc(&self, k: usize, t: usize) -> usize {
        t * self.stride() + self.batteries.len() + self.var_nodes.len() + k
    }

    fn slack(&self, t: usize) -> Option<usize> {
        self.slack
            .then(|| t * self.stride() + 2 * self.batteries.len() + self.var_nodes.len())
    }

    /// Charge-rate and VAR decisions, excluding state-of-charge and slack
    /// auxiliaries.
    pub fn decision_count(&self) -> usize {
        (self.batteries.len() + self.var_nodes.len()) * self.slots
    }

    /// Length of the full variable vector.
    pub fn len(&self) -> usize {
        self.stride() * self.slots
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// What a constraint row of the program enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintRow {
    Voltage { node: usize, slot: usize },
    VoltageUpper { node: usize, slot: usize },
    VoltageLower { node: usize, slot: usize },
    VarLimit { node: usize, slot: usize },
    SocBalance { node: usize, slot: usize },
    SocLimit { node: usize, slot: usize },
    SlackSign { slot: usize },
}

impl fmt::Display for ConstraintRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // slots are reported 1-based
        match *self {
            ConstraintRow::Voltage { node, slot } => {
                write!(f, "voltage bounds at node {node}, slot {}", slot + 1)
            }
            ConstraintRow::VoltageUpper { node, slot } => {
                write!(f, "upper voltage bound at node {node}, slot {}", slot + 1)
            }
            ConstraintRow::VoltageLower { node, slot } => {
                write!(f, "lower voltage bound at node {node}, slot {}", slot + 1)
            }
            ConstraintRow::VarLimit { node, slot } => {
                write!(f, "inverter VAR limit at node {node}, slot {}", slot + 1)
            }
            ConstraintRow::SocBalance { node, slot } => {
                write!(f, "charge balance of battery {node}, slot {}", slot + 1)
            }
            ConstraintRow::SocLimit { node, slot } => {
                write!(f, "capacity of battery {node} at end of slot {}", slot + 1)
            }
            ConstraintRow::SlackSign { slot } => write!(f, "voltage slack sign, slot {}", slot + 1),
        }
    }
}

/// A loss-minimization program in normalized units together with what is
/// needed to map its solution back.
///
/// With `x` the normalized variables, per-unit controls are `x * power_ref`
/// and the per-unit loss is `(1/2 x'Hx + f'x) * loss_ref + constant_loss`
/// (up to the regularization term).
#[derive(Debug, Clone)]
pub struct LossProgram {
    pub qp: QuadraticProgram,
    pub map: VariableMap,
    pub rows: Vec<ConstraintRow>,
    pub power_ref: f64,
    pub loss_ref: f64,
    pub constant_loss: f64,
    /// VARs held fixed (Local and NoControl) as `[node][slot]`.
    pub fixed_var: Vec<Vec<f64>>,
}

fn fixed_vars(kind: ControllerKind, problem: &ControlProblem) -> Vec<Vec<f64>> {
    let prof = problem.profiles;
    let mut q = vec![vec![0.0; prof.slots()]; prof.n() + 1];
    if kind == ControllerKind::Local {
        for &j in problem.pv_nodes {
            for (t, v) in q[j].iter_mut().enumerate() {
                *v = local_control_law(prof.q_c(j, t), prof.q_g_max(j, t));
            }
        }
    }
    q
}

/// Program over charge rates and VARs at every PV node.
pub fn build_global_program(problem: &ControlProblem, options: &ControllerOptions) -> Result<LossProgram> {
    build_program(ControllerKind::Global, problem, options)
}

/// Program for any regime except `Passive`, which has no decisions.
pub fn build_program(
    kind: ControllerKind,
    problem: &ControlProblem,
    options: &ControllerOptions,
) -> Result<LossProgram> {
    problem.validate()?;
    if kind == ControllerKind::Passive {
        return Err(Error::Argument("the passive regime has no program".into()));
    }
    if let Some(w) = options.voltage_penalty {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Argument(format!("voltage penalty must be positive, got {w}")));
        }
    }
    let topo = problem.topology;
    let prof = problem.profiles;
    let n = topo.n();
    let slots = prof.slots();
    let dt = prof.grid().dt_hours();

    let map = VariableMap {
        slots,
        batteries: problem.pv_nodes.to_vec(),
        var_nodes: if kind == ControllerKind::Global {
            problem.pv_nodes.to_vec()
        } else {
            Vec::new()
        },
        slack: options.voltage_penalty.is_some(),
    };
    let nb = map.batteries.len();
    let nq = map.var_nodes.len();
    // Node whose balance each battery enters. A battery that enters no
    // balance maps to the substation, where every prefix sum is zero.
    let sites: Vec<usize> = map
        .batteries
        .iter()
        .map(|&j| options.indexing.site(j, n).unwrap_or(0))
        .collect();

    // prefix sums over segments: cum_r[k] = sum_{j<k} r_j
    let mut cum_r = vec![0.0; n + 1];
    let mut cum_x = vec![0.0; n + 1];
    for j in 0..n {
        cum_r[j + 1] = cum_r[j] + topo.r(j);
        cum_x[j + 1] = cum_x[j] + topo.x(j);
    }
    let power_ref = match prof.peak_magnitude() {
        p if p > 0.0 => p,
        _ => 1.0,
    };
    let loss_ref = power_ref * power_ref * cum_r[n];
    let volt_ref = power_ref * (cum_r[n] + cum_x[n]);
    let fixed_var = fixed_vars(kind, problem);

    let len = map.len();
    let mut h = CooMatrix::new(len, len);
    let mut f = vec![0.0; len];
    let mut a = CooMatrix::new(0, len);
    let mut l = Vec::new();
    let mut u = Vec::new();
    let mut rows = Vec::new();
    let mut constant_loss = 0.0;

    let h_scale = power_ref * power_ref / loss_ref;
    let f_scale = power_ref / loss_ref;
    let v_scale = power_ref / volt_ref;
    let mut push_row = |a: &mut CooMatrix, entries: &[(usize, f64)], lo: f64, hi: f64, label: ConstraintRow| {
        let r = a.add_row();
        for &(c, v) in entries {
            if v != 0.0 {
                a.push(r, c, v);
            }
        }
        l.push(lo);
        u.push(hi);
        rows.push(label);
    };

    let mut p0 = vec![0.0; n];
    let mut q0 = vec![0.0; n];
    for t in 0..slots {
        // flows with every decision at zero
        let (mut pa, mut qa) = (0.0, 0.0);
        for j in (0..n).rev() {
            let m = j + 1;
            pa += prof.p_c(m, t) - prof.p_g(m, t);
            qa += prof.q_c(m, t) - fixed_var[m][t];
            p0[j] = pa;
            q0[j] = qa;
        }
        let mut rp = vec![0.0; n + 1];
        let mut rq = vec![0.0; n + 1];
        let mut v0 = vec![V0; n + 1];
        for j in 0..n {
            constant_loss += topo.r(j) * (p0[j] * p0[j] + q0[j] * q0[j]);
            rp[j + 1] = rp[j] + topo.r(j) * p0[j];
            rq[j + 1] = rq[j] + topo.r(j) * q0[j];
            v0[j + 1] = v0[j] - (topo.r(j) * p0[j] + topo.x(j) * q0[j]) / V0;
        }

        for (ka, &sa) in sites.iter().enumerate() {
            let ia = map.beta(ka, t);
            f[ia] = 2.0 * rp[sa] * f_scale;
            for (kb, &sb) in sites.iter().enumerate() {
                let v = 2.0 * cum_r[sa.min(sb)] * h_scale;
                if v != 0.0 {
                    h.push(ia, map.beta(kb, t), v);
                }
            }
            h.push(ia, ia, TIKHONOV);
        }
        for (ka, &na) in map.var_nodes.iter().enumerate() {
            let ia = map.var(ka, t);
            f[ia] = -2.0 * rq[na] * f_scale;
            for (kb, &nb_) in map.var_nodes.iter().enumerate() {
                h.push(ia, map.var(kb, t), 2.0 * cum_r[na.min(nb_)] * h_scale);
            }
            h.push(ia, ia, TIKHONOV);
        }

        // voltage at every node
        let slack = map.slack(t);
        for k in 1..=n {
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(nb + nq + 1);
            for (ka, &sa) in sites.iter().enumerate() {
                entries.push((map.beta(ka, t), -cum_r[k.min(sa)] / V0 * v_scale));
            }
            for (ka, &na) in map.var_nodes.iter().enumerate() {
                entries.push((map.var(ka, t), cum_x[k.min(na)] / V0 * v_scale));
            }
            let lo = (1.0 - problem.epsilon - v0[k]) / volt_ref;
            let hi = (1.0 + problem.epsilon - v0[k]) / volt_ref;
            match slack {
                None => push_row(&mut a, &entries, lo, hi, ConstraintRow::Voltage { node: k, slot: t }),
                Some(s) => {
                    entries.push((s, -1.0));
                    push_row(
                        &mut a,
                        &entries,
                        f64::NEG_INFINITY,
                        hi,
                        ConstraintRow::VoltageUpper { node: k, slot: t },
                    );
                    entries.last_mut().unwrap().1 = 1.0;
                    push_row(
                        &mut a,
                        &entries,
                        lo,
                        f64::INFINITY,
                        ConstraintRow::VoltageLower { node: k, slot: t },
                    );
                }
            }
        }
        if let (Some(s), Some(w)) = (slack, options.voltage_penalty) {
            f[s] = w;
            push_row(&mut a, &[(s, 1.0)], 0.0, f64::INFINITY, ConstraintRow::SlackSign { slot: t });
        }

        for (ka, &node) in map.var_nodes.iter().enumerate() {
            let cap = prof.q_g_max(node, t) / power_ref;
            push_row(&mut a, &[(map.var(ka, t), 1.0)], -cap, cap, ConstraintRow::VarLimit { node, slot: t });
        }

        for (ka, &node) in map.batteries.iter().enumerate() {
            let mut entries = vec![(map.soc(ka, t), 1.0), (map.beta(ka, t), -dt)];
            if t > 0 {
                entries.push((map.soc(ka, t - 1), -1.0));
            }
            push_row(&mut a, &entries, 0.0, 0.0, ConstraintRow::SocBalance { node, slot: t });
            let cap = if t + 1 == slots && options.terminal_soc == TerminalSoc::Zero {
                0.0
            } else {
                problem.b_max / power_ref
            };
            push_row(&mut a, &[(map.soc(ka, t), 1.0)], 0.0, cap, ConstraintRow::SocLimit { node, slot: t });
        }
    }

    let qp = QuadraticProgram::new(h, f, a, l, u)?;
    Ok(LossProgram {
        qp,
        map,
        rows,
        power_ref,
        loss_ref,
        constant_loss,
        fixed_var,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Program objective in per-unit loss, regularization included.
    pub objective: f64,
    pub polished: bool,
}

impl SolverReport {
    fn trivial(status: QpStatus) -> Self {
        Self {
            status,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            objective: f64::NAN,
            polished: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub kind: ControllerKind,
    pub schedule: ControlSchedule,
    /// Linear-flow state under `schedule`.
    pub state: NetworkState,
    /// Total per-unit loss of `state`.
    pub loss: f64,
    pub solver: SolverReport,
    pub feasible: bool,
    /// For infeasible results, the constraint judged responsible.
    pub binding: Option<String>,
    pub decision_count: usize,
}

impl OptimizationResult {
    pub fn status_str(&self) -> &'static str {
        self.solver.status.as_str()
    }
}

/// Describes the first violated bound of a schedule, if any.
fn check_schedule(
    problem: &ControlProblem,
    options: &ControllerOptions,
    schedule: &ControlSchedule,
    state: &NetworkState,
) -> Option<String> {
    let prof = problem.profiles;
    let dt = prof.grid().dt_hours();
    for &j in problem.pv_nodes {
        let mut soc = 0.0;
        for (t, &beta) in schedule.beta[j].iter().enumerate() {
            soc += beta * dt;
            if soc < -FEASIBILITY_TOL || soc > problem.b_max + FEASIBILITY_TOL {
                return Some(format!("battery {j} leaves [0, {}] at end of slot {}", problem.b_max, t + 1));
            }
        }
        if options.terminal_soc == TerminalSoc::Zero && soc.abs() > FEASIBILITY_TOL {
            return Some(format!("battery {j} ends the day holding {soc}"));
        }
    }
    for (j, row) in schedule.q_g.iter().enumerate() {
        for (t, &q) in row.iter().enumerate() {
            if q.abs() > prof.q_g_max(j, t) + FEASIBILITY_TOL {
                return Some(format!("VAR {q} at node {j}, slot {} exceeds limit {}", t + 1, prof.q_g_max(j, t)));
            }
        }
    }
    if options.voltage_penalty.is_none() {
        for (j, row) in state.v.iter().enumerate().skip(1) {
            for (t, &v) in row.iter().enumerate() {
                if (v - V0).abs() > problem.epsilon * V0 + FEASIBILITY_TOL {
                    return Some(format!("voltage {v} at node {j}, slot {} outside bounds", t + 1));
                }
            }
        }
    }
    None
}

fn evaluate(
    kind: ControllerKind,
    problem: &ControlProblem,
    options: &ControllerOptions,
    schedule: ControlSchedule,
    solver: SolverReport,
    binding: Option<String>,
    decision_count: usize,
) -> Result<OptimizationResult> {
    let state = linear_flow(problem.topology, problem.profiles, &schedule, options.indexing)?;
    let loss = total_loss(&state, problem.topology, LossModel::Linear);
    let violation = check_schedule(problem, options, &schedule, &state);
    let feasible = solver.status == QpStatus::Solved && binding.is_none() && violation.is_none();
    Ok(OptimizationResult {
        kind,
        schedule,
        state,
        loss,
        solver,
        feasible,
        binding: binding.or(violation),
        decision_count,
    })
}

fn binding_row(program: &LossProgram, sol: &QpSolution) -> Option<String> {
    let cert = sol.certificate.as_ref()?;
    let (row, _) = cert
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))?;
    program.rows.get(row).map(ToString::to_string)
}

/// Maps a solution of `program` to a per-node schedule.
pub fn schedule_from_solution(program: &LossProgram, problem: &ControlProblem, x: &[f64]) -> ControlSchedule {
    let map = &program.map;
    let n = problem.topology.n();
    let mut schedule = ControlSchedule::zeros(n, map.slots());
    schedule.q_g = program.fixed_var.clone();
    for t in 0..map.slots() {
        for (k, &j) in map.batteries.iter().enumerate() {
            schedule.beta[j][t] = x[map.beta(k, t)] * program.power_ref;
        }
        for (k, &j) in map.var_nodes.iter().enumerate() {
            schedule.q_g[j][t] = x[map.var(k, t)] * program.power_ref;
        }
    }
    schedule
}

pub fn solve_controller(
    kind: ControllerKind,
    problem: &ControlProblem,
    options: &ControllerOptions,
) -> Result<OptimizationResult> {
    problem.validate()?;
    if kind == ControllerKind::Passive {
        let schedule = ControlSchedule::zeros(problem.topology.n(), problem.profiles.slots());
        let mut result = evaluate(
            kind,
            problem,
            options,
            schedule,
            SolverReport::trivial(QpStatus::Solved),
            None,
            0,
        )?;
        if !result.feasible {
            result.solver.status = QpStatus::Infeasible;
        }
        result.solver.objective = result.loss;
        return Ok(result);
    }

    let program = build_program(kind, problem, options)?;
    let sol = solve_qp(&program.qp, &options.qp)?;
    let schedule = schedule_from_solution(&program, problem, &sol.x);
    let binding = match sol.status {
        QpStatus::Infeasible => {
            Some(binding_row(&program, &sol).unwrap_or_else(|| "constraints cannot be met".into()))
        }
        _ => None,
    };
    let solver = SolverReport {
        status: sol.status,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        objective: sol.objective * program.loss_ref + program.constant_loss,
        polished: sol.polished,
    };
    evaluate(
        kind,
        problem,
        options,
        schedule,
        solver,
        binding,
        program.map.decision_count(),
    )
}
