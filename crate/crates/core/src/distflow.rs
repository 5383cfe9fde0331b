//! Branch-flow evaluation on the radial feeder.
//!
//! `P[j][t]`, `Q[j][t]` are the flows on the segment leaving node `j`
//! (zero at the last node), `V[j][t]` the voltage magnitude with the
//! substation held at 1 p.u.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::FeederTopology;
use crate::profiles::NodeProfiles;

/// Substation voltage, per-unit.
pub const V0: f64 = 1.0;

/// Absolute slack (per-unit energy) when checking state of charge bounds.
pub const SOC_TOL: f64 = 1e-12;

/// Which node's balance a battery's charge rate enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaIndexing {
    /// Battery at node `j` draws from node `j`, alongside its load.
    #[default]
    CoLocated,
    /// Battery `j` enters the update from node `j` to `j + 1`; the battery
    /// at the last node has no effect on flows.
    NextNode,
}

impl BetaIndexing {
    /// Node whose net consumption includes the battery installed at `node`.
    pub fn site(self, node: usize, n: usize) -> Option<usize> {
        match self {
            BetaIndexing::CoLocated => Some(node),
            BetaIndexing::NextNode => (node < n).then_some(node + 1),
        }
    }
}

/// Battery charge rates and inverter VARs per node and slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    /// Charge rate, positive when charging.
    pub beta: Vec<Vec<f64>>,
    /// Reactive power injected by the inverter.
    pub q_g: Vec<Vec<f64>>,
}

impl ControlSchedule {
    pub fn zeros(n: usize, slots: usize) -> Self {
        Self {
            beta: vec![vec![0.0; slots]; n + 1],
            q_g: vec![vec![0.0; slots]; n + 1],
        }
    }

    pub fn n(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn slots(&self) -> usize {
        self.beta.first().map_or(0, Vec::len)
    }

    fn check_shape(&self, n: usize, slots: usize) -> Result<()> {
        let ok = self.beta.len() == n + 1
            && self.q_g.len() == n + 1
            && self.beta.iter().chain(&self.q_g).all(|row| row.len() == slots);
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "control schedule must be {} nodes x {slots} slots",
                n + 1
            )))
        }
    }

    /// Largest amount by which any `|q_g|` exceeds its bound.
    pub fn var_excess(&self, profiles: &NodeProfiles) -> f64 {
        let mut worst = 0.0f64;
        for (j, row) in self.q_g.iter().enumerate() {
            for (t, &q) in row.iter().enumerate() {
                worst = worst.max(q.abs() - profiles.q_g_max(j, t));
            }
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["node", "slot", "beta_pu", "q_g_pu"])?;
        for j in 0..self.beta.len() {
            for t in 0..self.slots() {
                w.write_record(&[
                    j.to_string(),
                    (t + 1).to_string(),
                    self.beta[j][t].to_string(),
                    self.q_g[j][t].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<schedule csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Stored energy `b_j(t)` for `t = 1..=T`.
    pub b: Vec<Vec<f64>>,
}

impl NetworkState {
    pub fn n(&self) -> usize {
        self.p.len() - 1
    }

    pub fn slots(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    /// Substation inflow for each slot.
    pub fn head_flow(&self) -> &[f64] {
        &self.p[0]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["node", "slot", "P_pu", "Q_pu", "V_pu", "b_pu"])?;
        for j in 0..self.p.len() {
            for t in 0..self.slots() {
                w.write_record(&[
                    j.to_string(),
                    (t + 1).to_string(),
                    self.p[j][t].to_string(),
                    self.q[j][t].to_string(),
                    self.v[j][t].to_string(),
                    self.b[j][t].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<state csv>", e))?;
        Ok(())
    }
}

/// Net real and reactive consumption at every node for one slot, with the
/// battery draws moved to their sites.
fn net_injections(
    profiles: &NodeProfiles,
    controls: &ControlSchedule,
    indexing: BetaIndexing,
    slot: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = profiles.n();
    let mut net_p: Vec<f64> = (0..=n)
        .map(|j| profiles.p_c(j, slot) - profiles.p_g(j, slot))
        .collect();
    let net_q: Vec<f64> = (0..=n)
        .map(|j| profiles.q_c(j, slot) - controls.q_g[j][slot])
        .collect();
    for (j, row) in controls.beta.iter().enumerate() {
        if let Some(site) = indexing.site(j, n) {
            net_p[site] += row[slot];
        }
    }
    (net_p, net_q)
}

fn check_inputs(
    topology: &FeederTopology,
    profiles: &NodeProfiles,
    controls: &ControlSchedule,
) -> Result<()> {
    if topology.n() != profiles.n() {
        return Err(Error::Argument(format!(
            "topology has {} nodes but profiles have {}",
            topology.n(),
            profiles.n()
        )));
    }
    controls.check_shape(profiles.n(), profiles.slots())
}

/// State of charge `b(1..=T+1)` from charge rates with `b(1) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryTrajectory {
    pub soc: Vec<f64>,
    /// 1-based slot indices `t` where `b(t)` left `[0, B_max]`.
    pub violations: Vec<usize>,
}

impl BatteryTrajectory {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn battery_trajectory(beta: &[f64], b_max: f64, dt_hours: f64) -> BatteryTrajectory {
    let mut soc = Vec::with_capacity(beta.len() + 1);
    soc.push(0.0);
    let mut b = 0.0;
    for &rate in beta {
        b += rate * dt_hours;
        soc.push(b);
    }
    let violations = soc
        .iter()
        .enumerate()
        .filter(|(_, &b)| b < -SOC_TOL || b > b_max + SOC_TOL)
        .map(|(t, _)| t + 1)
        .collect();
    BatteryTrajectory { soc, violations }
}

fn soc_rows(controls: &ControlSchedule, dt_hours: f64) -> Vec<Vec<f64>> {
    controls
        .beta
        .iter()
        .map(|row| {
            let mut soc = battery_trajectory(row, f64::INFINITY, dt_hours).soc;
            soc.truncate(row.len());
            soc
        })
        .collect()
}

/// Simplified (lossless) DistFlow with voltages referred to the substation.
pub fn linear_flow(
    topology: &FeederTopology,
    profiles: &NodeProfiles,
    controls: &ControlSchedule,
    indexing: BetaIndexing,
) -> Result<NetworkState> {
    check_inputs(topology, profiles, controls)?;
    let n = profiles.n();
    let slots = profiles.slots();
    let mut p = vec![vec![0.0; slots]; n + 1];
    let mut q = vec![vec![0.0; slots]; n + 1];
    let mut v = vec![vec![V0; slots]; n + 1];
    for t in 0..slots {
        let (net_p, net_q) = net_injections(profiles, controls, indexing, t);
        for j in (0..n).rev() {
            p[j][t] = p[j + 1][t] + net_p[j + 1];
            q[j][t] = q[j + 1][t] + net_q[j + 1];
        }
        for j in 0..n {
            v[j + 1][t] = v[j][t] - (topology.r(j) * p[j][t] + topology.x(j) * q[j][t]) / V0;
        }
    }
    Ok(NetworkState {
        p,
        q,
        v,
        b: soc_rows(controls, profiles.grid().dt_hours()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub state: NetworkState,
    /// Largest iteration count over all slots.
    pub iterations: usize,
}

/// Full DistFlow solved per slot by backward/forward sweep from a flat start.
pub fn nonlinear_sweep(
    topology: &FeederTopology,
    profiles: &NodeProfiles,
    controls: &ControlSchedule,
    indexing: BetaIndexing,
    settings: SweepSettings,
) -> Result<SweepOutcome> {
    if !(settings.tol > 0.0) {
        return Err(Error::Argument(format!("sweep tolerance must be positive, got {}", settings.tol)));
    }
    check_inputs(topology, profiles, controls)?;
    let n = profiles.n();
    let slots = profiles.slots();
    let mut p = vec![vec![0.0; slots]; n + 1];
    let mut q = vec![vec![0.0; slots]; n + 1];
    let mut v = vec![vec![V0; slots]; n + 1];
    let mut worst_iterations = 0;

    for t in 0..slots {
        let (net_p, net_q) = net_injections(profiles, controls, indexing, t);
        let mut pc = vec![0.0; n + 1];
        let mut qc = vec![0.0; n + 1];
        let mut vc = vec![V0; n + 1];
        let mut converged = false;
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < settings.max_iter {
            iterations += 1;
            // backward: losses from the previous iterate
            let mut pn = vec![0.0; n + 1];
            let mut qn = vec![0.0; n + 1];
            for j in (0..n).rev() {
                let flow2 = (pc[j] * pc[j] + qc[j] * qc[j]) / (vc[j] * vc[j]);
                pn[j] = pn[j + 1] + net_p[j + 1] + topology.r(j) * flow2;
                qn[j] = qn[j + 1] + net_q[j + 1] + topology.x(j) * flow2;
            }
            // forward
            let mut vn = vec![V0; n + 1];
            for j in 0..n {
                let (r, x) = (topology.r(j), topology.x(j));
                let v2 = vn[j] * vn[j] - 2.0 * (r * pn[j] + x * qn[j])
                    + (r * r + x * x) * (pn[j] * pn[j] + qn[j] * qn[j]) / (vn[j] * vn[j]);
                if !(v2 > 0.0) || !v2.is_finite() {
                    return Err(Error::Divergence {
                        slot: t + 1,
                        iterations,
                        residual: f64::INFINITY,
                    });
                }
                vn[j + 1] = v2.sqrt();
            }
            residual = max_abs_diff(&vn, &vc)
                .max(max_abs_diff(&pn, &pc))
                .max(max_abs_diff(&qn, &qc));
            pc = pn;
            qc = qn;
            vc = vn;
            if !residual.is_finite() {
                break;
            }
            if residual < settings.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Divergence {
                slot: t + 1,
                iterations,
                residual,
            });
        }
        worst_iterations = worst_iterations.max(iterations);
        for j in 0..=n {
            p[j][t] = pc[j];
            q[j][t] = qc[j];
            v[j][t] = vc[j];
        }
    }
    Ok(SweepOutcome {
        state: NetworkState {
            p,
            q,
            v,
            b: soc_rows(controls, profiles.grid().dt_hours()),
        },
        iterations: worst_iterations,
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossModel {
    /// Denominator `V0^2`.
    Linear,
    /// Denominator `V_j(t)^2`.
    Nonlinear,
}

/// Sum over slots and segments of `r_j (P_j^2 + Q_j^2) / V^2`.
pub fn total_loss(state: &NetworkState, topology: &FeederTopology, model: LossModel) -> f64 {
    let mut loss = 0.0;
    for t in 0..state.slots() {
        for j in 0..topology.n() {
            let v = match model {
                LossModel::Linear => V0,
                LossModel::Nonlinear => state.v[j][t],
            };
            loss += topology.r(j) * (state.p[j][t].powi(2) + state.q[j][t].powi(2)) / (v * v);
        }
    }
    loss
}

/// Largest violation of the full DistFlow equations by `state`.
pub fn distflow_residual(
    state: &NetworkState,
    topology: &FeederTopology,
    profiles: &NodeProfiles,
    controls: &ControlSchedule,
    indexing: BetaIndexing,
) -> f64 {
    let n = topology.n();
    let mut worst = 0.0f64;
    for t in 0..state.slots() {
        let (net_p, net_q) = net_injections(profiles, controls, indexing, t);
        worst = worst.max(state.p[n][t].abs()).max(state.q[n][t].abs());
        worst = worst.max((state.v[0][t] - V0).abs());
        for j in 0..n {
            let (r, x) = (topology.r(j), topology.x(j));
            let (pj, qj, vj) = (state.p[j][t], state.q[j][t], state.v[j][t]);
            let flow2 = (pj * pj + qj * qj) / (vj * vj);
            let e1 = state.p[j + 1][t] - (pj - r * flow2 - net_p[j + 1]);
            let e2 = state.q[j + 1][t] - (qj - x * flow2 - net_q[j + 1]);
            let e3 = state.v[j + 1][t].powi(2)
                - (vj * vj - 2.0 * (r * pj + x * qj) + (r * r + x * x) * flow2);
            worst = worst.max(e1.abs()).max(e2.abs()).max(e3.abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::Segment;
    use crate::profiles::TimeGrid;
    use proptest::prelude::*;

    fn line(rs: &[(f64, f64)]) -> FeederTopology {
        FeederTopology::from_segments(
            rs.iter()
                .map(|&(r, x)| Segment { length_m: 1.0, r, x })
                .collect(),
        )
        .unwrap()
    }

    /// Hourly grid (T = 24) with the same injections in every slot.
    fn flat_profiles(p_c: &[f64], q_c: &[f64], p_g: &[f64], s: &[f64]) -> NodeProfiles {
        let grid = TimeGrid::new(1).unwrap();
        let rows = |v: &[f64]| v.iter().map(|&x| vec![x; 24]).collect::<Vec<_>>();
        NodeProfiles::from_parts(grid, rows(p_c), rows(q_c), rows(p_g), s.to_vec()).unwrap()
    }

    #[test]
    fn empty_feeder_is_flat() {
        let topo = line(&[(0.01, 0.02), (0.01, 0.02), (0.02, 0.01)]);
        let prof = flat_profiles(&[0.0; 4], &[0.0; 4], &[0.0; 4], &[0.0; 4]);
        let st = linear_flow(&topo, &prof, &ControlSchedule::zeros(3, 24), BetaIndexing::CoLocated).unwrap();
        assert!(st.p.iter().chain(&st.q).flatten().all(|&x| x == 0.0));
        assert!(st.v.iter().flatten().all(|&x| x == 1.0));
    }

    #[test]
    fn two_node_hand_recursion() {
        let topo = line(&[(0.01, 0.01), (0.01, 0.01)]);
        let prof = flat_profiles(&[0.0, 0.1, 0.1], &[0.0; 3], &[0.0; 3], &[0.0; 3]);
        let st = linear_flow(&topo, &prof, &ControlSchedule::zeros(2, 24), BetaIndexing::CoLocated).unwrap();
        assert!((st.p[1][0] - 0.1).abs() < 1e-15);
        assert!((st.p[0][0] - 0.2).abs() < 1e-15);
        assert!((st.v[1][0] - 0.998).abs() < 1e-15);
        assert!((st.v[2][0] - 0.997).abs() < 1e-15);
        assert_eq!(st.p[2][0], 0.0);

        let mut one_slot = st.clone();
        for rows in [&mut one_slot.p, &mut one_slot.q, &mut one_slot.v, &mut one_slot.b] {
            for row in rows.iter_mut() {
                row.truncate(1);
            }
        }
        let loss = total_loss(&one_slot, &topo, LossModel::Linear);
        assert!((loss - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn generation_cancels_load() {
        let topo = line(&[(0.01, 0.02), (0.03, 0.01)]);
        let prof = flat_profiles(&[0.0, 0.2, 0.3], &[0.0; 3], &[0.0, 0.2, 0.3], &[0.0, 1.0, 1.0]);
        let st = linear_flow(&topo, &prof, &ControlSchedule::zeros(2, 24), BetaIndexing::CoLocated).unwrap();
        assert!(st.p.iter().flatten().all(|&x| x == 0.0));
        assert!(st.v.iter().flatten().all(|&x| x == 1.0));
    }

    #[test]
    fn beta_indexing_shifts_battery_one_node() {
        let topo = line(&[(0.01, 0.0), (0.01, 0.0), (0.01, 0.0)]);
        let prof = flat_profiles(&[0.0; 4], &[0.0; 4], &[0.0; 4], &[0.0; 4]);
        let mut c = ControlSchedule::zeros(3, 24);
        c.beta[2] = vec![0.5; 24];
        let co = linear_flow(&topo, &prof, &c, BetaIndexing::CoLocated).unwrap();
        assert_eq!((co.p[0][0], co.p[1][0], co.p[2][0]), (0.5, 0.5, 0.0));
        let lit = linear_flow(&topo, &prof, &c, BetaIndexing::NextNode).unwrap();
        assert_eq!((lit.p[0][0], lit.p[1][0], lit.p[2][0]), (0.5, 0.5, 0.5));

        let mut last = ControlSchedule::zeros(3, 24);
        last.beta[3] = vec![0.5; 24];
        let lit = linear_flow(&topo, &prof, &last, BetaIndexing::NextNode).unwrap();
        assert!(lit.p.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_injections_sweep_converges_immediately() {
        let topo = line(&[(0.01, 0.02); 4]);
        let prof = flat_profiles(&[0.0; 5], &[0.0; 5], &[0.0; 5], &[0.0; 5]);
        let out = nonlinear_sweep(&topo, &prof, &ControlSchedule::zeros(4, 24), BetaIndexing::CoLocated, SweepSettings::default())
            .unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.state.v.iter().flatten().all(|&x| x == 1.0));
        assert!(out.state.p.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn single_segment_matches_fixed_point_oracle() {
        // P0 = 0.1 + 0.01 * P0^2 / V0^2 with V0 = 1, iterated to 1e-12
        // independently of the sweep.
        let mut oracle = 0.0f64;
        for _ in 0..200 {
            let next = 0.1 + 0.01 * oracle * oracle;
            if (next - oracle).abs() < 1e-15 {
                break;
            }
            oracle = next;
        }
        let closed = (1.0 - (1.0f64 - 0.004).sqrt()) / 0.02;
        assert!((oracle - closed).abs() < 1e-12);

        let topo = line(&[(0.01, 0.0)]);
        let prof = flat_profiles(&[0.0, 0.1], &[0.0; 2], &[0.0; 2], &[0.0; 2]);
        let out = nonlinear_sweep(&topo, &prof, &ControlSchedule::zeros(1, 24), BetaIndexing::CoLocated, SweepSettings::default())
            .unwrap();
        assert!((out.state.p[0][0] - oracle).abs() < 1e-10);
        let v1 = (1.0 - 2.0 * 0.01 * oracle + 1e-4 * oracle * oracle).sqrt();
        assert!((out.state.v[1][0] - v1).abs() < 1e-10);
    }

    #[test]
    fn sweep_reports_divergence() {
        // far beyond the feeder's loadability
        let topo = line(&[(0.5, 0.5), (0.5, 0.5)]);
        let prof = flat_profiles(&[0.0, 2.0, 2.0], &[0.0, 2.0, 2.0], &[0.0; 3], &[0.0; 3]);
        let err = nonlinear_sweep(&topo, &prof, &ControlSchedule::zeros(2, 24), BetaIndexing::CoLocated, SweepSettings::default())
            .unwrap_err();
        assert!(matches!(err, Error::Divergence { slot: 1, .. }), "{err}");
        assert!(nonlinear_sweep(
            &topo,
            &prof,
            &ControlSchedule::zeros(2, 24),
            BetaIndexing::CoLocated,
            SweepSettings { tol: 0.0, max_iter: 10 }
        )
        .is_err());
    }

    #[test]
    fn loss_single_segment() {
        let topo = line(&[(0.01, 0.3)]);
        let st = NetworkState {
            p: vec![vec![1.0], vec![0.0]],
            q: vec![vec![0.0], vec![0.0]],
            v: vec![vec![1.0], vec![0.9]],
            b: vec![vec![0.0], vec![0.0]],
        };
        assert!((total_loss(&st, &topo, LossModel::Linear) - 0.01).abs() < 1e-15);
        assert!((total_loss(&st, &topo, LossModel::Nonlinear) - 0.01).abs() < 1e-15);
        let zero = NetworkState {
            p: vec![vec![0.0], vec![0.0]],
            ..st
        };
        assert_eq!(total_loss(&zero, &topo, LossModel::Linear), 0.0);
    }

    #[test]
    fn battery_trajectories() {
        let flat = battery_trajectory(&[0.0; 6], 1.0, 0.5);
        assert_eq!(flat.soc, vec![0.0; 7]);
        assert!(flat.is_feasible());

        let c = 0.3;
        let k = 4;
        let beta: Vec<f64> = std::iter::repeat_n(c, k).chain(std::iter::repeat_n(-c, k)).collect();
        let tr = battery_trajectory(&beta, 1.0, 1.0 / 3.0);
        assert!(tr.soc[2 * k].abs() < 1e-15);
        assert!(tr.is_feasible());

        let b_max = 0.2;
        let dt = 1.0 / 3.0;
        let over = battery_trajectory(&[b_max / dt + 1e-6, 0.0, 0.0], b_max, dt);
        assert_eq!(over.violations, vec![2, 3, 4]);

        let under = battery_trajectory(&[-0.1, 0.2], 1.0, 1.0);
        assert_eq!(under.violations, vec![2]);
    }

    #[test]
    fn csv_headers() {
        let topo = line(&[(0.01, 0.01)]);
        let prof = flat_profiles(&[0.0, 0.1], &[0.0; 2], &[0.0; 2], &[0.0; 2]);
        let c = ControlSchedule::zeros(1, 24);
        let st = linear_flow(&topo, &prof, &c, BetaIndexing::CoLocated).unwrap();
        let mut buf = Vec::new();
        st.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("node,slot,P_pu,Q_pu,V_pu,b_pu\n0,1,"));
        assert_eq!(text.lines().count(), 1 + 2 * 24);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("node,slot,beta_pu,q_g_pu\n"));
    }

    /// Segment impedances, then loads, VAR loads and charge rates per node.
    type Case = (Vec<(f64, f64)>, Vec<f64>, Vec<f64>, Vec<f64>);

    fn arb_case() -> impl Strategy<Value = Case> {
        (1usize..8).prop_flat_map(|n| {
            (
                proptest::collection::vec((0.0f64..0.01, 0.0f64..0.01), n),
                proptest::collection::vec(0.0f64..0.1, n),
                proptest::collection::vec(0.0f64..0.1, n),
                proptest::collection::vec(-0.1f64..0.1, n),
            )
        })
    }

    proptest! {
        #[test]
        fn substation_inflow_balances((segs, pc, qc, beta) in arb_case(), pg in 0.0f64..0.1) {
            let n = segs.len();
            let topo = line(&segs);
            let with0 = |v: &[f64]| std::iter::once(0.0).chain(v.iter().copied()).collect::<Vec<_>>();
            let pg_row: Vec<f64> = (0..=n).map(|j| if j == n { pg } else { 0.0 }).collect();
            let s_row: Vec<f64> = pg_row.iter().map(|p| p * 1.2).collect();
            let prof = flat_profiles(&with0(&pc), &with0(&qc), &pg_row, &s_row);
            let mut c = ControlSchedule::zeros(n, 24);
            for j in 1..=n {
                c.beta[j] = vec![beta[j - 1]; 24];
            }
            let st = linear_flow(&topo, &prof, &c, BetaIndexing::CoLocated).unwrap();
            let expected: f64 = pc.iter().sum::<f64>() - pg + beta.iter().sum::<f64>();
            prop_assert!((st.p[0][3] - expected).abs() < 1e-12);
            prop_assert_eq!(st.p[n][3], 0.0);
            prop_assert_eq!(st.v[0][3], 1.0);
        }

        #[test]
        fn pure_load_voltage_monotone((segs, pc, qc, _beta) in arb_case()) {
            let n = segs.len();
            let topo = line(&segs);
            let with0 = |v: &[f64]| std::iter::once(0.0).chain(v.iter().copied()).collect::<Vec<_>>();
            let prof = flat_profiles(&with0(&pc), &with0(&qc), &vec![0.0; n + 1], &vec![0.0; n + 1]);
            let st = linear_flow(&topo, &prof, &ControlSchedule::zeros(n, 24), BetaIndexing::CoLocated).unwrap();
            for j in 0..n {
                prop_assert!(st.v[j + 1][0] <= st.v[j][0]);
            }
        }

        #[test]
        fn light_loading_linearization_and_residual((segs, pc, qc, _beta) in arb_case()) {
            prop_assume!(segs.len() <= 3);
            let n = segs.len();
            let topo = line(&segs);
            let with0 = |v: &[f64]| std::iter::once(0.0).chain(v.iter().copied()).collect::<Vec<_>>();
            let prof = flat_profiles(&with0(&pc), &with0(&qc), &vec![0.0; n + 1], &vec![0.0; n + 1]);
            let c = ControlSchedule::zeros(n, 24);
            let settings = SweepSettings::default();
            let lin = linear_flow(&topo, &prof, &c, BetaIndexing::CoLocated).unwrap();
            let nl = nonlinear_sweep(&topo, &prof, &c, BetaIndexing::CoLocated, settings).unwrap();
            let head = lin.p[0][0].hypot(lin.q[0][0]);
            if head > 1e-3 {
                prop_assert!((nl.state.p[0][0] - lin.p[0][0]).abs() / head < 0.01);
            }
            let res = distflow_residual(&nl.state, &topo, &prof, &c, BetaIndexing::CoLocated);
            prop_assert!(res <= 10.0 * settings.tol, "residual {}", res);
        }
    }
}
