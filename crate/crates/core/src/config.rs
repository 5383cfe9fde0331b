//! Study configuration, read from a flat TOML table. Every key is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controllers::{ControllerKind, ControllerOptions, TerminalSoc};
use crate::distflow::BetaIndexing;
use crate::error::{Error, Result};
use crate::feeder::{build_feeder, place_pv, sample_lengths, FeederTopology, PerUnitBase, PlacementKind, PvPlacement};
use crate::profiles::{
    battery_capacity, build_node_profiles, monthly_to_daily_kwh, DailyProfile, NodeProfiles, ProfileScaling,
    TimeGrid, MONTHLY_RESIDENTIAL_KWH,
};
use crate::qp::QpSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub nodes: usize,
    pub length_min_m: f64,
    pub length_max_m: f64,
    pub seed: u64,
    pub r_ohm_per_km: f64,
    pub x_ohm_per_km: f64,
    pub v_base_kv: f64,
    pub s_base_kva: f64,

    /// Hourly `hour,demand_w,solar_w` CSV; the built-in synthetic day when
    /// absent.
    pub profile: Option<PathBuf>,
    pub demand_scale: f64,
    pub solar_scale: f64,
    pub demand_pf: Option<f64>,
    pub slots_per_hour: usize,

    pub daily_kwh: f64,
    pub b_max_fraction: f64,
    /// Per-unit battery capacity; overrides `daily_kwh * b_max_fraction`.
    pub b_max_pu: Option<f64>,

    pub epsilon: f64,
    pub beta_index: BetaIndexing,
    pub terminal_soc: TerminalSoc,
    pub voltage_penalty: Option<f64>,

    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,

    pub s_max: Vec<f64>,
    pub penetration: Vec<f64>,
    pub placements: Vec<PlacementKind>,
    pub controllers: Vec<ControllerKind>,
    /// Parallel scenario solves; 0 uses every core.
    pub workers: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            nodes: 30,
            length_min_m: 200.0,
            length_max_m: 300.0,
            seed: 42,
            r_ohm_per_km: 0.33,
            x_ohm_per_km: 0.38,
            v_base_kv: 7.2,
            s_base_kva: 1000.0,
            profile: None,
            demand_scale: 40.0e6,
            solar_scale: 1.0e6,
            demand_pf: None,
            slots_per_hour: 3,
            daily_kwh: monthly_to_daily_kwh(MONTHLY_RESIDENTIAL_KWH),
            b_max_fraction: 1.0 / 20.0,
            b_max_pu: None,
            epsilon: 0.05,
            beta_index: BetaIndexing::CoLocated,
            terminal_soc: TerminalSoc::Free,
            voltage_penalty: None,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            max_iter: 50_000,
            s_max: vec![1.0, 1.1, 1.2, 1.3, 1.4, 1.5],
            penetration: vec![0.2, 0.5, 0.8],
            placements: vec![PlacementKind::Front, PlacementKind::Rear],
            controllers: vec![ControllerKind::Global, ControllerKind::Local, ControllerKind::NoControl],
            workers: 0,
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A relative `profile` path is resolved against
    /// the config file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(p), Some(dir)) = (cfg.profile.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.nodes == 0 {
            return bad("nodes must be at least 1".into());
        }
        if self.slots_per_hour == 0 {
            return bad("slots_per_hour must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must be in (0, 1), got {}", self.epsilon));
        }
        if !(self.daily_kwh >= 0.0 && self.b_max_fraction >= 0.0) {
            return bad("daily_kwh and b_max_fraction must be non-negative".into());
        }
        if let Some(b) = self.b_max_pu {
            if !(b >= 0.0 && b.is_finite()) {
                return bad(format!("b_max_pu must be non-negative, got {b}"));
            }
        }
        if self.max_iter == 0 || !(self.eps_abs >= 0.0 && self.eps_rel >= 0.0 && self.eps_abs + self.eps_rel > 0.0) {
            return bad("solver tolerances must be non-negative, not both zero, with max_iter >= 1".into());
        }
        if self.s_max.is_empty() || self.penetration.is_empty() || self.placements.is_empty() || self.controllers.is_empty() {
            return bad("sweep grids must be non-empty".into());
        }
        if let Some(s) = self.s_max.iter().find(|&&s| !(s >= 1.0 && s.is_finite())) {
            return bad(format!("s_max values must be >= 1, got {s}"));
        }
        if let Some(a) = self.penetration.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
            return bad(format!("penetration values must be in (0, 1], got {a}"));
        }
        Ok(())
    }

    pub fn base(&self) -> Result<PerUnitBase> {
        PerUnitBase::new(self.v_base_kv * 1e3, self.s_base_kva * 1e3)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.slots_per_hour)
    }

    /// The feeder realization for `seed`.
    pub fn topology(&self, seed: u64) -> Result<FeederTopology> {
        let lengths = sample_lengths(self.nodes, self.length_min_m, self.length_max_m, seed)?;
        build_feeder(self.nodes, &lengths, self.r_ohm_per_km, self.x_ohm_per_km, self.base()?)
    }

    pub fn daily_profile(&self) -> Result<DailyProfile> {
        match &self.profile {
            Some(p) => DailyProfile::from_csv_path(p),
            None => Ok(DailyProfile::synthetic()),
        }
    }

    pub fn placement(&self, a: f64, kind: PlacementKind) -> Result<PvPlacement> {
        place_pv(self.nodes, a, kind)
    }

    pub fn node_profiles(&self, daily: &DailyProfile, s_max: f64, placement: &PvPlacement) -> Result<NodeProfiles> {
        let scaling = ProfileScaling {
            demand_scale: self.demand_scale,
            solar_scale: self.solar_scale,
            demand_pf: self.demand_pf,
            s_max,
        };
        build_node_profiles(daily, scaling, self.base()?, self.nodes, placement, self.grid()?)
    }

    /// Per-unit battery capacity.
    pub fn b_max(&self) -> Result<f64> {
        match self.b_max_pu {
            Some(b) => Ok(b),
            None => Ok(battery_capacity(self.daily_kwh, self.b_max_fraction, self.demand_scale, self.base()?)),
        }
    }

    pub fn controller_options(&self) -> ControllerOptions {
        ControllerOptions {
            indexing: self.beta_index,
            terminal_soc: self.terminal_soc,
            voltage_penalty: self.voltage_penalty,
            qp: QpSettings::with_tolerances(self.eps_abs, self.eps_rel, self.max_iter),
        }
    }
}
