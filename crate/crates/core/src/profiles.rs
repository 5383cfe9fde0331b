//! Demand and solar series: hourly ingestion, scaling, slot expansion and
//! per-node assignment with inverter VAR capability.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::{PerUnitBase, PvPlacement};

pub const HOURS_PER_DAY: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    slots_per_hour: usize,
    hours: usize,
}

impl TimeGrid {
    /// A full day at the given resolution.
    pub fn new(slots_per_hour: usize) -> Result<Self> {
        Self::span(slots_per_hour, HOURS_PER_DAY)
    }

    /// The first `hours` hours of the day.
    pub fn span(slots_per_hour: usize, hours: usize) -> Result<Self> {
        if slots_per_hour == 0 {
            return Err(Error::Argument("slots_per_hour must be at least 1".into()));
        }
        if !(1..=HOURS_PER_DAY).contains(&hours) {
            return Err(Error::Argument(format!("horizon must be 1..={HOURS_PER_DAY} hours, got {hours}")));
        }
        Ok(Self { slots_per_hour, hours })
    }

    pub fn slots(&self) -> usize {
        self.hours * self.slots_per_hour
    }

    pub fn hours(&self) -> usize {
        self.hours
    }

    pub fn slots_per_hour(&self) -> usize {
        self.slots_per_hour
    }

    /// Slot duration in hours.
    pub fn dt_hours(&self) -> f64 {
        1.0 / self.slots_per_hour as f64
    }
}

impl Default for TimeGrid {
    /// Twenty-minute slots, 72 per day.
    fn default() -> Self {
        Self {
            slots_per_hour: 3,
            hours: HOURS_PER_DAY,
        }
    }
}

/// Exactly 24 hourly values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlySeries(Vec<f64>);

impl HourlySeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != HOURS_PER_DAY {
            return Err(Error::Profile(format!(
                "hourly series needs {HOURS_PER_DAY} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Profile(format!("non-finite hourly value {v}")));
        }
        Ok(Self(values))
    }

    pub fn constant(value: f64) -> Self {
        Self(vec![value; HOURS_PER_DAY])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Step-holds each hourly value over that hour's slots, for the hours the
/// grid covers.
pub fn expand_to_slots(series: &HourlySeries, grid: TimeGrid) -> Vec<f64> {
    series
        .values()
        .iter()
        .take(grid.hours())
        .flat_map(|&v| std::iter::repeat_n(v, grid.slots_per_hour()))
        .collect()
}

/// Synthetic day of system-level demand, in watts.
///
/// Overnight trough, morning ramp, flat midday and an evening peak over
/// hours 18-21 (slots 52-63 at 20-minute resolution).
pub const SYNTHETIC_DEMAND_W: [f64; 24] = [
    22.1e9, 21.0e9, 20.4e9, 20.2e9, 20.6e9, 22.0e9, 24.6e9, 26.0e9, 26.2e9, 26.3e9, 26.4e9,
    26.3e9, 26.1e9, 25.9e9, 25.8e9, 25.9e9, 26.5e9, 27.8e9, 28.6e9, 28.3e9, 27.5e9, 26.2e9,
    24.4e9, 22.9e9,
];

/// Synthetic day of system-level solar output, in watts: a midday bell.
pub const SYNTHETIC_SOLAR_W: [f64; 24] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0e6, 60.0e6, 190.0e6, 320.0e6, 410.0e6, 460.0e6, 470.0e6,
    440.0e6, 370.0e6, 260.0e6, 120.0e6, 20.0e6, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
];

#[derive(Debug, Clone, PartialEq)]
pub struct DailyProfile {
    pub demand_w: HourlySeries,
    pub solar_w: HourlySeries,
}

impl DailyProfile {
    pub fn synthetic() -> Self {
        Self {
            demand_w: HourlySeries(SYNTHETIC_DEMAND_W.to_vec()),
            solar_w: HourlySeries(SYNTHETIC_SOLAR_W.to_vec()),
        }
    }

    /// Reads `hour,demand_w,solar_w` with one row for each hour 1..=24.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            hour: usize,
            demand_w: f64,
            solar_w: f64,
        }

        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["hour", "demand_w", "solar_w"] {
            return Err(Error::Profile(format!(
                "expected header 'hour,demand_w,solar_w', got '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut demand = vec![None; HOURS_PER_DAY];
        let mut solar = vec![None; HOURS_PER_DAY];
        for row in rdr.deserialize() {
            let row: Row = row?;
            if !(1..=HOURS_PER_DAY).contains(&row.hour) {
                return Err(Error::Profile(format!("hour {} outside 1..=24", row.hour)));
            }
            if demand[row.hour - 1].is_some() {
                return Err(Error::Profile(format!("hour {} listed twice", row.hour)));
            }
            demand[row.hour - 1] = Some(row.demand_w);
            solar[row.hour - 1] = Some(row.solar_w);
        }
        let collect = |v: Vec<Option<f64>>| -> Result<Vec<f64>> {
            v.into_iter()
                .enumerate()
                .map(|(h, x)| x.ok_or_else(|| Error::Profile(format!("hour {} missing", h + 1))))
                .collect()
        };
        Ok(Self {
            demand_w: HourlySeries::new(collect(demand)?)?,
            solar_w: HourlySeries::new(collect(solar)?)?,
        })
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["hour", "demand_w", "solar_w"])?;
        for h in 0..HOURS_PER_DAY {
            w.write_record(&[
                (h + 1).to_string(),
                self.demand_w.values()[h].to_string(),
                self.solar_w.values()[h].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<profile csv>", e))?;
        Ok(())
    }
}

/// Per-node, per-slot injections in per-unit. Node 0 (substation) is
/// always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProfiles {
    grid: TimeGrid,
    p_c: Vec<Vec<f64>>,
    q_c: Vec<Vec<f64>>,
    p_g: Vec<Vec<f64>>,
    s: Vec<f64>,
    q_g_max: Vec<Vec<f64>>,
    warnings: Vec<String>,
}

impl NodeProfiles {
    /// Assembles profiles from explicit per-node series (`n + 1` rows each,
    /// row 0 the substation). The inverter capability `s` is given per node
    /// and the VAR bound is derived from it.
    pub fn from_parts(
        grid: TimeGrid,
        p_c: Vec<Vec<f64>>,
        q_c: Vec<Vec<f64>>,
        p_g: Vec<Vec<f64>>,
        s: Vec<f64>,
    ) -> Result<Self> {
        let nodes = p_c.len();
        let t = grid.slots();
        if nodes < 2 || q_c.len() != nodes || p_g.len() != nodes || s.len() != nodes {
            return Err(Error::Profile("per-node series must share n + 1 >= 2 rows".into()));
        }
        for series in [&p_c, &q_c, &p_g] {
            if series.iter().any(|row| row.len() != t) {
                return Err(Error::Profile(format!("every node series needs {t} slots")));
            }
        }
        if p_c[0].iter().chain(&q_c[0]).chain(&p_g[0]).any(|&v| v != 0.0) || s[0] != 0.0 {
            return Err(Error::Profile("the substation node carries no load or PV".into()));
        }
        let mut warnings = Vec::new();
        let q_g_max = p_g
            .iter()
            .zip(&s)
            .enumerate()
            .map(|(j, (row, &cap))| {
                row.iter()
                    .enumerate()
                    .map(|(t, &p)| {
                        let head = cap * cap - p * p;
                        if head < 0.0 {
                            warnings.push(format!(
                                "node {j} slot {}: generation {p} exceeds capability {cap}; VAR bound clamped to 0",
                                t + 1
                            ));
                        }
                        head.max(0.0).sqrt()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            grid,
            p_c,
            q_c,
            p_g,
            s,
            q_g_max,
            warnings,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn slots(&self) -> usize {
        self.grid.slots()
    }

    /// Number of non-substation nodes.
    pub fn n(&self) -> usize {
        self.p_c.len() - 1
    }

    pub fn p_c(&self, node: usize, slot: usize) -> f64 {
        self.p_c[node][slot]
    }

    pub fn q_c(&self, node: usize, slot: usize) -> f64 {
        self.q_c[node][slot]
    }

    pub fn p_g(&self, node: usize, slot: usize) -> f64 {
        self.p_g[node][slot]
    }

    pub fn capability(&self, node: usize) -> f64 {
        self.s[node]
    }

    pub fn q_g_max(&self, node: usize, slot: usize) -> f64 {
        self.q_g_max[node][slot]
    }

    /// Largest absolute injection over all nodes and slots.
    pub fn peak_magnitude(&self) -> f64 {
        self.p_c
            .iter()
            .chain(&self.q_c)
            .chain(&self.p_g)
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// Scaling and inverter sizing used to turn a [`DailyProfile`] into
/// [`NodeProfiles`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileScaling {
    pub demand_scale: f64,
    pub solar_scale: f64,
    /// When set, demand splits into `p_c = d*pf` and `q_c = d*sqrt(1-pf^2)`;
    /// otherwise both equal the scaled demand.
    pub demand_pf: Option<f64>,
    pub s_max: f64,
}

impl Default for ProfileScaling {
    fn default() -> Self {
        Self {
            demand_scale: 40.0e6,
            solar_scale: 1.0e6,
            demand_pf: None,
            s_max: 1.1,
        }
    }
}

pub fn build_node_profiles(
    profile: &DailyProfile,
    scaling: ProfileScaling,
    base: PerUnitBase,
    n: usize,
    placement: &PvPlacement,
    grid: TimeGrid,
) -> Result<NodeProfiles> {
    if !(scaling.demand_scale > 0.0 && scaling.solar_scale > 0.0) {
        return Err(Error::Argument("profile scales must be positive".into()));
    }
    if !(scaling.s_max > 0.0 && scaling.s_max.is_finite()) {
        return Err(Error::Argument(format!("s_max must be positive, got {}", scaling.s_max)));
    }
    if let Some(pf) = scaling.demand_pf {
        if !(pf > 0.0 && pf <= 1.0) {
            return Err(Error::Argument(format!("demand_pf must be in (0, 1], got {pf}")));
        }
    }
    if n == 0 {
        return Err(Error::Argument("feeder has no load nodes".into()));
    }
    if let Some(&bad) = placement.nodes().iter().find(|&&j| j == 0 || j > n) {
        return Err(Error::Placement(format!("PV node {bad} outside 1..={n}")));
    }

    let demand: Vec<f64> = expand_to_slots(&profile.demand_w, grid)
        .into_iter()
        .map(|w| base.watts_to_pu(w / scaling.demand_scale))
        .collect();
    let solar: Vec<f64> = expand_to_slots(&profile.solar_w, grid)
        .into_iter()
        .map(|w| base.watts_to_pu(w / scaling.solar_scale))
        .collect();
    let (p_share, q_share) = match scaling.demand_pf {
        Some(pf) => (pf, (1.0 - pf * pf).max(0.0).sqrt()),
        None => (1.0, 1.0),
    };

    let t = grid.slots();
    let zeros = vec![0.0; t];
    let mut p_c = vec![zeros.clone()];
    let mut q_c = vec![zeros.clone()];
    let mut p_g = vec![zeros.clone()];
    let mut s = vec![0.0];
    let peak_solar = solar.iter().copied().fold(0.0f64, f64::max);
    for j in 1..=n {
        p_c.push(demand.iter().map(|d| d * p_share).collect());
        q_c.push(demand.iter().map(|d| d * q_share).collect());
        if placement.contains(j) {
            p_g.push(solar.clone());
            s.push(scaling.s_max * peak_solar);
        } else {
            p_g.push(zeros.clone());
            s.push(0.0);
        }
    }
    let mut profiles = NodeProfiles::from_parts(grid, p_c, q_c, p_g, s)?;
    if scaling.s_max < 1.0 {
        profiles.warnings.insert(
            0,
            format!("s_max = {} < 1: VAR capability vanishes near peak generation", scaling.s_max),
        );
    }
    Ok(profiles)
}

/// Average monthly residential consumption, kWh.
pub const MONTHLY_RESIDENTIAL_KWH: f64 = 940.0;

pub fn monthly_to_daily_kwh(monthly_kwh: f64) -> f64 {
    monthly_kwh / 30.0
}

/// Battery energy capacity in per-unit energy (per-unit power times hours):
/// `daily_kwh * fraction`, divided by the same scale factor as demand.
pub fn battery_capacity(daily_kwh: f64, fraction: f64, scale: f64, base: PerUnitBase) -> f64 {
    let wh = daily_kwh * 1000.0 * fraction / scale;
    base.watt_hours_to_pu(wh)
}
