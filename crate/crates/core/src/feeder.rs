//! Single-branch radial feeder: per-unit conversion, line segments and
//! PV/battery placement.
//!
//! Nodes are numbered `0..=n` with node 0 the substation. Segment `j`
//! connects node `j` to node `j + 1`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base quantities of the per-unit system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnitBase {
    /// Line-to-neutral base voltage in volts.
    pub v_base: f64,
    /// Base apparent power in volt-amperes.
    pub s_base: f64,
}

impl PerUnitBase {
    pub fn new(v_base: f64, s_base: f64) -> Result<Self> {
        if !(v_base > 0.0 && v_base.is_finite()) {
            return Err(Error::Argument(format!("v_base must be positive, got {v_base}")));
        }
        if !(s_base > 0.0 && s_base.is_finite()) {
            return Err(Error::Argument(format!("s_base must be positive, got {s_base}")));
        }
        Ok(Self { v_base, s_base })
    }

    /// Base impedance in ohms.
    pub fn z_base(&self) -> f64 {
        self.v_base * self.v_base / self.s_base
    }

    pub fn ohms_to_pu(&self, ohms: f64) -> f64 {
        ohms / self.z_base()
    }

    pub fn pu_to_ohms(&self, pu: f64) -> f64 {
        pu * self.z_base()
    }

    pub fn watts_to_pu(&self, watts: f64) -> f64 {
        watts / self.s_base
    }

    /// Converts watt-hours to per-unit energy (per-unit power times hours).
    pub fn watt_hours_to_pu(&self, wh: f64) -> f64 {
        wh / self.s_base
    }
}

impl Default for PerUnitBase {
    /// 7.2 kV line-to-neutral, 1 MVA.
    fn default() -> Self {
        Self {
            v_base: 7200.0,
            s_base: 1.0e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub length_m: f64,
    /// Per-unit resistance.
    pub r: f64,
    /// Per-unit reactance.
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederTopology {
    segments: Vec<Segment>,
}

impl FeederTopology {
    /// Builds a topology from per-unit segments, validating the invariants.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Feeder("feeder needs at least one segment".into()));
        }
        for (j, s) in segments.iter().enumerate() {
            if !(s.length_m > 0.0 && s.length_m.is_finite()) {
                return Err(Error::Feeder(format!(
                    "segment {j} has non-positive length {}",
                    s.length_m
                )));
            }
            if !(s.r >= 0.0 && s.x >= 0.0 && s.r.is_finite() && s.x.is_finite()) {
                return Err(Error::Feeder(format!(
                    "segment {j} has negative or non-finite impedance r={} x={}",
                    s.r, s.x
                )));
            }
        }
        Ok(Self { segments })
    }

    /// Number of non-substation nodes.
    pub fn n(&self) -> usize {
        self.segments.len()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn r(&self, j: usize) -> f64 {
        self.segments[j].r
    }

    pub fn x(&self, j: usize) -> f64 {
        self.segments[j].x
    }

    pub fn total_r(&self) -> f64 {
        self.segments.iter().map(|s| s.r).sum()
    }

    pub fn total_x(&self) -> f64 {
        self.segments.iter().map(|s| s.x).sum()
    }
}

/// Builds the feeder from physical line data.
pub fn build_feeder(
    n: usize,
    lengths_m: &[f64],
    r_ohm_per_km: f64,
    x_ohm_per_km: f64,
    base: PerUnitBase,
) -> Result<FeederTopology> {
    if n == 0 {
        return Err(Error::Feeder("n must be at least 1".into()));
    }
    if lengths_m.len() != n {
        return Err(Error::Feeder(format!(
            "expected {n} segment lengths, got {}",
            lengths_m.len()
        )));
    }
    if r_ohm_per_km < 0.0 || x_ohm_per_km < 0.0 {
        return Err(Error::Feeder("line impedance per km must be non-negative".into()));
    }
    let segments = lengths_m
        .iter()
        .map(|&length_m| {
            let km = length_m / 1000.0;
            Segment {
                length_m,
                r: base.ohms_to_pu(r_ohm_per_km * km),
                x: base.ohms_to_pu(x_ohm_per_km * km),
            }
        })
        .collect();
    FeederTopology::from_segments(segments)
}

/// Draws `n` segment lengths uniformly from `[min_m, max_m]`.
pub fn sample_lengths(n: usize, min_m: f64, max_m: f64, seed: u64) -> Result<Vec<f64>> {
    if !(min_m > 0.0) || !min_m.is_finite() || !max_m.is_finite() {
        return Err(Error::Argument(format!(
            "length bounds must be positive and finite, got [{min_m}, {max_m}]"
        )));
    }
    if min_m > max_m {
        return Err(Error::Argument(format!(
            "min length {min_m} exceeds max length {max_m}"
        )));
    }
    if min_m == max_m {
        return Ok(vec![min_m; n]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| rng.random_range(min_m..=max_m)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementKind {
    Front,
    Rear,
}

impl PlacementKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlacementKind::Front => "front",
            PlacementKind::Rear => "rear",
        }
    }
}

impl fmt::Display for PlacementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlacementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "front" => Ok(PlacementKind::Front),
            "rear" => Ok(PlacementKind::Rear),
            other => Err(Error::Argument(format!("unknown placement '{other}'"))),
        }
    }
}

/// Contiguous block of PV+battery nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvPlacement {
    pv_nodes: Vec<usize>,
    kind: PlacementKind,
    penetration: f64,
}

impl PvPlacement {
    /// Node indices in increasing order, all within `1..=n`.
    pub fn nodes(&self) -> &[usize] {
        &self.pv_nodes
    }

    pub fn kind(&self) -> PlacementKind {
        self.kind
    }

    pub fn penetration(&self) -> f64 {
        self.penetration
    }

    pub fn contains(&self, node: usize) -> bool {
        self.pv_nodes.binary_search(&node).is_ok()
    }

    /// A placement with no PV nodes; only used to model an all-passive feeder.
    pub fn empty(kind: PlacementKind) -> Self {
        Self {
            pv_nodes: Vec::new(),
            kind,
            penetration: 0.0,
        }
    }
}

/// Number of PV nodes for penetration `a`, rounding half up.
pub fn pv_count(n: usize, a: f64) -> usize {
    // Nudge by a few ulps so 0.5*n style products that land on x.5 are not
    // pulled below by representation error (e.g. 0.3*5 = 1.4999999999999998).
    let raw = a * n as f64;
    (raw + 0.5 + raw.abs() * 4.0 * f64::EPSILON).floor() as usize
}

pub fn place_pv(n: usize, a: f64, kind: PlacementKind) -> Result<PvPlacement> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::Placement(format!("penetration must be in (0, 1], got {a}")));
    }
    let k = pv_count(n, a);
    if k == 0 {
        return Err(Error::Placement(format!(
            "penetration {a} on {n} nodes places no PV nodes"
        )));
    }
    let k = k.min(n);
    let pv_nodes = match kind {
        PlacementKind::Front => (1..=k).collect(),
        PlacementKind::Rear => (n - k + 1..=n).collect(),
    };
    Ok(PvPlacement {
        pv_nodes,
        kind,
        penetration: a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_base() -> PerUnitBase {
        PerUnitBase::new(7200.0, 1.0e6).unwrap()
    }

    #[test]
    fn one_km_segment_per_unit() {
        let base = default_base();
        assert!((base.z_base() - 51.84).abs() < 1e-12);
        let f = build_feeder(1, &[1000.0], 0.33, 0.38, base).unwrap();
        // 0.33 / 51.84 and 0.38 / 51.84
        assert!((f.r(0) - 0.006_365_740_740_740_741).abs() < 1e-15);
        assert!((f.x(0) - 0.007_330_246_913_580_247).abs() < 1e-15);
    }

    #[test]
    fn zero_impedance_segment() {
        let f = build_feeder(1, &[1000.0], 0.0, 0.0, default_base()).unwrap();
        assert_eq!(f.r(0), 0.0);
        assert_eq!(f.x(0), 0.0);
    }

    #[test]
    fn uniform_feeder_segments_identical() {
        let f = build_feeder(30, &[250.0; 30], 0.33, 0.38, default_base()).unwrap();
        let expected_r = 0.33 * 0.25 / 51.84;
        assert_eq!(f.n(), 30);
        for s in f.segments() {
            assert!((s.r - expected_r).abs() < 1e-15);
            assert_eq!(s, &f.segments()[0]);
        }
    }

    #[test]
    fn bad_feeders_rejected() {
        assert!(build_feeder(0, &[], 0.33, 0.38, default_base()).is_err());
        assert!(build_feeder(2, &[100.0, 0.0], 0.33, 0.38, default_base()).is_err());
        assert!(build_feeder(1, &[-5.0], 0.33, 0.38, default_base()).is_err());
        assert!(build_feeder(2, &[100.0], 0.33, 0.38, default_base()).is_err());
        assert!(PerUnitBase::new(0.0, 1.0).is_err());
        assert!(PerUnitBase::new(1.0, -1.0).is_err());
    }

    #[test]
    fn degenerate_length_interval() {
        assert_eq!(sample_lengths(5, 250.0, 250.0, 1).unwrap(), vec![250.0; 5]);
    }

    #[test]
    fn sampled_lengths_in_range_and_repeatable() {
        let a = sample_lengths(30, 200.0, 300.0, 42).unwrap();
        let b = sample_lengths(30, 200.0, 300.0, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&l| (200.0..=300.0).contains(&l)));
        assert_ne!(a, sample_lengths(30, 200.0, 300.0, 43).unwrap());
    }

    #[test]
    fn sampled_mean_near_midpoint() {
        // standard error of the mean is 100/sqrt(12*1000) ~ 0.91 m, so the
        // [240, 260] window is about 11 standard errors wide on each side.
        let v = sample_lengths(1000, 200.0, 300.0, 7).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((240.0..=260.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn inverted_interval_rejected() {
        assert!(matches!(
            sample_lengths(3, 300.0, 200.0, 0),
            Err(Error::Argument(_))
        ));
        assert!(sample_lengths(3, 0.0, 200.0, 0).is_err());
    }

    #[test]
    fn placements_on_thirty_nodes() {
        let f = place_pv(30, 0.2, PlacementKind::Front).unwrap();
        assert_eq!(f.nodes(), (1..=6).collect::<Vec<_>>().as_slice());
        let r = place_pv(30, 0.2, PlacementKind::Rear).unwrap();
        assert_eq!(r.nodes(), (25..=30).collect::<Vec<_>>().as_slice());
        let r8 = place_pv(30, 0.8, PlacementKind::Rear).unwrap();
        assert_eq!(r8.nodes(), (7..=30).collect::<Vec<_>>().as_slice());
        let f5 = place_pv(30, 0.5, PlacementKind::Front).unwrap();
        assert_eq!(f5.nodes().len(), 15);
    }

    #[test]
    fn round_half_up() {
        assert_eq!(pv_count(5, 0.3), 2); // 1.5 -> 2
        assert_eq!(pv_count(3, 0.5), 2); // 1.5 -> 2
        assert_eq!(pv_count(10, 0.25), 3); // 2.5 -> 3
        assert_eq!(pv_count(10, 0.24), 2);
    }

    #[test]
    fn empty_placement_rejected() {
        assert!(matches!(
            place_pv(3, 0.1, PlacementKind::Front),
            Err(Error::Placement(_))
        ));
        assert!(place_pv(3, 0.0, PlacementKind::Rear).is_err());
        assert!(place_pv(3, 1.5, PlacementKind::Rear).is_err());
    }

    proptest! {
        #[test]
        fn per_unit_round_trip(ohms in 1e-6f64..1e4, v in 100.0f64..5e5, s in 1e3f64..1e9) {
            let base = PerUnitBase::new(v, s).unwrap();
            let back = base.pu_to_ohms(base.ohms_to_pu(ohms));
            prop_assert!(((back - ohms) / ohms).abs() <= 1e-12);
        }

        #[test]
        fn front_and_rear_are_reflections(n in 1usize..200, a in 0.01f64..=1.0) {
            prop_assume!(pv_count(n, a) >= 1);
            let f = place_pv(n, a, PlacementKind::Front).unwrap();
            let r = place_pv(n, a, PlacementKind::Rear).unwrap();
            prop_assert_eq!(f.nodes().len(), r.nodes().len());
            prop_assert_eq!(f.nodes().len(), pv_count(n, a).min(n));
            let mut mirrored: Vec<usize> = f.nodes().iter().map(|&j| n + 1 - j).collect();
            mirrored.sort_unstable();
            prop_assert_eq!(mirrored.as_slice(), r.nodes());
        }

        #[test]
        fn sampling_is_pure(n in 0usize..64, lo in 1.0f64..500.0, width in 0.0f64..500.0, seed: u64) {
            let a = sample_lengths(n, lo, lo + width, seed).unwrap();
            let b = sample_lengths(n, lo, lo + width, seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.iter().all(|&l| l >= lo && l <= lo + width));
        }
    }
}
