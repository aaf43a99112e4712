//! Scenario configuration and large-scale link statistics.
//!
//! A scenario is a TOML document. Every key is optional; absent keys take the
//! reference LEO downlink values (560 km altitude, 20 GHz carrier, 400 MHz
//! bandwidth, four 64-antenna satellites serving two 4-antenna users with two
//! streams each). Counts accept both descriptive names and the single-letter
//! aliases `L`, `K`, `N`, `M`, `S`.
//!
//! ```toml
//! L = 4
//! K = 2
//! power_cap_dbw_grid = [0.0, 10.0, 20.0]
//! constraint_kind = "per-sat-total"
//!
//! [ellipsoid]
//! expansion = 2.0
//! ```

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Propagation speed used by the free-space gain, m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

const MIN_ELEVATION_DEG: f64 = 20.0;
const MAX_ELEVATION_DEG: f64 = 90.0;
const MAX_AZIMUTH_DEG: f64 = 90.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    PerSatTotal,
    PerAntenna,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AngleMode {
    Random,
    FixedList,
}

/// Which cut normal the multiplier ellipsoid uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CutRule {
    /// The whole residual vector.
    #[default]
    FullResidual,
    /// Only the coordinate with the largest residual.
    MostViolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SeEstimator {
    #[default]
    ExactMc,
    Approx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EllipsoidConfig {
    /// Geometric expansion factor α (> 1).
    pub expansion: f64,
    /// Feasibility tolerance relative to the largest cap at a satellite.
    pub rel_tolerance: f64,
    pub max_iterations: usize,
    pub cut: CutRule,
}

impl Default for EllipsoidConfig {
    fn default() -> Self {
        Self {
            expansion: 2.0,
            rel_tolerance: 1e-5,
            max_iterations: 300,
            cut: CutRule::FullResidual,
        }
    }
}

/// Fixed angle tables, indexed `[satellite][user]`, in degrees unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct AngleTables {
    pub ue_azimuth_deg: Option<Vec<Vec<f64>>>,
    /// UE-side azimuths given directly as `sin θ`.
    pub ue_azimuth_sin: Option<Vec<Vec<f64>>>,
    pub sat_azimuth_deg: Option<Vec<Vec<f64>>>,
    pub elevation_deg: Option<Vec<Vec<f64>>>,
}

/// One user-supplied weighted power constraint for a satellite.
///
/// The weighting matrix is `weight_re + j·weight_im` (or `diag(diagonal)`), and
/// the cap is `cap_scale` times the sweep power cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomConstraint {
    pub sat: usize,
    #[serde(default)]
    pub diagonal: Option<Vec<f64>>,
    #[serde(default)]
    pub weight_re: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub weight_im: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    pub cap_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    #[serde(alias = "L")]
    pub num_sats: usize,
    #[serde(alias = "K")]
    pub num_users: usize,
    #[serde(alias = "N")]
    pub sat_antennas: usize,
    #[serde(alias = "M")]
    pub user_antennas: usize,
    #[serde(alias = "S")]
    pub streams: usize,
    pub altitude_m: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub gain_user_dbi: f64,
    pub gain_sat_dbi: f64,
    pub rician_factor_db: f64,
    pub power_cap_dbw_grid: Vec<f64>,
    pub constraint_kind: ConstraintKind,
    pub custom_constraints: Vec<CustomConstraint>,
    pub angle_mode: AngleMode,
    pub angles: AngleTables,
    pub azimuth_drift_deg: f64,
    pub elevation_drift_deg: f64,
    pub mc_trials: usize,
    pub rng_seed: u64,
    /// Independent geometry draws per sweep point.
    pub num_seeds: usize,
    pub se_estimator: SeEstimator,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub ellipsoid: EllipsoidConfig,
    /// Keep only this many satellites per user (ranked by power-weighted
    /// participation) before stream association. `None` uses all satellites.
    pub serving_set_size: Option<usize>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_sats: 4,
            num_users: 2,
            sat_antennas: 64,
            user_antennas: 4,
            streams: 2,
            altitude_m: 560e3,
            carrier_hz: 20e9,
            bandwidth_hz: 400e6,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 1.2,
            gain_user_dbi: 8.0,
            gain_sat_dbi: 20.0,
            rician_factor_db: 12.0,
            power_cap_dbw_grid: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            constraint_kind: ConstraintKind::PerSatTotal,
            custom_constraints: Vec::new(),
            angle_mode: AngleMode::Random,
            angles: AngleTables::default(),
            azimuth_drift_deg: 1.0,
            elevation_drift_deg: 0.5,
            mc_trials: 10_000,
            rng_seed: 1,
            num_seeds: 1,
            se_estimator: SeEstimator::ExactMc,
            max_iterations: 40,
            tolerance: 1e-4,
            ellipsoid: EllipsoidConfig::default(),
            serving_set_size: None,
        }
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig> {
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    load_scenario(&text)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.num_sats == 0 {
            return fail("num_sats (L) must be at least 1".into());
        }
        if self.num_users == 0 {
            return fail("num_users (K) must be at least 1".into());
        }
        if self.sat_antennas == 0 || self.user_antennas == 0 {
            return fail("antenna counts (N, M) must be at least 1".into());
        }
        if self.streams == 0 || self.streams > self.user_antennas {
            return fail(format!(
                "streams (S) = {} must satisfy 1 <= S <= M = {}",
                self.streams, self.user_antennas
            ));
        }
        if self.num_sats * self.sat_antennas < self.user_antennas {
            return fail("L * N must be at least M".into());
        }
        for (key, v) in [
            ("altitude_m", self.altitude_m),
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{key} must be positive and finite"));
            }
        }
        if self.mc_trials == 0 {
            return fail("mc_trials must be at least 1".into());
        }
        if self.num_seeds == 0 {
            return fail("num_seeds must be at least 1".into());
        }
        if self.power_cap_dbw_grid.is_empty() || self.power_cap_dbw_grid.iter().any(|p| !p.is_finite()) {
            return fail("power_cap_dbw_grid must be a non-empty list of finite values".into());
        }
        if !(self.ellipsoid.expansion > 1.0) {
            return fail("ellipsoid.expansion (alpha) must exceed 1".into());
        }
        if !(self.ellipsoid.rel_tolerance > 0.0) || self.ellipsoid.max_iterations == 0 {
            return fail("ellipsoid tolerance and iteration limit must be positive".into());
        }
        if self.max_iterations == 0 || !(self.tolerance >= 0.0) {
            return fail("max_iterations must be >= 1 and tolerance >= 0".into());
        }
        if self.azimuth_drift_deg < 0.0 || self.elevation_drift_deg < 0.0 {
            return fail("angle drifts must be non-negative".into());
        }
        if let Some(size) = self.serving_set_size {
            if size < self.streams || size > self.num_sats {
                return fail("serving_set_size must lie in [S, L]".into());
            }
        }
        self.validate_angles()?;
        self.validate_custom()?;
        Ok(())
    }

    fn validate_angles(&self) -> Result<()> {
        let (l, k) = (self.num_sats, self.num_users);
        let check = |name: &str, table: &Option<Vec<Vec<f64>>>, lo: f64, hi: f64| -> Result<()> {
            if let Some(t) = table {
                if t.len() != l || t.iter().any(|row| row.len() != k) {
                    return Err(Error::Validation(format!("angles.{name} must be an L x K table ({l} x {k})")));
                }
                if t.iter().flatten().any(|v| !(v.is_finite() && *v >= lo && *v <= hi)) {
                    return Err(Error::Validation(format!("angles.{name} entries must lie in [{lo}, {hi}]")));
                }
            }
            Ok(())
        };
        let a = &self.angles;
        check("ue_azimuth_deg", &a.ue_azimuth_deg, -90.0, 90.0)?;
        check("ue_azimuth_sin", &a.ue_azimuth_sin, -1.0, 1.0)?;
        check("sat_azimuth_deg", &a.sat_azimuth_deg, -90.0, 90.0)?;
        check("elevation_deg", &a.elevation_deg, f64::MIN_POSITIVE, 90.0)?;
        if a.ue_azimuth_deg.is_some() && a.ue_azimuth_sin.is_some() {
            return Err(Error::Validation(
                "give at most one of angles.ue_azimuth_deg and angles.ue_azimuth_sin".into(),
            ));
        }
        if self.angle_mode == AngleMode::FixedList
            && ((a.ue_azimuth_deg.is_none() && a.ue_azimuth_sin.is_none())
                || a.sat_azimuth_deg.is_none()
                || a.elevation_deg.is_none())
        {
            return Err(Error::Validation(
                "angle_mode = \"fixed-list\" needs UE azimuths, angles.sat_azimuth_deg and angles.elevation_deg".into(),
            ));
        }
        Ok(())
    }

    fn validate_custom(&self) -> Result<()> {
        if self.constraint_kind != ConstraintKind::Custom {
            return Ok(());
        }
        let n = self.sat_antennas;
        for sat in 0..self.num_sats {
            if !self.custom_constraints.iter().any(|c| c.sat == sat) {
                return Err(Error::Validation(format!("custom_constraints has no entry for satellite {sat}")));
            }
        }
        for (i, c) in self.custom_constraints.iter().enumerate() {
            if c.sat >= self.num_sats {
                return Err(Error::Validation(format!("custom_constraints[{i}].sat out of range")));
            }
            if !(c.cap_scale > 0.0) {
                return Err(Error::Validation(format!("custom_constraints[{i}].cap_scale must be positive")));
            }
            match (&c.diagonal, &c.weight_re) {
                (Some(d), None) if d.len() == n => {}
                (None, Some(re)) if re.len() == n && re.iter().all(|r| r.len() == n) => {
                    if let Some(im) = &c.weight_im {
                        if im.len() != n || im.iter().any(|r| r.len() != n) {
                            return Err(Error::Validation(format!("custom_constraints[{i}].weight_im must be N x N")));
                        }
                    }
                }
                _ => {
                    return Err(Error::Validation(format!(
                        "custom_constraints[{i}] needs exactly one of `diagonal` (length N) or `weight_re` (N x N)"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Receiver noise power over the configured bandwidth, in watts.
    pub fn noise_power_w(&self) -> f64 {
        db_to_linear(self.noise_psd_dbm_hz + self.noise_figure_db) * 1e-3 * self.bandwidth_hz
    }

    pub fn kappa_linear(&self) -> f64 {
        db_to_linear(self.rician_factor_db)
    }

    /// Power-cap sweep in watts.
    pub fn power_caps_w(&self) -> Vec<f64> {
        self.power_cap_dbw_grid.iter().map(|&p| db_to_linear(p)).collect()
    }
}

/// Satellite–user distance for a given elevation angle and orbital altitude.
pub fn slant_range(elevation_rad: f64, altitude_m: f64) -> Result<f64> {
    if !elevation_rad.is_finite() || !altitude_m.is_finite() {
        return Err(Error::Domain("slant_range inputs must be finite".into()));
    }
    if !(elevation_rad > 0.0 && elevation_rad <= PI / 2.0 + 1e-12) || altitude_m <= 0.0 {
        return Err(Error::Domain("slant_range needs elevation in (0, 90] deg and altitude > 0".into()));
    }
    let re = EARTH_RADIUS_M;
    let outer = (re + altitude_m).powi(2) - (re * elevation_rad.cos()).powi(2);
    Ok(-re * elevation_rad.sin() + outer.sqrt())
}

/// Free-space large-scale gain `G_u G_s (c / (4π f_c d))²`, linear scale.
pub fn path_gain(distance_m: f64, carrier_hz: f64, gain_user_dbi: f64, gain_sat_dbi: f64) -> Result<f64> {
    if !(distance_m > 0.0 && carrier_hz > 0.0) || !gain_user_dbi.is_finite() || !gain_sat_dbi.is_finite() {
        return Err(Error::Domain("path_gain needs positive distance and carrier".into()));
    }
    let fs = SPEED_OF_LIGHT / (4.0 * PI * carrier_hz * distance_m);
    Ok(db_to_linear(gain_user_dbi) * db_to_linear(gain_sat_dbi) * fs * fs)
}

/// A satellite × user table of reals, row-major by satellite.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGrid {
    sats: usize,
    users: usize,
    data: Vec<f64>,
}

impl LinkGrid {
    pub fn filled(sats: usize, users: usize, value: f64) -> Self {
        Self { sats, users, data: vec![value; sats * users] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let sats = rows.len();
        let users = rows.first().map_or(0, Vec::len);
        Self { sats, users, data: rows.iter().flatten().copied().collect() }
    }

    pub fn sats(&self) -> usize {
        self.sats
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.data.iter()
    }
}

impl std::ops::Index<(usize, usize)> for LinkGrid {
    type Output = f64;
    fn index(&self, (l, k): (usize, usize)) -> &f64 {
        &self.data[l * self.users + k]
    }
}

impl std::ops::IndexMut<(usize, usize)> for LinkGrid {
    fn index_mut(&mut self, (l, k): (usize, usize)) -> &mut f64 {
        &mut self.data[l * self.users + k]
    }
}

/// Statistical CSI of every satellite–user link. Angles in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkStatistics {
    pub theta: LinkGrid,
    pub phi: LinkGrid,
    pub elevation: LinkGrid,
    pub distance_m: LinkGrid,
    pub beta: LinkGrid,
    pub kappa: LinkGrid,
    pub noise_power_w: f64,
}

impl LinkStatistics {
    pub fn sats(&self) -> usize {
        self.beta.sats()
    }

    pub fn users(&self) -> usize {
        self.beta.users()
    }

    /// Builds statistics from angle tables (radians), deriving distance and gain.
    pub fn from_angles(config: &ScenarioConfig, theta: LinkGrid, phi: LinkGrid, elevation: LinkGrid) -> Result<Self> {
        let (l_count, k_count) = (config.num_sats, config.num_users);
        let mut distance = LinkGrid::filled(l_count, k_count, 0.0);
        let mut beta = LinkGrid::filled(l_count, k_count, 0.0);
        for l in 0..l_count {
            for k in 0..k_count {
                let d = slant_range(elevation[(l, k)], config.altitude_m)?;
                distance[(l, k)] = d;
                beta[(l, k)] = path_gain(d, config.carrier_hz, config.gain_user_dbi, config.gain_sat_dbi)?;
            }
        }
        Ok(Self {
            theta,
            phi,
            elevation,
            distance_m: distance,
            beta,
            kappa: LinkGrid::filled(l_count, k_count, config.kappa_linear()),
            noise_power_w: config.noise_power_w(),
        })
    }
}

fn reference_with_drift<R: Rng>(rng: &mut R, l: usize, k: usize, range: (f64, f64), drift: f64) -> LinkGrid {
    let mut grid = LinkGrid::filled(l, k, 0.0);
    for sat in 0..l {
        let reference = rng.random_range(range.0..=range.1);
        grid[(sat, 0)] = reference;
        for user in 1..k {
            let delta = if drift > 0.0 { rng.random_range(-drift..=drift) } else { 0.0 };
            grid[(sat, user)] = (reference + delta).clamp(range.0, range.1);
        }
    }
    grid
}

fn deg_grid(rows: &[Vec<f64>]) -> LinkGrid {
    let mut g = LinkGrid::from_rows(rows);
    g.data.iter_mut().for_each(|v| *v = v.to_radians());
    g
}

/// Draws link geometry: user 0 is the reference, other users drift around it.
///
/// Any fixed angle tables present in the config replace the sampled values.
pub fn sample_geometry<R: Rng>(config: &ScenarioConfig, rng: &mut R) -> Result<LinkStatistics> {
    let (l, k) = (config.num_sats, config.num_users);
    // Draw order is part of the reproducibility contract.
    let theta_deg = reference_with_drift(rng, l, k, (-MAX_AZIMUTH_DEG, MAX_AZIMUTH_DEG), config.azimuth_drift_deg);
    let phi_deg = reference_with_drift(rng, l, k, (-MAX_AZIMUTH_DEG, MAX_AZIMUTH_DEG), config.azimuth_drift_deg);
    let elev_deg = reference_with_drift(rng, l, k, (MIN_ELEVATION_DEG, MAX_ELEVATION_DEG), config.elevation_drift_deg);
    let to_rad = |mut g: LinkGrid| {
        g.data.iter_mut().for_each(|v| *v = v.to_radians());
        g
    };
    let mut theta = to_rad(theta_deg);
    let mut phi = to_rad(phi_deg);
    let mut elevation = to_rad(elev_deg);

    let a = &config.angles;
    if let Some(t) = &a.ue_azimuth_deg {
        theta = deg_grid(t);
    }
    if let Some(t) = &a.ue_azimuth_sin {
        theta = LinkGrid::from_rows(t);
        theta.data.iter_mut().for_each(|v| *v = v.asin());
    }
    if let Some(t) = &a.sat_azimuth_deg {
        phi = deg_grid(t);
    }
    if let Some(t) = &a.elevation_deg {
        elevation = deg_grid(t);
    }
    LinkStatistics::from_angles(config, theta, phi, elevation)
}

/// Mixes a base seed with stream indices into an independent 64-bit seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = base ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        x = splitmix64(x ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    splitmix64(x)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Geometry for draw `index` of the scenario's seed stream.
pub fn geometry_for_seed(config: &ScenarioConfig, index: u64) -> Result<LinkStatistics> {
    let mut rng = seeded_rng(derive_seed(config.rng_seed, &[0x6e6f_6d65, index]));
    sample_geometry(config, &mut rng)
}
