//! Experiment presets: power-cap sweeps over schemes and geometry draws, emitted as CSV rows.

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{mmse_baseline, random_association, tdma_mrt_baseline, zf_baseline};
use crate::channel::EffectiveChannel;
use crate::error::{Error, Result};
use crate::joint_wmmse::{self, JointPrecoderSet, SolveParams};
use crate::power::PowerConstraintSet;
use crate::scenario::{db_to_linear, derive_seed, geometry_for_seed, seeded_rng, LinkStatistics, ScenarioConfig};
use crate::se_eval::{approx_se, exact_se_mc};
use crate::streamwise::{init_streamwise, proposed_assignment, solve_streamwise_from, to_joint_form, StreamAssignment};

pub const SCHEMA_LINE: &str = "# distsat-experiment schema=1";
pub const CSV_COLUMNS: [&str; 13] = [
    "scenario_id",
    "mode",
    "L",
    "K",
    "N",
    "M",
    "S",
    "power_cap_dbw",
    "sum_se",
    "per_user_se",
    "iterations",
    "wall_time_ms",
    "seed",
];

/// UE-side sines with pairwise differences in {±0.5, ±1, ±1.5}.
pub const ORTHOGONAL_SINES: [f64; 4] = [-0.9, -0.4, 0.1, 0.6];
const MIN_ASSOCIATION_SEEDS: usize = 50;
const TAG_MC: u64 = 0x6d63;
const TAG_ASSOC: u64 = 0x6173_736f;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    ApproxGap,
    JointVsStreamwiseOrthogonal,
    JointVsStreamwiseNonorthogonal,
    StreamCount,
    Baselines,
    UserLoading,
    Association,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::ApproxGap,
        Preset::JointVsStreamwiseOrthogonal,
        Preset::JointVsStreamwiseNonorthogonal,
        Preset::StreamCount,
        Preset::Baselines,
        Preset::UserLoading,
        Preset::Association,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::ApproxGap => "approx-gap",
            Preset::JointVsStreamwiseOrthogonal => "joint-vs-streamwise-orthogonal",
            Preset::JointVsStreamwiseNonorthogonal => "joint-vs-streamwise-nonorthogonal",
            Preset::StreamCount => "stream-count",
            Preset::Baselines => "baselines",
            Preset::UserLoading => "user-loading",
            Preset::Association => "association",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let alias = match s {
            "joint-vs-streamwise-non-orthogonal" => "joint-vs-streamwise-nonorthogonal",
            other => other,
        };
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == alias)
            .ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::Validation(format!("unknown preset `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Precoding scheme evaluated at each sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Joint,
    Streamwise,
    StreamwiseRandom,
    Mmse,
    Zf,
    TdmaMrt,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Joint => "joint",
            Scheme::Streamwise => "streamwise",
            Scheme::StreamwiseRandom => "streamwise-random",
            Scheme::Mmse => "mmse",
            Scheme::Zf => "zf",
            Scheme::TdmaMrt => "tdma-mrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimate {
    Approx,
    Exact,
}

impl Estimate {
    pub fn name(self) -> &'static str {
        match self {
            Estimate::Approx => "approx",
            Estimate::Exact => "exact",
        }
    }
}

/// Mode string in the CSV: `<scheme>:<estimate>`.
pub fn mode_name(scheme: Scheme, estimate: Estimate) -> String {
    format!("{}:{}", scheme.name(), estimate.name())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Overrides the configured Monte-Carlo trial count.
    pub trials: Option<usize>,
    /// Fills `wall_time_ms`; otherwise the column is 0 so reruns are byte-identical.
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub scenario_id: String,
    pub mode: String,
    pub sats: usize,
    pub users: usize,
    pub sat_antennas: usize,
    pub user_antennas: usize,
    pub streams: usize,
    pub power_cap_dbw: f64,
    pub sum_se: f64,
    pub per_user_se: Vec<f64>,
    pub iterations: usize,
    pub wall_time_ms: u64,
    /// Geometry draw index under the run's base seed.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub preset: Preset,
    pub rows: Vec<ExperimentRow>,
    /// Row-level failures; the affected rows carry `NaN` SE values.
    pub warnings: Vec<String>,
}

impl ExperimentResult {
    pub fn rows_for<'a>(&'a self, scenario_id: &'a str, mode: &'a str) -> impl Iterator<Item = &'a ExperimentRow> + 'a {
        self.rows.iter().filter(move |r| r.scenario_id == scenario_id && r.mode == mode)
    }

    /// Mean `sum_se` over seeds at every sweep point, in grid order.
    pub fn mean_curve(&self, scenario_id: &str, mode: &str) -> Vec<(f64, f64)> {
        let mut points: Vec<(f64, f64, usize)> = Vec::new();
        for r in self.rows_for(scenario_id, mode) {
            match points.iter_mut().find(|p| p.0 == r.power_cap_dbw) {
                Some(p) => {
                    p.1 += r.sum_se;
                    p.2 += 1;
                }
                None => points.push((r.power_cap_dbw, r.sum_se, 1)),
            }
        }
        points.into_iter().map(|(p, s, n)| (p, s / n as f64)).collect()
    }
}

/// One scenario of a preset: a config and the schemes run on it.
#[derive(Debug, Clone)]
pub struct Variant {
    pub id: String,
    pub config: ScenarioConfig,
    pub schemes: Vec<Scheme>,
}

/// Expands a preset into its scenarios, starting from `base`.
pub fn variants(preset: Preset, base: &ScenarioConfig) -> Result<Vec<Variant>> {
    let with = |id: String, config: ScenarioConfig, schemes: &[Scheme]| Variant { id, config, schemes: schemes.to_vec() };
    let out = match preset {
        Preset::ApproxGap => [4usize, 8]
            .iter()
            .map(|&l| {
                let c = ScenarioConfig { num_sats: l, user_antennas: 4, streams: 4, ..base.clone() };
                with(format!("L{l}"), c, &[Scheme::Mmse])
            })
            .collect(),
        Preset::JointVsStreamwiseOrthogonal => {
            let (l, k) = (ORTHOGONAL_SINES.len(), base.num_users);
            let table = (0..l).map(|sat| (0..k).map(|u| ORTHOGONAL_SINES[(sat + u) % l]).collect()).collect();
            let mut c = ScenarioConfig { num_sats: l, user_antennas: 4, ..base.clone() };
            c.angles.ue_azimuth_deg = None;
            c.angles.ue_azimuth_sin = Some(table);
            vec![with("orthogonal".into(), c, &[Scheme::Joint, Scheme::Streamwise])]
        }
        Preset::JointVsStreamwiseNonorthogonal => {
            vec![with("random-angles".into(), base.clone(), &[Scheme::Joint, Scheme::Streamwise])]
        }
        Preset::StreamCount => {
            let top = base.user_antennas.min(base.num_sats).min(3);
            (1..=top)
                .map(|s| with(format!("S{s}"), ScenarioConfig { streams: s, ..base.clone() }, &[Scheme::Joint, Scheme::Streamwise]))
                .collect()
        }
        Preset::Baselines => [4usize, 8]
            .iter()
            .map(|&l| with(format!("L{l}"), ScenarioConfig { num_sats: l, ..base.clone() }, &[Scheme::Joint, Scheme::Mmse, Scheme::Zf]))
            .collect(),
        Preset::UserLoading => [2usize, 4, 6]
            .iter()
            .map(|&k| {
                let c = ScenarioConfig { num_sats: 8, num_users: k, ..base.clone() };
                with(format!("K{k}"), c, &[Scheme::Joint, Scheme::TdmaMrt])
            })
            .collect(),
        Preset::Association => [16usize, 64]
            .iter()
            .map(|&n| {
                let c = ScenarioConfig {
                    num_sats: 8,
                    sat_antennas: n,
                    num_seeds: base.num_seeds.max(MIN_ASSOCIATION_SEEDS),
                    ..base.clone()
                };
                with(format!("N{n}"), c, &[Scheme::Streamwise, Scheme::StreamwiseRandom])
            })
            .collect(),
    };
    for v in &out {
        v.config
            .validate()
            .map_err(|e| Error::Validation(format!("preset {preset} scenario {}: {e}", v.id)))?;
    }
    Ok(out)
}

struct Point<'a> {
    variant: &'a Variant,
    draw: u64,
    power_index: usize,
    power_dbw: f64,
}

/// Runs every scenario, geometry draw and sweep point of `preset`.
///
/// Rows are ordered by scenario, draw, sweep point, scheme and estimate
/// regardless of scheduling.
pub fn run_preset(preset: Preset, base: &ScenarioConfig, options: &RunOptions) -> Result<ExperimentResult> {
    base.validate()?;
    let variants = variants(preset, base)?;
    let mut points = Vec::new();
    for v in &variants {
        for draw in 0..v.config.num_seeds as u64 {
            for (power_index, &power_dbw) in v.config.power_cap_dbw_grid.iter().enumerate() {
                points.push(Point { variant: v, draw, power_index, power_dbw });
            }
        }
    }
    let results: Vec<Result<(Vec<ExperimentRow>, Vec<String>)>> =
        points.par_iter().map(|p| run_point(p, options)).collect();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for r in results {
        let (mut rs, mut ws) = r?;
        rows.append(&mut rs);
        warnings.append(&mut ws);
    }
    Ok(ExperimentResult { preset, rows, warnings })
}

struct Evaluated {
    precoders: Option<JointPrecoderSet>,
    iterations: usize,
}

fn run_point(p: &Point<'_>, options: &RunOptions) -> Result<(Vec<ExperimentRow>, Vec<String>)> {
    let c = &p.variant.config;
    let stats = geometry_for_seed(c, p.draw)?;
    let eff = EffectiveChannel::new(&stats, c.user_antennas, c.sat_antennas)?;
    let rho = db_to_linear(p.power_dbw);
    let trials = options.trials.unwrap_or(c.mc_trials);
    let mc_seed = derive_seed(c.rng_seed, &[TAG_MC, p.draw, p.power_index as u64]);
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &scheme in &p.variant.schemes {
        let started = Instant::now();
        let outcome = evaluate_scheme(scheme, c, &stats, &eff, rho, p.draw, trials, mc_seed);
        let elapsed = if options.timing { started.elapsed().as_millis() as u64 } else { 0 };
        let row = |estimate: Estimate, per_user_se: Vec<f64>, iterations: usize| ExperimentRow {
            scenario_id: p.variant.id.clone(),
            mode: mode_name(scheme, estimate),
            sats: c.num_sats,
            users: c.num_users,
            sat_antennas: c.sat_antennas,
            user_antennas: c.user_antennas,
            streams: c.streams,
            power_cap_dbw: p.power_dbw,
            sum_se: if per_user_se.is_empty() { f64::NAN } else { per_user_se.iter().sum() },
            per_user_se,
            iterations,
            wall_time_ms: elapsed,
            seed: p.draw,
        };
        match outcome {
            Ok(list) => {
                for (estimate, se, iterations) in list {
                    rows.push(row(estimate, se, iterations));
                }
            }
            Err(e @ (Error::Infeasible(_) | Error::Numerical(_))) => {
                warnings.push(format!(
                    "{} draw {} at {} dBW, {}: {e}",
                    p.variant.id,
                    p.draw,
                    p.power_dbw,
                    scheme.name()
                ));
                let estimates: &[Estimate] =
                    if scheme == Scheme::TdmaMrt { &[Estimate::Exact] } else { &[Estimate::Approx, Estimate::Exact] };
                for &estimate in estimates {
                    rows.push(row(estimate, Vec::new(), 0));
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok((rows, warnings))
}

type Estimates = Vec<(Estimate, Vec<f64>, usize)>;

#[allow(clippy::too_many_arguments)]
fn evaluate_scheme(
    scheme: Scheme,
    c: &ScenarioConfig,
    stats: &LinkStatistics,
    eff: &EffectiveChannel,
    rho: f64,
    draw: u64,
    trials: usize,
    mc_seed: u64,
) -> Result<Estimates> {
    let noise = stats.noise_power_w;
    let params = SolveParams::from_config(c);
    let caps = vec![rho; c.num_sats];
    let evaluated = match scheme {
        Scheme::Joint => {
            let constraints = PowerConstraintSet::from_config(c, rho)?;
            let (w, trace) = joint_wmmse::solve(eff, &constraints, noise, c.streams, &params)?;
            Evaluated { precoders: Some(w), iterations: trace.iterations }
        }
        Scheme::Streamwise | Scheme::StreamwiseRandom => {
            let (proposed, eig) = proposed_assignment(eff, c.streams, c.serving_set_size)?;
            let assignment: StreamAssignment = if scheme == Scheme::Streamwise {
                proposed
            } else {
                let mut rng = seeded_rng(derive_seed(c.rng_seed, &[TAG_ASSOC, draw]));
                random_association(&mut rng, c.num_users, c.streams, c.num_sats)?
            };
            let init = init_streamwise(eff, &assignment, &eig, &caps, noise)?;
            let (w, trace) = solve_streamwise_from(eff, &caps, noise, &params, &assignment, init)?;
            Evaluated { precoders: Some(to_joint_form(&w, &assignment)?), iterations: trace.iterations }
        }
        Scheme::Mmse => {
            let constraints = PowerConstraintSet::from_config(c, rho)?;
            Evaluated { precoders: Some(mmse_baseline(eff, &constraints, c.streams, noise)?), iterations: 0 }
        }
        Scheme::Zf => {
            let constraints = PowerConstraintSet::from_config(c, rho)?;
            Evaluated { precoders: Some(zf_baseline(eff, &constraints, c.streams)?.0), iterations: 0 }
        }
        Scheme::TdmaMrt => Evaluated { precoders: None, iterations: 0 },
    };
    match evaluated.precoders {
        Some(w) => {
            let approx = approx_se(&w, eff, noise)?;
            let exact = exact_se_mc(&w, stats, eff, trials, mc_seed)?;
            Ok(vec![
                (Estimate::Approx, approx.per_user_se, evaluated.iterations),
                (Estimate::Exact, exact.per_user_se, evaluated.iterations),
            ])
        }
        None => {
            let report = tdma_mrt_baseline(eff, stats, &caps, trials, mc_seed)?;
            Ok(vec![(Estimate::Exact, report.per_user_se, 0)])
        }
    }
}

/// Writes the schema line, the header and one record per row.
pub fn write_csv<W: Write>(result: &ExperimentResult, mut out: W) -> Result<()> {
    writeln!(out, "{SCHEMA_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in &result.rows {
        let per_user: Vec<String> = r.per_user_se.iter().map(|v| v.to_string()).collect();
        w.write_record([
            r.scenario_id.clone(),
            r.mode.clone(),
            r.sats.to_string(),
            r.users.to_string(),
            r.sat_antennas.to_string(),
            r.user_antennas.to_string(),
            r.streams.to_string(),
            r.power_cap_dbw.to_string(),
            r.sum_se.to_string(),
            per_user.join(";"),
            r.iterations.to_string(),
            r.wall_time_ms.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
