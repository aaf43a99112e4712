//! Ergodic spectral efficiency: Monte-Carlo over Rician draws, and the
//! deterministic non-coherent approximation.

use rayon::prelude::*;

use crate::channel::{sample_realization, EffectiveChannel};
use crate::error::{Error, Result};
use crate::joint_wmmse::JointPrecoderSet;
use crate::linalg::{logdet_hpd, CMat, CRow, C64};
use crate::scenario::{derive_seed, seeded_rng, LinkStatistics, SeEstimator};

const TRIALS_PER_BLOCK: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct SeReport {
    pub per_user_se: Vec<f64>,
    pub sum_se: f64,
    pub trials_used: usize,
    pub estimator: SeEstimator,
    /// Standard error of `sum_se` across trials (Monte-Carlo only).
    pub std_error: Option<f64>,
}

impl SeReport {
    fn from_users(per_user_se: Vec<f64>, trials_used: usize, estimator: SeEstimator, std_error: Option<f64>) -> Self {
        Self { sum_se: per_user_se.iter().sum(), per_user_se, trials_used, estimator, std_error }
    }
}

/// `r[(l, k, i)] = a_{l,k}ᵀ W_{l,i}`, the 1×S row seen by user `k` from satellite `l`'s precoder for user `i`.
struct CrossRows {
    users: usize,
    rows: Vec<CRow>,
}

impl CrossRows {
    fn new(precoders: &JointPrecoderSet, effective: &EffectiveChannel) -> Self {
        let (sats, users) = (effective.sats(), effective.users());
        let mut rows = Vec::with_capacity(sats * users * users);
        for l in 0..sats {
            for k in 0..users {
                let at = effective.a(l, k).transpose();
                for i in 0..users {
                    rows.push(&at * precoders.block(l, i));
                }
            }
        }
        Self { users, rows }
    }

    fn get(&self, l: usize, k: usize, i: usize) -> &CRow {
        &self.rows[(l * self.users + k) * self.users + i]
    }
}

fn check_inputs(precoders: &JointPrecoderSet, effective: &EffectiveChannel, noise: f64) -> Result<()> {
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(Error::Domain("noise power must be positive".into()));
    }
    if precoders.sats() != effective.sats()
        || precoders.users() != effective.users()
        || precoders.sat_antennas() != effective.sat_antennas()
    {
        return Err(Error::Dimension("precoder set does not match the channel dimensions".into()));
    }
    Ok(())
}

/// `log2 det(I + X Y⁻¹)` evaluated as `log2 det(Y + X) − log2 det(Y)`.
fn rate(signal: &CMat, interference_plus_noise: &CMat) -> Result<f64> {
    let total = interference_plus_noise + signal;
    let r = (logdet_hpd(&total)? - logdet_hpd(interference_plus_noise)?) / std::f64::consts::LN_2;
    Ok(r.max(0.0))
}

fn add_outer_scaled(acc: &mut CMat, v: &nalgebra::DVector<C64>, scale: f64) {
    let m = v.len();
    for c in 0..m {
        let vc = v[c].conj() * scale;
        for r in 0..m {
            acc[(r, c)] += v[r] * vc;
        }
    }
}

/// Deterministic SE from effective channels, powers adding non-coherently across satellites.
pub fn approx_se(precoders: &JointPrecoderSet, effective: &EffectiveChannel, noise: f64) -> Result<SeReport> {
    check_inputs(precoders, effective, noise)?;
    let rows = CrossRows::new(precoders, effective);
    let (sats, users, m) = (effective.sats(), effective.users(), effective.user_antennas());
    let mut per_user = Vec::with_capacity(users);
    for k in 0..users {
        let mut y = CMat::identity(m, m);
        let mut x = CMat::zeros(m, m);
        for l in 0..sats {
            let g = effective.sqrt_beta(l, k).powi(2) / noise;
            let b = effective.b(l, k);
            for i in 0..users {
                let p = g * rows.get(l, k, i).norm_squared();
                if p == 0.0 {
                    continue;
                }
                if i == k {
                    add_outer_scaled(&mut x, b, p);
                } else {
                    add_outer_scaled(&mut y, b, p);
                }
            }
        }
        per_user.push(rate(&x, &y)?);
    }
    Ok(SeReport::from_users(per_user, 0, SeEstimator::Approx, None))
}

/// Monte-Carlo ergodic SE over `trials` Rician realizations.
///
/// Draws are a pure function of `seed`, so different precoders evaluated with
/// the same seed see the same fading (common random numbers). Trials run in
/// parallel blocks and are reduced in block order.
pub fn exact_se_mc(
    precoders: &JointPrecoderSet,
    stats: &LinkStatistics,
    effective: &EffectiveChannel,
    trials: usize,
    seed: u64,
) -> Result<SeReport> {
    let noise = stats.noise_power_w;
    check_inputs(precoders, effective, noise)?;
    if trials == 0 {
        return Err(Error::Domain("trials must be at least 1".into()));
    }
    let rows = CrossRows::new(precoders, effective);
    let (sats, users, m) = (effective.sats(), effective.users(), effective.user_antennas());
    let s = precoders.streams();
    let inv_sigma = 1.0 / noise.sqrt();
    let blocks = trials.div_ceil(TRIALS_PER_BLOCK);

    let partials: Vec<Result<(Vec<f64>, f64, f64)>> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = seeded_rng(derive_seed(seed, &[block as u64]));
            let count = TRIALS_PER_BLOCK.min(trials - block * TRIALS_PER_BLOCK);
            let mut user_sum = vec![0.0; users];
            let (mut tot, mut tot_sq) = (0.0, 0.0);
            let mut f: Vec<CMat> = vec![CMat::zeros(m, s); users];
            for _ in 0..count {
                let real = sample_realization(stats, &mut rng);
                let mut trial_sum = 0.0;
                for k in 0..users {
                    for (i, fi) in f.iter_mut().enumerate() {
                        fi.fill(C64::new(0.0, 0.0));
                        for l in 0..sats {
                            let g = real.gamma(l, k) * inv_sigma;
                            let b = effective.b(l, k);
                            let r = rows.get(l, k, i);
                            for c in 0..s {
                                let rc = r[(0, c)] * g;
                                if rc == C64::new(0.0, 0.0) {
                                    continue;
                                }
                                for row in 0..m {
                                    fi[(row, c)] += b[row] * rc;
                                }
                            }
                        }
                    }
                    let mut y = CMat::identity(m, m);
                    for (i, fi) in f.iter().enumerate() {
                        if i != k {
                            y += fi * fi.adjoint();
                        }
                    }
                    let x = &f[k] * f[k].adjoint();
                    let r = rate(&x, &y)?;
                    user_sum[k] += r;
                    trial_sum += r;
                }
                tot += trial_sum;
                tot_sq += trial_sum * trial_sum;
            }
            Ok((user_sum, tot, tot_sq))
        })
        .collect();

    let mut user_sum = vec![0.0; users];
    let (mut tot, mut tot_sq) = (0.0, 0.0);
    for p in partials {
        let (u, t, t2) = p?;
        user_sum.iter_mut().zip(u).for_each(|(a, b)| *a += b);
        tot += t;
        tot_sq += t2;
    }
    let n = trials as f64;
    let per_user = user_sum.into_iter().map(|v| v / n).collect();
    let mean = tot / n;
    let var = if trials > 1 { ((tot_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(SeReport::from_users(per_user, trials, SeEstimator::ExactMc, Some((var / n).sqrt())))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeGap {
    pub approx: f64,
    pub exact: f64,
    /// `approx − exact`.
    pub gap: f64,
}

pub fn approx_vs_exact_gap(
    precoders: &JointPrecoderSet,
    stats: &LinkStatistics,
    effective: &EffectiveChannel,
    trials: usize,
    seed: u64,
) -> Result<SeGap> {
    let approx = approx_se(precoders, effective, stats.noise_power_w)?.sum_se;
    let exact = exact_se_mc(precoders, stats, effective, trials, seed)?.sum_se;
    Ok(SeGap { approx, exact, gap: approx - exact })
}

/// Dispatches to the configured estimator.
pub fn evaluate(
    estimator: SeEstimator,
    precoders: &JointPrecoderSet,
    stats: &LinkStatistics,
    effective: &EffectiveChannel,
    trials: usize,
    seed: u64,
) -> Result<SeReport> {
    match estimator {
        SeEstimator::ExactMc => exact_se_mc(precoders, stats, effective, trials, seed),
        SeEstimator::Approx => approx_se(precoders, effective, stats.noise_power_w),
    }
}
