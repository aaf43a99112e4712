//! Reference schemes: MMSE and ZF precoding, TDMA with MRT, random association.
//!
//! MMSE and ZF share the WMMSE initializer's structure: link (l, k) gets
//! `d_{l,k} · √β b_{l,k}ᴴQ_k` with the same √β power split, and differ only in
//! the satellite-side direction `d_{l,k}`.

use rand::seq::index::sample;
use rand::Rng;

use crate::channel::EffectiveChannel;
use crate::error::{Error, Result};
use crate::joint_wmmse::{init_precoders, precoders_from_directions, JointPrecoderSet};
use crate::linalg::{cholesky, CMat, CVec};
use crate::power::PowerConstraintSet;
use crate::scenario::{derive_seed, LinkStatistics};
use crate::se_eval::{exact_se_mc, SeReport};
use crate::streamwise::StreamAssignment;

/// Relative ridge added to a singular ZF Gram matrix.
pub const ZF_RIDGE: f64 = 1e-8;

/// Regularized-MMSE directions `(Σ_i H̃ᴴH̃ + σ²I)⁻¹a*`; identical to the WMMSE start.
pub fn mmse_baseline(
    effective: &EffectiveChannel,
    constraints: &PowerConstraintSet,
    streams: usize,
    noise: f64,
) -> Result<JointPrecoderSet> {
    init_precoders(effective, constraints, streams, noise)
}

/// Per-satellite zero forcing: with `A_l` the K×N matrix of rows `a_{l,k}ᵀ`,
/// `d_{l,k}` is column `k` of `A_lᴴ(A_lA_lᴴ)⁻¹`, so satellite `l`'s beam for
/// user `k` is invisible to every other user at that satellite.
///
/// The flag reports that some Gram matrix was singular and a ridge of
/// `ZF_RIDGE · tr/K` was added.
pub fn zf_baseline(
    effective: &EffectiveChannel,
    constraints: &PowerConstraintSet,
    streams: usize,
) -> Result<(JointPrecoderSet, bool)> {
    let mut ridge_used = false;
    let set = precoders_from_directions(effective, constraints, streams, |l| {
        let (dirs, ridge) = zf_directions(effective, l)?;
        ridge_used |= ridge;
        Ok(dirs)
    })?;
    Ok((set, ridge_used))
}

fn zf_directions(effective: &EffectiveChannel, l: usize) -> Result<(Vec<CVec>, bool)> {
    let (users, n) = (effective.users(), effective.sat_antennas());
    let mut a_h = CMat::zeros(n, users);
    for k in 0..users {
        a_h.set_column(k, &effective.a(l, k).map(|z| z.conj()));
    }
    let gram = a_h.adjoint() * &a_h;
    let well_posed = users <= n
        && cholesky(&gram).is_ok_and(|ch| {
            let d: Vec<f64> = ch.l_dirty().diagonal().iter().map(|z| z.re).collect();
            let top = d.iter().copied().fold(0.0, f64::max);
            d.iter().all(|&v| v > 1e-6 * top)
        });
    let (inv_rhs, ridge) = if well_posed {
        (cholesky(&gram)?.solve(&CMat::identity(users, users)), false)
    } else {
        let mut g = gram.clone();
        let shift = ZF_RIDGE * gram.trace().re / users as f64;
        for i in 0..users {
            g[(i, i)] += shift;
        }
        (cholesky(&g)?.solve(&CMat::identity(users, users)), true)
    };
    let x = a_h * inv_rhs;
    Ok(((0..users).map(|k| x.column(k).into_owned()).collect(), ridge))
}

/// Orthogonal scheduling: user `k` alone is served by its largest-β satellite
/// with single-stream MRT at full power `ρ`; its SE is then divided by `K`.
pub fn tdma_mrt_baseline(
    effective: &EffectiveChannel,
    stats: &LinkStatistics,
    rho: &[f64],
    trials: usize,
    seed: u64,
) -> Result<SeReport> {
    let (sats, users, n) = (effective.sats(), effective.users(), effective.sat_antennas());
    if rho.len() != sats {
        return Err(Error::Dimension(format!("need {sats} power caps, got {}", rho.len())));
    }
    let mut per_user = Vec::with_capacity(users);
    let mut var = 0.0;
    for k in 0..users {
        let l = (0..sats)
            .max_by(|&x, &y| stats.beta[(x, k)].total_cmp(&stats.beta[(y, k)]).then(y.cmp(&x)))
            .ok_or_else(|| Error::Dimension("no satellites".into()))?;
        let mut w = JointPrecoderSet::zeros(sats, users, n, 1);
        let dir = effective.a(l, k).map(|z| z.conj());
        let scale = (rho[l] / dir.norm_squared()).sqrt();
        w.block_mut(l, k).set_column(0, &dir.scale(scale));
        let report = exact_se_mc(&w, stats, effective, trials, derive_seed(seed, &[k as u64]))?;
        per_user.push(report.per_user_se[k] / users as f64);
        var += report.std_error.unwrap_or(0.0).powi(2) / (users * users) as f64;
    }
    Ok(SeReport {
        sum_se: per_user.iter().sum(),
        per_user_se: per_user,
        trials_used: trials,
        estimator: crate::scenario::SeEstimator::ExactMc,
        std_error: Some(var.sqrt()),
    })
}

/// Uniformly random injective stream → satellite map for every user.
pub fn random_association<R: Rng + ?Sized>(rng: &mut R, users: usize, streams: usize, sats: usize) -> Result<StreamAssignment> {
    if streams > sats {
        return Err(Error::Infeasible(format!("{streams} streams cannot use {sats} distinct satellites")));
    }
    let pi = (0..users).map(|_| sample(rng, sats, streams).into_vec()).collect();
    StreamAssignment::from_mapping(pi, sats)
}
