//! Joint non-coherent WMMSE precoding.
//!
//! Each satellite's contribution to user `k` is treated as its own group of
//! `S` virtual streams: `F_k = [H̃_{1,k}W_{1,k}, …, H̃_{L,k}W_{L,k}]` (M×LS).
//! With `J_k = Σ_i Σ_l H̃_{l,k}W_{l,i}W_{l,i}ᴴH̃_{l,k}ᴴ + σ²I`, the MMSE
//! combiner is `U_k = J_k⁻¹F_k`, the MSE matrix is
//! `E_k = U_kᴴJ_kU_k − U_kᴴF_k − F_kᴴU_k + I` and
//! `−Σ_k log2 det E_k` equals the approximate SE of the precoders.

use rayon::prelude::*;

use crate::channel::EffectiveChannel;
use crate::ellipsoid::feasibility_tolerance;
use crate::error::{Error, Result};
use crate::linalg::{inverse_hpd, log2det_hpd, row_matrix, leading_left_vectors, solve_hpd, CMat, CVec, C64};
use crate::power::PowerConstraintSet;
use crate::scenario::{EllipsoidConfig, ScenarioConfig};
use crate::subproblem::{Rhs, SatSubproblem};

/// Links whose UE response has less than this relative overlap with the user's
/// dominant eigenmodes get no initial power.
const INACTIVE_RTOL: f64 = 1e-8;
/// Slack for the per-satellite monotonicity safeguard.
const SAFEGUARD_RTOL: f64 = 1e-12;

/// `W[l][k]`, one N×S block per link, stored satellite-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPrecoderSet {
    sats: usize,
    users: usize,
    sat_antennas: usize,
    streams: usize,
    blocks: Vec<CMat>,
}

impl JointPrecoderSet {
    pub fn zeros(sats: usize, users: usize, sat_antennas: usize, streams: usize) -> Self {
        Self {
            sats,
            users,
            sat_antennas,
            streams,
            blocks: vec![CMat::zeros(sat_antennas, streams); sats * users],
        }
    }

    pub fn sats(&self) -> usize {
        self.sats
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn sat_antennas(&self) -> usize {
        self.sat_antennas
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn block(&self, l: usize, k: usize) -> &CMat {
        &self.blocks[l * self.users + k]
    }

    pub fn block_mut(&mut self, l: usize, k: usize) -> &mut CMat {
        &mut self.blocks[l * self.users + k]
    }

    /// All user blocks of satellite `l`.
    pub fn sat_blocks(&self, l: usize) -> &[CMat] {
        &self.blocks[l * self.users..(l + 1) * self.users]
    }

    fn set_sat_blocks(&mut self, l: usize, blocks: Vec<CMat>) {
        for (k, b) in blocks.into_iter().enumerate() {
            self.blocks[l * self.users + k] = b;
        }
    }

    /// `Σ_k ‖W_{l,k}‖_F²`.
    pub fn sat_power(&self, l: usize) -> f64 {
        self.sat_blocks(l).iter().map(|w| w.norm_squared()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveParams {
    pub max_iterations: usize,
    /// Stop when the objective changes by at most this much.
    pub tolerance: f64,
    pub ellipsoid: EllipsoidConfig,
}

impl SolveParams {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self { max_iterations: config.max_iterations, tolerance: config.tolerance, ellipsoid: config.ellipsoid.clone() }
    }
}

impl Default for SolveParams {
    fn default() -> Self {
        Self::from_config(&ScenarioConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveTrace {
    /// Objective after each full iteration.
    pub objectives: Vec<f64>,
    /// `multipliers[t][l]` is the multiplier vector of satellite `l` at iteration `t`.
    pub multipliers: Vec<Vec<Vec<f64>>>,
    /// Largest power residual over all constraints after each iteration.
    pub max_residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Satellite updates that fell back to the least-norm solve at `μ = 0`.
    pub pinv_fallbacks: usize,
    /// Satellite updates rejected because they did not lower the subproblem objective.
    pub safeguard_activations: usize,
}

#[derive(Debug, Clone)]
pub struct WmmseState {
    pub u: Vec<CMat>,
    pub c: Vec<CMat>,
    pub e: Vec<CMat>,
}

/// `F_k`, M×LS.
pub fn stacked_signal(precoders: &JointPrecoderSet, effective: &EffectiveChannel, k: usize) -> CMat {
    let (m, s) = (effective.user_antennas(), precoders.streams());
    let mut f = CMat::zeros(m, effective.sats() * s);
    for l in 0..effective.sats() {
        f.view_mut((0, l * s), (m, s)).copy_from(&effective.apply(l, k, precoders.block(l, k)));
    }
    f
}

/// `J_k`, the received covariance at user `k` under the non-coherent model.
pub fn received_covariance(precoders: &JointPrecoderSet, effective: &EffectiveChannel, k: usize, noise: f64) -> CMat {
    let m = effective.user_antennas();
    let mut j = CMat::identity(m, m).scale(noise);
    for l in 0..effective.sats() {
        let b = effective.b(l, k);
        let at = effective.a(l, k).transpose();
        let beta = effective.sqrt_beta(l, k).powi(2);
        let p: f64 = (0..precoders.users()).map(|i| (&at * precoders.block(l, i)).norm_squared()).sum();
        if p != 0.0 {
            j += (b * b.adjoint()).scale(beta * p);
        }
    }
    j
}

/// MSE matrix of user `k` for an arbitrary M×LS combiner.
pub fn mse_matrix(u: &CMat, precoders: &JointPrecoderSet, effective: &EffectiveChannel, k: usize, noise: f64) -> CMat {
    let j = received_covariance(precoders, effective, k, noise);
    let f = stacked_signal(precoders, effective, k);
    let uf = u.adjoint() * &f;
    let mut e = u.adjoint() * &j * u - &uf - uf.adjoint();
    for i in 0..e.nrows() {
        e[(i, i)] += C64::new(1.0, 0.0);
    }
    (&e + e.adjoint()).scale(0.5)
}

/// MMSE combiners `U_k = J_k⁻¹F_k`.
pub fn update_combiners(precoders: &JointPrecoderSet, effective: &EffectiveChannel, noise: f64) -> Result<Vec<CMat>> {
    if !(noise > 0.0) {
        return Err(Error::Domain("noise power must be positive".into()));
    }
    (0..effective.users())
        .map(|k| {
            let j = received_covariance(precoders, effective, k, noise);
            solve_hpd(&j, &stacked_signal(precoders, effective, k))
        })
        .collect()
}

/// `C_k = E_k⁻¹ / ln 2`.
pub fn update_weights(e: &[CMat]) -> Result<Vec<CMat>> {
    e.iter()
        .map(|ek| {
            inverse_hpd(ek)
                .map(|inv| inv.scale(1.0 / std::f64::consts::LN_2))
                .map_err(|_| Error::Numerical("MSE matrix is not positive definite".into()))
        })
        .collect()
}

/// `Σ_k Tr(C_k E_k) − log2 det C_k`.
pub fn wmmse_objective(c: &[CMat], e: &[CMat]) -> Result<f64> {
    let mut obj = 0.0;
    for (ck, ek) in c.iter().zip(e) {
        obj += crate::linalg::trace_product_re(ck, ek) - log2det_hpd(ck)?;
    }
    Ok(obj)
}

/// Combiners, weights and MSE matrices at the current precoders.
pub fn wmmse_state(precoders: &JointPrecoderSet, effective: &EffectiveChannel, noise: f64) -> Result<WmmseState> {
    let u = update_combiners(precoders, effective, noise)?;
    let e: Vec<CMat> = u
        .iter()
        .enumerate()
        .map(|(k, uk)| mse_matrix(uk, precoders, effective, k, noise))
        .collect();
    let c = update_weights(&e)?;
    Ok(WmmseState { u, c, e })
}

/// `Σ_k log2 det E_k⁻¹` at the MMSE combiners.
pub fn mse_rate(precoders: &JointPrecoderSet, effective: &EffectiveChannel, noise: f64) -> Result<f64> {
    let u = update_combiners(precoders, effective, noise)?;
    let mut total = 0.0;
    for (k, uk) in u.iter().enumerate() {
        total -= log2det_hpd(&mse_matrix(uk, precoders, effective, k, noise))?;
    }
    Ok(total)
}

/// The satellite-`l` subproblem for fixed combiners and weights.
pub fn sat_subproblem(l: usize, u: &[CMat], c: &[CMat], effective: &EffectiveChannel, streams: usize) -> SatSubproblem {
    let users = effective.users();
    let mut t = Vec::with_capacity(users);
    let mut rhs = Vec::with_capacity(users);
    let a: Vec<&_> = (0..users).map(|i| effective.a(l, i)).collect();
    for i in 0..users {
        let b = effective.b(l, i);
        let uc = &u[i] * &c[i];
        let bu = b.adjoint() * &u[i];
        let buc = b.adjoint() * &uc;
        // bᴴ U C Uᴴ b
        let quad: C64 = (0..bu.ncols()).map(|j| buc[(0, j)] * bu[(0, j)].conj()).sum();
        let sb = effective.sqrt_beta(l, i);
        t.push(sb * sb * quad.re.max(0.0));
        rhs.push(Rhs { user: i, row: row_matrix(&buc.columns(l * streams, streams).into_owned()).scale(sb) });
    }
    SatSubproblem::new(&a, t, rhs)
}

/// Closed-form precoders of satellite `l` at multiplier vector `mu`.
///
/// The second value flags a least-norm solve of a singular system.
pub fn precoder_given_mu(
    mu: &[f64],
    u: &[CMat],
    c: &[CMat],
    effective: &EffectiveChannel,
    constraints: &PowerConstraintSet,
    l: usize,
    streams: usize,
) -> Result<(Vec<CMat>, bool)> {
    if mu.len() != constraints.constraints(l).len() || mu.iter().any(|&m| !(m >= 0.0)) {
        return Err(Error::Domain("multipliers must be nonnegative, one per constraint".into()));
    }
    sat_subproblem(l, u, c, effective, streams).blocks_at(mu, constraints.constraints(l))
}

/// `Σ_i H̃_{l,i}ᴴH̃_{l,i} + σ²I` for satellite `l`.
pub fn regularized_gram(effective: &EffectiveChannel, l: usize, noise: f64) -> CMat {
    let (n, m) = (effective.sat_antennas(), effective.user_antennas());
    let mut a_mat = CMat::identity(n, n).scale(noise);
    for i in 0..effective.users() {
        let ac = effective.a(l, i).map(|z| z.conj());
        a_mat += (&ac * ac.adjoint()).scale(effective.sqrt_beta(l, i).powi(2) * m as f64);
    }
    a_mat
}

/// MMSE initialization with √β-proportional power sharing.
///
/// The unnormalized precoder of link (l, k) is
/// `(Σ_i H̃_{l,i}ᴴH̃_{l,i} + σ²I)⁻¹ H̃_{l,k}ᴴ Q_k`, where `Q_k` holds the `S`
/// dominant left singular vectors of user `k`'s aggregated channel. Links that
/// do not overlap those modes stay at zero and the satellite's power
/// `min_x ρ_{l,x}` is split over the remaining links.
pub fn init_precoders(
    effective: &EffectiveChannel,
    constraints: &PowerConstraintSet,
    streams: usize,
    noise: f64,
) -> Result<JointPrecoderSet> {
    precoders_from_directions(effective, constraints, streams, |l| {
        let a_mat = regularized_gram(effective, l, noise);
        (0..effective.users())
            .map(|k| {
                let ac = effective.a(l, k).map(|z| z.conj());
                Ok(solve_hpd(&a_mat, &CMat::from_column_slice(ac.len(), 1, ac.as_slice()))?.column(0).into_owned())
            })
            .collect()
    })
}

/// Builds `W̃_{l,k} = d_{l,k} · √β_{l,k} b_{l,k}ᴴQ_k` from per-satellite
/// directions `d_{l,k}` (returned by `directions(l)` for all users), then
/// normalizes each link to its √β share of `min_x ρ_{l,x}`.
///
/// `Q_k` holds the `S` dominant left singular vectors of user `k`'s aggregated
/// channel. Links with no overlap with those modes get no power.
pub fn precoders_from_directions<F>(
    effective: &EffectiveChannel,
    constraints: &PowerConstraintSet,
    streams: usize,
    mut directions: F,
) -> Result<JointPrecoderSet>
where
    F: FnMut(usize) -> Result<Vec<CVec>>,
{
    let (sats, users, n, m) = (effective.sats(), effective.users(), effective.sat_antennas(), effective.user_antennas());
    if streams == 0 || streams > m {
        return Err(Error::Domain("streams must lie in [1, M]".into()));
    }
    if constraints.sats() != sats {
        return Err(Error::Dimension("constraint set and channel disagree on L".into()));
    }
    let mut rows = Vec::with_capacity(users);
    for k in 0..users {
        let q = leading_left_vectors(&effective.aggregate(k), streams)?;
        rows.push(q);
    }
    let mut out = JointPrecoderSet::zeros(sats, users, n, streams);
    for l in 0..sats {
        let dirs = directions(l)?;
        let mut raw = Vec::with_capacity(users);
        for (k, d) in dirs.iter().enumerate() {
            let b = effective.b(l, k);
            let row = b.adjoint() * &rows[k];
            if row.norm() <= INACTIVE_RTOL * b.norm() {
                raw.push(None);
                continue;
            }
            raw.push(Some((d * row).scale(effective.sqrt_beta(l, k))));
        }
        let total_sqrt_beta: f64 = (0..users).filter(|&i| raw[i].is_some()).map(|i| effective.sqrt_beta(l, i)).sum();
        let rho_bar = constraints.min_cap(l);
        for (k, w) in raw.into_iter().enumerate() {
            if let Some(w) = w {
                let share = rho_bar * effective.sqrt_beta(l, k) / total_sqrt_beta;
                let norm = w.norm();
                if norm > 0.0 {
                    *out.block_mut(l, k) = w.scale(share.sqrt() / norm);
                }
            }
        }
        scale_into_feasibility(&mut out, constraints, l)?;
    }
    Ok(out)
}

/// Shrinks satellite `l`'s blocks uniformly if a weighted constraint is violated.
fn scale_into_feasibility(w: &mut JointPrecoderSet, constraints: &PowerConstraintSet, l: usize) -> Result<()> {
    let residuals = constraints.residuals(l, w.sat_blocks(l))?;
    let mut factor: f64 = 1.0;
    for (g, c) in residuals.iter().zip(constraints.constraints(l)) {
        let used = g + c.cap;
        if *g > 0.0 && used > 0.0 {
            factor = factor.min(c.cap / used);
        }
    }
    if factor < 1.0 {
        let s = factor.sqrt();
        let blocks: Vec<CMat> = w.sat_blocks(l).iter().map(|b| b.scale(s)).collect();
        w.set_sat_blocks(l, blocks);
    }
    Ok(())
}

/// Runs the WMMSE iterations from the MMSE initialization.
pub fn solve(
    effective: &EffectiveChannel,
    constraints: &PowerConstraintSet,
    noise: f64,
    streams: usize,
    params: &SolveParams,
) -> Result<(JointPrecoderSet, SolveTrace)> {
    let init = init_precoders(effective, constraints, streams, noise)?;
    solve_from(effective, constraints, noise, params, init)
}

/// Runs the WMMSE iterations from a given starting point.
pub fn solve_from(
    effective: &EffectiveChannel,
    constraints: &PowerConstraintSet,
    noise: f64,
    params: &SolveParams,
    init: JointPrecoderSet,
) -> Result<(JointPrecoderSet, SolveTrace)> {
    if constraints.sats() != effective.sats() || init.sats() != effective.sats() || init.users() != effective.users() {
        return Err(Error::Dimension("constraint set, precoders and channel disagree on L or K".into()));
    }
    let streams = init.streams();
    let mut w = init;
    let mut trace = SolveTrace::default();
    let mut previous = f64::INFINITY;
    for _ in 0..params.max_iterations {
        let state = wmmse_state(&w, effective, noise)?;
        let updates: Vec<Result<(Vec<CMat>, Vec<f64>, bool, bool)>> = (0..effective.sats())
            .into_par_iter()
            .map(|l| {
                let sub = sat_subproblem(l, &state.u, &state.c, effective, streams);
                let sat_constraints = constraints.constraints(l);
                let sol = sub.solve(sat_constraints, &params.ellipsoid)?;
                let old = w.sat_blocks(l);
                let caps: Vec<f64> = sat_constraints.iter().map(|c| c.cap).collect();
                let eps = feasibility_tolerance(&params.ellipsoid, &caps);
                let old_feasible = constraints.residuals(l, old)?.iter().all(|&g| g <= eps);
                let (f_new, f_old) = (sub.objective(&sol.blocks), sub.objective(old));
                if old_feasible && f_new > f_old + SAFEGUARD_RTOL * f_old.abs().max(f64::MIN_POSITIVE) {
                    Ok((old.to_vec(), sol.multipliers.mu, sol.pinv_used, true))
                } else {
                    Ok((sol.blocks, sol.multipliers.mu, sol.pinv_used, false))
                }
            })
            .collect();
        let mut mus = Vec::with_capacity(effective.sats());
        for (l, upd) in updates.into_iter().enumerate() {
            let (blocks, mu, pinv, kept) = upd?;
            w.set_sat_blocks(l, blocks);
            mus.push(mu);
            trace.pinv_fallbacks += usize::from(pinv);
            trace.safeguard_activations += usize::from(kept);
        }
        let e: Vec<CMat> = state
            .u
            .iter()
            .enumerate()
            .map(|(k, uk)| mse_matrix(uk, &w, effective, k, noise))
            .collect();
        let objective = wmmse_objective(&state.c, &e)?;
        let max_residual = (0..effective.sats())
            .map(|l| constraints.residuals(l, w.sat_blocks(l)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .fold(f64::NEG_INFINITY, f64::max);
        trace.objectives.push(objective);
        trace.multipliers.push(mus);
        trace.max_residuals.push(max_residual);
        trace.iterations += 1;
        if (previous - objective).abs() <= params.tolerance {
            trace.converged = true;
            break;
        }
        previous = objective;
    }
    Ok((w, trace))
}
