//! Streamwise transmission: every stream of a user is radiated by exactly one
//! satellite.
//!
//! Streams ride the dominant eigenmodes of each user's aggregated channel and
//! are matched to satellites by participation factor. Precoders then follow a
//! WMMSE loop with one total-power bisection per satellite.

use rayon::prelude::*;

use crate::assignment::max_weight_assignment;
use crate::channel::EffectiveChannel;
use crate::ellipsoid::MAX_EXPANSIONS;
use crate::error::{Error, Result};
use crate::joint_wmmse::{
    regularized_gram, update_weights, wmmse_objective, JointPrecoderSet, SolveParams, SolveTrace,
};
use crate::linalg::{solve_hpd, svd_sorted, CMat, CVec, C64};
use crate::subproblem::{scalar_row, Rhs, SatSubproblem};

const MAX_BISECTION_STEPS: usize = 200;
const SAFEGUARD_RTOL: f64 = 1e-12;
/// Below this relative size the initial direction falls back to `A⁻¹a*`.
const DIRECTION_RTOL: f64 = 1e-8;

/// `eta[l][k][m]`: share of eigenmode `m` of user `k` carried by satellite `l`.
pub type Participation = Vec<Vec<Vec<f64>>>;

/// Economy SVD of every user's aggregated channel.
#[derive(Debug, Clone)]
pub struct EigenStructure {
    sats: usize,
    sat_antennas: usize,
    /// Descending, one vector per user.
    pub singular_values: Vec<Vec<f64>>,
    /// LN × r right singular vectors per user.
    pub right_vectors: Vec<CMat>,
    /// M × r left singular vectors per user.
    pub left_vectors: Vec<CMat>,
}

impl EigenStructure {
    pub fn users(&self) -> usize {
        self.singular_values.len()
    }

    pub fn modes(&self) -> usize {
        self.singular_values.first().map_or(0, Vec::len)
    }

    /// `v⁽ˡ⁾_{k,m}`.
    pub fn block(&self, k: usize, m: usize, l: usize) -> CVec {
        let n = self.sat_antennas;
        debug_assert!(l < self.sats);
        self.right_vectors[k].view((l * n, m), (n, 1)).column(0).into_owned()
    }
}

/// Participation factors `η_{l,k,m} = ‖v⁽ˡ⁾_{k,m}‖²`.
pub fn participation_factors(effective: &EffectiveChannel) -> Result<(Participation, EigenStructure)> {
    let (sats, users, n, m) = (effective.sats(), effective.users(), effective.sat_antennas(), effective.user_antennas());
    if sats * n < m {
        return Err(Error::Domain(format!("aggregated channel needs L·N ≥ M, got {} < {m}", sats * n)));
    }
    let mut eig = EigenStructure {
        sats,
        sat_antennas: n,
        singular_values: Vec::with_capacity(users),
        right_vectors: Vec::with_capacity(users),
        left_vectors: Vec::with_capacity(users),
    };
    for k in 0..users {
        let svd = svd_sorted(&effective.aggregate(k))?;
        eig.singular_values.push(svd.singular_values);
        eig.right_vectors.push(svd.v);
        eig.left_vectors.push(svd.u);
    }
    let modes = eig.modes();
    let eta = (0..sats)
        .map(|l| {
            (0..users)
                .map(|k| {
                    let v = &eig.right_vectors[k];
                    (0..modes).map(|mm| v.view((l * n, mm), (n, 1)).norm_squared()).collect()
                })
                .collect()
        })
        .collect();
    Ok((eta, eig))
}

/// Power-weighted satellite score `η̄_{l,k} = Σ_m σ̄²_{k,m} η_{l,k,m}`.
pub fn sat_selection_score(eta: &Participation, singular_values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    eta.iter()
        .map(|per_user| {
            per_user
                .iter()
                .zip(singular_values)
                .map(|(modes, sv)| modes.iter().zip(sv).map(|(e, s)| s * s * e).sum())
                .collect()
        })
        .collect()
}

/// Stream → satellite map and the per-satellite stream sets.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamAssignment {
    /// `pi[k][s]`.
    pub pi: Vec<Vec<usize>>,
    /// `served[l]` lists `(k, s)` in user-major order.
    pub served: Vec<Vec<(usize, usize)>>,
    /// Participation factors used for the matching; empty for externally built maps.
    pub eta: Participation,
}

impl StreamAssignment {
    /// Validates `pi` (injective per user, indices below `sats`) and builds the stream sets.
    pub fn from_mapping(pi: Vec<Vec<usize>>, sats: usize) -> Result<Self> {
        let streams = pi.first().map_or(0, Vec::len);
        for (k, row) in pi.iter().enumerate() {
            if row.len() != streams {
                return Err(Error::Dimension("every user needs the same stream count".into()));
            }
            let mut used = vec![false; sats];
            for &l in row {
                if l >= sats {
                    return Err(Error::Domain(format!("user {k} maps a stream to satellite {l} ≥ L")));
                }
                if std::mem::replace(&mut used[l], true) {
                    return Err(Error::Validation(format!("user {k} uses satellite {l} twice")));
                }
            }
        }
        let mut served = vec![Vec::new(); sats];
        for (k, row) in pi.iter().enumerate() {
            for (s, &l) in row.iter().enumerate() {
                served[l].push((k, s));
            }
        }
        Ok(Self { pi, served, eta: Vec::new() })
    }

    pub fn users(&self) -> usize {
        self.pi.len()
    }

    pub fn streams(&self) -> usize {
        self.pi.first().map_or(0, Vec::len)
    }

    pub fn sats(&self) -> usize {
        self.served.len()
    }
}

/// Maximum-participation association of stream `s` (eigenmode `s`) of every user.
pub fn associate(eta: &Participation, streams: usize) -> Result<StreamAssignment> {
    let sats = eta.len();
    let users = eta.first().map_or(0, Vec::len);
    let all: Vec<usize> = (0..sats).collect();
    let pi = (0..users).map(|k| associate_user(eta, k, streams, &all)).collect::<Result<Vec<_>>>()?;
    let mut out = StreamAssignment::from_mapping(pi, sats)?;
    out.eta = eta.clone();
    Ok(out)
}

/// Association restricted per user to the `size` satellites with the highest `η̄`.
pub fn associate_with_serving_set(
    eta: &Participation,
    eig: &EigenStructure,
    streams: usize,
    size: usize,
) -> Result<StreamAssignment> {
    let sats = eta.len();
    if size < streams || size > sats {
        return Err(Error::Domain(format!("serving set size {size} must lie in [S, L] = [{streams}, {sats}]")));
    }
    let score = sat_selection_score(eta, &eig.singular_values);
    let pi = (0..eig.users())
        .map(|k| {
            let mut order: Vec<usize> = (0..sats).collect();
            order.sort_by(|&a, &b| score[b][k].total_cmp(&score[a][k]).then(a.cmp(&b)));
            let mut chosen = order[..size].to_vec();
            chosen.sort_unstable();
            associate_user(eta, k, streams, &chosen)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = StreamAssignment::from_mapping(pi, sats)?;
    out.eta = eta.clone();
    Ok(out)
}

fn associate_user(eta: &Participation, k: usize, streams: usize, candidates: &[usize]) -> Result<Vec<usize>> {
    let modes = eta.first().and_then(|u| u.get(k)).map_or(0, Vec::len);
    if streams > modes {
        return Err(Error::Domain(format!("{streams} streams exceed the {modes} available eigenmodes")));
    }
    let weights: Vec<Vec<f64>> = (0..streams).map(|s| candidates.iter().map(|&l| eta[l][k][s]).collect()).collect();
    let a = max_weight_assignment(&weights)?;
    Ok(a.mapping.into_iter().map(|j| candidates[j]).collect())
}

/// `w[l][k][s]`, zero unless `(k, s)` is served by `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamwisePrecoderSet {
    sats: usize,
    users: usize,
    streams: usize,
    sat_antennas: usize,
    w: Vec<CVec>,
}

impl StreamwisePrecoderSet {
    pub fn zeros(sats: usize, users: usize, streams: usize, sat_antennas: usize) -> Self {
        Self { sats, users, streams, sat_antennas, w: vec![CVec::zeros(sat_antennas); sats * users * streams] }
    }

    fn index(&self, l: usize, k: usize, s: usize) -> usize {
        (l * self.users + k) * self.streams + s
    }

    pub fn get(&self, l: usize, k: usize, s: usize) -> &CVec {
        &self.w[self.index(l, k, s)]
    }

    pub fn get_mut(&mut self, l: usize, k: usize, s: usize) -> &mut CVec {
        let i = self.index(l, k, s);
        &mut self.w[i]
    }

    pub fn sats(&self) -> usize {
        self.sats
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn sat_antennas(&self) -> usize {
        self.sat_antennas
    }

    /// `Σ_{k,s} ‖w_{l,k,s}‖²`.
    pub fn sat_power(&self, l: usize) -> f64 {
        let start = self.index(l, 0, 0);
        self.w[start..start + self.users * self.streams].iter().map(|v| v.norm_squared()).sum()
    }
}

fn check_shapes(set: &StreamwisePrecoderSet, assignment: &StreamAssignment, effective: &EffectiveChannel) -> Result<()> {
    if set.sats() != effective.sats()
        || set.users() != effective.users()
        || assignment.sats() != effective.sats()
        || assignment.users() != effective.users()
        || assignment.streams() != set.streams()
    {
        return Err(Error::Dimension("precoders, assignment and channel disagree on L, K or S".into()));
    }
    Ok(())
}

/// `G_k`, column `s` is `H̃_{π_k(s),k} w_{π_k(s),k,s}`.
pub fn desired_channel(set: &StreamwisePrecoderSet, assignment: &StreamAssignment, effective: &EffectiveChannel, k: usize) -> CMat {
    let mut g = CMat::zeros(effective.user_antennas(), set.streams());
    for (s, &l) in assignment.pi[k].iter().enumerate() {
        let coeff = effective.a(l, k).transpose() * set.get(l, k, s);
        g.set_column(s, &(effective.b(l, k) * coeff[(0, 0)] * C64::from(effective.sqrt_beta(l, k))));
    }
    g
}

/// `J_k` under streamwise transmission.
pub fn received_covariance_sw(
    set: &StreamwisePrecoderSet,
    assignment: &StreamAssignment,
    effective: &EffectiveChannel,
    k: usize,
    noise: f64,
) -> CMat {
    let m = effective.user_antennas();
    let mut j = CMat::identity(m, m).scale(noise);
    for (l, served) in assignment.served.iter().enumerate() {
        let at = effective.a(l, k).transpose();
        let p: f64 = served.iter().map(|&(i, s)| (&at * set.get(l, i, s)).norm_squared()).sum();
        if p != 0.0 {
            let b = effective.b(l, k);
            j += (b * b.adjoint()).scale(effective.sqrt_beta(l, k).powi(2) * p);
        }
    }
    j
}

/// Streamwise MSE matrix of user `k` for an arbitrary M×S combiner.
pub fn mse_matrix_sw(
    u: &CMat,
    set: &StreamwisePrecoderSet,
    assignment: &StreamAssignment,
    effective: &EffectiveChannel,
    k: usize,
    noise: f64,
) -> CMat {
    let j = received_covariance_sw(set, assignment, effective, k, noise);
    let ug = u.adjoint() * desired_channel(set, assignment, effective, k);
    let mut e = u.adjoint() * &j * u - &ug - ug.adjoint();
    for i in 0..e.nrows() {
        e[(i, i)] += C64::new(1.0, 0.0);
    }
    (&e + e.adjoint()).scale(0.5)
}

/// MMSE combiners `U_k = J_k⁻¹G_k`.
pub fn update_combiners_sw(
    set: &StreamwisePrecoderSet,
    assignment: &StreamAssignment,
    effective: &EffectiveChannel,
    noise: f64,
) -> Result<Vec<CMat>> {
    check_shapes(set, assignment, effective)?;
    if !(noise > 0.0) {
        return Err(Error::Domain("noise power must be positive".into()));
    }
    (0..effective.users())
        .map(|k| {
            let j = received_covariance_sw(set, assignment, effective, k, noise);
            solve_hpd(&j, &desired_channel(set, assignment, effective, k))
        })
        .collect()
}

/// MSE matrices at `u` and the weights `C_k = E_k⁻¹/ln 2`.
pub fn update_weights_sw(
    u: &[CMat],
    set: &StreamwisePrecoderSet,
    assignment: &StreamAssignment,
    effective: &EffectiveChannel,
    noise: f64,
) -> Result<(Vec<CMat>, Vec<CMat>)> {
    let e: Vec<CMat> = u
        .iter()
        .enumerate()
        .map(|(k, uk)| mse_matrix_sw(uk, set, assignment, effective, k, noise))
        .collect();
    let c = update_weights(&e)?;
    Ok((c, e))
}

/// Per-satellite subproblem: `T_l = Σ_i H̃_{l,i}ᴴU_iC_iU_iᴴH̃_{l,i}`,
/// `z_{k,l,s} = H̃_{l,k}ᴴU_kC_k e_s`, one right-hand side per entry of `served[l]`.
pub fn sat_subproblem_sw(l: usize, u: &[CMat], c: &[CMat], effective: &EffectiveChannel, assignment: &StreamAssignment) -> SatSubproblem {
    let users = effective.users();
    let a: Vec<&CVec> = (0..users).map(|i| effective.a(l, i)).collect();
    let mut t = Vec::with_capacity(users);
    let mut buc_rows = Vec::with_capacity(users);
    for i in 0..users {
        let b = effective.b(l, i);
        let buc = b.adjoint() * (&u[i] * &c[i]);
        let bu = b.adjoint() * &u[i];
        let quad: C64 = buc.iter().zip(bu.iter()).map(|(x, y)| x * y.conj()).sum();
        t.push(effective.sqrt_beta(l, i).powi(2) * quad.re.max(0.0));
        buc_rows.push(buc);
    }
    let rhs = assignment.served[l]
        .iter()
        .map(|&(k, s)| Rhs { user: k, row: scalar_row(buc_rows[k][(0, s)] * effective.sqrt_beta(l, k)) })
        .collect();
    SatSubproblem::new(&a, t, rhs)
}

/// `w = (T_l + μI)⁻¹ z` for every `(k, s)` served by `l`, in `served[l]` order.
///
/// The flag reports a least-norm solve of a singular `T_l` at `μ = 0`.
pub fn precoder_given_mu_sw(
    mu: f64,
    u: &[CMat],
    c: &[CMat],
    effective: &EffectiveChannel,
    assignment: &StreamAssignment,
    l: usize,
) -> Result<(Vec<CVec>, bool)> {
    if !(mu >= 0.0) {
        return Err(Error::Domain("multiplier must be nonnegative".into()));
    }
    let sub = sat_subproblem_sw(l, u, c, effective, assignment);
    if assignment.served[l].is_empty() {
        return Ok((Vec::new(), false));
    }
    let solver = sub.total_power_solver()?;
    let blocks = solver.blocks(mu);
    Ok((blocks.into_iter().map(|b| b.column(0).into_owned()).collect(), mu == 0.0 && solver.singular_at_zero()))
}

/// Smallest `μ ≥ 0` with `residual(μ) ≤ 0`, to `|residual| ≤ tol·ρ` when active.
///
/// `residual` must be non-increasing. Returns 0 when already feasible at 0;
/// otherwise brackets by doubling from 1 and bisects.
pub fn bisection_multiplier<F>(mut residual: F, rho: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(rho > 0.0) || !(tol > 0.0) {
        return Err(Error::Domain("bisection needs ρ > 0 and tol > 0".into()));
    }
    if residual(0.0)? <= 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut bracketed = false;
    for _ in 0..=MAX_EXPANSIONS {
        if residual(hi)? <= 0.0 {
            bracketed = true;
            break;
        }
        hi *= 2.0;
    }
    if !bracketed {
        return Err(Error::Infeasible(format!("no feasible multiplier within {MAX_EXPANSIONS} doublings")));
    }
    let mut lo = 0.0;
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g = residual(mid)?;
        if g.abs() <= tol * rho {
            return Ok(mid);
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Initial vectors `√ρ̄_{l,k,s} W̃_{l,k}e_s / ‖W̃_{l,k}e_s‖` with
/// `ρ̄_{l,k,s} = ρ_l √β_{l,k} / Σ_{(i,s')∈T_l} √β_{l,i}`.
///
/// `W̃_{l,k}e_s = (Σ_i H̃ᴴH̃ + σ²I)⁻¹H̃_{l,k}ᴴq_{k,s}` with `q_{k,s}` the `s`-th left
/// singular vector of the aggregated channel. If the link has no overlap with
/// that mode, the direction `(Σ_i H̃ᴴH̃ + σ²I)⁻¹a*_{l,k}` is used.
pub fn init_streamwise(
    effective: &EffectiveChannel,
    assignment: &StreamAssignment,
    eig: &EigenStructure,
    rho: &[f64],
    noise: f64,
) -> Result<StreamwisePrecoderSet> {
    let (sats, users, n) = (effective.sats(), effective.users(), effective.sat_antennas());
    if rho.len() != sats {
        return Err(Error::Dimension(format!("need {sats} power caps, got {}", rho.len())));
    }
    let mut out = StreamwisePrecoderSet::zeros(sats, users, assignment.streams(), n);
    for l in 0..sats {
        let served = &assignment.served[l];
        if served.is_empty() {
            continue;
        }
        let a_mat = regularized_gram(effective, l, noise);
        let total: f64 = served.iter().map(|&(i, _)| effective.sqrt_beta(l, i)).sum();
        for &(k, s) in served {
            let q = eig.left_vectors[k].column(s).into_owned();
            let overlap = effective.b(l, k).dotc(&q);
            let coeff = if overlap.norm() > DIRECTION_RTOL * effective.b(l, k).norm() {
                overlap * effective.sqrt_beta(l, k)
            } else {
                C64::new(1.0, 0.0)
            };
            let rhs = CMat::from_column_slice(n, 1, effective.a(l, k).map(|z| z.conj() * coeff).as_slice());
            let dir = solve_hpd(&a_mat, &rhs)?.column(0).into_owned();
            let norm = dir.norm();
            let share = if total > 0.0 { rho[l] * effective.sqrt_beta(l, k) / total } else { 0.0 };
            if norm > 0.0 {
                *out.get_mut(l, k, s) = dir.scale(share.sqrt() / norm);
            }
        }
    }
    Ok(out)
}

/// Streamwise WMMSE objective `Σ_k Tr(C_kE_k) − log2 det C_k` at fixed `u`, `c`.
pub fn streamwise_objective(
    u: &[CMat],
    c: &[CMat],
    set: &StreamwisePrecoderSet,
    assignment: &StreamAssignment,
    effective: &EffectiveChannel,
    noise: f64,
) -> Result<f64> {
    let e: Vec<CMat> = u
        .iter()
        .enumerate()
        .map(|(k, uk)| mse_matrix_sw(uk, set, assignment, effective, k, noise))
        .collect();
    wmmse_objective(c, &e)
}

/// The proposed association: Hungarian matching on the participation factors.
pub fn proposed_assignment(
    effective: &EffectiveChannel,
    streams: usize,
    serving_set_size: Option<usize>,
) -> Result<(StreamAssignment, EigenStructure)> {
    let (eta, eig) = participation_factors(effective)?;
    let assignment = match serving_set_size {
        Some(size) => associate_with_serving_set(&eta, &eig, streams, size)?,
        None => associate(&eta, streams)?,
    };
    Ok((assignment, eig))
}

/// Association, initialization and WMMSE iterations end to end.
pub fn solve_streamwise(
    effective: &EffectiveChannel,
    rho: &[f64],
    noise: f64,
    streams: usize,
    params: &SolveParams,
) -> Result<(StreamwisePrecoderSet, StreamAssignment, SolveTrace)> {
    let (assignment, eig) = proposed_assignment(effective, streams, None)?;
    let init = init_streamwise(effective, &assignment, &eig, rho, noise)?;
    let (set, trace) = solve_streamwise_from(effective, rho, noise, params, &assignment, init)?;
    Ok((set, assignment, trace))
}

/// Streamwise WMMSE iterations for a fixed association and starting point.
pub fn solve_streamwise_from(
    effective: &EffectiveChannel,
    rho: &[f64],
    noise: f64,
    params: &SolveParams,
    assignment: &StreamAssignment,
    init: StreamwisePrecoderSet,
) -> Result<(StreamwisePrecoderSet, SolveTrace)> {
    check_shapes(&init, assignment, effective)?;
    if rho.len() != effective.sats() || rho.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Domain("one positive power cap per satellite is required".into()));
    }
    let tol = params.ellipsoid.rel_tolerance;
    let mut w = init;
    let mut trace = SolveTrace::default();
    let mut previous = f64::INFINITY;
    for _ in 0..params.max_iterations {
        let u = update_combiners_sw(&w, assignment, effective, noise)?;
        let (c, _) = update_weights_sw(&u, &w, assignment, effective, noise)?;
        let updates: Vec<Result<Option<(Vec<CVec>, f64, bool, bool)>>> = (0..effective.sats())
            .into_par_iter()
            .map(|l| {
                let served = &assignment.served[l];
                if served.is_empty() {
                    return Ok(None);
                }
                let sub = sat_subproblem_sw(l, &u, &c, effective, assignment);
                let solver = sub.total_power_solver()?;
                let mu = bisection_multiplier(|m| Ok(solver.power(m) - rho[l]), rho[l], tol)?;
                let new = solver.blocks(mu);
                let old: Vec<CMat> = served
                    .iter()
                    .map(|&(k, s)| CMat::from_column_slice(w.sat_antennas(), 1, w.get(l, k, s).as_slice()))
                    .collect();
                let old_power: f64 = old.iter().map(|b| b.norm_squared()).sum();
                let old_feasible = old_power <= rho[l] * (1.0 + tol);
                let (f_new, f_old) = (sub.objective(&new), sub.objective(&old));
                let pinv = mu == 0.0 && solver.singular_at_zero();
                let (chosen, kept) = if old_feasible && f_new > f_old + SAFEGUARD_RTOL * f_old.abs().max(f64::MIN_POSITIVE) {
                    (old, true)
                } else {
                    (new, false)
                };
                Ok(Some((chosen.into_iter().map(|b| b.column(0).into_owned()).collect(), mu, pinv, kept)))
            })
            .collect();
        let mut mus = Vec::with_capacity(effective.sats());
        for (l, upd) in updates.into_iter().enumerate() {
            match upd? {
                Some((vectors, mu, pinv, kept)) => {
                    for (&(k, s), v) in assignment.served[l].iter().zip(vectors) {
                        *w.get_mut(l, k, s) = v;
                    }
                    mus.push(vec![mu]);
                    trace.pinv_fallbacks += usize::from(pinv);
                    trace.safeguard_activations += usize::from(kept);
                }
                None => mus.push(vec![0.0]),
            }
        }
        let objective = streamwise_objective(&u, &c, &w, assignment, effective, noise)?;
        let max_residual = (0..effective.sats()).map(|l| w.sat_power(l) - rho[l]).fold(f64::NEG_INFINITY, f64::max);
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

/// Embeds streamwise vectors as joint blocks: column `s` of `W_{l,k}` is
/// `w_{l,k,s}` when `π_k(s) = l`, zero otherwise.
pub fn to_joint_form(set: &StreamwisePrecoderSet, assignment: &StreamAssignment) -> Result<JointPrecoderSet> {
    if assignment.users() != set.users() || assignment.sats() != set.sats() || assignment.streams() != set.streams() {
        return Err(Error::Dimension("assignment does not match the precoder set".into()));
    }
    let mut out = JointPrecoderSet::zeros(set.sats(), set.users(), set.sat_antennas(), set.streams());
    for (k, row) in assignment.pi.iter().enumerate() {
        for (s, &l) in row.iter().enumerate() {
            out.block_mut(l, k).set_column(s, set.get(l, k, s));
        }
    }
    Ok(out)
}
