//! Multiplier search for per-satellite power constraints.
//!
//! The oracle maps a nonnegative multiplier vector `μ` to the residuals
//! `g(μ)` of the precoder minimizing the Lagrangian at `μ`, plus that
//! precoder's primal subproblem objective. The residuals are a supergradient
//! of the concave dual, so the search is a dual ascent.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scenario::{CutRule, EllipsoidConfig};

/// Doubling budget for the feasibility bootstrap.
pub const MAX_EXPANSIONS: usize = 60;
const MAX_BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub residuals: Vec<f64>,
    pub objective: f64,
}

impl Evaluation {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierMethod {
    /// `μ = 0` was already feasible.
    Unconstrained,
    Bisection,
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSolution {
    pub mu: Vec<f64>,
    pub evaluation: Evaluation,
    pub iterations: usize,
    pub method: MultiplierMethod,
}

/// Ellipsoid center and shape.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidState {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub iteration: usize,
}

impl EllipsoidState {
    /// Ellipsoid containing the box `[0, upper]`.
    pub fn containing_box(upper: &[f64]) -> Self {
        let d = upper.len() as f64;
        let u = DVector::from_column_slice(upper);
        Self {
            center: u.scale(0.5),
            shape: DMatrix::from_diagonal(&u.component_mul(&u)).scale(d / 4.0),
            iteration: 0,
        }
    }

    /// Central cut keeping `{μ : sᵀ(μ − c) ≤ 0}`. Requires dimension ≥ 2.
    ///
    /// Returns `false` without changing the state when the ellipsoid has
    /// collapsed along `s`.
    pub fn cut(&mut self, normal: &DVector<f64>) -> bool {
        let d = self.center.len() as f64;
        debug_assert!(d >= 2.0);
        let ps = &self.shape * normal;
        let denom = normal.dot(&ps);
        if !(denom > 0.0 && denom.is_finite()) {
            return false;
        }
        let st = ps / denom.sqrt();
        self.center -= st.scale(1.0 / (d + 1.0));
        let shrink = d * d / (d * d - 1.0);
        self.shape = (&self.shape - (&st * st.transpose()).scale(2.0 / (d + 1.0))).scale(shrink);
        self.shape = (&self.shape + self.shape.transpose()).scale(0.5);
        self.iteration += 1;
        true
    }

    pub fn max_semi_axis_proxy(&self) -> f64 {
        self.shape.diagonal().iter().map(|v| v.max(0.0).sqrt()).fold(0.0, f64::max)
    }
}

/// Absolute feasibility tolerance for a satellite with caps `caps`.
pub fn feasibility_tolerance(params: &EllipsoidConfig, caps: &[f64]) -> f64 {
    params.rel_tolerance * caps.iter().copied().fold(0.0, f64::max)
}

fn is_feasible(e: &Evaluation, eps: f64) -> bool {
    e.residuals.iter().all(|&g| g <= eps)
}

/// Finds `μ̄ = α^j · 1` with all residuals nonpositive.
fn expand<F>(dim: usize, alpha: f64, oracle: &mut F) -> Result<(Vec<f64>, Evaluation)>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    let mut mu = vec![1.0; dim];
    for _ in 0..=MAX_EXPANSIONS {
        let e = oracle(&mu)?;
        if e.max_residual() <= 0.0 {
            return Ok((mu, e));
        }
        mu.iter_mut().for_each(|m| *m *= alpha);
    }
    Err(Error::Infeasible(format!(
        "no feasible multiplier within {MAX_EXPANSIONS} expansions"
    )))
}

/// Scalar multiplier search: `μ = 0` if feasible, else a doubling bracket from
/// 1 followed by bisection until `|g| ≤ tol·cap`.
pub fn bisect_multiplier<F>(cap: f64, rel_tol: f64, mut residual: F) -> Result<(f64, usize)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mu, _, steps) = bisect_with_eval(cap, rel_tol, 2.0, |mu| {
        let g = residual(mu[0])?;
        Ok(Evaluation { residuals: vec![g], objective: 0.0 })
    })?;
    Ok((mu, steps))
}

fn bisect_with_eval<F>(cap: f64, rel_tol: f64, alpha: f64, mut oracle: F) -> Result<(f64, Evaluation, usize)>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    let tol = rel_tol * cap;
    let at_zero = oracle(&[0.0])?;
    if at_zero.residuals[0] <= 0.0 {
        return Ok((0.0, at_zero, 0));
    }
    let (upper, upper_eval) = expand(1, alpha, &mut oracle)?;
    let (mut lo, mut hi, mut hi_eval) = (0.0, upper[0], upper_eval);
    if hi_eval.residuals[0].abs() <= tol {
        return Ok((hi, hi_eval, 0));
    }
    for step in 1..=MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok((hi, hi_eval, step));
        }
        let e = oracle(&[mid])?;
        let g = e.residuals[0];
        if g.abs() <= tol {
            return Ok((mid, e, step));
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            hi_eval = e;
        }
    }
    Ok((hi, hi_eval, MAX_BISECTION_STEPS))
}

fn cut_normal(rule: CutRule, g: &[f64]) -> DVector<f64> {
    match rule {
        CutRule::FullResidual => DVector::from_iterator(g.len(), g.iter().map(|v| -v)),
        CutRule::MostViolated => {
            let mut idx = 0;
            if g.iter().any(|&v| v > 0.0) {
                for (i, &v) in g.iter().enumerate() {
                    if v > g[idx] {
                        idx = i;
                    }
                }
            } else {
                for (i, &v) in g.iter().enumerate() {
                    if v < g[idx] {
                        idx = i;
                    }
                }
            }
            let mut s = DVector::zeros(g.len());
            s[idx] = -g[idx];
            s
        }
    }
}

/// Solves for the multiplier vector of one satellite with `caps.len()` constraints.
///
/// One constraint uses bisection. More constraints run the central-cut
/// ellipsoid from the box `[0, μ̄]`, cutting with `−g(c)` at centers inside the
/// orthant and with the violated sign constraint otherwise. It stops when the
/// residuals are within
/// `ε = rel_tolerance · max ρ` and every `√P_ii` is below `rel_tolerance · max μ̄`.
/// If the last center is not feasible, the feasible iterate with the lowest
/// primal objective is returned instead.
pub fn solve_multipliers<F>(caps: &[f64], params: &EllipsoidConfig, mut oracle: F) -> Result<MultiplierSolution>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    let dim = caps.len();
    if dim == 0 {
        return Err(Error::Dimension("no constraints to solve for".into()));
    }
    if !(params.expansion > 1.0) {
        return Err(Error::Validation("expansion factor must exceed 1".into()));
    }
    if dim == 1 {
        let (mu, evaluation, iterations) = bisect_with_eval(caps[0], params.rel_tolerance, params.expansion, oracle)?;
        let method = if iterations == 0 && mu == 0.0 { MultiplierMethod::Unconstrained } else { MultiplierMethod::Bisection };
        return Ok(MultiplierSolution { mu: vec![mu], evaluation, iterations, method });
    }

    let eps = feasibility_tolerance(params, caps);
    let zero = vec![0.0; dim];
    let at_zero = oracle(&zero)?;
    if at_zero.max_residual() <= 0.0 {
        return Ok(MultiplierSolution { mu: zero, evaluation: at_zero, iterations: 0, method: MultiplierMethod::Unconstrained });
    }
    let (upper, upper_eval) = expand(dim, params.expansion, &mut oracle)?;
    let mu_tol = params.rel_tolerance * upper.iter().copied().fold(0.0, f64::max);
    let mut best = (upper.clone(), upper_eval);
    let mut state = EllipsoidState::containing_box(&upper);
    let mut last = None;
    for _ in 0..params.max_iterations {
        // A center outside the orthant is cut back with the violated sign constraint.
        let (worst, &most_negative) = state
            .center
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("dimension is at least 2");
        if most_negative < 0.0 {
            let mut normal = DVector::zeros(dim);
            normal[worst] = -1.0;
            if !state.cut(&normal) {
                break;
            }
            continue;
        }
        let mu: Vec<f64> = state.center.iter().copied().collect();
        let e = oracle(&mu)?;
        if is_feasible(&e, eps) && e.objective < best.1.objective {
            best = (mu.clone(), e.clone());
        }
        if is_feasible(&e, eps) && state.max_semi_axis_proxy() <= mu_tol {
            last = Some((mu, e));
            break;
        }
        let normal = cut_normal(params.cut, &e.residuals);
        if normal.iter().all(|&v| v == 0.0) {
            last = Some((mu, e));
            break;
        }
        if !state.cut(&normal) {
            break;
        }
    }
    let (mu, evaluation) = match last {
        Some((mu, e)) if e.objective <= best.1.objective => (mu, e),
        _ => best,
    };
    Ok(MultiplierSolution { mu, evaluation, iterations: state.iteration, method: MultiplierMethod::Ellipsoid })
}
