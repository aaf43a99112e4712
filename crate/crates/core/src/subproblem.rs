//! Per-satellite precoder subproblem shared by the joint and streamwise designs.
//!
//! With rank-1 effective channels the quadratic term is
//! `T = Σ_i t_i a_i* a_iᵀ` and every linear term is `a_k* ⊗ row`, so the
//! minimizer of `Σ Tr(WᴴTW) − 2Re Tr(ZᴴW) + Σ_x μ_x Tr(WᴴA_xW)` is
//! `W = (T + Σμ_x A_x)⁻¹ a_k* ⊗ row`. When every `A_x` is a scaled identity
//! the solve happens in the span of the `a_i*`.

use crate::ellipsoid::{solve_multipliers, Evaluation, MultiplierSolution};
use crate::error::Result;
use crate::linalg::{cholesky, column_space_basis, eigh_desc, pinv_solve_hermitian, CMat, CVec, C64, PINV_RTOL};
use crate::power::{identity_scales, PowerConstraint};
use crate::scenario::EllipsoidConfig;

/// One linear term `Z = a_user* ⊗ row`.
#[derive(Debug, Clone)]
pub struct Rhs {
    pub user: usize,
    /// 1×c coefficient row.
    pub row: CMat,
}

#[derive(Debug, Clone)]
pub struct SatSubproblem {
    a_conj: Vec<CVec>,
    t: Vec<f64>,
    rhs: Vec<Rhs>,
}

#[derive(Debug, Clone)]
pub struct SatSolution {
    /// One N×c block per right-hand side, in input order.
    pub blocks: Vec<CMat>,
    pub multipliers: MultiplierSolution,
    /// The `μ = 0` system was singular and solved in the least-norm sense.
    pub pinv_used: bool,
}

struct Reduced {
    /// `Q V`, N×r.
    qv: CMat,
    eigvals: Vec<f64>,
    /// `Vᴴ Qᴴ a_i*` per user.
    proj: Vec<CVec>,
    floor: f64,
}

impl Reduced {
    /// Whether the full N×N quadratic term is singular.
    fn singular(&self, n: usize) -> bool {
        self.eigvals.len() < n || self.eigvals.iter().any(|&v| v <= self.floor)
    }

    fn inv(&self, j: usize, nu: f64) -> f64 {
        let d = self.eigvals[j] + nu;
        if d > self.floor && d > 0.0 {
            1.0 / d
        } else {
            0.0
        }
    }
}

impl SatSubproblem {
    /// `a[i]` are the SAT-side responses `a_{l,i}` (not conjugated); `t[i] ≥ 0`.
    pub fn new(a: &[&CVec], t: Vec<f64>, rhs: Vec<Rhs>) -> Self {
        Self { a_conj: a.iter().map(|v| v.map(|z| z.conj())).collect(), t, rhs }
    }

    pub fn sat_antennas(&self) -> usize {
        self.a_conj[0].len()
    }

    pub fn rhs(&self) -> &[Rhs] {
        &self.rhs
    }

    /// Dense `T`.
    pub fn t_matrix(&self) -> CMat {
        let n = self.sat_antennas();
        let mut m = CMat::zeros(n, n);
        for (v, &t) in self.a_conj.iter().zip(&self.t) {
            if t != 0.0 {
                m += (v * v.adjoint()).scale(t);
            }
        }
        m
    }

    /// Dense `Z` for right-hand side `j`.
    pub fn z_matrix(&self, j: usize) -> CMat {
        let r = &self.rhs[j];
        &self.a_conj[r.user] * &r.row
    }

    /// `Σ_j Tr(W_jᴴ T W_j) − 2 Re Tr(Z_jᴴ W_j)`.
    pub fn objective(&self, blocks: &[CMat]) -> f64 {
        let mut f = 0.0;
        for (r, w) in self.rhs.iter().zip(blocks) {
            for (v, &t) in self.a_conj.iter().zip(&self.t) {
                if t != 0.0 {
                    f += t * (v.adjoint() * w).norm_squared();
                }
            }
            let aw = self.a_conj[r.user].adjoint() * w;
            let cross: f64 = r.row.iter().zip(aw.iter()).map(|(c, x)| (c.conj() * x).re).sum();
            f -= 2.0 * cross;
        }
        f
    }

    fn reduced(&self) -> Result<Reduced> {
        let n = self.sat_antennas();
        let mut span = CMat::zeros(n, self.a_conj.len());
        for (i, v) in self.a_conj.iter().enumerate() {
            span.set_column(i, v);
        }
        let q = column_space_basis(&span, 1e-10)?;
        let t_red = {
            let mut m = CMat::zeros(q.ncols(), q.ncols());
            for (v, &t) in self.a_conj.iter().zip(&self.t) {
                if t != 0.0 {
                    let x = q.adjoint() * v;
                    m += (&x * x.adjoint()).scale(t);
                }
            }
            m
        };
        let (eigvals, vecs) = eigh_desc(&t_red);
        let floor = PINV_RTOL * eigvals.first().copied().unwrap_or(0.0).max(0.0);
        let qv = &q * &vecs;
        let proj = self.a_conj.iter().map(|v| qv.adjoint() * v).collect();
        Ok(Reduced { qv, eigvals, proj, floor })
    }

    fn blocks_reduced(&self, red: &Reduced, nu: f64) -> Vec<CMat> {
        self.rhs
            .iter()
            .map(|r| {
                let y = &red.proj[r.user];
                let scaled = CVec::from_iterator(y.len(), y.iter().enumerate().map(|(j, v)| v * red.inv(j, nu)));
                (&red.qv * scaled) * &r.row
            })
            .collect()
    }

    fn power_and_objective_reduced(&self, red: &Reduced, nu: f64) -> (f64, f64) {
        let (mut p, mut f) = (0.0, 0.0);
        for r in &self.rhs {
            let row2 = r.row.norm_squared();
            for (j, y) in red.proj[r.user].iter().enumerate() {
                let inv = red.inv(j, nu);
                let y2 = y.norm_sqr();
                p += row2 * y2 * inv * inv;
                f += row2 * (red.eigvals[j].max(0.0) * y2 * inv * inv - 2.0 * y2 * inv);
            }
        }
        (p, f)
    }

    /// Dense solve of `(T + Σ μ_x A_x) U = [a_k*]`.
    fn blocks_dense(&self, mu: &[f64], constraints: &[PowerConstraint]) -> (Vec<CMat>, bool) {
        let n = self.sat_antennas();
        let mut m = self.t_matrix();
        for (c, &mx) in constraints.iter().zip(mu) {
            if mx != 0.0 {
                c.weight.add_to(&mut m, mx);
            }
        }
        let users = self.a_conj.len();
        let mut rhs = CMat::zeros(n, users);
        for (i, v) in self.a_conj.iter().enumerate() {
            rhs.set_column(i, v);
        }
        let (sol, pinv) = match cholesky(&m) {
            Ok(ch) if well_conditioned(ch.l_dirty()) => (ch.solve(&rhs), false),
            _ => (pinv_solve_hermitian(&m, &rhs), true),
        };
        let blocks = self
            .rhs
            .iter()
            .map(|r| sol.column(r.user).into_owned() * &r.row)
            .collect();
        (blocks, pinv)
    }

    /// Minimizes the subproblem subject to `constraints`.
    pub fn solve(&self, constraints: &[PowerConstraint], params: &EllipsoidConfig) -> Result<SatSolution> {
        let caps: Vec<f64> = constraints.iter().map(|c| c.cap).collect();
        let scales = identity_scales(constraints);
        if let Some(scales) = scales {
            let red = self.reduced()?;
            let nu_of = |mu: &[f64]| mu.iter().zip(&scales).map(|(m, s)| m * s).sum::<f64>();
            let multipliers = solve_multipliers(&caps, params, |mu| {
                let (p, f) = self.power_and_objective_reduced(&red, nu_of(mu));
                Ok(Evaluation { residuals: scales.iter().zip(&caps).map(|(s, c)| s * p - c).collect(), objective: f })
            })?;
            let nu = nu_of(&multipliers.mu);
            let pinv_used = nu == 0.0 && red.singular(self.sat_antennas());
            let blocks = self.blocks_reduced(&red, nu);
            return Ok(SatSolution { blocks, multipliers, pinv_used });
        }
        let multipliers = solve_multipliers(&caps, params, |mu| {
            let (blocks, _) = self.blocks_dense(mu, constraints);
            let residuals = constraints
                .iter()
                .map(|c| blocks.iter().map(|w| c.weight.quadratic(w)).sum::<f64>() - c.cap)
                .collect();
            Ok(Evaluation { residuals, objective: self.objective(&blocks) })
        })?;
        let (blocks, pinv_used) = self.blocks_dense(&multipliers.mu, constraints);
        Ok(SatSolution { blocks, multipliers, pinv_used })
    }

    /// Closed-form minimizer for a fixed multiplier vector.
    pub fn blocks_at(&self, mu: &[f64], constraints: &[PowerConstraint]) -> Result<(Vec<CMat>, bool)> {
        let scales = identity_scales(constraints);
        if let Some(scales) = scales {
            let red = self.reduced()?;
            let nu: f64 = mu.iter().zip(&scales).map(|(m, s)| m * s).sum();
            let pinv = nu == 0.0 && red.singular(self.sat_antennas());
            return Ok((self.blocks_reduced(&red, nu), pinv));
        }
        Ok(self.blocks_dense(mu, constraints))
    }
}

/// Precomputed solver for a single constraint `Σ_j ‖W_j‖_F² ≤ ρ`.
pub struct TotalPowerSolver<'a> {
    sub: &'a SatSubproblem,
    red: Reduced,
}

impl TotalPowerSolver<'_> {
    /// `Σ_j ‖W_j(μ)‖_F²`.
    pub fn power(&self, mu: f64) -> f64 {
        self.sub.power_and_objective_reduced(&self.red, mu).0
    }

    pub fn blocks(&self, mu: f64) -> Vec<CMat> {
        self.sub.blocks_reduced(&self.red, mu)
    }

    /// Whether `μ = 0` needs the least-norm solution.
    pub fn singular_at_zero(&self) -> bool {
        self.red.singular(self.sub.sat_antennas())
    }
}

impl SatSubproblem {
    pub fn total_power_solver(&self) -> Result<TotalPowerSolver<'_>> {
        Ok(TotalPowerSolver { sub: self, red: self.reduced()? })
    }
}

/// Rejects Cholesky factors with pivots that are tiny relative to the largest.
fn well_conditioned(l: &CMat) -> bool {
    let d: Vec<f64> = l.diagonal().iter().map(|z| z.re).collect();
    let top = d.iter().copied().fold(0.0, f64::max);
    top > 0.0 && d.iter().all(|&v| v > 1e-6 * top)
}

/// Scalar coefficient helper for single-column right-hand sides.
pub fn scalar_row(c: C64) -> CMat {
    CMat::from_element(1, 1, c)
}
