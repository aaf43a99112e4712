//! Weighted quadratic power constraints `Σ_k Tr(W_{l,k}ᴴ A W_{l,k}) ≤ ρ` per satellite.

use crate::error::{Error, Result};
use crate::linalg::{eigh_desc, CMat, C64};
use crate::scenario::{ConstraintKind, ScenarioConfig};

const PSD_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    /// `c · I_N`.
    ScaledIdentity(f64),
    /// Real nonnegative diagonal.
    Diagonal(Vec<f64>),
    /// General Hermitian PSD matrix.
    Dense(CMat),
}

impl Weight {
    pub fn to_matrix(&self, n: usize) -> CMat {
        match self {
            Weight::ScaledIdentity(c) => CMat::identity(n, n).scale(*c),
            Weight::Diagonal(d) => CMat::from_diagonal(&nalgebra::DVector::from_iterator(
                n,
                d.iter().map(|&v| C64::new(v, 0.0)),
            )),
            Weight::Dense(m) => m.clone(),
        }
    }

    /// `Tr(Wᴴ A W)` for an N×S block.
    pub fn quadratic(&self, w: &CMat) -> f64 {
        match self {
            Weight::ScaledIdentity(c) => c * w.norm_squared(),
            Weight::Diagonal(d) => w
                .row_iter()
                .zip(d)
                .map(|(row, &a)| a * row.norm_squared())
                .sum(),
            Weight::Dense(a) => {
                let aw = a * w;
                w.iter().zip(aw.iter()).map(|(x, y)| (x.conj() * y).re).sum()
            }
        }
    }

    /// Adds `scale · A` to `m` in place.
    pub fn add_to(&self, m: &mut CMat, scale: f64) {
        match self {
            Weight::ScaledIdentity(c) => {
                for i in 0..m.nrows() {
                    m[(i, i)] += C64::new(scale * c, 0.0);
                }
            }
            Weight::Diagonal(d) => {
                for (i, &v) in d.iter().enumerate() {
                    m[(i, i)] += C64::new(scale * v, 0.0);
                }
            }
            Weight::Dense(a) => *m += a.scale(scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerConstraint {
    pub weight: Weight,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerConstraintSet {
    sat_antennas: usize,
    per_sat: Vec<Vec<PowerConstraint>>,
}

impl PowerConstraintSet {
    /// Validates PSD weights and positive caps.
    pub fn new(sat_antennas: usize, per_sat: Vec<Vec<PowerConstraint>>) -> Result<Self> {
        for (l, list) in per_sat.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::Validation(format!("satellite {l} has no power constraint")));
            }
            for (x, c) in list.iter().enumerate() {
                if !(c.cap > 0.0 && c.cap.is_finite()) {
                    return Err(Error::Validation(format!("cap of constraint ({l}, {x}) must be positive")));
                }
                check_weight(&c.weight, sat_antennas)
                    .map_err(|m| Error::Validation(format!("constraint ({l}, {x}): {m}")))?;
            }
        }
        Ok(Self { sat_antennas, per_sat })
    }

    /// One identity-weighted constraint per satellite.
    pub fn per_sat_total(sat_antennas: usize, rho_per_sat: &[f64]) -> Result<Self> {
        Self::new(
            sat_antennas,
            rho_per_sat
                .iter()
                .map(|&cap| vec![PowerConstraint { weight: Weight::ScaledIdentity(1.0), cap }])
                .collect(),
        )
    }

    /// `N` single-entry constraints per satellite; `rho_per_antenna[l][n]`.
    pub fn per_antenna(sat_antennas: usize, rho_per_antenna: &[Vec<f64>]) -> Result<Self> {
        let mut per_sat = Vec::with_capacity(rho_per_antenna.len());
        for caps in rho_per_antenna {
            if caps.len() != sat_antennas {
                return Err(Error::Dimension("per-antenna caps must have length N".into()));
            }
            per_sat.push(
                caps.iter()
                    .enumerate()
                    .map(|(n, &cap)| {
                        let mut d = vec![0.0; sat_antennas];
                        d[n] = 1.0;
                        PowerConstraint { weight: Weight::Diagonal(d), cap }
                    })
                    .collect(),
            );
        }
        Self::new(sat_antennas, per_sat)
    }

    /// Builds the configured constraint family at sweep cap `rho` watts.
    ///
    /// Per-antenna caps split `rho` evenly over the array.
    pub fn from_config(config: &ScenarioConfig, rho: f64) -> Result<Self> {
        let (l, n) = (config.num_sats, config.sat_antennas);
        match config.constraint_kind {
            ConstraintKind::PerSatTotal => Self::per_sat_total(n, &vec![rho; l]),
            ConstraintKind::PerAntenna => Self::per_antenna(n, &vec![vec![rho / n as f64; n]; l]),
            ConstraintKind::Custom => {
                let mut per_sat = vec![Vec::new(); l];
                for c in &config.custom_constraints {
                    let weight = match (&c.diagonal, &c.weight_re) {
                        (Some(d), _) => Weight::Diagonal(d.clone()),
                        (None, Some(re)) => {
                            let im = c.weight_im.as_ref();
                            Weight::Dense(CMat::from_fn(n, n, |i, j| {
                                C64::new(re[i][j], im.map_or(0.0, |m| m[i][j]))
                            }))
                        }
                        (None, None) => {
                            return Err(Error::Validation("custom constraint without weight".into()))
                        }
                    };
                    per_sat[c.sat].push(PowerConstraint { weight, cap: c.cap_scale * rho });
                }
                Self::new(n, per_sat)
            }
        }
    }

    pub fn sats(&self) -> usize {
        self.per_sat.len()
    }

    pub fn sat_antennas(&self) -> usize {
        self.sat_antennas
    }

    pub fn constraints(&self, l: usize) -> &[PowerConstraint] {
        &self.per_sat[l]
    }

    /// `min_x ρ_{l,x}`.
    pub fn min_cap(&self, l: usize) -> f64 {
        self.per_sat[l].iter().map(|c| c.cap).fold(f64::INFINITY, f64::min)
    }

    pub fn max_cap(&self, l: usize) -> f64 {
        self.per_sat[l].iter().map(|c| c.cap).fold(0.0, f64::max)
    }

    /// If every constraint at `l` is a scaled identity, the weights `c_x`.
    pub fn identity_scales(&self, l: usize) -> Option<Vec<f64>> {
        identity_scales(&self.per_sat[l])
    }

    /// `g_{l,x} = Σ_k Tr(W_kᴴ A_x W_k) − ρ_x` for the blocks of satellite `l`.
    pub fn residuals(&self, l: usize, blocks: &[CMat]) -> Result<Vec<f64>> {
        if let Some(w) = blocks.iter().find(|w| w.nrows() != self.sat_antennas) {
            return Err(Error::Dimension(format!(
                "precoder has {} rows, expected N = {}",
                w.nrows(),
                self.sat_antennas
            )));
        }
        Ok(self.per_sat[l]
            .iter()
            .map(|c| blocks.iter().map(|w| c.weight.quadratic(w)).sum::<f64>() - c.cap)
            .collect())
    }
}

/// The scales `c_x` if every weight is `c_x · I`.
pub fn identity_scales(constraints: &[PowerConstraint]) -> Option<Vec<f64>> {
    constraints
        .iter()
        .map(|c| match c.weight {
            Weight::ScaledIdentity(s) => Some(s),
            _ => None,
        })
        .collect()
}

fn check_weight(w: &Weight, n: usize) -> std::result::Result<(), String> {
    match w {
        Weight::ScaledIdentity(c) if *c >= 0.0 && c.is_finite() => Ok(()),
        Weight::ScaledIdentity(_) => Err("identity scale must be nonnegative".into()),
        Weight::Diagonal(d) => {
            if d.len() != n {
                return Err(format!("diagonal has length {}, expected {n}", d.len()));
            }
            if d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err("diagonal weights must be nonnegative".into());
            }
            Ok(())
        }
        Weight::Dense(a) => {
            if a.nrows() != n || a.ncols() != n {
                return Err(format!("weight must be {n} x {n}"));
            }
            let norm = a.norm();
            if (a - a.adjoint()).norm() > 1e-10 * norm.max(1e-300) {
                return Err("weight is not Hermitian".into());
            }
            let (vals, _) = eigh_desc(a);
            let min = vals.last().copied().unwrap_or(0.0);
            if min < -PSD_RTOL * norm {
                return Err(format!("weight is not PSD (min eigenvalue {min:e})"));
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_block(n: usize, s: usize, seed: f64) -> CMat {
        CMat::from_fn(n, s, |i, j| C64::new((seed + i as f64 * 0.7 - j as f64).sin(), (seed * 1.3 + j as f64 + 0.2 * i as f64).cos()))
    }

    #[test]
    fn per_sat_total_shape_and_zero_residual() {
        let set = PowerConstraintSet::per_sat_total(3, &[1.0, 2.0]).unwrap();
        assert_eq!(set.sats(), 2);
        assert_eq!(set.constraints(1).len(), 1);
        assert_eq!(set.constraints(0)[0].weight.to_matrix(3), CMat::identity(3, 3));
        let zero = vec![CMat::zeros(3, 2)];
        assert_eq!(set.residuals(1, &zero).unwrap(), vec![-2.0]);
    }

    #[test]
    fn per_antenna_weights_are_single_entries() {
        let set = PowerConstraintSet::per_antenna(2, &[vec![1.0, 1.0]]).unwrap();
        assert_eq!(set.constraints(0).len(), 2);
        let m0 = set.constraints(0)[0].weight.to_matrix(2);
        assert_eq!(m0[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(m0[(1, 1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn residual_at_cap_is_zero() {
        let w = sample_block(4, 2, 0.3);
        let p = w.norm_squared();
        let set = PowerConstraintSet::per_sat_total(4, &[p]).unwrap();
        assert!(set.residuals(0, &[w]).unwrap()[0].abs() <= 1e-12 * p);
    }

    #[test]
    fn per_antenna_residual_is_row_power() {
        let blocks = vec![sample_block(4, 2, 0.1), sample_block(4, 2, 2.0)];
        let caps = vec![0.5, 1.0, 1.5, 2.0];
        let set = PowerConstraintSet::per_antenna(4, &[caps.clone()]).unwrap();
        let g = set.residuals(0, &blocks).unwrap();
        for n in 0..4 {
            let mut row_power = 0.0;
            for b in &blocks {
                for j in 0..b.ncols() {
                    row_power += b[(n, j)].norm_sqr();
                }
            }
            assert!((g[n] - (row_power - caps[n])).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_weight_matches_trace() {
        let a = {
            let b = sample_block(3, 3, 0.9);
            &b * b.adjoint()
        };
        let w = sample_block(3, 2, 1.7);
        let direct = (w.adjoint() * &a * &w).trace().re;
        assert!((Weight::Dense(a).quadratic(&w) - direct).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(PowerConstraintSet::per_sat_total(2, &[0.0]).is_err());
        let bad = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]));
        let err = PowerConstraintSet::new(2, vec![vec![PowerConstraint { weight: Weight::Dense(bad), cap: 1.0 }]]);
        assert!(err.is_err());
        let set = PowerConstraintSet::per_sat_total(2, &[1.0]).unwrap();
        assert!(matches!(set.residuals(0, &[CMat::zeros(3, 1)]), Err(Error::Dimension(_))));
    }
}
