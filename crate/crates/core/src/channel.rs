//! ULA responses, effective rank-1 link channels and Rician realizations.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};
use crate::scenario::{LinkGrid, LinkStatistics};

/// Half-wavelength ULA response with phase reference at element 0.
pub fn ula_response(angle_rad: f64, num_antennas: usize) -> Result<CVec> {
    if num_antennas == 0 {
        return Err(Error::Domain("ULA needs at least one antenna".into()));
    }
    if !angle_rad.is_finite() {
        return Err(Error::Domain("ULA angle must be finite".into()));
    }
    let phase = PI * angle_rad.sin();
    Ok(CVec::from_iterator(
        num_antennas,
        (0..num_antennas).map(|n| C64::from_polar(1.0, phase * n as f64)),
    ))
}

/// Deterministic link channels `√β · b aᵀ` for every satellite–user pair.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    sats: usize,
    users: usize,
    /// UE-side responses, length M, indexed `[l * K + k]`.
    b: Vec<CVec>,
    /// SAT-side responses, length N.
    a: Vec<CVec>,
    sqrt_beta: Vec<f64>,
}

impl EffectiveChannel {
    pub fn new(stats: &LinkStatistics, user_antennas: usize, sat_antennas: usize) -> Result<Self> {
        let (sats, users) = (stats.sats(), stats.users());
        let mut b = Vec::with_capacity(sats * users);
        let mut a = Vec::with_capacity(sats * users);
        let mut sqrt_beta = Vec::with_capacity(sats * users);
        for l in 0..sats {
            for k in 0..users {
                b.push(ula_response(stats.theta[(l, k)], user_antennas)?);
                a.push(ula_response(stats.phi[(l, k)], sat_antennas)?);
                sqrt_beta.push(stats.beta[(l, k)].sqrt());
            }
        }
        Ok(Self { sats, users, b, a, sqrt_beta })
    }

    /// Builds the channel from explicit responses, `[l][k]` order.
    pub fn from_parts(b: Vec<Vec<CVec>>, a: Vec<Vec<CVec>>, beta: &LinkGrid) -> Self {
        let sats = b.len();
        let users = b.first().map_or(0, Vec::len);
        let sqrt_beta = beta.iter().map(|v| v.sqrt()).collect();
        Self {
            sats,
            users,
            b: b.into_iter().flatten().collect(),
            a: a.into_iter().flatten().collect(),
            sqrt_beta,
        }
    }

    pub fn sats(&self) -> usize {
        self.sats
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn user_antennas(&self) -> usize {
        self.b[0].len()
    }

    pub fn sat_antennas(&self) -> usize {
        self.a[0].len()
    }

    pub fn b(&self, l: usize, k: usize) -> &CVec {
        &self.b[l * self.users + k]
    }

    pub fn a(&self, l: usize, k: usize) -> &CVec {
        &self.a[l * self.users + k]
    }

    pub fn sqrt_beta(&self, l: usize, k: usize) -> f64 {
        self.sqrt_beta[l * self.users + k]
    }

    /// `H̃_{l,k}` as a dense M×N matrix.
    pub fn hbar(&self, l: usize, k: usize) -> CMat {
        (self.b(l, k) * self.a(l, k).transpose()).scale(self.sqrt_beta(l, k))
    }

    /// `H̃_{l,k} X` for an N×c matrix `X`, computed through the rank-1 factors.
    pub fn apply(&self, l: usize, k: usize, x: &CMat) -> CMat {
        let row = self.a(l, k).transpose() * x;
        (self.b(l, k) * row).scale(self.sqrt_beta(l, k))
    }

    /// `H̃_{l,k}ᴴ Y` for an M×c matrix `Y`.
    pub fn apply_adjoint(&self, l: usize, k: usize, y: &CMat) -> CMat {
        let row = self.b(l, k).adjoint() * y;
        (self.a(l, k).map(|z| z.conj()) * row).scale(self.sqrt_beta(l, k))
    }

    /// Per-user aggregated channel `[H̃_{1,k}, …, H̃_{L,k}]`.
    pub fn aggregate(&self, k: usize) -> CMat {
        let (m, n) = (self.user_antennas(), self.sat_antennas());
        let mut out = CMat::zeros(m, self.sats * n);
        for l in 0..self.sats {
            out.view_mut((0, l * n), (m, n)).copy_from(&self.hbar(l, k));
        }
        out
    }
}

/// Small-scale fading draw for every link.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    sats: usize,
    users: usize,
    gamma: Vec<C64>,
}

impl ChannelRealization {
    pub fn gamma(&self, l: usize, k: usize) -> C64 {
        self.gamma[l * self.users + k]
    }

    /// `H_{l,k} = γ_{l,k} b aᵀ`.
    pub fn h(&self, effective: &EffectiveChannel, l: usize, k: usize) -> CMat {
        let s = effective.sqrt_beta(l, k);
        let scale = if s > 0.0 { self.gamma(l, k) / s } else { C64::new(0.0, 0.0) };
        effective.hbar(l, k).map(|z| z * scale)
    }

    pub fn sats(&self) -> usize {
        self.sats
    }

    pub fn users(&self) -> usize {
        self.users
    }
}

/// One Rician gain draw `√β(√(κ/(κ+1)) e^{jψ} + √(1/(κ+1)) z)`.
pub fn rician_gain<R: Rng + ?Sized>(beta: f64, kappa: f64, rng: &mut R) -> C64 {
    let psi: f64 = rng.random::<f64>() * 2.0 * PI;
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    let (los, nlos) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (kappa + 1.0)).sqrt(), (1.0 / (kappa + 1.0)).sqrt())
    };
    let z = C64::new(x, y) * std::f64::consts::FRAC_1_SQRT_2;
    (C64::from_polar(los, psi) + z * nlos) * beta.sqrt()
}

pub fn sample_realization<R: Rng + ?Sized>(stats: &LinkStatistics, rng: &mut R) -> ChannelRealization {
    let (sats, users) = (stats.sats(), stats.users());
    let mut gamma = Vec::with_capacity(sats * users);
    for l in 0..sats {
        for k in 0..users {
            gamma.push(rician_gain(stats.beta[(l, k)], stats.kappa[(l, k)], rng));
        }
    }
    ChannelRealization { sats, users, gamma }
}
