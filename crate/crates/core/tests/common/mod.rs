#![allow(dead_code)]

use distsat::channel::{ula_response, EffectiveChannel};
use distsat::joint_wmmse::JointPrecoderSet;
use distsat::linalg::{CMat, C64};
use distsat::scenario::{seeded_rng, LinkGrid};
use rand::Rng;

/// Synthetic channel with unit-order gains: uniform sines on both sides,
/// `β ∈ [0.5, 2]`.
pub fn random_channel(seed: u64, sats: usize, users: usize, n: usize, m: usize) -> EffectiveChannel {
    let mut rng = seeded_rng(seed);
    let mut b = vec![Vec::new(); sats];
    let mut a = vec![Vec::new(); sats];
    let mut beta = LinkGrid::filled(sats, users, 0.0);
    for l in 0..sats {
        for k in 0..users {
            let st: f64 = rng.random_range(-1.0..1.0);
            let sp: f64 = rng.random_range(-1.0..1.0);
            b[l].push(ula_response(st.asin(), m).unwrap());
            a[l].push(ula_response(sp.asin(), n).unwrap());
            beta[(l, k)] = rng.random_range(0.5..2.0);
        }
    }
    EffectiveChannel::from_parts(b, a, &beta)
}

pub fn random_cmat<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn random_precoders(seed: u64, sats: usize, users: usize, n: usize, s: usize, power: f64) -> JointPrecoderSet {
    let mut rng = seeded_rng(seed);
    let mut w = JointPrecoderSet::zeros(sats, users, n, s);
    for l in 0..sats {
        let blocks: Vec<CMat> = (0..users).map(|_| random_cmat(&mut rng, n, s)).collect();
        let total: f64 = blocks.iter().map(|b| b.norm_squared()).sum();
        for (k, blk) in blocks.into_iter().enumerate() {
            *w.block_mut(l, k) = blk.scale((power / total).sqrt());
        }
    }
    w
}

/// `log2 det(M)` through an LU determinant, independent of the Cholesky path.
pub fn log2det_lu(m: &CMat) -> f64 {
    m.clone().determinant().norm().log2()
}

/// Approximate SE from per-link received powers, written out term by term.
///
/// `power(l, k, i)` is the power user `k` collects from satellite `l`'s
/// transmission intended for user `i`; the result is
/// `Σ_k log2 det(Y_k + X_k) − log2 det(Y_k)` with rank-one terms along `b_{l,k}`.
pub fn approx_se_from_powers<F>(eff: &EffectiveChannel, noise: f64, power: F) -> f64
where
    F: Fn(usize, usize, usize) -> f64,
{
    let (sats, users, m) = (eff.sats(), eff.users(), eff.user_antennas());
    let mut total = 0.0;
    for k in 0..users {
        let mut signal = CMat::zeros(m, m);
        let mut rest = CMat::identity(m, m).scale(noise);
        for l in 0..sats {
            let b = eff.b(l, k);
            let outer = b * b.adjoint();
            for i in 0..users {
                let p = eff.sqrt_beta(l, k).powi(2) * power(l, k, i);
                if i == k {
                    signal += outer.scale(p);
                } else {
                    rest += outer.scale(p);
                }
            }
        }
        total += log2det_lu(&(&rest + &signal)) - log2det_lu(&rest);
    }
    total
}

/// Central finite-difference gradient of a real function of a complex vector,
/// returned as `∂f/∂Re + j ∂f/∂Im`.
pub fn fd_gradient<F>(x: &CMat, h: f64, f: F) -> CMat
where
    F: Fn(&CMat) -> f64,
{
    let mut g = CMat::zeros(x.nrows(), x.ncols());
    for idx in 0..x.len() {
        for (part, unit) in [(0, C64::new(h, 0.0)), (1, C64::new(0.0, h))] {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[idx] += unit;
            xm[idx] -= unit;
            let d = (f(&xp) - f(&xm)) / (2.0 * h);
            if part == 0 {
                g[idx].re = d;
            } else {
                g[idx].im = d;
            }
        }
    }
    g
}
