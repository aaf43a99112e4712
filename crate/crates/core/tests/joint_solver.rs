mod common;

use common::{approx_se_from_powers, fd_gradient, random_channel, random_cmat, random_precoders};
use distsat::channel::EffectiveChannel;
use distsat::ellipsoid::feasibility_tolerance;
use distsat::joint_wmmse::{
    init_precoders, mse_matrix, mse_rate, precoder_given_mu, sat_subproblem, solve, update_combiners,
    update_weights, wmmse_state, JointPrecoderSet, SolveParams,
};
use distsat::linalg::{trace_product_re, CMat, C64};
use distsat::power::PowerConstraintSet;
use distsat::scenario::{db_to_linear, geometry_for_seed, seeded_rng, ScenarioConfig};
use distsat::se_eval::approx_se;
use rand::Rng;

const NOISE: f64 = 0.5;

fn weighted_mse(c: &[CMat], u: &[CMat], w: &JointPrecoderSet, eff: &EffectiveChannel) -> f64 {
    (0..eff.users()).map(|k| trace_product_re(&c[k], &mse_matrix(&u[k], w, eff, k, NOISE))).sum()
}

#[test]
fn approx_se_matches_term_by_term_evaluator() {
    for seed in 0..20 {
        let eff = random_channel(seed, 3, 2, 6, 3);
        let w = random_precoders(seed + 100, 3, 2, 6, 2, 4.0);
        let ours = approx_se(&w, &eff, NOISE).unwrap().sum_se;
        let oracle = approx_se_from_powers(&eff, NOISE, |l, k, i| (eff.a(l, k).transpose() * w.block(l, i)).norm_squared());
        assert!((ours - oracle).abs() < 1e-10 * oracle.max(1.0), "{ours} vs {oracle}");
    }
}

#[test]
fn approx_se_ignores_block_phases() {
    let eff = random_channel(3, 4, 2, 8, 4);
    let w = random_precoders(4, 4, 2, 8, 2, 3.0);
    let mut rotated = w.clone();
    for l in 0..4 {
        for k in 0..2 {
            let phase = C64::from_polar(1.0, 0.7 * l as f64 + 1.3 * k as f64);
            *rotated.block_mut(l, k) = w.block(l, k).map(|z| z * phase);
        }
    }
    let (a, b) = (approx_se(&w, &eff, NOISE).unwrap().sum_se, approx_se(&rotated, &eff, NOISE).unwrap().sum_se);
    assert!((a - b).abs() <= 1e-10 * a);
}

#[test]
fn mse_matrix_matches_expectation_expansion() {
    // E = E{(Uᴴy − x)(Uᴴy − x)ᴴ} with y = Σ_l H̃_{l,k} W_{l,k} x_l + interference + noise
    // and independent per-satellite symbol vectors x_l stacked into x.
    let eff = random_channel(7, 3, 2, 5, 3);
    let w = random_precoders(8, 3, 2, 5, 2, 2.0);
    let mut rng = seeded_rng(9);
    let k = 1;
    let u = random_cmat(&mut rng, 3, 6);
    let s = 2;
    let mut e = CMat::identity(s * 3, s * 3);
    let mut acc_j = CMat::identity(3, 3).scale(NOISE);
    for l in 0..3 {
        for i in 0..2 {
            let hw = eff.hbar(l, k) * w.block(l, i);
            acc_j += &hw * hw.adjoint();
        }
    }
    let mut f = CMat::zeros(3, s * 3);
    for l in 0..3 {
        f.columns_mut(l * s, s).copy_from(&(eff.hbar(l, k) * w.block(l, k)));
    }
    let uf = u.adjoint() * &f;
    e += u.adjoint() * &acc_j * &u - &uf - uf.adjoint();
    let ours = mse_matrix(&u, &w, &eff, k, NOISE);
    assert!((&ours - &e).norm() < 1e-10 * e.norm(), "{}", (&ours - &e).norm());
}

#[test]
fn combiner_is_trace_minimal_under_perturbation() {
    let eff = random_channel(11, 3, 2, 6, 4);
    let w = random_precoders(12, 3, 2, 6, 2, 5.0);
    let u = update_combiners(&w, &eff, NOISE).unwrap();
    let mut rng = seeded_rng(13);
    for k in 0..2 {
        let best = mse_matrix(&u[k], &w, &eff, k, NOISE).trace().re;
        for _ in 0..100 {
            let scale: f64 = rng.random_range(1e-4..1.0);
            let du = random_cmat(&mut rng, 4, 6).scale(scale);
            let other = mse_matrix(&(&u[k] + du), &w, &eff, k, NOISE).trace().re;
            assert!(best <= other + 1e-12);
        }
    }
}

#[test]
fn weights_invert_random_mse() {
    let mut rng = seeded_rng(21);
    let x = random_cmat(&mut rng, 3, 3);
    let e = &x * x.adjoint() + CMat::identity(3, 3);
    let c = update_weights(std::slice::from_ref(&e)).unwrap();
    let prod = &c[0] * &e;
    let target = CMat::identity(3, 3).scale(1.0 / std::f64::consts::LN_2);
    assert!((prod - target).norm() < 1e-10);
}

#[test]
fn precoder_closed_form_is_stationary() {
    for (seed, mu) in [(31u64, 0.0), (32, 0.3), (33, 2.5)] {
        let (sats, users, n, s) = (3, 2, 6, 2);
        let eff = random_channel(seed, sats, users, n, 3);
        let w0 = random_precoders(seed + 1, sats, users, n, s, 2.0);
        let st = wmmse_state(&w0, &eff, NOISE).unwrap();
        let cons = PowerConstraintSet::per_sat_total(n, &[1.0; 3]).unwrap();
        let l = 1;
        let (blocks, _) = precoder_given_mu(&[mu], &st.u, &st.c, &eff, &cons, l, s).unwrap();
        let mut w = w0.clone();
        for (k, b) in blocks.iter().enumerate() {
            *w.block_mut(l, k) = b.clone();
        }
        for k in 0..users {
            let lagrangian = |x: &CMat| {
                let mut trial = w.clone();
                *trial.block_mut(l, k) = x.clone();
                weighted_mse(&st.c, &st.u, &trial, &eff) + mu * trial.sat_power(l)
            };
            let g = fd_gradient(w.block(l, k), 1e-4, lagrangian);
            assert!(g.norm() <= 1e-8, "seed {seed} μ {mu}: {}", g.norm());
        }
    }
}

#[test]
fn single_user_single_sat_is_regularized_matched_filter() {
    let eff = random_channel(41, 1, 1, 6, 3);
    let w0 = random_precoders(42, 1, 1, 6, 1, 1.0);
    let st = wmmse_state(&w0, &eff, NOISE).unwrap();
    let cons = PowerConstraintSet::per_sat_total(6, &[1.0]).unwrap();
    let mu = 0.7;
    let (blocks, _) = precoder_given_mu(&[mu], &st.u, &st.c, &eff, &cons, 0, 1).unwrap();
    // T = t a* aᵀ with t = β bᴴUCUᴴb and z = √β (bᴴUC) a*, so by Sherman–Morrison
    // w = z_coef a* / (μ + t‖a‖²).
    let b = eff.b(0, 0);
    let beta = eff.sqrt_beta(0, 0).powi(2);
    let t = beta * (b.adjoint() * &st.u[0] * &st.c[0] * st.u[0].adjoint() * b)[(0, 0)].re;
    let zc = (b.adjoint() * &st.u[0] * &st.c[0])[(0, 0)] * eff.sqrt_beta(0, 0);
    let a = eff.a(0, 0);
    let expected = a.map(|z| z.conj()) * (zc / (mu + t * a.norm_squared()));
    assert!((blocks[0].column(0) - expected).norm() < 1e-10 * blocks[0].norm());
}

#[test]
fn zero_combiners_give_zero_precoders() {
    let eff = random_channel(51, 2, 2, 4, 2);
    let u = vec![CMat::zeros(2, 4); 2];
    let c = vec![CMat::identity(4, 4); 2];
    let cons = PowerConstraintSet::per_sat_total(4, &[1.0; 2]).unwrap();
    for mu in [0.0, 1.0] {
        let (blocks, _) = precoder_given_mu(&[mu], &u, &c, &eff, &cons, 0, 2).unwrap();
        assert!(blocks.iter().all(|b| b.norm() == 0.0));
    }
}

#[test]
fn per_antenna_subproblem_matches_projected_gradient() {
    let (n, s) = (4, 2);
    let eff = random_channel(61, 2, 2, n, 3);
    let w0 = random_precoders(62, 2, 2, n, s, 3.0);
    let st = wmmse_state(&w0, &eff, NOISE).unwrap();
    let caps = vec![vec![0.05; n], vec![0.05; n]];
    let cons = PowerConstraintSet::per_antenna(n, &caps).unwrap();
    let l = 0;
    let sub = sat_subproblem(l, &st.u, &st.c, &eff, s);
    let params = SolveParams::default();
    let sol = sub.solve(cons.constraints(l), &params.ellipsoid).unwrap();
    let eps = feasibility_tolerance(&params.ellipsoid, &caps[l]);
    assert!(cons.residuals(l, &sol.blocks).unwrap().iter().all(|&g| g <= eps));

    // Oracle: projected gradient on the row-norm balls, step 1/(2λmax(T)).
    let t = sub.t_matrix();
    let lmax = t.clone().symmetric_eigenvalues().max();
    let step = 0.5 / lmax;
    let z: Vec<CMat> = (0..sub.rhs().len()).map(|j| sub.z_matrix(j)).collect();
    let mut x: Vec<CMat> = z.iter().map(|zj| CMat::zeros(zj.nrows(), zj.ncols())).collect();
    for _ in 0..200_000 {
        for (xj, zj) in x.iter_mut().zip(&z) {
            let grad = (&t * &*xj - zj).scale(2.0);
            *xj -= grad.scale(step);
        }
        for row in 0..n {
            let p: f64 = x.iter().map(|xj| xj.row(row).norm_squared()).sum();
            if p > caps[l][row] {
                let f = (caps[l][row] / p).sqrt();
                x.iter_mut().for_each(|xj| xj.row_mut(row).scale_mut(f));
            }
        }
    }
    let (ours, oracle) = (sub.objective(&sol.blocks), sub.objective(&x));
    assert!((ours - oracle).abs() <= 1e-3 * oracle.abs().max(1.0), "{ours} vs {oracle}");
}

#[test]
fn init_single_user_takes_full_power() {
    let eff = random_channel(71, 3, 1, 8, 4);
    let cons = PowerConstraintSet::per_sat_total(8, &[2.0, 3.0, 5.0]).unwrap();
    let w = init_precoders(&eff, &cons, 2, NOISE).unwrap();
    for (l, cap) in [2.0, 3.0, 5.0].into_iter().enumerate() {
        assert!((w.sat_power(l) - cap).abs() < 1e-10 * cap);
    }
}

#[test]
fn solver_monotone_feasible_and_rate_identity() {
    let mut rng = seeded_rng(81);
    for seed in 0..30 {
        let sats = rng.random_range(1..=4);
        let users = rng.random_range(1..=3);
        let n = rng.random_range(2..=8);
        let m = rng.random_range(1..=4);
        let s = rng.random_range(1..=m);
        let caps: Vec<f64> = (0..sats).map(|_| rng.random_range(0.5..20.0)).collect();
        let eff = random_channel(1000 + seed, sats, users, n, m);
        let cons = PowerConstraintSet::per_sat_total(n, &caps).unwrap();
        let params = SolveParams::default();
        let (w, trace) = solve(&eff, &cons, NOISE, s, &params).unwrap();
        for pair in trace.objectives.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "seed {seed}: {pair:?}");
        }
        for l in 0..sats {
            assert!(w.sat_power(l) - caps[l] <= feasibility_tolerance(&params.ellipsoid, &caps[l..=l]));
        }
        let approx = approx_se(&w, &eff, NOISE).unwrap().sum_se;
        assert!((mse_rate(&w, &eff, NOISE).unwrap() - approx).abs() < 1e-8);
    }
}

#[test]
fn reference_defaults_converge_within_iteration_cap() {
    let config = ScenarioConfig::default();
    let stats = geometry_for_seed(&config, 0).unwrap();
    let eff = EffectiveChannel::new(&stats, config.user_antennas, config.sat_antennas).unwrap();
    let rho = db_to_linear(0.0);
    let cons = PowerConstraintSet::from_config(&config, rho).unwrap();
    let params = SolveParams::from_config(&config);
    let (_, trace) = solve(&eff, &cons, stats.noise_power_w, config.streams, &params).unwrap();
    assert!(trace.converged && trace.iterations <= 40, "{trace:?}");
    let (_, again) = solve(&eff, &cons, stats.noise_power_w, config.streams, &params).unwrap();
    assert_eq!(trace, again);
}

#[test]
fn high_snr_gain_over_initialization() {
    let gain = |seed: u64, sats: usize, users: usize| {
        let eff = random_channel(seed, sats, users, 8, 4);
        let cons = PowerConstraintSet::per_sat_total(8, &vec![100.0; sats]).unwrap();
        let init = init_precoders(&eff, &cons, 2, 0.01).unwrap();
        let (w, _) = solve(&eff, &cons, 0.01, 2, &SolveParams::default()).unwrap();
        approx_se(&w, &eff, 0.01).unwrap().sum_se - approx_se(&init, &eff, 0.01).unwrap().sum_se
    };
    for seed in 0..5 {
        // A single user only sees per-satellite power along a*, which the
        // initializer already maximizes.
        assert!(gain(90 + seed, 1, 1).abs() < 1e-8);
        assert!(gain(95 + seed, 3, 1).abs() < 1e-8);
        assert!(gain(100 + seed, 3, 2) > 1e-6, "seed {seed}");
    }
}
