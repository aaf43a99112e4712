mod common;

use common::random_channel;
use distsat::baselines::{mmse_baseline, random_association, tdma_mrt_baseline, zf_baseline};
use distsat::channel::EffectiveChannel;
use distsat::joint_wmmse::{init_precoders, solve, JointPrecoderSet, SolveParams};
use distsat::linalg::CVec;
use distsat::power::PowerConstraintSet;
use distsat::scenario::{db_to_linear, derive_seed, geometry_for_seed, seeded_rng, ScenarioConfig};
use distsat::se_eval::{approx_se, exact_se_mc};

const NOISE: f64 = 0.5;

#[test]
fn mmse_is_the_wmmse_start() {
    let eff = random_channel(1, 4, 2, 8, 4);
    let cons = PowerConstraintSet::per_sat_total(8, &[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(mmse_baseline(&eff, &cons, 2, NOISE).unwrap(), init_precoders(&eff, &cons, 2, NOISE).unwrap());
}

#[test]
fn mmse_exhausts_power_and_is_dominated_by_wmmse() {
    for seed in 0..10 {
        let eff = random_channel(10 + seed, 3, 2, 8, 4);
        let caps = [5.0, 10.0, 20.0];
        let cons = PowerConstraintSet::per_sat_total(8, &caps).unwrap();
        let w = mmse_baseline(&eff, &cons, 2, NOISE).unwrap();
        for (l, cap) in caps.iter().enumerate() {
            assert!((w.sat_power(l) - cap).abs() < 1e-10 * cap);
        }
        let (opt, _) = solve(&eff, &cons, NOISE, 2, &SolveParams::default()).unwrap();
        assert!(approx_se(&w, &eff, NOISE).unwrap().sum_se <= approx_se(&opt, &eff, NOISE).unwrap().sum_se + 1e-9);
    }
}

#[test]
fn single_user_zf_is_matched() {
    let eff = random_channel(20, 2, 1, 6, 3);
    let cons = PowerConstraintSet::per_sat_total(6, &[1.0; 2]).unwrap();
    let (w, ridge) = zf_baseline(&eff, &cons, 2).unwrap();
    assert!(!ridge);
    for l in 0..2 {
        let a = eff.a(l, 0).map(|z| z.conj());
        let col = w.block(l, 0).column(0).into_owned();
        // Every column is a multiple of a*.
        let coeff = a.dotc(&col) / a.norm_squared();
        assert!((col - &a * coeff).norm() < 1e-10 * w.block(l, 0).norm());
        assert!((w.sat_power(l) - 1.0).abs() < 1e-10);
    }
}

#[test]
fn zf_is_feasible_and_nulls_at_reference_defaults() {
    let config = ScenarioConfig::default();
    let stats = geometry_for_seed(&config, 3).unwrap();
    let eff = EffectiveChannel::new(&stats, config.user_antennas, config.sat_antennas).unwrap();
    let cons = PowerConstraintSet::from_config(&config, db_to_linear(10.0)).unwrap();
    let (w, _) = zf_baseline(&eff, &cons, config.streams).unwrap();
    let mut leakage = 0.0;
    let mut signal = 0.0;
    for l in 0..eff.sats() {
        assert!(cons.residuals(l, w.sat_blocks(l)).unwrap().iter().all(|&g| g <= 1e-9 * db_to_linear(10.0)));
        for k in 0..eff.users() {
            for i in 0..eff.users() {
                let gram = eff.hbar(l, k) * w.block(l, i);
                if i == k {
                    signal += gram.norm_squared();
                } else {
                    leakage += gram.norm_squared();
                }
            }
        }
    }
    assert!(leakage <= 1e-9 * signal, "{leakage} vs {signal}");
}

fn single_user_mrt_se(eff: &EffectiveChannel, stats: &distsat::scenario::LinkStatistics, k: usize, rho: f64, trials: usize, seed: u64) -> f64 {
    let l = (0..eff.sats()).max_by(|&x, &y| stats.beta[(x, k)].total_cmp(&stats.beta[(y, k)])).unwrap();
    let mut w = JointPrecoderSet::zeros(eff.sats(), eff.users(), eff.sat_antennas(), 1);
    let dir: CVec = eff.a(l, k).map(|z| z.conj());
    w.block_mut(l, k).set_column(0, &dir.scale((rho / dir.norm_squared()).sqrt()));
    exact_se_mc(&w, stats, eff, trials, seed).unwrap().per_user_se[k]
}

#[test]
fn tdma_divides_scheduled_se_by_user_count() {
    for users in [1usize, 2] {
        let config = ScenarioConfig { num_users: users, ..Default::default() };
        let stats = geometry_for_seed(&config, 1).unwrap();
        let eff = EffectiveChannel::new(&stats, config.user_antennas, config.sat_antennas).unwrap();
        let rho = db_to_linear(20.0);
        let report = tdma_mrt_baseline(&eff, &stats, &vec![rho; eff.sats()], 500, 77).unwrap();
        for k in 0..users {
            let alone = single_user_mrt_se(&eff, &stats, k, rho, 500, derive_seed(77, &[k as u64]));
            assert_eq!(report.per_user_se[k], alone / users as f64);
        }
    }
}

#[test]
fn tdma_is_well_below_wmmse_at_reference_defaults() {
    let config = ScenarioConfig::default();
    let stats = geometry_for_seed(&config, 0).unwrap();
    let eff = EffectiveChannel::new(&stats, config.user_antennas, config.sat_antennas).unwrap();
    let rho = db_to_linear(20.0);
    let cons = PowerConstraintSet::from_config(&config, rho).unwrap();
    let (w, _) = solve(&eff, &cons, stats.noise_power_w, config.streams, &SolveParams::from_config(&config)).unwrap();
    let joint = exact_se_mc(&w, &stats, &eff, 2000, 5).unwrap().sum_se;
    let tdma = tdma_mrt_baseline(&eff, &stats, &vec![rho; eff.sats()], 2000, 5).unwrap().sum_se;
    assert!(tdma < 0.75 * joint, "{tdma} vs {joint}");
}

#[test]
fn random_association_is_uniform() {
    // 3 streams on 4 satellites: 24 equally likely injections per user.
    let mut rng = seeded_rng(99);
    let draws = 10_000;
    let mut counts = std::collections::HashMap::new();
    for _ in 0..draws {
        let a = random_association(&mut rng, 1, 3, 4).unwrap();
        *counts.entry(a.pi[0].clone()).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 24);
    let expected = draws as f64 / 24.0;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99th percentile of χ² with 23 degrees of freedom.
    assert!(chi2 < 41.638, "χ² = {chi2}");
}
