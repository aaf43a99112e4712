mod common;

use common::{random_channel, random_precoders};
use distsat::channel::{ula_response, EffectiveChannel};
use distsat::joint_wmmse::JointPrecoderSet;
use distsat::linalg::svd_sorted;
use distsat::power::PowerConstraintSet;
use distsat::scenario::{geometry_for_seed, slant_range, LinkGrid, LinkStatistics, ScenarioConfig};
use distsat::se_eval::{approx_se, approx_vs_exact_gap, exact_se_mc};
use proptest::prelude::*;

proptest! {
    #[test]
    fn ula_has_unit_modulus_entries(sin in -1.0f64..1.0, m in 1usize..65) {
        let b = ula_response(sin.asin(), m).unwrap();
        prop_assert!((b.norm_squared() - m as f64).abs() < 1e-9 * m as f64);
    }

    #[test]
    fn half_sine_step_is_orthogonal_for_four_antennas(sin in -1.0f64..0.5) {
        let b1 = ula_response(sin.asin(), 4).unwrap();
        let b2 = ula_response((sin + 0.5).asin(), 4).unwrap();
        prop_assert!(b1.dotc(&b2).norm() < 1e-12);
    }

    #[test]
    fn link_matrix_is_rank_one(seed in 0u64..10_000, n in 1usize..9, m in 1usize..5) {
        let eff = random_channel(seed, 2, 2, n, m);
        let h = eff.hbar(1, 0);
        let expected = (eff.sqrt_beta(1, 0).powi(2) * (m * n) as f64).sqrt();
        prop_assert!((h.norm() - expected).abs() < 1e-12 * expected);
        let sv = svd_sorted(&h).unwrap().singular_values;
        prop_assert!((sv[0] - expected).abs() < 1e-10 * expected, "{} vs {}", sv[0], expected);
        prop_assert!(sv[1..].iter().all(|&s| s < 1e-10 * expected));
    }

    #[test]
    fn aggregate_has_linked_blocks(seed in 0u64..10_000) {
        let eff = random_channel(seed, 3, 2, 4, 3);
        let agg = eff.aggregate(1);
        prop_assert_eq!(agg.ncols(), 12);
        for l in 0..3 {
            prop_assert_eq!(agg.columns(l * 4, 4).into_owned(), eff.hbar(l, 1));
        }
    }

    #[test]
    fn slant_range_is_bounded_and_monotone(e1 in 1.0f64..90.0, e2 in 1.0f64..90.0) {
        let h = 560e3;
        let (d1, d2) = (slant_range(e1.to_radians(), h).unwrap(), slant_range(e2.to_radians(), h).unwrap());
        prop_assert!(d1 >= h - 1e-6 && d2 >= h - 1e-6);
        if e1 < e2 {
            prop_assert!(d1 >= d2);
        }
    }

    #[test]
    fn sampled_geometry_respects_drift_and_elevation(seed in 0u64..500, users in 1usize..5) {
        let config = ScenarioConfig { num_users: users, ..Default::default() };
        let g = geometry_for_seed(&config, seed).unwrap();
        for l in 0..config.num_sats {
            for k in 1..users {
                prop_assert!((g.theta[(l, k)] - g.theta[(l, 0)]).to_degrees().abs() <= 1.0 + 1e-9);
                prop_assert!((g.phi[(l, k)] - g.phi[(l, 0)]).to_degrees().abs() <= 1.0 + 1e-9);
            }
        }
        prop_assert!(g.elevation.iter().all(|e| (20.0 - 1e-9..=90.0 + 1e-9).contains(&e.to_degrees())));
    }

    #[test]
    fn per_antenna_residuals_sum_to_total(seed in 0u64..10_000) {
        let w = random_precoders(seed, 2, 2, 4, 2, 3.0);
        let per_antenna = PowerConstraintSet::per_antenna(4, &[vec![0.5; 4], vec![0.5; 4]]).unwrap();
        let total = PowerConstraintSet::per_sat_total(4, &[2.0, 2.0]).unwrap();
        for l in 0..2 {
            let rows: f64 = per_antenna.residuals(l, w.sat_blocks(l)).unwrap().iter().sum();
            let whole = total.residuals(l, w.sat_blocks(l)).unwrap()[0];
            prop_assert!((rows - whole).abs() < 1e-12 * whole.max(1.0));
            for row in 0..4 {
                let direct: f64 = w.sat_blocks(l).iter().map(|b| b.row(row).norm_squared()).sum();
                prop_assert!((per_antenna.residuals(l, w.sat_blocks(l)).unwrap()[row] - (direct - 0.5)).abs() < 1e-12);
            }
        }
    }
}

fn single_link_stats(eff: &EffectiveChannel, kappa: f64, noise: f64) -> LinkStatistics {
    let grid = |v| LinkGrid::filled(eff.sats(), eff.users(), v);
    let mut beta = grid(0.0);
    for l in 0..eff.sats() {
        for k in 0..eff.users() {
            beta[(l, k)] = eff.sqrt_beta(l, k).powi(2);
        }
    }
    LinkStatistics {
        theta: grid(0.0),
        phi: grid(0.0),
        elevation: grid(std::f64::consts::FRAC_PI_2),
        distance_m: grid(1.0),
        beta,
        kappa: grid(kappa),
        noise_power_w: noise,
    }
}

#[test]
fn approx_equals_exact_for_pure_los_single_link() {
    let eff = random_channel(5, 1, 1, 6, 3);
    let stats = single_link_stats(&eff, f64::INFINITY, 0.5);
    let w = random_precoders(6, 1, 1, 6, 2, 2.0);
    let exact = exact_se_mc(&w, &stats, &eff, 200, 1).unwrap();
    let approx = approx_se(&w, &eff, 0.5).unwrap().sum_se;
    assert!((exact.sum_se - approx).abs() <= 1e-10 * approx);
}

#[test]
fn zero_precoders_have_no_gap() {
    let config = ScenarioConfig::default();
    let stats = geometry_for_seed(&config, 0).unwrap();
    let eff = EffectiveChannel::new(&stats, 4, 64).unwrap();
    let gap = approx_vs_exact_gap(&JointPrecoderSet::zeros(4, 2, 64, 2), &stats, &eff, 50, 1).unwrap();
    assert_eq!((gap.approx, gap.exact, gap.gap), (0.0, 0.0, 0.0));
}
