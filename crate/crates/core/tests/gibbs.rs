use adlift::estimators::{point_estimates, CountMode};
use adlift::gibbs::{draw_params, posterior_shapes, run_chain, split_half_medians, GibbsConfig};
use adlift::model::{CountTable, HiddenCounts};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn campaign_two() -> CountTable {
    CountTable::from_unit_totals(2_195_456, 12_609, 918_316, 8_573, 145_216, 748)
}

fn random_table(rng: &mut ChaCha8Rng) -> (CountTable, HiddenCounts) {
    let tw1 = rng.random_range(0..200);
    let tw0 = rng.random_range(1..5_000);
    let tl1 = rng.random_range(0..200);
    let tl0 = rng.random_range(0..5_000);
    let c1 = rng.random_range(0..100);
    let c0 = rng.random_range(1..2_000);
    let t = CountTable {
        tw1,
        tw0,
        tl1,
        tl0,
        c1,
        c0,
        conv_t: tw1 + tl1,
        conv_tw: tw1,
        conv_c: c1,
        uniq_t: tw1 + tw0 + tl1 + tl0,
        uniq_tw: tw1 + tw0,
        uniq_c: c1 + c0,
    };
    let cw1 = rng.random_range(0..=c1);
    let cw0 = rng.random_range(0..=c0);
    let h = HiddenCounts {
        cw1,
        cw0,
        cl1: c1 - cw1,
        cl0: c0 - cw0,
    };
    (t, h)
}

#[test]
fn conditional_draws_match_beta_means() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    for _ in 0..10 {
        let (t, h) = random_table(&mut rng);
        let shapes = posterior_shapes(&t, &h);
        let mut sums = [0.0; 4];
        for _ in 0..n {
            let p = draw_params(&t, &h, &mut rng);
            for (s, x) in sums.iter_mut().zip([p.w, p.r_tw, p.r_cw, p.r_l]) {
                *s += x;
            }
        }
        for ((a, b), s) in shapes.iter().zip(sums) {
            let mean = a / (a + b);
            let sd = (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt();
            let z = (s / n as f64 - mean) / (sd / (n as f64).sqrt());
            assert!(z.abs() < 4.0, "z = {z} for Beta({a}, {b})");
        }
    }
}

#[test]
fn null_effect_interval_contains_zero() {
    // Equal rates everywhere: 2% in Test winners, losers and Control.
    let t = CountTable::from_unit_totals(200_000, 4_000, 100_000, 2_000, 50_000, 1_000);
    let r = run_chain(
        &t,
        &GibbsConfig {
            seed: 5,
            ..GibbsConfig::default()
        },
    )
    .unwrap();
    assert!(r.att.contains(0.0), "{:?}", r.att);
    assert!(r.atl.contains(0.0), "{:?}", r.atl);
    assert!(r.g_conf > 0.05 && r.g_conf < 0.95);
}

#[test]
fn median_tracks_point_estimate() {
    let t = campaign_two();
    let point = point_estimates(&t, CountMode::Responders).unwrap();
    let r = run_chain(
        &t,
        &GibbsConfig {
            seed: 3,
            ..GibbsConfig::default()
        },
    )
    .unwrap();
    let half_width = (r.att.p95 - r.att.p5) / 2.0;
    assert!((r.att.p50 - point.att).abs() < half_width);
    assert!((r.param_means.w - point.w).abs() < 1e-3);
}

#[test]
fn halves_of_the_chain_agree() {
    let r = run_chain(
        &campaign_two(),
        &GibbsConfig {
            seed: 8,
            ..GibbsConfig::default()
        },
    )
    .unwrap();
    let (m1, m2, iqr) = split_half_medians(&r.att_draws());
    assert!((m1 - m2).abs() < 0.25 * iqr, "{m1} vs {m2}, iqr {iqr}");
}

#[test]
fn chains_are_reproducible_and_independent() {
    let t = campaign_two();
    let one = run_chain(
        &t,
        &GibbsConfig {
            seed: 2,
            burn_in: 50,
            samples: 100,
            ..GibbsConfig::default()
        },
    )
    .unwrap();
    let again = run_chain(
        &t,
        &GibbsConfig {
            seed: 2,
            burn_in: 50,
            samples: 100,
            ..GibbsConfig::default()
        },
    )
    .unwrap();
    assert_eq!(one, again);
    let four = run_chain(
        &t,
        &GibbsConfig {
            seed: 2,
            burn_in: 50,
            samples: 100,
            chains: 4,
            ..GibbsConfig::default()
        },
    )
    .unwrap();
    assert_eq!(four.draws.len(), 400);
    assert_eq!(&four.draws[..100], &one.draws[..]);
    assert_ne!(four.draws[0].params, four.draws[100].params);
}

#[test]
fn single_draw_collapses_percentiles() {
    let r = run_chain(
        &campaign_two(),
        &GibbsConfig {
            samples: 1,
            ..GibbsConfig::default()
        },
    )
    .unwrap();
    assert_eq!(r.atl.p5, r.atl.p50);
    assert_eq!(r.atl.p50, r.atl.p95);
}

#[test]
fn full_win_rate_still_samples() {
    let t = CountTable::from_unit_totals(9_000, 180, 9_000, 180, 1_000, 10);
    let r = run_chain(&t, &GibbsConfig::default()).unwrap();
    assert!(r.param_means.w > 0.99);
    assert!(r.atl.p50 > 0.0);
}
