use landau_core::coefficients::{CoefficientTable, Landau, QuadratureScheme};
use landau_core::dynamics::MAX_DIM;
use landau_core::engine::{run_trajectory, EngineConfig, EventKind, InteractionEvent, Mode, RunMeta};
use landau_core::ensemble::InitialLaw;
use landau_core::potential::PotentialSpec;
use landau_core::rng::{stream, tagged_stream};
use landau_core::sde::em_step;
use landau_core::stats::{
    alpha_star, beta_star, compare_samples, fluctuation_diagnostics, increment_exponent,
    interaction_recollision_stats, ks_statistic, ks_two_sample, ks_two_sample_exact,
    martingale_residual, wasserstein1, wilson, FluctuationParams, FluctuationReport,
    IncrementMoments, RecollisionAccumulator, Sample, SampledPath, TestFunctionBundle, GAMMA_R,
};
use landau_core::testfn::TestFunction;
use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `max_x |F_a(x) - F_b(x)|` by counting at every pooled point.
fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&y| y <= x).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
        .fold(0.0, f64::max)
}

/// Permutation p-value over all ways to split the pooled sample.
fn brute_exact_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let d_obs = brute_ks(a, b);
    let splits: Vec<(Vec<f64>, Vec<f64>)> = (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == a.len())
        .map(|m| {
            let pick = |want: u32| {
                (0..n).filter(|k| (m >> k & 1) == want).map(|k| pooled[k]).collect()
            };
            (pick(1), pick(0))
        })
        .collect();
    let hits = splits.iter().filter(|(x, y)| brute_ks(x, y) >= d_obs - 1e-12).count();
    hits as f64 / splits.len() as f64
}

#[test]
fn exact_ks_small_samples() {
    // separated samples: only the two extreme splits reach D = 1
    let r = ks_two_sample_exact(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
    assert_eq!(r.statistic, 1.0);
    assert!((r.p_value - 1.0 / 3.0).abs() < 1e-15);
    let r = ks_two_sample_exact(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert!((r.p_value - 0.1).abs() < 1e-15);
    // interleaved: every split has D ≥ 1/2
    let r = ks_two_sample_exact(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
    assert_eq!(r.statistic, 0.5);
    assert_eq!(r.p_value, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (n, m) in [(2, 2), (2, 3), (3, 3), (3, 2)] {
        for _ in 0..20 {
            let a: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
            let r = ks_two_sample_exact(&a, &b).unwrap();
            assert!((r.p_value - brute_exact_p(&a, &b)).abs() < 1e-15);
        }
    }
    assert!(ks_two_sample_exact(&[], &[1.0]).is_err());
}

#[test]
fn ks_null_calibration() {
    let mut passes = 0;
    let mut p_sum = 0.0;
    for rep in 0..100u64 {
        let mut ra = stream(100 + rep, 0);
        let mut rb = stream(100 + rep, 1);
        let a: Vec<f64> = (0..10_000).map(|_| ra.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..10_000).map(|_| rb.sample(StandardNormal)).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        passes += (r.p_value > 0.01) as usize;
        p_sum += r.p_value;
    }
    assert!(passes >= 98, "{passes}/100");
    // uniform p has mean 1/2 and sd 0.029 over 100 draws
    assert!((p_sum / 100.0 - 0.5).abs() < 0.12, "{}", p_sum / 100.0);
}

#[test]
fn ks_detects_a_shift() {
    let mut rng = stream(1, 0);
    let a: Vec<f64> = (0..5_000).map(|_| rng.sample(StandardNormal)).collect();
    let b: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
    assert!(ks_two_sample(&a, &b).unwrap().p_value < 1e-6);
    let rows = compare_samples(&[vec![0.0, 1.0], vec![1.0, 2.0]], &[vec![0.0, 1.0], vec![1.0, 2.0]]).unwrap();
    let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["v1", "v2", "|v|"]);
    assert!(rows.iter().all(|r| r.ks.statistic == 0.0 && r.w1 == 0.0));
}

#[test]
fn printed_exponents() {
    assert!((alpha_star(4, 0.3) - 0.3 - 1.0 / 24.0).abs() < 1e-15);
    assert!((beta_star(4, 0.3) + 0.3 - 7.0 / 12.0).abs() < 1e-15);
    assert!((GAMMA_R - 5.0 / 18.0).abs() < 1e-15);
}

#[test]
fn wilson_interval_examples() {
    let (lo, hi) = wilson(0, 10, 1.96);
    assert_eq!(lo, 0.0);
    assert!((hi - 0.2775).abs() < 1e-3, "{hi}");
    let (lo, hi) = wilson(50, 100, 1.96);
    assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
}

fn table(d: usize) -> CoefficientTable {
    let l = Landau::new(&PotentialSpec::with_dim(d), &QuadratureScheme::default()).unwrap();
    CoefficientTable::build(&l, 64, 8.0).unwrap()
}

#[test]
fn sde_paths_are_martingales() {
    let d = 3;
    let t = table(d);
    let law = InitialLaw::stationary(d);
    let dtau = 0.005;
    let paths: Vec<SampledPath> = (0..4000u64)
        .map(|i| {
            let mut rng = tagged_stream(21, 2, i);
            let mut v = law.sample_velocity(&mut rng).unwrap();
            let mut p = SampledPath {
                times: vec![0.0],
                v: vec![v.clone()],
            };
            for k in 1..=200 {
                v = em_step(&v, dtau, &t, &mut rng);
                p.times.push(k as f64 * dtau);
                p.v.push(v.clone());
            }
            p
        })
        .collect();
    for g in [
        vec![],
        vec![(TestFunction::GaussianWindow { center: vec![0.5, 0.0, 0.0], width: 1.0 }, 0.0)],
    ] {
        let bundle = TestFunctionBundle {
            f: TestFunction::Coordinate { i: 0 },
            g,
            tau_n: 0.25,
            tau_next: 1.0,
        };
        let e = martingale_residual(&paths, &bundle, &t, 1.0).unwrap();
        assert!(e.mean.abs() < 3.0 * e.se, "{e:?}");
    }
    let outside = TestFunctionBundle {
        f: TestFunction::Coordinate { i: 0 },
        g: vec![],
        tau_n: 0.5,
        tau_next: 2.0,
    };
    assert!(martingale_residual(&paths, &outside, &t, 1.0).is_err());
}

fn free_records(n: usize, diagnostics: bool) -> Vec<landau_core::TrajectoryRecord> {
    let mut c = EngineConfig::new(PotentialSpec::new(1.0, 0.0, 4, 3).unwrap(), 8.0, Mode::FullTorus);
    c.horizon = 8.0;
    c.diagnostics = diagnostics;
    (0..n as u64)
        .map(|i| run_trajectory(&c, RunMeta::default(), tagged_stream(3, 1, i)).unwrap())
        .collect()
}

#[test]
fn free_gas_residual_is_exactly_zero() {
    let records = free_records(5, false);
    let bundle = TestFunctionBundle {
        f: TestFunction::Coordinate { i: 0 },
        g: vec![(TestFunction::GaussianWindow { center: vec![0.0; 3], width: 1.0 }, 0.2)],
        tau_n: 0.25,
        tau_next: 1.0,
    };
    let e = martingale_residual(&records, &bundle, &CoefficientTable::zero(3), 8.0).unwrap();
    assert_eq!(e.mean, 0.0);
    assert_eq!(e.se, 0.0);
}

#[test]
fn free_gas_fluctuations_vanish() {
    let records = free_records(4, true);
    let r = fluctuation_diagnostics(&records, FluctuationParams::starred(3, 0.3)).unwrap();
    assert!(r.pointwise_ratio.values.iter().all(|x| *x == 0.0));
    assert!(r.window_ratio.values.iter().all(|x| *x == 0.0));
    assert_eq!(FluctuationReport::violation_fraction(&r.pointwise_ratio).0, 0.0);
    assert_eq!(FluctuationReport::violation_fraction(&r.window_ratio).0, 0.0);
    // records without a trace are refused
    assert!(fluctuation_diagnostics(&free_records(1, false), FluctuationParams::starred(3, 0.3)).is_err());
}

#[test]
fn fluctuation_report_merges() {
    let mut c = EngineConfig::new(PotentialSpec::with_dim(3), 8.0, Mode::FullTorus);
    c.horizon = 4.0;
    c.diagnostics = true;
    let records: Vec<_> = (0..4u64)
        .map(|i| run_trajectory(&c, RunMeta::default(), tagged_stream(5, 1, i)).unwrap())
        .collect();
    let p = FluctuationParams::starred(3, 0.3);
    let all = fluctuation_diagnostics(&records, p).unwrap();
    let mut merged = fluctuation_diagnostics(&records[2..], p).unwrap();
    merged.merge(&fluctuation_diagnostics(&records[..2], p).unwrap());
    for (a, b) in [
        (&all.pointwise_ratio, &merged.pointwise_ratio),
        (&all.interacting_ratio, &merged.interacting_ratio),
        (&all.window_ratio, &merged.window_ratio),
    ] {
        assert_eq!(a.estimate(), b.estimate());
        assert_eq!(a.median(), b.median());
    }
    assert!(all.pointwise_ratio.values.iter().any(|x| *x > 0.0));
}

/// Paths `V_t = σ B_t / √N` sampled every `h`.
fn brownian_paths(n: usize, steps: usize, h: f64, density: f64, seed: u64) -> Vec<SampledPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut v = vec![0.0, 0.0];
            let mut p = SampledPath { times: vec![0.0], v: vec![v.clone()] };
            for k in 1..=steps {
                for x in v.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *x += z * (h / density).sqrt();
                }
                p.times.push(k as f64 * h);
                p.v.push(v.clone());
            }
            p
        })
        .collect()
}

#[test]
fn increment_exponents_of_synthetic_paths() {
    let density = 64.0;
    let gaps = vec![1.0, 2.0, 4.0, 8.0, 16.0];
    // diffusive paths: E|ΔV|² = 2 gap / N, slope one
    let mut m2 = IncrementMoments::new(2, gaps.clone());
    for p in brownian_paths(200, 64, 1.0, density, 1) {
        m2.add(&p).unwrap();
    }
    let fit = increment_exponent(&m2, density, 1.0, 16.0, 100).unwrap();
    assert!((fit.slope - 1.0).abs() < 0.05, "{fit:?}");
    assert!((fit.intercept - 2.0f64.ln()).abs() < 0.1, "{fit:?}");
    // ballistic paths: slope two
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut m_ball = IncrementMoments::new(2, gaps.clone());
    for _ in 0..100 {
        let a: f64 = rng.gen_range(0.5..1.5);
        let times: Vec<f64> = (0..=64).map(|k| k as f64).collect();
        let v = times.iter().map(|t| vec![a * t / density, 0.0]).collect();
        m_ball.add(&SampledPath { times, v }).unwrap();
    }
    let fit = increment_exponent(&m_ball, density, 1.0, 16.0, 100).unwrap();
    assert!((fit.slope - 2.0).abs() < 1e-9, "{fit:?}");
    assert!(increment_exponent(&m_ball, density, 1.0, 16.0, 101).is_err());
    // gaps off the sample grid are refused
    let mut bad = IncrementMoments::new(2, vec![1.5]);
    assert!(bad.add(&brownian_paths(1, 8, 1.0, density, 3)[0]).is_err());
}

#[test]
fn increment_moments_merge_exactly() {
    let paths = brownian_paths(30, 32, 1.0, 16.0, 7);
    let mut all = IncrementMoments::new(4, vec![1.0, 4.0]);
    paths.iter().for_each(|p| all.add(p).unwrap());
    let mut a = IncrementMoments::new(4, vec![1.0, 4.0]);
    let mut b = IncrementMoments::new(4, vec![1.0, 4.0]);
    paths[..11].iter().for_each(|p| a.add(p).unwrap());
    paths[11..].iter().for_each(|p| b.add(p).unwrap());
    b.merge(&a);
    assert_eq!(all.estimates(), b.estimates());
}

fn event(entry: f64, exit: Option<f64>, rel_speed: f64, kind: EventKind) -> InteractionEvent {
    InteractionEvent {
        particle: 0,
        entry,
        exit,
        rel_speed,
        kind,
        left_censored: false,
        image: [0; MAX_DIM],
    }
}

#[test]
fn recollision_accumulator_counts_and_merges() {
    let events = vec![
        event(0.0, Some(2.0), 1.0, EventKind::FirstInteraction),
        event(1.0, Some(9.0), 2.0, EventKind::FirstInteraction),
        event(3.0, None, 0.1, EventKind::Recollision),
        event(4.0, Some(4.5), 0.2, EventKind::FirstInteraction),
    ];
    let mut acc = RecollisionAccumulator::new(16.0, 20.0, 10);
    acc.add_events(&events, 12.0);
    assert_eq!((acc.first_interactions, acc.recollisions), (3, 1));
    // durations × speed: 2, 16, 0.1; slow below 16^{-5/18} ≈ 0.463
    assert_eq!((acc.checked, acc.within_bound, acc.slow), (3, 2, 2));
    assert_eq!(acc.ratio_histogram.iter().sum::<u64>(), 3);
    let mut split = RecollisionAccumulator::new(16.0, 20.0, 10);
    split.add_events(&events[2..], 12.0);
    let mut other = RecollisionAccumulator::new(16.0, 20.0, 10);
    other.add_events(&events[..2], 12.0);
    split.merge(&other);
    assert_eq!(split, acc);
    let row = &interaction_recollision_stats(&[acc])[0];
    assert!((row.frequency - 1.0 / 3.0).abs() < 1e-15);
    assert!((row.within_fraction - 2.0 / 3.0).abs() < 1e-15);
    assert!(row.wilson.0 <= row.frequency && row.frequency <= row.wilson.1);
}

proptest! {
    #[test]
    fn ks_statistic_matches_counting(
        a in prop::collection::vec(-3i32..3, 1..12),
        b in prop::collection::vec(-3i32..3, 1..12),
    ) {
        // small integer values force ties
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        prop_assert!((ks_statistic(&a, &b) - brute_ks(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_of_a_shift(
        a in prop::collection::vec(-5.0f64..5.0, 1..50),
        shift in -3.0f64..3.0,
    ) {
        let b: Vec<f64> = a.iter().map(|x| x + shift).collect();
        prop_assert!((wasserstein1(&a, &b) - shift.abs()).abs() < 1e-9);
    }

    #[test]
    fn sample_merge_is_order_independent(
        values in prop::collection::vec(-1e3f64..1e3, 2..60),
        cut in 0usize..60,
    ) {
        let cut = cut.min(values.len());
        let whole = Sample { values: values.clone() };
        let mut left = Sample { values: values[cut..].to_vec() };
        left.merge(&Sample { values: values[..cut].to_vec() });
        prop_assert_eq!(whole.estimate(), left.estimate());
        prop_assert_eq!(whole.median(), left.median());
    }
}
