use landau_core::coefficients::{CoefficientTable, Landau, QuadratureScheme};
use landau_core::ensemble::InitialLaw;
use landau_core::linalg::norm;
use landau_core::potential::PotentialSpec;
use landau_core::rng::stream;
use landau_core::sde::{em_step, em_step_with, run_path, run_sde_ensemble, SdeConfig};
use landau_core::stats::ks_gaussian;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn landau(d: usize) -> Landau {
    Landau::new(&PotentialSpec::with_dim(d), &QuadratureScheme::default()).unwrap()
}

fn table(d: usize) -> CoefficientTable {
    CoefficientTable::build(&landau(d), 64, 8.0).unwrap()
}

fn config(d: usize, dtau: f64, tau_max: f64, paths: usize, grid: Vec<f64>) -> SdeConfig {
    SdeConfig {
        dtau,
        tau_max,
        paths,
        law: InitialLaw::stationary(d),
        seed: 11,
        tau_grid: grid,
    }
}

#[test]
fn zero_coefficients_give_constant_paths() {
    let c = config(3, 0.05, 1.0, 50, vec![0.0, 0.5, 1.0]);
    let e = run_sde_ensemble(&c, &CoefficientTable::zero(3)).unwrap();
    assert_eq!(e.samples[0], e.samples[1]);
    assert_eq!(e.samples[0], e.samples[2]);
}

#[test]
fn one_step_mean_and_covariance() {
    let d = 3;
    let t = table(d);
    let v = vec![1.2, -0.4, 0.3];
    let dtau = 0.01;
    let c = t.coefficients(&v);
    let n = 100_000;
    let mut rng = stream(1, 0);
    let mut sum = vec![0.0; d];
    let mut cross = vec![vec![0.0; d]; d];
    for _ in 0..n {
        let w = em_step(&v, dtau, &t, &mut rng);
        let inc: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - b).collect();
        for i in 0..d {
            sum[i] += inc[i];
            for j in 0..d {
                cross[i][j] += inc[i] * inc[j];
            }
        }
    }
    let nf = n as f64;
    for i in 0..d {
        let mean = sum[i] / nf;
        let var_i = 2.0 * c.d[(i, i)] * dtau;
        let se = (var_i / nf).sqrt();
        assert!((mean - 2.0 * c.lambda[i] * dtau).abs() < 5.0 * se, "mean[{i}]");
        for j in 0..d {
            let cov = cross[i][j] / nf - mean * sum[j] / nf;
            let target = 2.0 * c.d[(i, j)] * dtau;
            let var_j = 2.0 * c.d[(j, j)] * dtau;
            let se = ((var_i * var_j + target * target) / nf).sqrt();
            assert!((cov - target).abs() < 5.0 * se, "cov[{i}][{j}]: {cov} vs {target}");
        }
    }
}

#[test]
fn gaussian_marginals_are_preserved() {
    let d = 4;
    let c = config(d, 0.01, 1.0, 10_000, vec![0.25, 0.5, 1.0]);
    let e = run_sde_ensemble(&c, &table(d)).unwrap();
    for (k, tau) in e.tau.iter().enumerate() {
        for i in 0..d {
            let ks = ks_gaussian(&e.coordinate(k, i)).unwrap();
            assert!(ks.p_value > 0.01, "τ={tau} coordinate {i}: {ks:?}");
        }
        // E|V|² = d within 5 standard errors
        let sq: Vec<f64> = e.samples[k].iter().map(|v| norm(v).powi(2)).collect();
        let m = sq.iter().sum::<f64>() / sq.len() as f64;
        let var = sq.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (sq.len() - 1) as f64;
        assert!((m - d as f64).abs() < 5.0 * (var / sq.len() as f64).sqrt(), "τ={tau}: {m}");
    }
}

/// `E|V_1|²` from `V_0 = 3e₁` at steps `h`, `h/2`, `h/4`, driven by the same
/// Brownian path.
fn coupled_energies(t: &CoefficientTable, h: f64, paths: usize) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let fine_steps = (4.0 / h).round() as usize;
    (0..paths)
        .map(|_| {
            let xi: Vec<Vec<f64>> = (0..fine_steps)
                .map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            let mut out = [0.0; 3];
            for (level, block) in [4usize, 2, 1].iter().enumerate() {
                let dtau = h / 4.0 * *block as f64;
                let mut v = vec![3.0, 0.0, 0.0];
                for chunk in xi.chunks(*block) {
                    let mut z = vec![0.0; 3];
                    for x in chunk {
                        z.iter_mut().zip(x).for_each(|(a, b)| *a += b);
                    }
                    let scale = (*block as f64).sqrt();
                    z.iter_mut().for_each(|a| *a /= scale);
                    v = em_step_with(&v, dtau, t, &z);
                }
                out[level] = norm(&v).powi(2);
            }
            out
        })
        .collect()
}

#[test]
fn weak_error_shrinks_with_the_step() {
    let t = table(3);
    let runs = coupled_energies(&t, 0.2, 20_000);
    let n = runs.len() as f64;
    let stats = |f: &dyn Fn(&[f64; 3]) -> f64| -> (f64, f64) {
        let m = runs.iter().map(f).sum::<f64>() / n;
        let var = runs.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    };
    let (coarse, se_c) = stats(&|r| r[0] - r[1]);
    let (fine, se_f) = stats(&|r| r[1] - r[2]);
    // first-order estimate of the error at h/2 is the h → h/2 change; the
    // next halving must not exceed it
    assert!(coarse.abs() > 3.0 * se_c, "bias not resolved: {coarse} ± {se_c}");
    assert!(fine.abs() <= coarse.abs() + 3.0 * se_f, "{fine} vs {coarse}");
    let ratio = coarse / fine;
    assert!((1.0..=4.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn ensembles_are_deterministic_and_index_addressed() {
    let c = config(3, 0.05, 0.5, 64, vec![0.0, 0.5]);
    let t = table(3);
    let a = run_sde_ensemble(&c, &t).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| run_sde_ensemble(&c, &t)).unwrap();
    assert_eq!(a, b);
    let single = run_path(&c, &t, 17, &[0, 10]).unwrap();
    assert_eq!(single[0], a.samples[0][17]);
    assert_eq!(single[1], a.samples[1][17]);
    let mut other = c.clone();
    other.seed += 1;
    assert_ne!(run_sde_ensemble(&other, &t).unwrap(), a);
}

#[test]
fn table_matches_direct_evaluation() {
    let l = landau(4);
    let t = CoefficientTable::build(&l, 64, 8.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.5..3.5)).collect();
        let direct = l.radial(norm(&v));
        let interp = t.radial(norm(&v));
        for (x, y) in [(interp.a, direct.a), (interp.b, direct.b), (interp.lambda, direct.lambda)] {
            assert!((x - y).abs() <= 1e-4 * direct.a.abs().max(direct.b.abs()), "{v:?}");
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let t = CoefficientTable::zero(3);
    for bad in [
        config(3, 0.0, 1.0, 10, vec![]),
        config(3, 0.1, 0.05, 10, vec![]),
        config(3, 0.1, 1.0, 0, vec![]),
        config(3, 0.1, 1.0, 10, vec![2.0]),
    ] {
        assert!(run_sde_ensemble(&bad, &t).is_err());
    }
}
