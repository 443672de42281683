use std::f64::consts::PI;

use landau_core::coefficients::{
    fourier_table, full_tensor_coefficients, generator_apply, hyperplane_marginal,
    landau_d_fourier, truncated_coeffs, Landau, OracleResolution, QuadratureScheme,
};
use landau_core::linalg::{norm, sqrt_spd, symmetric_eigen, Matrix};
use landau_core::potential::PotentialSpec;
use landau_core::testfn::TestFunction;
use landau_core::TransportCoefficients;
use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `D(0)` for the default bump at `d = 4`, from the full-tensor oracle at
/// doubled resolution.
const D0_DIM4: f64 = 0.155_666_010_49;

fn solver(d: usize) -> Landau {
    Landau::new(&PotentialSpec::with_dim(d), &QuadratureScheme::default()).unwrap()
}

fn e1(d: usize, s: f64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[0] = s;
    v
}

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).frobenius() / b.frobenius()
}

/// Gram–Schmidt on a Gaussian matrix.
fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < d {
        let mut c: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for q in &cols {
            let p: f64 = q.iter().zip(&c).map(|(a, b)| a * b).sum();
            c.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
        }
        let n = norm(&c);
        cols.push(c.iter().map(|x| x / n).collect());
    }
    let mut q = Matrix::zeros(d);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..d {
            q[(i, j)] = c[i];
        }
    }
    q
}

#[test]
fn diffusion_at_rest_is_the_frozen_multiple_of_identity() {
    let d = solver(4).diffusion(&[0.0; 4]);
    for i in 0..4 {
        for j in 0..4 {
            let target = if i == j { D0_DIM4 } else { 0.0 };
            assert!((d[(i, j)] - target).abs() < 1e-9, "D[{i}][{j}] = {}", d[(i, j)]);
        }
    }
}

#[test]
fn full_tensor_oracle_is_isotropic_at_rest() {
    let spec = PotentialSpec::with_dim(4);
    let (d, lam) = full_tensor_coefficients(&[0.0; 4], &spec, &OracleResolution::default());
    let tr = d.trace();
    for i in 0..4 {
        assert!((d[(i, i)] - D0_DIM4).abs() < 1e-8 * D0_DIM4);
        for j in 0..4 {
            if i != j {
                assert!(d[(i, j)].abs() <= 1e-10 * tr);
            }
        }
        assert!(lam[i].abs() < 1e-12);
    }
}

#[test]
fn reduction_matches_full_tensor_in_three_dimensions() {
    let spec = PotentialSpec::with_dim(3);
    let v = e1(3, 1.0);
    let (d_full, lam_full) = full_tensor_coefficients(&v, &spec, &OracleResolution::default());
    let l = solver(3);
    assert!(rel(&l.diffusion(&v), &d_full) < 1e-6);
    let lam = l.drift(&v);
    let err: f64 = lam.iter().zip(&lam_full).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(err < 1e-6 * norm(&lam_full), "{lam:?} vs {lam_full:?}");
}

#[test]
fn diffusion_is_rotation_equivariant() {
    let l = solver(4);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let q = random_orthogonal(4, &mut rng);
        let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let rotated = l.diffusion(&q.mul_vec(&v));
        let conj = q.matmul(&l.diffusion(&v)).matmul(&q.transpose());
        assert!(rel(&rotated, &conj) < 1e-8);
    }
}

#[test]
fn diffusion_is_positive_definite() {
    let l = solver(4);
    for s in [0.0, 1.0, 2.0, 4.0] {
        let d = l.diffusion(&e1(4, s));
        assert!(d.max_asymmetry() <= 1e-12);
        let (eig, _) = symmetric_eigen(&d);
        assert!(eig[0] > 0.0, "|V|={s}: {eig:?}");
    }
}

#[test]
fn drift_is_minus_diffusion_times_velocity() {
    let l = solver(4);
    assert!(l.drift(&[0.0; 4]).iter().all(|x| *x == 0.0));
    let h = 0.5f64.sqrt();
    for v in [e1(4, 1.0), e1(4, 2.0), vec![h, h, 0.0, 0.0]] {
        let lam = l.drift(&v);
        let dv = l.diffusion(&v).mul_vec(&v);
        let err = norm(&lam.iter().zip(&dv).map(|(a, b)| a + b).collect::<Vec<_>>());
        assert!(err <= 1e-6 * norm(&dv), "{v:?}: {err:e}");
    }
}

#[test]
fn refinement_changes_diffusion_little() {
    let l = solver(4);
    for s in [0.0, 0.5, 1.0, 2.0, 4.0, 6.0] {
        let c = l.coefficients(&e1(4, s)).unwrap();
        let err = c.meta.unwrap().estimated_error;
        assert!(err <= 1e-4, "|V|={s}: {err:e}");
        assert!(rel(&c.sigma.matmul(&c.sigma), &c.d) < 1e-12);
    }
}

#[test]
fn drift_is_bounded_and_lipschitz() {
    // empirical Lipschitz constant over random pairs in |V| ≤ 6, for the
    // default and the refined scheme
    let lipschitz = |scheme: QuadratureScheme| -> (f64, f64) {
        let l = Landau::new(&PotentialSpec::with_dim(4), &scheme).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            loop {
                let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-6.0..6.0)).collect();
                if norm(&v) <= 6.0 {
                    return v;
                }
            }
        };
        let (mut sup, mut c) = (0.0f64, 0.0f64);
        for _ in 0..1000 {
            let (a, b) = (point(&mut rng), point(&mut rng));
            let (la, lb) = (l.drift(&a), l.drift(&b));
            let diff: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| x - y).collect();
            let dist: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            sup = sup.max(norm(&la)).max(norm(&lb));
            c = c.max(norm(&diff) / norm(&dist));
        }
        (sup, c)
    };
    let (sup, c) = lipschitz(QuadratureScheme::default());
    let (sup_fine, c_fine) = lipschitz(QuadratureScheme::default().refined());
    assert!(sup.is_finite() && c.is_finite() && c > 0.0);
    assert!((sup - sup_fine).abs() < 1e-4 * sup);
    assert!((c - c_fine).abs() < 1e-4 * c, "{c} vs {c_fine}");
}

/// `∫ η_ε(k·v) γ(v+V) dv` on a planar Simpson grid, with `η_ε` a Gaussian
/// of width `ε`.
fn mollified_marginal(k: &[f64], v: &[f64], eps: f64) -> f64 {
    let n = 1200;
    let (lo, hi) = (-9.0, 9.0);
    let h = (hi - lo) / n as f64;
    let w = |i: usize| if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
    let mut total = 0.0;
    for i in 0..=n {
        let x = lo + h * i as f64 - v[0];
        for j in 0..=n {
            let y = lo + h * j as f64 - v[1];
            let u = k[0] * x + k[1] * y;
            let g = (-0.5 * ((x + v[0]).powi(2) + (y + v[1]).powi(2))).exp() / (2.0 * PI);
            let eta = (-0.5 * (u / eps).powi(2)).exp() / (eps * (2.0 * PI).sqrt());
            total += w(i) * w(j) * g * eta;
        }
    }
    total * h * h / 9.0
}

#[test]
fn hyperplane_marginal_matches_mollified_delta() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let k: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.5..1.5)).collect();
        // bias is O(ε²): one Richardson step
        let coarse = mollified_marginal(&k, &v, 0.2);
        let fine = mollified_marginal(&k, &v, 0.1);
        let extrapolated = (4.0 * fine - coarse) / 3.0;
        let exact = hyperplane_marginal(&k, &v);
        assert!((extrapolated - exact).abs() < 1e-3 * exact, "{extrapolated} vs {exact}");
    }
}

#[test]
fn fourier_form_matches_direct_form() {
    let spec = PotentialSpec::with_dim(4);
    let scheme = QuadratureScheme::default();
    let table = fourier_table(&spec, &scheme).unwrap();
    let l = solver(4);
    for s in [0.0, 1.0, 2.0] {
        let v = e1(4, s);
        let f = landau_d_fourier(&v, &spec, &table, &scheme).unwrap();
        assert!(rel(&f, &l.diffusion(&v)) <= 1e-3, "|V|={s}");
        if s == 0.0 {
            for i in 0..4 {
                for j in (0..4).filter(|j| *j != i) {
                    assert!(f[(i, j)].abs() <= 1e-10 * f.trace());
                }
            }
        }
    }
}

#[test]
fn empty_window_gives_zero_coefficients() {
    let spec = PotentialSpec::with_dim(4);
    let (lam, d) = truncated_coeffs(&e1(4, 1.0), 0.0, &spec, &QuadratureScheme::default()).unwrap();
    assert!(lam.iter().all(|x| *x == 0.0));
    assert_eq!(d, Matrix::zeros(4));
    assert!(truncated_coeffs(&e1(4, 1.0), -1.0, &spec, &QuadratureScheme::default()).is_err());
}

#[test]
fn long_windows_recover_the_full_coefficients() {
    let l = solver(4);
    let v = e1(4, 1.0);
    let (lam_t, d_t) = l.truncated(&v, 1e4);
    assert!(rel(&d_t, &l.diffusion(&v)) < 1e-10);
    let lam = l.drift(&v);
    assert!((lam_t[0] - lam[0]).abs() < 1e-10 * lam[0].abs());
}

fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x.ln(), b + y.ln()));
    let (mx, my) = (mx / n, my / n);
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + (x.ln() - mx) * (y.ln() - my), b + (x.ln() - mx).powi(2))
    });
    sxy / sxx
}

#[test]
fn truncation_error_decays_at_least_at_the_stated_rates() {
    let l = solver(4);
    let v = e1(4, 1.0);
    let (mut dd, mut dl) = (Vec::new(), Vec::new());
    for t in [4.0, 8.0, 16.0, 32.0, 64.0] {
        let (lam, d) = l.truncation_deficit(&v, t);
        dd.push((t, d.frobenius()));
        dl.push((t, norm(&lam)));
    }
    assert!(loglog_slope(&dd) <= -3.0 + 0.4);
    assert!(loglog_slope(&dl) <= -2.0 + 0.4);
}

#[test]
fn generator_examples() {
    let l = solver(4);
    let v = vec![0.3, -0.7, 1.1, 0.2];
    let c = l.coefficients(&v).unwrap();
    // linear f
    let grad = vec![1.0, 2.0, -1.0, 0.5];
    let expected: f64 = 2.0 * grad.iter().zip(&c.lambda).map(|(a, b)| a * b).sum::<f64>();
    assert!((generator_apply(&c, &grad, &Matrix::zeros(4)) - expected).abs() < 1e-14);
    // |v|²
    let f = TestFunction::SquaredNorm;
    let lv: f64 = c.lambda.iter().zip(&v).map(|(a, b)| a * b).sum();
    let expected = 4.0 * lv + 2.0 * c.d.trace();
    let got = generator_apply(&c, &f.gradient(&v), &f.hessian(&v));
    assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    let zero = TransportCoefficients::zero(4);
    assert_eq!(generator_apply(&zero, &f.gradient(&v), &f.hessian(&v)), 0.0);
}

#[test]
fn gaussian_is_stationary_in_three_dimensions() {
    let l = solver(3);
    for f in [
        TestFunction::SquaredNorm,
        TestFunction::Coordinate { i: 0 },
        TestFunction::Product { i: 0, j: 1 },
        TestFunction::QuarticNorm,
    ] {
        let avg = l.gaussian_generator_average(&f, 20);
        assert!(avg.abs() < 1e-6, "{f:?}: {avg:e}");
    }
}

#[test]
fn sqrt_examples() {
    assert_eq!(sqrt_spd(&Matrix::identity(4)).unwrap(), Matrix::identity(4));
    let r = sqrt_spd(&Matrix::diag(&[4.0, 9.0, 16.0, 25.0])).unwrap();
    for (i, s) in [2.0, 3.0, 4.0, 5.0].iter().enumerate() {
        assert!((r[(i, i)] - s).abs() < 1e-14);
    }
    // a tiny negative eigenvalue is clamped, a larger one rejected
    assert!(sqrt_spd(&Matrix::diag(&[1.0, -1e-12])).is_ok());
    assert!(sqrt_spd(&Matrix::diag(&[1.0, -1e-6])).is_err());
}

proptest! {
    #[test]
    fn sqrt_squares_back(seed in 0u64..1_000_000, d in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // B Bᵀ plus a small shift
        let mut b = Matrix::zeros(d);
        b.data.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
        let mut m = b.matmul(&b.transpose());
        m.add_scaled(&Matrix::identity(d), 0.1);
        let s = sqrt_spd(&m).unwrap();
        prop_assert!(s.max_asymmetry() <= 1e-12 * m.frobenius());
        prop_assert!(s.matmul(&s).sub(&m).frobenius() <= 1e-12 * m.frobenius());
    }
}
