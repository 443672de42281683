//! Landau drift `Λ(V)` and diffusion `D(V)` of the limiting equation.
//!
//! For a radial `Φ` the position integral factors out of the velocity
//! integral. Writing `v = |v| e` and `T = t|v|` for the length of the time
//! window in units of path length,
//!
//! ```text
//! D(V) = ∫ dv γ(v+V) |v|⁻¹ [ m∥(T) e⊗e + m⊥(T) (I - e⊗e) ]
//! Λ(V) = -∫ dv γ(v+V) |v|⁻² ℓ(T) e
//! ```
//!
//! where `m∥, m⊥, ℓ` are position integrals over `B(0,R)` of the force
//! against its integral along the backward straight line `x + r e`,
//! `r ∈ [-T, 0]`, cut at the exact chord entry. The velocity integral is done
//! in polar coordinates about `V`, so `D = a P∥ + b P⊥` and `Λ = λ V̂`.
//! For `T ≥ 2R` the chord is never cut, so finite-window corrections come
//! only from `|v| < 2R/t`.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{householder_from_e1, norm, sqrt_spd, symmetric_eigen, Matrix};
use crate::potential::{FourierTable, PotentialSpec};
use crate::quadrature::{gaussian_tensor_rule, sphere_area, GaussLegendre, SphereRule};
use crate::testfn::TestFunction;

/// Node counts for every quadrature used by the coefficient computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureScheme {
    /// Gauss–Legendre nodes per piece in the polar angle of `x` about the
    /// line direction.
    pub x_polar: usize,
    /// Nodes per piece along the line direction.
    pub x_axial: usize,
    /// Nodes on the chord; raised to `p + 2` so polynomial chords are exact.
    pub chord: usize,
    /// Nodes per unit-length panel in `|v|`.
    pub v_radial: usize,
    /// `|v|` is integrated over `[0, |V| + v_cutoff]`.
    pub v_cutoff: f64,
    /// Nodes per quarter of `[0, π]` in the angle between `v` and `V`.
    pub v_angle: usize,
    /// Wavenumber range of the Fourier table.
    pub kappa_max: f64,
    pub kappa_panels: usize,
    pub kappa_nodes: usize,
    /// Polar-angle nodes for the Fourier form.
    pub fourier_angle: usize,
    /// Relative agreement demanded between a scheme and its refinement.
    pub tolerance: f64,
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        Self {
            x_polar: 32,
            x_axial: 32,
            chord: 8,
            v_radial: 16,
            v_cutoff: 12.0,
            v_angle: 24,
            kappa_max: 80.0,
            kappa_panels: 40,
            kappa_nodes: 16,
            fourier_angle: 96,
            tolerance: 1e-4,
        }
    }
}

impl QuadratureScheme {
    /// Every node count doubled.
    pub fn refined(&self) -> Self {
        Self {
            x_polar: 2 * self.x_polar,
            x_axial: 2 * self.x_axial,
            chord: 2 * self.chord,
            v_radial: 2 * self.v_radial,
            v_cutoff: self.v_cutoff,
            v_angle: 2 * self.v_angle,
            kappa_max: self.kappa_max,
            kappa_panels: 2 * self.kappa_panels,
            kappa_nodes: self.kappa_nodes,
            fourier_angle: 2 * self.fourier_angle,
            tolerance: self.tolerance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("x_polar", self.x_polar, 4),
            ("x_axial", self.x_axial, 4),
            ("chord", self.chord, 2),
            ("v_radial", self.v_radial, 4),
            ("v_angle", self.v_angle, 4),
            ("kappa_panels", self.kappa_panels, 1),
            ("kappa_nodes", self.kappa_nodes, 2),
            ("fourier_angle", self.fourier_angle, 8),
        ];
        for (name, n, min) in counts {
            if n < min {
                return Err(invalid(
                    &format!("quadrature.{name}"),
                    format!("needs at least {min} nodes"),
                ));
            }
        }
        if !(self.v_cutoff >= 6.0) {
            return Err(invalid("quadrature.v_cutoff", "must be at least 6"));
        }
        if !(self.kappa_max > 0.0) {
            return Err(invalid("quadrature.kappa_max", "must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("quadrature.tolerance", "must be positive"));
        }
        Ok(())
    }
}

/// Position integrals for one line direction and window length `T`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhiConstants {
    /// `e·M e`, `M = ∫ ∇Φ(x) ⊗ ∫_{-T}^0 ∇Φ(x + r e) dr dx`.
    pub m_par: f64,
    /// `e⊥·M e⊥` for any unit `e⊥ ⟂ e`.
    pub m_perp: f64,
    /// `e·∫ HessΦ(x) ∫_{-T}^0 (-r) ∇Φ(x + r e) dr dx`.
    pub ell: f64,
}

impl PhiConstants {
    fn minus(&self, other: &Self) -> Self {
        Self {
            m_par: self.m_par - other.m_par,
            m_perp: self.m_perp - other.m_perp,
            ell: self.ell - other.ell,
        }
    }
}

/// `m∥, m⊥, ℓ` for the window length `window` (may be `f64::INFINITY`).
///
/// Cylindrical coordinates about `e`: `x = a e + b ω`, `b = R sin θ`,
/// `a = c τ` with `c = R cos θ` the half chord, so the integrand is smooth
/// in `(θ, τ)` except across `a + c = T` where the window starts cutting the
/// chord; both integrals are split there.
pub fn phi_constants(spec: &PotentialSpec, window: f64, scheme: &QuadratureScheme) -> PhiConstants {
    let d = spec.dim;
    let big_r = spec.radius;
    if spec.is_zero() || window <= 0.0 {
        return PhiConstants::default();
    }
    let n_chord = scheme.chord.max(spec.smoothness as usize + 2);
    let chord = GaussLegendre::new(n_chord);
    let gl_t = GaussLegendre::new(scheme.x_polar);
    let gl_a = GaussLegendre::new(scheme.x_axial);
    let shell = sphere_area(d - 2);

    let mut theta_breaks = vec![0.0];
    if window < 2.0 * big_r {
        theta_breaks.push((window / (2.0 * big_r)).acos());
    }
    theta_breaks.push(0.5 * PI);

    let f = |m: usize, s: f64| spec.profile_derivative(m, s);
    let mut acc = PhiConstants::default();
    for piece in theta_breaks.windows(2) {
        for (theta, wt) in gl_t.mapped(piece[0], piece[1]) {
            let b = big_r * theta.sin();
            let c = big_r * theta.cos();
            let mut tau_breaks = vec![-1.0];
            let tau_star = window / c - 1.0;
            if tau_star < 1.0 && tau_star > -1.0 {
                tau_breaks.push(tau_star);
            }
            tau_breaks.push(1.0);
            let jac_theta = wt * c * shell * b.powi(d as i32 - 2);
            for tp in tau_breaks.windows(2) {
                for (tau, wa) in gl_a.mapped(tp[0], tp[1]) {
                    let a = c * tau;
                    let w = jac_theta * wa * c;
                    let s = a * a + b * b;
                    let f1 = f(1, s);
                    let f2 = f(2, s);
                    let r_lo = (-(a + c)).max(-window);
                    let k_a = f(0, s) - f(0, (a + r_lo) * (a + r_lo) + b * b);
                    let (mut k_b, mut w_a, mut w_b) = (0.0, 0.0, 0.0);
                    for (r, wr) in chord.mapped(r_lo, 0.0) {
                        let g = 2.0 * f(1, (a + r) * (a + r) + b * b);
                        k_b += wr * g * b;
                        w_a += wr * (-r) * g * (a + r);
                        w_b += wr * (-r) * g * b;
                    }
                    acc.m_par += w * 2.0 * f1 * a * k_a;
                    acc.m_perp += w * 2.0 * f1 * b * k_b / (d - 1) as f64;
                    acc.ell += w * ((4.0 * f2 * a * a + 2.0 * f1) * w_a + 4.0 * f2 * a * b * w_b);
                }
            }
        }
    }
    acc
}

/// Scalar profiles: `D(V) = a P∥ + b P⊥`, `Λ(V) = λ V̂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialCoefficients {
    pub speed: f64,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
}

impl RadialCoefficients {
    pub fn diffusion(&self, v: &[f64]) -> Matrix {
        assemble_diffusion(self.a, self.b, v)
    }

    pub fn drift(&self, v: &[f64]) -> Vec<f64> {
        let s = norm(v);
        if s == 0.0 {
            return vec![0.0; v.len()];
        }
        v.iter().map(|x| self.lambda * x / s).collect()
    }
}

fn assemble_diffusion(a: f64, b: f64, v: &[f64]) -> Matrix {
    let d = v.len();
    let s = norm(v);
    let mut m = Matrix::identity(d).scale(b);
    if s > 0.0 {
        let u: Vec<f64> = v.iter().map(|x| x / s).collect();
        m.add_scaled(&Matrix::outer(&u, &u), a - b);
    }
    m
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureMeta {
    pub scheme: QuadratureScheme,
    /// Relative change of `D` under refinement of every node count.
    pub estimated_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportCoefficients {
    pub v: Vec<f64>,
    pub d: Matrix,
    pub lambda: Vec<f64>,
    pub sigma: Matrix,
    pub meta: Option<QuadratureMeta>,
}

impl TransportCoefficients {
    pub fn zero(dim: usize) -> Self {
        Self {
            v: vec![0.0; dim],
            d: Matrix::zeros(dim),
            lambda: vec![0.0; dim],
            sigma: Matrix::zeros(dim),
            meta: None,
        }
    }
}

/// Coefficient evaluator for one potential and quadrature scheme; caches the
/// untruncated position integrals.
#[derive(Debug, Clone)]
pub struct Landau {
    pub spec: PotentialSpec,
    pub scheme: QuadratureScheme,
    pub full: PhiConstants,
}

impl Landau {
    pub fn new(spec: &PotentialSpec, scheme: &QuadratureScheme) -> Result<Self> {
        spec.validate()?;
        scheme.validate()?;
        Ok(Self {
            spec: *spec,
            scheme: *scheme,
            full: phi_constants(spec, f64::INFINITY, scheme),
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// Velocity integral over `|v| ∈ [0, upper]` against per-radius
    /// constants; returns `(a, b, λ)`.
    fn velocity_integral(
        &self,
        speed: f64,
        upper: f64,
        panels: usize,
        constants: &dyn Fn(f64) -> PhiConstants,
    ) -> (f64, f64, f64) {
        let d = self.spec.dim;
        let df = d as f64;
        let gl_r = GaussLegendre::new(self.scheme.v_radial);
        let gl_p = GaussLegendre::new(self.scheme.v_angle);
        let psi_rule = gl_p.composite(0.0, PI, 4);
        let psi: Vec<(f64, f64, f64, f64)> = psi_rule
            .iter()
            .map(|&(p, w)| (p.cos(), p.sin(), w * p.sin().powi(d as i32 - 2), w))
            .collect();
        let norm_c = (2.0 * PI).powf(-0.5 * df) * sphere_area(d - 2);
        let (mut a, mut b, mut lam) = (0.0, 0.0, 0.0);
        for (rho, wr) in gl_r.composite(0.0, upper, panels) {
            let k = constants(rho);
            let radial = wr * norm_c * rho.powi(d as i32 - 1);
            let (mut sa, mut sb, mut sl) = (0.0, 0.0, 0.0);
            for &(cp, sp, wpsi, _) in &psi {
                let par = rho * cp + speed;
                let perp = rho * sp;
                let g = (-0.5 * (par * par + perp * perp)).exp() * wpsi;
                sa += g * (k.m_perp + (k.m_par - k.m_perp) * cp * cp);
                sb += g * (k.m_perp + (k.m_par - k.m_perp) * sp * sp / (df - 1.0));
                sl -= g * k.ell * cp;
            }
            a += radial * sa / rho;
            b += radial * sb / rho;
            lam += radial * sl / (rho * rho);
        }
        (a, b, lam)
    }

    fn v_upper(&self, speed: f64) -> (f64, usize) {
        let upper = speed + self.scheme.v_cutoff;
        (upper, upper.ceil().max(1.0) as usize)
    }

    pub fn radial(&self, speed: f64) -> RadialCoefficients {
        let (upper, panels) = self.v_upper(speed);
        let full = self.full;
        let (a, b, lambda) = self.velocity_integral(speed, upper, panels, &|_| full);
        RadialCoefficients {
            speed,
            a,
            b,
            lambda: if speed == 0.0 { 0.0 } else { lambda },
        }
    }

    pub fn diffusion(&self, v: &[f64]) -> Matrix {
        self.radial(norm(v)).diffusion(v)
    }

    pub fn drift(&self, v: &[f64]) -> Vec<f64> {
        self.radial(norm(v)).drift(v)
    }

    /// `D`, `Λ`, `Σ` at `v` with a refinement-based error estimate; fails if
    /// the refined scheme disagrees beyond the scheme tolerance.
    pub fn coefficients(&self, v: &[f64]) -> Result<TransportCoefficients> {
        if v.len() != self.spec.dim {
            return Err(invalid("v", "dimension mismatch"));
        }
        let coarse = self.radial(norm(v));
        let fine_solver = Landau::new(&self.spec, &self.scheme.refined())?;
        let fine = fine_solver.radial(norm(v));
        let d = fine.diffusion(v);
        let err = d.sub(&coarse.diffusion(v)).frobenius() / d.frobenius().max(f64::MIN_POSITIVE);
        let err = if d.frobenius() == 0.0 { 0.0 } else { err };
        if err > self.scheme.tolerance {
            return Err(Error::QuadratureNonConvergence(format!(
                "D({v:?}) changed by {err:.2e} under refinement"
            )));
        }
        Ok(TransportCoefficients {
            v: v.to_vec(),
            sigma: sqrt_spd(&d)?,
            lambda: fine.drift(v),
            d,
            meta: Some(QuadratureMeta {
                scheme: fine_solver.scheme,
                estimated_error: err,
            }),
        })
    }

    /// `(Λ̃(t) - Λ, D̃(t) - D)`: only `|v| < 2R/t` contributes.
    pub fn truncation_deficit(&self, v: &[f64], t: f64) -> (Vec<f64>, Matrix) {
        let speed = norm(v);
        let (cap, _) = self.v_upper(speed);
        let upper = if t > 0.0 {
            (2.0 * self.spec.radius / t).min(cap)
        } else {
            cap
        };
        let full = self.full;
        let spec = self.spec;
        let scheme = self.scheme;
        let (a, b, lam) = self.velocity_integral(speed, upper, 4, &|rho| {
            phi_constants(&spec, t * rho, &scheme).minus(&full)
        });
        let lambda = if speed == 0.0 { 0.0 } else { lam };
        let r = RadialCoefficients {
            speed,
            a,
            b,
            lambda,
        };
        (r.drift(v), r.diffusion(v))
    }

    /// Finite-window coefficients `(Λ̃(t), D̃(t))`.
    pub fn truncated(&self, v: &[f64], t: f64) -> (Vec<f64>, Matrix) {
        if t <= 0.0 {
            return (vec![0.0; v.len()], Matrix::zeros(v.len()));
        }
        let (dl, dd) = self.truncation_deficit(v, t);
        let lam: Vec<f64> = self.drift(v).iter().zip(&dl).map(|(a, b)| a + b).collect();
        (lam, self.diffusion(v).add(&dd))
    }

    /// `∫ γ(V) ℒf(V) dV` by a tensor Gauss–Hermite rule with `n` nodes per axis.
    pub fn gaussian_generator_average(&self, f: &TestFunction, n: usize) -> f64 {
        let d = self.spec.dim;
        let rule = gaussian_tensor_rule(d, n);
        // radial profiles depend on |V| only; key on the sorted magnitudes so
        // sign/permutation images share one evaluation
        let mut keys: HashMap<Vec<u64>, f64> = HashMap::new();
        for (p, _) in &rule {
            let mut k: Vec<f64> = p.iter().map(|x| x.abs()).collect();
            k.sort_by(f64::total_cmp);
            let speed = norm(&k);
            keys.entry(k.iter().map(|x| x.to_bits()).collect()).or_insert(speed);
        }
        let mut entries: Vec<(Vec<u64>, f64)> = keys.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let radial: HashMap<Vec<u64>, RadialCoefficients> = entries
            .par_iter()
            .map(|(k, speed)| (k.clone(), self.radial(*speed)))
            .collect();
        let mut total = 0.0;
        for (p, w) in &rule {
            let mut k: Vec<f64> = p.iter().map(|x| x.abs()).collect();
            k.sort_by(f64::total_cmp);
            let key: Vec<u64> = k.iter().map(|x| x.to_bits()).collect();
            let r = radial[&key];
            let coeffs = TransportCoefficients {
                v: p.clone(),
                d: r.diffusion(p),
                lambda: r.drift(p),
                sigma: Matrix::zeros(d),
                meta: None,
            };
            total += w * generator_apply(&coeffs, &f.gradient(p), &f.hessian(p));
        }
        total
    }
}

pub fn landau_d(v: &[f64], spec: &PotentialSpec, scheme: &QuadratureScheme) -> Result<Matrix> {
    Ok(Landau::new(spec, scheme)?.coefficients(v)?.d)
}

pub fn landau_lambda(v: &[f64], spec: &PotentialSpec, scheme: &QuadratureScheme) -> Result<Vec<f64>> {
    Ok(Landau::new(spec, scheme)?.coefficients(v)?.lambda)
}

pub fn truncated_coeffs(
    v: &[f64],
    t: f64,
    spec: &PotentialSpec,
    scheme: &QuadratureScheme,
) -> Result<(Vec<f64>, Matrix)> {
    if !(t >= 0.0) {
        return Err(invalid("t", "must be non-negative"));
    }
    Ok(Landau::new(spec, scheme)?.truncated(v, t))
}

/// `ℒf(V) = 2 ∇f·Λ(V) + Hess f : D(V)`.
pub fn generator_apply(coeffs: &TransportCoefficients, grad_f: &[f64], hess_f: &Matrix) -> f64 {
    let drift: f64 = grad_f.iter().zip(&coeffs.lambda).map(|(g, l)| g * l).sum();
    2.0 * drift + hess_f.contract(&coeffs.d)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `∫ δ(k·v) γ(v+V) dv = φ₁(k̂·V)/|k|`.
pub fn hyperplane_marginal(k: &[f64], v: &[f64]) -> f64 {
    let kn = norm(k);
    let proj: f64 = k.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / kn;
    normal_pdf(proj) / kn
}

/// `D(V) = π (2π)^{-d} ∫ dk (k⊗k) |Φ̂(k)|² φ₁(k̂·V)/|k|` in spherical
/// coordinates: a wavenumber integral times a polar-angle integral.
pub fn landau_d_fourier(
    v: &[f64],
    spec: &PotentialSpec,
    table: &FourierTable,
    scheme: &QuadratureScheme,
) -> Result<Matrix> {
    let d = spec.dim;
    if table.dim != d || v.len() != d {
        return Err(invalid("fourier_table", "dimension mismatch"));
    }
    let df = d as f64;
    let radial: f64 = table
        .kappa_grid
        .iter()
        .zip(&table.weights)
        .zip(&table.phi_hat)
        .map(|((k, w), p)| w * k.powi(d as i32) * p * p)
        .sum();
    if let (Some(&k_last), Some(&p_last)) = (table.kappa_grid.last(), table.phi_hat.last()) {
        // integrand at the cutoff times the cutoff: a crude tail scale
        let tail = k_last.powi(d as i32 + 1) * p_last * p_last;
        if tail > 1e-6 * radial.abs() {
            return Err(Error::QuadratureNonConvergence(format!(
                "Fourier table ends at kappa = {k_last} with tail {tail:.2e}"
            )));
        }
    }
    let speed = norm(v);
    let gl = GaussLegendre::new(scheme.fourier_angle);
    let (mut ang_par, mut ang_perp) = (0.0, 0.0);
    for (theta, w) in gl.composite(0.0, PI, 2) {
        let (c, s) = (theta.cos(), theta.sin());
        let g = w * s.powi(d as i32 - 2) * normal_pdf(speed * c);
        ang_par += g * c * c;
        ang_perp += g * s * s / (df - 1.0);
    }
    let pref = PI * (2.0 * PI).powf(-df) * radial * sphere_area(d - 2);
    Ok(assemble_diffusion(pref * ang_par, pref * ang_perp, v))
}

/// Resolution of the full-tensor oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleResolution {
    pub ball_radial: usize,
    pub ball_polar: usize,
    pub ball_azimuth: usize,
    pub chord: usize,
    pub v_radial: usize,
    pub v_polar: usize,
    pub v_azimuth: usize,
    pub v_cutoff: f64,
}

impl Default for OracleResolution {
    fn default() -> Self {
        Self {
            ball_radial: 24,
            ball_polar: 24,
            ball_azimuth: 48,
            chord: 8,
            v_radial: 16,
            v_polar: 32,
            v_azimuth: 64,
            v_cutoff: 12.0,
        }
    }
}

impl OracleResolution {
    pub fn doubled(&self) -> Self {
        Self {
            ball_radial: 2 * self.ball_radial,
            ball_polar: 2 * self.ball_polar,
            ball_azimuth: 2 * self.ball_azimuth,
            chord: self.chord,
            v_radial: 2 * self.v_radial,
            v_polar: 2 * self.v_polar,
            v_azimuth: 2 * self.v_azimuth,
            v_cutoff: self.v_cutoff,
        }
    }
}

/// Generic path: the full `d × d` position tensor for the line direction
/// `e₁`, computed on a spherical product rule of the ball with the chord
/// entry found from the quadratic `|x + r e₁|² = R²`, rotated to every
/// direction of a spherical product rule in velocity space. No axial
/// reduction is used. Returns `(D, Λ)`.
pub fn full_tensor_coefficients(
    v: &[f64],
    spec: &PotentialSpec,
    res: &OracleResolution,
) -> (Matrix, Vec<f64>) {
    let d = spec.dim;
    let big_r = spec.radius;
    let gl_r = GaussLegendre::new(res.ball_radial);
    let ball_dirs = SphereRule::product(d, res.ball_polar, res.ball_azimuth);
    let chord = GaussLegendre::new(res.chord.max(spec.smoothness as usize + 2));

    let mut m1 = Matrix::zeros(d);
    let mut l1 = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut y = vec![0.0; d];
    for (r, wr) in gl_r.mapped(0.0, big_r) {
        for (dir, wd) in ball_dirs.directions.iter().zip(&ball_dirs.weights) {
            let x: Vec<f64> = dir.iter().map(|c| r * c).collect();
            let w = wr * wd * r.powi(d as i32 - 1);
            let x1 = x[0];
            let disc = x1 * x1 - r * r + big_r * big_r;
            let r_lo = -x1 - disc.max(0.0).sqrt();
            let mut line = vec![0.0; d];
            let mut weighted = vec![0.0; d];
            for (s, ws) in chord.mapped(r_lo, 0.0) {
                y.copy_from_slice(&x);
                y[0] += s;
                spec.gradient_into(&y, &mut grad);
                for k in 0..d {
                    line[k] += ws * grad[k];
                    weighted[k] += ws * (-s) * grad[k];
                }
            }
            spec.gradient_into(&x, &mut grad);
            let hess = spec.hessian(&x);
            for i in 0..d {
                for j in 0..d {
                    m1[(i, j)] += w * grad[i] * line[j];
                    l1[i] += w * hess[i * d + j] * weighted[j];
                }
            }
        }
    }

    let speed = norm(v);
    let upper = speed + res.v_cutoff;
    let panels = upper.ceil() as usize;
    let vel_dirs = SphereRule::product(d, res.v_polar, res.v_azimuth);
    let rotated: Vec<(Matrix, Vec<f64>, f64, &Vec<f64>)> = vel_dirs
        .directions
        .iter()
        .zip(&vel_dirs.weights)
        .map(|(e, &w)| {
            let q = householder_from_e1(e);
            (q.matmul(&m1).matmul(&q), q.mul_vec(&l1), w, e)
        })
        .collect();
    let norm_c = (2.0 * PI).powf(-0.5 * d as f64);
    let mut dmat = Matrix::zeros(d);
    let mut lam = vec![0.0; d];
    for (rho, wr) in GaussLegendre::new(res.v_radial).composite(0.0, upper, panels) {
        for (mq, lq, w, e) in &rotated {
            let g2: f64 = e
                .iter()
                .zip(v)
                .map(|(ei, vi)| (rho * ei + vi).powi(2))
                .sum();
            let g = norm_c * (-0.5 * g2).exp() * wr * w * rho.powi(d as i32 - 1);
            dmat.add_scaled(mq, g / rho);
            for k in 0..d {
                lam[k] -= g * lq[k] / (rho * rho);
            }
        }
    }
    (dmat, lam)
}

/// Natural cubic spline on uniform knots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubicSpline {
    pub x0: f64,
    pub h: f64,
    pub y: Vec<f64>,
    pub m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(x0: f64, h: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal solve for interior second derivatives
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut dd = vec![0.0; k];
            for i in 0..k {
                let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]) / (h * h);
                let denom = if i == 0 { 4.0 } else { 4.0 - c[i - 1] };
                c[i] = 1.0 / denom;
                dd[i] = if i == 0 { rhs / denom } else { (rhs - dd[i - 1]) / denom };
            }
            for i in (0..k).rev() {
                m[i + 1] = if i == k - 1 { dd[i] } else { dd[i] - c[i] * m[i + 2] };
            }
        }
        Self { x0, h, y, m }
    }

    /// Constant extrapolation outside the knot range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let last = self.x0 + self.h * (n - 1) as f64;
        if x <= self.x0 {
            return self.y[0];
        }
        if x >= last {
            return self.y[n - 1];
        }
        let u = (x - self.x0) / self.h;
        let i = (u.floor() as usize).min(n - 2);
        let t = u - i as f64;
        let s = 1.0 - t;
        let h2 = self.h * self.h;
        s * self.y[i]
            + t * self.y[i + 1]
            + ((s * s * s - s) * self.m[i] + (t * t * t - t) * self.m[i + 1]) * h2 / 6.0
    }
}

/// Radial profiles `a, b, λ` interpolated in `|V|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub dim: usize,
    pub speeds: Vec<f64>,
    pub rows: Vec<RadialCoefficients>,
    a: CubicSpline,
    b: CubicSpline,
    lambda: CubicSpline,
}

impl CoefficientTable {
    pub const DEFAULT_KNOTS: usize = 64;
    pub const DEFAULT_MAX_SPEED: f64 = 8.0;

    pub fn build(landau: &Landau, knots: usize, max_speed: f64) -> Result<Self> {
        if knots < 4 {
            return Err(invalid("knots", "need at least 4"));
        }
        if !(max_speed > 0.0) {
            return Err(invalid("max_speed", "must be positive"));
        }
        let h = max_speed / (knots - 1) as f64;
        let speeds: Vec<f64> = (0..knots).map(|i| i as f64 * h).collect();
        let rows: Vec<RadialCoefficients> = speeds.par_iter().map(|&s| landau.radial(s)).collect();
        Ok(Self::from_rows(landau.dim(), rows))
    }

    /// Table with all coefficients zero (free gas).
    pub fn zero(dim: usize) -> Self {
        let rows = (0..4)
            .map(|i| RadialCoefficients {
                speed: i as f64,
                a: 0.0,
                b: 0.0,
                lambda: 0.0,
            })
            .collect();
        Self::from_rows(dim, rows)
    }

    pub fn from_rows(dim: usize, rows: Vec<RadialCoefficients>) -> Self {
        let speeds: Vec<f64> = rows.iter().map(|r| r.speed).collect();
        let h = speeds[1] - speeds[0];
        let spline = |f: fn(&RadialCoefficients) -> f64| {
            CubicSpline::natural(speeds[0], h, rows.iter().map(f).collect())
        };
        Self {
            dim,
            a: spline(|r| r.a),
            b: spline(|r| r.b),
            lambda: spline(|r| r.lambda),
            speeds,
            rows,
        }
    }

    pub fn radial(&self, speed: f64) -> RadialCoefficients {
        RadialCoefficients {
            speed,
            a: self.a.eval(speed),
            b: self.b.eval(speed),
            lambda: if speed == 0.0 { 0.0 } else { self.lambda.eval(speed) },
        }
    }

    pub fn coefficients(&self, v: &[f64]) -> TransportCoefficients {
        let r = self.radial(norm(v));
        TransportCoefficients {
            v: v.to_vec(),
            d: r.diffusion(v),
            lambda: r.drift(v),
            sigma: radial_sqrt(&r, v),
            meta: None,
        }
    }

    /// `ℒf(V)` from the interpolated coefficients.
    pub fn generator(&self, f: &TestFunction, v: &[f64]) -> f64 {
        let r = self.radial(norm(v));
        let c = TransportCoefficients {
            v: v.to_vec(),
            d: r.diffusion(v),
            lambda: r.drift(v),
            sigma: Matrix::zeros(v.len()),
            meta: None,
        };
        generator_apply(&c, &f.gradient(v), &f.hessian(v))
    }
}

/// `√D = √a P∥ + √b P⊥` for `D = a P∥ + b P⊥`.
pub fn radial_sqrt(r: &RadialCoefficients, v: &[f64]) -> Matrix {
    assemble_diffusion(r.a.max(0.0).sqrt(), r.b.max(0.0).sqrt(), v)
}

/// Outcome of [`check_identities`] at one grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityPoint {
    pub v: Vec<f64>,
    /// `‖Λ + DV‖ / (‖DV‖ + 1e-12)`
    pub drift_identity: f64,
    /// `‖Λ - ∇·D‖ / max(‖Λ‖, 1e-8 ‖D‖)` with a Richardson-extrapolated
    /// central difference.
    pub divergence: f64,
    /// `‖D_fourier - D‖ / ‖D‖`
    pub fourier: f64,
    pub min_eigenvalue: f64,
    pub asymmetry: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityThresholds {
    pub drift_identity: f64,
    pub divergence: f64,
    pub fourier: f64,
    pub fd_step: f64,
}

impl Default for IdentityThresholds {
    fn default() -> Self {
        Self {
            drift_identity: 1e-6,
            divergence: 1e-3,
            fourier: 1e-3,
            fd_step: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub points: Vec<IdentityPoint>,
    pub thresholds: IdentityThresholds,
    pub max_drift_identity: f64,
    pub max_divergence: f64,
    pub max_fourier: f64,
    pub min_eigenvalue: f64,
    pub drift_identity_pass: bool,
    pub divergence_pass: bool,
    pub fourier_pass: bool,
    pub spd_pass: bool,
}

impl IdentityReport {
    pub fn all_pass(&self) -> bool {
        self.drift_identity_pass && self.divergence_pass && self.fourier_pass && self.spd_pass
    }
}

/// `Σ_j ∂_j D_ij(V)` by central differences with one Richardson level.
pub fn divergence_fd(landau: &Landau, v: &[f64], h: f64) -> Vec<f64> {
    let d = v.len();
    let central = |h: f64| -> Vec<f64> {
        let mut div = vec![0.0; d];
        for j in 0..d {
            let mut p = v.to_vec();
            let mut m = v.to_vec();
            p[j] += h;
            m[j] -= h;
            let dp = landau.diffusion(&p);
            let dm = landau.diffusion(&m);
            for (i, dv) in div.iter_mut().enumerate() {
                *dv += (dp[(i, j)] - dm[(i, j)]) / (2.0 * h);
            }
        }
        div
    };
    let coarse = central(h);
    let fine = central(0.5 * h);
    fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
}

pub fn check_identities(
    grid: &[Vec<f64>],
    landau: &Landau,
    table: Option<&FourierTable>,
    thresholds: &IdentityThresholds,
) -> Result<IdentityReport> {
    if grid.is_empty() {
        return Err(invalid("grid", "must be nonempty"));
    }
    let points: Vec<Result<IdentityPoint>> = grid
        .par_iter()
        .map(|v| -> Result<IdentityPoint> {
            let r = landau.radial(norm(v));
            let dm = r.diffusion(v);
            let lam = r.drift(v);
            let dv = dm.mul_vec(v);
            let sum: Vec<f64> = lam.iter().zip(&dv).map(|(a, b)| a + b).collect();
            let drift_identity = norm(&sum) / (norm(&dv) + 1e-12);
            let div = divergence_fd(landau, v, thresholds.fd_step);
            let diff: Vec<f64> = lam.iter().zip(&div).map(|(a, b)| a - b).collect();
            let divergence = norm(&diff) / norm(&lam).max(1e-8 * dm.frobenius());
            let fourier = match table {
                Some(t) => {
                    landau_d_fourier(v, &landau.spec, t, &landau.scheme)?
                        .sub(&dm)
                        .frobenius()
                        / dm.frobenius()
                }
                None => f64::NAN,
            };
            let (eig, _) = symmetric_eigen(&dm);
            Ok(IdentityPoint {
                v: v.clone(),
                drift_identity,
                divergence,
                fourier,
                min_eigenvalue: eig[0],
                asymmetry: dm.max_asymmetry(),
            })
        })
        .collect();
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    let max = |f: fn(&IdentityPoint) -> f64| points.iter().map(f).fold(0.0, f64::max);
    let max_drift_identity = max(|p| p.drift_identity);
    let max_divergence = max(|p| p.divergence);
    let max_fourier = if table.is_some() {
        max(|p| p.fourier)
    } else {
        f64::NAN
    };
    let min_eigenvalue = points
        .iter()
        .map(|p| p.min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    Ok(IdentityReport {
        drift_identity_pass: max_drift_identity <= thresholds.drift_identity,
        divergence_pass: max_divergence <= thresholds.divergence,
        fourier_pass: table.is_none() || max_fourier <= thresholds.fourier,
        spd_pass: min_eigenvalue > 0.0 && points.iter().all(|p| p.asymmetry <= 1e-12),
        max_drift_identity,
        max_divergence,
        max_fourier,
        min_eigenvalue,
        points,
        thresholds: thresholds.clone(),
    })
}

/// Fourier table sized by a scheme.
pub fn fourier_table(spec: &PotentialSpec, scheme: &QuadratureScheme) -> Result<FourierTable> {
    FourierTable::build(spec, scheme.kappa_max, scheme.kappa_panels, scheme.kappa_nodes)
}
