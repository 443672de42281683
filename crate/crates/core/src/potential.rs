//! The radial bump interaction `Φ(x) = A (1 - |x|²/R²)^p` on `|x| < R`.
//!
//! All derivatives are evaluated in closed form through the profile
//! `f(s) = A (1 - s/R²)^p` of the squared norm `s = |x|²`: since `∂_i s = 2 x_i`
//! and `∂_ij s = 2 δ_ij` are the only non-vanishing derivatives of `s`,
//! `∂_I Φ` is a sum over the partitions of `I` into singletons and pairs.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{sphere_area, GaussLegendre};

/// Highest derivative order exposed by [`PotentialSpec::derivative`].
pub const MAX_DERIVATIVE_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    /// Support radius `R`.
    pub radius: f64,
    /// Amplitude `A`; zero gives the free gas.
    pub amplitude: f64,
    /// Smoothness exponent `p`.
    pub smoothness: u32,
    /// Spatial dimension `d`.
    pub dim: usize,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self {
            radius: 1.0,
            amplitude: 1.0,
            smoothness: 4,
            dim: 4,
        }
    }
}

impl PotentialSpec {
    pub fn new(radius: f64, amplitude: f64, smoothness: u32, dim: usize) -> Result<Self> {
        let spec = Self {
            radius,
            amplitude,
            smoothness,
            dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_dim(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(invalid("potential.radius", "must be positive and finite"));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(invalid("potential.amplitude", "must be non-negative and finite"));
        }
        if self.smoothness < 4 {
            return Err(invalid(
                "potential.smoothness",
                "p >= 4 is needed for a C^3 potential",
            ));
        }
        if self.dim < 2 {
            return Err(invalid("potential.dim", "dimension must be at least 2"));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0
    }

    /// `m`-th derivative of the profile `f(s)`; zero outside the support.
    #[inline]
    pub fn profile_derivative(&self, m: usize, s: f64) -> f64 {
        let r2 = self.radius * self.radius;
        let q = 1.0 - s / r2;
        let p = self.smoothness as usize;
        if q <= 0.0 || m > p {
            return 0.0;
        }
        let mut coef = self.amplitude;
        for k in 0..m {
            coef *= -((p - k) as f64) / r2;
        }
        coef * ipow(q, p - m)
    }

    /// `Φ(x)`.
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        self.profile_derivative(0, norm2(x))
    }

    /// Radial profile `φ(r)` with `Φ(x) = φ(|x|)`.
    #[inline]
    pub fn radial(&self, r: f64) -> f64 {
        self.profile_derivative(0, r * r)
    }

    /// `φ'(r)`.
    #[inline]
    pub fn radial_derivative(&self, r: f64) -> f64 {
        2.0 * r * self.profile_derivative(1, r * r)
    }

    /// `‖Φ‖_∞ = Φ(0) = A`.
    pub fn sup_norm(&self) -> f64 {
        self.amplitude
    }

    /// Writes `∇Φ(x)` into `out`; returns false (and zeroes `out`) outside the support.
    #[inline]
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        let s = norm2(x);
        let f1 = self.profile_derivative(1, s);
        if f1 == 0.0 && s >= self.radius * self.radius {
            out.iter_mut().for_each(|o| *o = 0.0);
            return false;
        }
        for (o, xi) in out.iter_mut().zip(x) {
            *o = 2.0 * f1 * xi;
        }
        true
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        g
    }

    /// Row-major Hessian.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let s = norm2(x);
        let f1 = self.profile_derivative(1, s);
        let f2 = self.profile_derivative(2, s);
        let mut h = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                h[i * d + j] = 4.0 * f2 * x[i] * x[j] + if i == j { 2.0 * f1 } else { 0.0 };
            }
        }
        h
    }

    /// `∂_I Φ(x)` for a multi-index given as a list of coordinate indices,
    /// e.g. `[0, 0, 2]` is `∂_1 ∂_1 ∂_3`. The empty list is `Φ` itself.
    pub fn derivative(&self, multi_index: &[usize], x: &[f64]) -> Result<f64> {
        let order = multi_index.len();
        if order > MAX_DERIVATIVE_ORDER {
            return Err(Error::UnsupportedDerivative {
                order,
                p: self.smoothness,
            });
        }
        if order == MAX_DERIVATIVE_ORDER && self.smoothness < 5 {
            return Err(Error::UnsupportedDerivative {
                order,
                p: self.smoothness,
            });
        }
        if let Some(&bad) = multi_index.iter().find(|&&i| i >= x.len()) {
            return Err(invalid(
                "multi_index",
                format!("coordinate {bad} out of range for dimension {}", x.len()),
            ));
        }
        Ok(self.derivative_unchecked(multi_index, x))
    }

    pub(crate) fn derivative_unchecked(&self, multi_index: &[usize], x: &[f64]) -> f64 {
        let s = norm2(x);
        if s >= self.radius * self.radius {
            return 0.0;
        }
        let mut fs = [0.0; MAX_DERIVATIVE_ORDER + 1];
        for (m, f) in fs.iter_mut().enumerate() {
            *f = self.profile_derivative(m, s);
        }
        let mut total = 0.0;
        partitions(multi_index, &mut |singles: &[usize], pairs: &[(usize, usize)]| {
            if pairs.iter().any(|&(a, b)| a != b) {
                return;
            }
            let blocks = singles.len() + pairs.len();
            let mut term = fs[blocks] * 2f64.powi(blocks as i32);
            for &i in singles {
                term *= x[i];
            }
            total += term;
        });
        total
    }

    /// `Φ̂(κ) = ∫ e^{-ik·x} Φ(x) dx` for `|k| = κ`, through the radial
    /// reduction `S_{d-1} ∫_0^R φ(r) r^{d-1} ψ_d(κ r) dr` where `ψ_d` is the
    /// spherical average of `cos(z ω_1)`. The `r` rule starts at `resolution`
    /// nodes and doubles until two successive values agree to `1e-9` relative.
    pub fn fourier_radial(&self, kappa: f64, resolution: usize) -> Result<f64> {
        if resolution < 2 {
            return Err(invalid("resolution", "need at least 2 nodes"));
        }
        if !(kappa >= 0.0) {
            return Err(invalid("kappa", "must be non-negative"));
        }
        let d = self.dim;
        let area = sphere_area(d - 1);
        let eval = |n: usize| -> f64 {
            let gl = GaussLegendre::new(n);
            area * gl.integrate(0.0, self.radius, |r| {
                self.radial(r) * r.powi(d as i32 - 1) * sphere_average_cos(d, kappa * r)
            })
        };
        let mut n = resolution;
        let mut prev = eval(n);
        for _ in 0..8 {
            n *= 2;
            let next = eval(n);
            let scale = next.abs().max(1e-300);
            if (next - prev).abs() <= 1e-9 * scale
                || (next - prev).abs() <= 1e-15 * self.integral().abs()
            {
                return Ok(next);
            }
            prev = next;
        }
        Err(Error::QuadratureNonConvergence(format!(
            "Fourier transform at kappa = {kappa} did not settle with {n} nodes"
        )))
    }

    /// `∫ Φ` in closed form: `A S_{d-1} R^d B(d/2, p+1) / 2`.
    pub fn integral(&self) -> f64 {
        use statrs::function::beta::beta;
        let d = self.dim as f64;
        self.amplitude
            * sphere_area(self.dim - 1)
            * self.radius.powf(d)
            * 0.5
            * beta(0.5 * d, self.smoothness as f64 + 1.0)
    }
}

/// Spherical mean of `cos(z ω_1)` over `S^{d-1}`:
/// `(S_{d-2}/S_{d-1}) ∫_0^π cos(z cos θ) sin^{d-2} θ dθ`, which equals
/// `Γ(d/2) (2/z)^{d/2-1} J_{d/2-1}(z)`.
pub fn sphere_average_cos(d: usize, z: f64) -> f64 {
    if z == 0.0 {
        return 1.0;
    }
    let n = 24 + (1.5 * z.abs()) as usize;
    let gl = GaussLegendre::new(n);
    let norm = sphere_area(d - 2) / sphere_area(d - 1);
    norm * gl.integrate(0.0, std::f64::consts::PI, |t| {
        (z * t.cos()).cos() * t.sin().powi(d as i32 - 2)
    })
}

/// Radial Fourier transform sampled on a composite Gauss–Legendre grid of
/// `[0, kappa_max]`; the weights make the table directly usable as a
/// quadrature rule in `κ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierTable {
    pub dim: usize,
    pub kappa_grid: Vec<f64>,
    pub weights: Vec<f64>,
    pub phi_hat: Vec<f64>,
}

impl FourierTable {
    pub fn build(spec: &PotentialSpec, kappa_max: f64, panels: usize, per_panel: usize) -> Result<Self> {
        use rayon::prelude::*;
        let gl = GaussLegendre::new(per_panel);
        let rule = gl.composite(0.0, kappa_max, panels);
        let kappa_grid: Vec<f64> = rule.iter().map(|r| r.0).collect();
        let weights: Vec<f64> = rule.iter().map(|r| r.1).collect();
        let phi_hat = kappa_grid
            .par_iter()
            .map(|&k| spec.fourier_radial(k, 64))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            dim: spec.dim,
            kappa_grid,
            weights,
            phi_hat,
        })
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappa_grid.last().copied().unwrap_or(0.0)
    }
}

/// Integer power by repeated squaring; unlike `powi` the result does not
/// depend on whether the call was constant-folded.
#[inline]
pub(crate) fn ipow(x: f64, n: usize) -> f64 {
    let mut base = x;
    let mut e = n;
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

#[inline]
pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Enumerates the partitions of `idx` into singletons and (unordered) pairs.
fn partitions(idx: &[usize], visit: &mut dyn FnMut(&[usize], &[(usize, usize)])) {
    fn rec(
        rest: &[usize],
        singles: &mut Vec<usize>,
        pairs: &mut Vec<(usize, usize)>,
        visit: &mut dyn FnMut(&[usize], &[(usize, usize)]),
    ) {
        let Some((&first, tail)) = rest.split_first() else {
            visit(singles, pairs);
            return;
        };
        singles.push(first);
        rec(tail, singles, pairs, visit);
        singles.pop();
        for k in 0..tail.len() {
            let mut remaining: Vec<usize> = tail.to_vec();
            let partner = remaining.remove(k);
            pairs.push((first, partner));
            rec(&remaining, singles, pairs, visit);
            pairs.pop();
        }
    }
    rec(idx, &mut Vec::new(), &mut Vec::new(), visit);
}

/// All non-decreasing multi-indices of the given order in `dim` coordinates.
pub fn symmetric_multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(order);
    fn rec(dim: usize, order: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == order {
            out.push(cur.clone());
            return;
        }
        for i in start..dim {
            cur.push(i);
            rec(dim, order, i, cur, out);
            cur.pop();
        }
    }
    rec(dim, order, 0, &mut cur, &mut out);
    out
}
