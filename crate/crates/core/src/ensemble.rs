//! Initial data: the grand canonical background around the tagged particle,
//! and the Maxwellian influx through a sphere co-moving with it.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::potential::PotentialSpec;
use crate::quadrature::{sphere_area, GaussLegendre};
use crate::rng::Rng;

const MAX_REJECTIONS: usize = 100_000;

/// Perturbation `g₀` of the Maxwellian for the tagged velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum G0 {
    /// `g₀ ≡ 1`: the stationary law.
    One,
    /// `1 + a V_axis exp(-|V|²/(2w²))`; odd in `V_axis`, so normalized for
    /// free. Non-negative when `a w e^{-1/2} ≤ 1`.
    OddWindow { amplitude: f64, width: f64, axis: usize },
    /// `(1 + a exp(-|V|²/(2w²))) / Z` with `Z = 1 + a (w²/(1+w²))^{d/2}`.
    EvenWindow { amplitude: f64, width: f64 },
}

impl Default for G0 {
    fn default() -> Self {
        Self::One
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialLaw {
    pub g0: G0,
    pub dim: usize,
}

impl InitialLaw {
    /// Validates the descriptor and checks `∫ g₀ γ = 1` to `1e-6` by quadrature.
    pub fn new(g0: G0, dim: usize) -> Result<Self> {
        match &g0 {
            G0::One => {}
            G0::OddWindow {
                amplitude,
                width,
                axis,
            } => {
                if *axis >= dim {
                    return Err(invalid("g0.axis", "outside the dimension"));
                }
                if !(*width > 0.0) {
                    return Err(invalid("g0.width", "must be positive"));
                }
                if amplitude.abs() * width * (-0.5f64).exp() > 1.0 {
                    return Err(invalid("g0.amplitude", "g0 would become negative"));
                }
            }
            G0::EvenWindow { amplitude, width } => {
                if !(*width > 0.0) {
                    return Err(invalid("g0.width", "must be positive"));
                }
                if !(*amplitude > -1.0) {
                    return Err(invalid("g0.amplitude", "must exceed -1"));
                }
            }
        }
        let law = Self { g0, dim };
        let mass = law.normalization();
        if (mass - 1.0).abs() > 1e-6 {
            return Err(invalid(
                "g0",
                format!("integral of g0 against the Maxwellian is {mass}, not 1"),
            ));
        }
        Ok(law)
    }

    pub fn stationary(dim: usize) -> Self {
        Self { g0: G0::One, dim }
    }

    pub fn g0(&self, v: &[f64]) -> f64 {
        match &self.g0 {
            G0::One => 1.0,
            G0::OddWindow {
                amplitude,
                width,
                axis,
            } => {
                let r2: f64 = v.iter().map(|x| x * x).sum();
                1.0 + amplitude * v[*axis] * (-0.5 * r2 / (width * width)).exp()
            }
            G0::EvenWindow { amplitude, width } => {
                let r2: f64 = v.iter().map(|x| x * x).sum();
                let w2 = width * width;
                let z = 1.0 + amplitude * (w2 / (1.0 + w2)).powf(0.5 * self.dim as f64);
                (1.0 + amplitude * (-0.5 * r2 / w2).exp()) / z
            }
        }
    }

    /// Envelope constant for rejection against `γ`.
    pub fn sup_bound(&self) -> f64 {
        match &self.g0 {
            G0::One => 1.0,
            G0::OddWindow {
                amplitude, width, ..
            } => 1.0 + amplitude.abs() * width * (-0.5f64).exp(),
            G0::EvenWindow { amplitude, width } => {
                let w2 = width * width;
                let z = 1.0 + amplitude * (w2 / (1.0 + w2)).powf(0.5 * self.dim as f64);
                (1.0 + amplitude.max(0.0)) / z
            }
        }
    }

    /// `∫ g₀ γ` in polar coordinates about the first axis (every descriptor is
    /// symmetric about a coordinate axis).
    pub fn normalization(&self) -> f64 {
        let d = self.dim;
        let axis = match &self.g0 {
            G0::OddWindow { axis, .. } => *axis,
            _ => 0,
        };
        let gl = GaussLegendre::new(32);
        let mut total = 0.0;
        let mut v = vec![0.0; d];
        for (rho, wr) in gl.composite(0.0, 14.0, 14) {
            for (psi, wp) in gl.composite(0.0, PI, 2) {
                v.iter_mut().for_each(|x| *x = 0.0);
                v[axis] = rho * psi.cos();
                if d > 1 {
                    v[(axis + 1) % d] = rho * psi.sin();
                }
                let gamma = (2.0 * PI).powf(-0.5 * d as f64) * (-0.5 * rho * rho).exp();
                total += wr
                    * wp
                    * sphere_area(d - 2)
                    * rho.powi(d as i32 - 1)
                    * psi.sin().powi(d as i32 - 2)
                    * gamma
                    * self.g0(&v);
            }
        }
        total
    }

    /// Draw from `g₀ γ` by rejection against `γ`.
    pub fn sample_velocity(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        let bound = self.sup_bound();
        for _ in 0..MAX_REJECTIONS {
            let v = gaussian_vector(self.dim, rng);
            if matches!(self.g0, G0::One) || rng.gen::<f64>() * bound <= self.g0(&v) {
                return Ok(v);
            }
        }
        Err(Error::RejectionFailure {
            sampler: "tagged velocity",
            attempts: MAX_REJECTIONS,
        })
    }
}

pub fn gaussian_vector(d: usize, rng: &mut Rng) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Poisson draw; zero mean gives zero.
pub fn poisson(mean: f64, rng: &mut Rng) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleInit {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConfiguration {
    pub tagged_x: Vec<f64>,
    pub tagged_v: Vec<f64>,
    pub background: Vec<ParticleInit>,
    pub torus_side: f64,
    pub density: f64,
}

/// `∫_{R^d} (e^{-Φ(x)/N} - 1) dx` by radial quadrature.
pub fn gibbs_correction(spec: &PotentialSpec, density: f64) -> f64 {
    let gl = GaussLegendre::new(64);
    sphere_area(spec.dim - 1)
        * gl.integrate(0.0, spec.radius, |r| {
            ((-spec.radial(r) / density).exp() - 1.0) * r.powi(spec.dim as i32 - 1)
        })
}

/// Mean particle number on the torus of side `l`.
pub fn expected_count(spec: &PotentialSpec, side: f64, density: f64) -> f64 {
    density * side.powi(spec.dim as i32) + density * gibbs_correction(spec, density)
}

pub fn canonical(x: f64, side: f64) -> f64 {
    let h = 0.5 * side;
    let y = (x + h).rem_euclid(side) - h;
    // rem_euclid can round up to exactly `side`
    if y >= h {
        -h
    } else {
        y
    }
}

/// Grand canonical sample on the torus `[-L/2, L/2)^d`.
pub fn sample_initial_configuration(
    spec: &PotentialSpec,
    law: &InitialLaw,
    side: f64,
    density: f64,
    rng: &mut Rng,
) -> Result<InitialConfiguration> {
    let d = spec.dim;
    if !(side > 4.0 * spec.radius) {
        return Err(invalid("torus_side", "L must exceed 4R"));
    }
    if !(density >= 1.0) {
        return Err(invalid("density", "N must be at least 1"));
    }
    if law.dim != d {
        return Err(invalid("initial_law", "dimension mismatch"));
    }
    let tagged_v = law.sample_velocity(rng)?;
    let tagged_x: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5 * side..0.5 * side)).collect();
    let count = poisson(expected_count(spec, side, density), rng);
    let mut background = Vec::with_capacity(count);
    let mut rel = vec![0.0; d];
    for _ in 0..count {
        let mut accepted = None;
        for _ in 0..MAX_REJECTIONS {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5 * side..0.5 * side)).collect();
            for k in 0..d {
                rel[k] = canonical(tagged_x[k] - x[k], side);
            }
            let weight = (-spec.value(&rel) / density).exp();
            if spec.is_zero() || rng.gen::<f64>() <= weight {
                accepted = Some(x);
                break;
            }
        }
        let x = accepted.ok_or(Error::RejectionFailure {
            sampler: "gibbs position",
            attempts: MAX_REJECTIONS,
        })?;
        background.push(ParticleInit {
            x,
            v: gaussian_vector(d, rng),
        });
    }
    Ok(InitialConfiguration {
        tagged_x,
        tagged_v,
        background,
        torus_side: side,
        density,
    })
}

/// Uniform point in the ball of radius `radius`.
pub fn uniform_in_ball(d: usize, radius: f64, rng: &mut Rng) -> Vec<f64> {
    let dir = uniform_on_sphere(d, rng);
    let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
    dir.into_iter().map(|c| c * r).collect()
}

pub fn uniform_on_sphere(d: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let g = gaussian_vector(d, rng);
        let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return g.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Grand canonical background restricted to `B(X, radius)`, positions
/// relative to `X`.
pub fn sample_ball_configuration(
    spec: &PotentialSpec,
    density: f64,
    radius: f64,
    rng: &mut Rng,
) -> Result<Vec<ParticleInit>> {
    let d = spec.dim;
    let vol = sphere_area(d - 1) / d as f64 * radius.powi(d as i32);
    let mean = density * (vol + gibbs_correction(spec, density));
    let count = poisson(mean, rng);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut accepted = None;
        for _ in 0..MAX_REJECTIONS {
            let x = uniform_in_ball(d, radius, rng);
            if spec.is_zero() || rng.gen::<f64>() <= (-spec.value(&x) / density).exp() {
                accepted = Some(x);
                break;
            }
        }
        let x = accepted.ok_or(Error::RejectionFailure {
            sampler: "gibbs position",
            attempts: MAX_REJECTIONS,
        })?;
        out.push(ParticleInit {
            x,
            v: gaussian_vector(d, rng),
        });
    }
    Ok(out)
}

/// `E[(μ - Z)₊] = μ Φ(μ) + φ(μ)` for `Z ~ N(0,1)`.
fn one_sided_mean(mu: f64) -> f64 {
    use statrs::function::erf::erfc;
    let cdf = 0.5 * erfc(-mu / std::f64::consts::SQRT_2);
    mu * cdf + (-0.5 * mu * mu).exp() / (2.0 * PI).sqrt()
}

/// Inward Maxwellian flux through the sphere of radius `r_act` moving with
/// velocity `v_tagged`, for background density `density`.
pub fn influx_rate(v_tagged: &[f64], r_act: f64, density: f64) -> f64 {
    let d = v_tagged.len();
    let speed = v_tagged.iter().map(|x| x * x).sum::<f64>().sqrt();
    let gl = GaussLegendre::new(32);
    // the integrand bends over a width ~1/|V| around θ = π/2, so the panels
    // are graded towards it
    let mut cuts = vec![0.0, 0.5 * PI, PI];
    for k in [1.0, 4.0, 16.0] {
        let w = k / speed;
        if w < 0.5 * PI {
            cuts.extend([0.5 * PI - w, 0.5 * PI + w]);
        }
    }
    cuts.sort_by(f64::total_cmp);
    let angular: f64 = cuts
        .windows(2)
        .map(|ab| {
            gl.integrate(ab[0], ab[1], |t| {
                t.sin().powi(d as i32 - 2) * one_sided_mean(speed * t.cos())
            })
        })
        .sum();
    density * r_act.powi(d as i32 - 1) * sphere_area(d - 2) * angular
}

/// A particle crossing into the co-moving sphere during the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct Injected {
    /// Position relative to the sphere centre.
    pub offset: Vec<f64>,
    pub v: Vec<f64>,
    /// Outward unit normal at the crossing point.
    pub normal: Vec<f64>,
    /// Time elapsed since the crossing, in `[0, dt)`.
    pub age: f64,
}

/// One crossing `(n, v)` drawn from the density `∝ γ(v) [(V - v)·n]₊`.
pub fn sample_crossing(v_tagged: &[f64], rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = v_tagged.len();
    let speed = v_tagged.iter().map(|x| x * x).sum::<f64>().sqrt();
    let top = one_sided_mean(speed);
    for _ in 0..MAX_REJECTIONS {
        let n = uniform_on_sphere(d, rng);
        let mu: f64 = n.iter().zip(v_tagged).map(|(a, b)| a * b).sum();
        if rng.gen::<f64>() * top > one_sided_mean(mu) {
            continue;
        }
        // normal component z = v·n = μ - w, w > 0 with density ∝ w φ(w - μ)
        let w = sample_flux_gap(mu, rng)?;
        let mut v = gaussian_vector(d, rng);
        let along: f64 = v.iter().zip(&n).map(|(a, b)| a * b).sum();
        let z = mu - w;
        for k in 0..d {
            v[k] += (z - along) * n[k];
        }
        return Ok((n, v));
    }
    Err(Error::RejectionFailure {
        sampler: "influx direction",
        attempts: MAX_REJECTIONS,
    })
}

/// `w > 0` with density `∝ w exp(-(w - μ)²/2)`.
fn sample_flux_gap(mu: f64, rng: &mut Rng) -> Result<f64> {
    let rayleigh = |rng: &mut Rng| (-2.0 * (1.0 - rng.gen::<f64>()).ln()).sqrt();
    for _ in 0..MAX_REJECTIONS {
        if mu <= 0.0 {
            // w e^{-w²/2} e^{μw - μ²/2}: Rayleigh proposal, accept with e^{μw}
            let w = rayleigh(rng);
            if rng.gen::<f64>() <= (mu * w).exp() {
                return Ok(w);
            }
        } else {
            // envelope ((w-μ)₊ + μ) e^{-(w-μ)²/2}: μ + Rayleigh, or N(μ,1) on w > 0
            use statrs::function::erf::erfc;
            let mass_shift = 1.0;
            let mass_normal = mu * (2.0 * PI).sqrt() * 0.5 * erfc(-mu / std::f64::consts::SQRT_2);
            let w = if rng.gen::<f64>() * (mass_shift + mass_normal) < mass_shift {
                mu + rayleigh(rng)
            } else {
                let z: f64 = rng.sample(StandardNormal);
                let w = mu + z;
                if w <= 0.0 {
                    continue;
                }
                w
            };
            if w >= mu || rng.gen::<f64>() * mu <= w {
                return Ok(w);
            }
        }
    }
    Err(Error::RejectionFailure {
        sampler: "influx normal speed",
        attempts: MAX_REJECTIONS,
    })
}

/// Particles entering `B(X, r_act)` during one step of length `dt`. Each is
/// placed where it is at the end of the step: it crossed the sphere `age`
/// ago and has since moved with the relative velocity `v - V`.
pub fn sample_influx(
    v_tagged: &[f64],
    r_act: f64,
    dt: f64,
    density: f64,
    rng: &mut Rng,
) -> Result<Vec<Injected>> {
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let count = poisson(influx_rate(v_tagged, r_act, density) * dt, rng);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, v) = sample_crossing(v_tagged, rng)?;
        let age = rng.gen::<f64>() * dt;
        let offset = (0..n.len())
            .map(|k| r_act * n[k] + age * (v[k] - v_tagged[k]))
            .collect();
        out.push(Injected {
            offset,
            v,
            normal: n,
            age,
        });
    }
    Ok(out)
}
