//! Numerical checks of second-order Grönwall estimates for
//! `x'' = a(t) x + b(t)`: an RK4 solver with step-halving error estimates,
//! empirical bound constants, and the Peano–Baker propagator.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{norm, Matrix};
use crate::rng::Rng;

/// `a(t) = scale · Σ_j A_j cos(ω_j t + φ_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigMode {
    pub amplitude: Matrix,
    pub omega: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixFunction {
    Constant { m: Matrix },
    Trig { scale: f64, modes: Vec<TrigMode> },
}

impl MatrixFunction {
    pub fn dim(&self) -> usize {
        match self {
            Self::Constant { m } => m.n,
            Self::Trig { modes, .. } => modes[0].amplitude.n,
        }
    }

    pub fn eval(&self, t: f64) -> Matrix {
        match self {
            Self::Constant { m } => m.clone(),
            Self::Trig { scale, modes } => {
                let mut out = Matrix::zeros(self.dim());
                for m in modes {
                    out.add_scaled(&m.amplitude, scale * (m.omega * t + m.phase).cos());
                }
                out
            }
        }
    }

    /// `∫_s^t a(u) du` in closed form.
    pub fn integral(&self, s: f64, t: f64) -> Matrix {
        match self {
            Self::Constant { m } => m.scale(t - s),
            Self::Trig { scale, modes } => {
                let mut out = Matrix::zeros(self.dim());
                for m in modes {
                    let w = ((m.omega * t + m.phase).sin() - (m.omega * s + m.phase).sin()) / m.omega;
                    out.add_scaled(&m.amplitude, scale * w);
                }
                out
            }
        }
    }

    /// A bound on `sup_t ‖a(t)‖` (Frobenius, hence also operator norm).
    pub fn sup_bound(&self) -> f64 {
        match self {
            Self::Constant { m } => m.frobenius(),
            Self::Trig { scale, modes } => {
                scale.abs() * modes.iter().map(|m| m.amplitude.frobenius()).sum::<f64>()
            }
        }
    }

    /// `K` with `‖∫_s^t a‖ ≤ K √(t-s)` for all `s ≤ t`, when one exists.
    ///
    /// `|sin x - sin y| / ω ≤ min(|t-s|, 2/ω) ≤ √(2|t-s|/ω)`.
    pub fn averaged_bound(&self) -> Option<f64> {
        match self {
            Self::Constant { .. } => None,
            Self::Trig { scale, modes } => Some(
                scale.abs()
                    * modes
                        .iter()
                        .map(|m| m.amplitude.frobenius() * (2.0 / m.omega).sqrt())
                        .sum::<f64>(),
            ),
        }
    }
}

/// `b(t) = c + s · sin(ν t + φ)` componentwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFunction {
    pub offset: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub omega: f64,
    pub phase: f64,
}

impl VectorFunction {
    pub fn constant(v: Vec<f64>) -> Self {
        let d = v.len();
        Self {
            offset: v,
            amplitude: vec![0.0; d],
            omega: 0.0,
            phase: 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let s = (self.omega * t + self.phase).sin();
        self.offset
            .iter()
            .zip(&self.amplitude)
            .map(|(c, a)| c + a * s)
            .collect()
    }

    pub fn sup_bound(&self) -> f64 {
        let c: Vec<f64> = self.offset.iter().map(|x| x.abs()).collect();
        let a: Vec<f64> = self.amplitude.iter().map(|x| x.abs()).collect();
        let sum: Vec<f64> = c.iter().zip(&a).map(|(c, a)| c + a).collect();
        norm(&sum)
    }
}

/// Parameters of the estimates: `C_A`, the exponent `a`, the window
/// exponent `ξ`, and `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub c_a: f64,
    pub a_exp: f64,
    pub xi: f64,
    pub n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSecondOrderProblem {
    pub a: MatrixFunction,
    pub b: VectorFunction,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub horizon: f64,
    pub params: BoundParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub xp: Vec<Vec<f64>>,
    /// `max_t |y_h - y_{h/2}|` at the shared times, scaled by `16/15` and a
    /// safety factor of 2 (the bare Richardson estimate is asymptotically
    /// exact, not an upper bound).
    pub error_estimate: f64,
}

fn rhs(p: &LinearSecondOrderProblem, t: f64, x: &[f64], xp: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let ax = p.a.eval(t).mul_vec(x);
    let b = p.b.eval(t);
    (xp.to_vec(), ax.iter().zip(&b).map(|(a, b)| a + b).collect())
}

fn axpy(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

/// RK4 from `(t0, x, x')` over `steps` steps of signed size `h`.
pub fn rk4(
    p: &LinearSecondOrderProblem,
    t0: f64,
    x: &[f64],
    xp: &[f64],
    h: f64,
    steps: usize,
) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut times = vec![t0];
    let mut xs = vec![x.to_vec()];
    let mut xps = vec![xp.to_vec()];
    let (mut x, mut xp) = (x.to_vec(), xp.to_vec());
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let (k1x, k1v) = rhs(p, t, &x, &xp);
        let (k2x, k2v) = rhs(p, t + 0.5 * h, &axpy(&x, 0.5 * h, &k1x), &axpy(&xp, 0.5 * h, &k1v));
        let (k3x, k3v) = rhs(p, t + 0.5 * h, &axpy(&x, 0.5 * h, &k2x), &axpy(&xp, 0.5 * h, &k2v));
        let (k4x, k4v) = rhs(p, t + h, &axpy(&x, h, &k3x), &axpy(&xp, h, &k3v));
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            xp[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        times.push(t0 + (k + 1) as f64 * h);
        xs.push(x.clone());
        xps.push(xp.clone());
    }
    (times, xs, xps)
}

/// Solves on `[0, horizon]` with step about `dt`, plus a half-step run for
/// the error estimate.
pub fn solve_linear_second_order(p: &LinearSecondOrderProblem, dt: f64) -> Result<Solution> {
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    if !(p.horizon > 0.0) {
        return Err(invalid("horizon", "must be positive"));
    }
    let steps = (p.horizon / dt).ceil().max(1.0) as usize;
    let h = p.horizon / steps as f64;
    let (times, x, xp) = rk4(p, 0.0, &p.x0, &p.v0, h, steps);
    let (_, xf, xpf) = rk4(p, 0.0, &p.x0, &p.v0, 0.5 * h, 2 * steps);
    let mut err: f64 = 0.0;
    for k in 0..=steps {
        for i in 0..p.x0.len() {
            err = err
                .max((x[k][i] - xf[2 * k][i]).abs())
                .max((xp[k][i] - xpf[2 * k][i]).abs());
        }
    }
    Ok(Solution {
        times,
        x,
        xp,
        error_estimate: 2.0 * err * 16.0 / 15.0,
    })
}

/// `N^{a₀-b₀}(cosh(t/N^{a₀/2}) - 1)`: solution of `x'' = N^{-a₀}x + N^{-b₀}`
/// from rest.
pub fn cosh_benchmark(n: f64, a0: f64, b0: f64, t: f64) -> f64 {
    n.powf(a0 - b0) * ((t / n.powf(0.5 * a0)).cosh() - 1.0)
}

pub fn cosh_problem(dim: usize, n: f64, a0: f64, b0: f64, horizon: f64) -> LinearSecondOrderProblem {
    LinearSecondOrderProblem {
        a: MatrixFunction::Constant {
            m: Matrix::identity(dim).scale(n.powf(-a0)),
        },
        b: VectorFunction::constant(vec![n.powf(-b0); dim]),
        x0: vec![0.0; dim],
        v0: vec![0.0; dim],
        horizon,
        params: BoundParams {
            c_a: (dim as f64).sqrt(),
            a_exp: a0,
            xi: a0,
            n,
        },
    }
}

/// `e^{2+C_A}/(2+C_A) + 1`.
pub fn simple_constant(c_a: f64) -> f64 {
    let k = 2.0 + c_a;
    k.exp() / k + 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    /// `sup ratio` over the validity window.
    pub c_hat: f64,
    /// Same over the first half of the window.
    pub c_hat_half: f64,
    pub window: f64,
    pub hypotheses_ok: bool,
    pub violations: Vec<String>,
    pub solver_error: f64,
}

impl GronwallReport {
    /// Finite and stable under horizon doubling within `tolerance`.
    pub fn stable(&self, tolerance: f64) -> bool {
        self.c_hat.is_finite()
            && (self.c_hat == 0.0 || self.c_hat <= tolerance * self.c_hat_half.max(f64::MIN_POSITIVE))
    }
}

/// Running `sup_{s ≤ t_k} |b(s)|` over the sample times.
fn running_sup_b(p: &LinearSecondOrderProblem, times: &[f64]) -> Vec<f64> {
    times
        .iter()
        .scan(0.0f64, |m, &t| {
            *m = m.max(norm(&p.b.eval(t)));
            Some(*m)
        })
        .collect()
}

/// Pointwise-bound estimate: `|x| + t|x'| ≤ c (t² sup|b| + (|x₀|² + t²|x₀'|²)^{1/2})`
/// for `t ≤ N^{a/2}`.
pub fn gronwall_check(p: &LinearSecondOrderProblem, dt: f64) -> Result<GronwallReport> {
    let pr = p.params;
    let window = pr.n.powf(0.5 * pr.a_exp);
    let mut violations = Vec::new();
    if p.horizon > window * (1.0 + 1e-12) {
        violations.push(format!("horizon {} beyond N^(a/2) = {window}", p.horizon));
    }
    let limit = pr.c_a / pr.n.powf(pr.a_exp);
    for k in 0..100 {
        let t = p.horizon * k as f64 / 99.0;
        let nrm = operator_norm(&p.a.eval(t));
        if nrm > limit * (1.0 + 1e-12) {
            violations.push(format!("|a({t})| = {nrm} exceeds C_A/N^a = {limit}"));
            break;
        }
    }
    let sol = solve_linear_second_order(p, dt)?;
    let x0 = norm(&p.x0);
    let v0 = norm(&p.v0);
    let sup_b = running_sup_b(p, &sol.times);
    let ratio_at = |k: usize| {
        let t = sol.times[k];
        let lhs = norm(&sol.x[k]) + t * norm(&sol.xp[k]);
        let rhs = t * t * sup_b[k] + (x0 * x0 + t * t * v0 * v0).sqrt();
        if lhs == 0.0 {
            0.0
        } else {
            lhs / rhs
        }
    };
    let (c_hat, c_hat_half) = sup_ratios(&sol.times, ratio_at);
    Ok(GronwallReport {
        c_hat,
        c_hat_half,
        window,
        hypotheses_ok: violations.is_empty(),
        violations,
        solver_error: sol.error_estimate,
    })
}

/// Averaged-bound estimate from rest: `max(|x|/(t² sup|b|), |x'|/(t sup|b|))`
/// for `t ≤ N^{2a/3}`.
pub fn averaged_gronwall_check(
    p: &LinearSecondOrderProblem,
    dt: f64,
    rng: &mut Rng,
) -> Result<GronwallReport> {
    let pr = p.params;
    let window = pr.n.powf(2.0 * pr.a_exp / 3.0);
    let mut violations = Vec::new();
    if p.horizon > window * (1.0 + 1e-12) {
        violations.push(format!("horizon {} beyond N^(2a/3) = {window}", p.horizon));
    }
    if pr.xi < 2.0 * pr.a_exp / 3.0 {
        violations.push("xi below 2a/3".into());
    }
    if norm(&p.x0) != 0.0 || norm(&p.v0) != 0.0 {
        violations.push("initial data must vanish".into());
    }
    let scale = pr.c_a / pr.n.powf(pr.a_exp);
    let reach = pr.n.powf(pr.xi).min(p.horizon);
    for _ in 0..100 {
        let s = rng.gen::<f64>() * p.horizon;
        let t = (s + rng.gen::<f64>() * reach).min(p.horizon);
        let lhs = operator_norm(&p.a.integral(s, t));
        if lhs > scale * (t - s).sqrt() * (1.0 + 1e-12) + 1e-15 {
            violations.push(format!("averaged bound fails on [{s}, {t}]"));
            break;
        }
    }
    let sol = solve_linear_second_order(p, dt)?;
    let sup_b = running_sup_b(p, &sol.times);
    let ratio_at = |k: usize| {
        let t = sol.times[k];
        let b = sup_b[k];
        if t == 0.0 || b == 0.0 {
            return 0.0;
        }
        (norm(&sol.x[k]) / (t * t * b)).max(norm(&sol.xp[k]) / (t * b))
    };
    let (c_hat, c_hat_half) = sup_ratios(&sol.times, ratio_at);
    Ok(GronwallReport {
        c_hat,
        c_hat_half,
        window,
        hypotheses_ok: violations.is_empty(),
        violations,
        solver_error: sol.error_estimate,
    })
}

fn sup_ratios(times: &[f64], ratio_at: impl Fn(usize) -> f64) -> (f64, f64) {
    let t_end = *times.last().unwrap_or(&0.0);
    let (mut full, mut half) = (0.0f64, 0.0f64);
    for k in 1..times.len() {
        let r = ratio_at(k);
        full = full.max(r);
        if times[k] <= 0.5 * t_end * (1.0 + 1e-12) {
            half = half.max(r);
        }
    }
    (full, half)
}

/// Largest singular value, from the eigenvalues of `MᵀM`.
pub fn operator_norm(m: &Matrix) -> f64 {
    let mtm = m.transpose().matmul(m);
    let eig = crate::linalg::symmetric_eigen(&mtm);
    eig.0.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Random trigonometric `a(t)` with a certified averaged bound, scaled so
/// that `‖∫_s^t a‖ ≤ C_A √(t-s) / N^a` exactly with the returned `C_A`, and a
/// random bounded `b(t)`; zero initial data and horizon `N^{2a/3}`.
pub fn random_certified_problem(
    dim: usize,
    n: f64,
    a_exp: f64,
    rng: &mut Rng,
) -> LinearSecondOrderProblem {
    let modes = (0..3)
        .map(|_| {
            let mut m = Matrix::zeros(dim);
            for i in 0..dim {
                for j in 0..dim {
                    m[(i, j)] = rng.gen_range(-1.0..1.0);
                }
            }
            TrigMode {
                amplitude: m,
                omega: rng.gen_range(0.5..4.0),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
            }
        })
        .collect();
    let a = MatrixFunction::Trig {
        scale: n.powf(-a_exp),
        modes,
    };
    let c_a = a.averaged_bound().unwrap_or(0.0) * n.powf(a_exp);
    let b = VectorFunction {
        offset: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        amplitude: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        omega: rng.gen_range(0.1..2.0),
        phase: rng.gen_range(0.0..std::f64::consts::TAU),
    };
    LinearSecondOrderProblem {
        a,
        b,
        x0: vec![0.0; dim],
        v0: vec![0.0; dim],
        horizon: n.powf(2.0 * a_exp / 3.0),
        params: BoundParams {
            c_a,
            a_exp,
            xi: a_exp,
            n,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Propagator {
    pub matrix: Matrix,
    /// `(t-s)^{K+1} ‖A‖_∞^{K+1} / (K+1)!`
    pub tail_bound: f64,
    /// Change of the sum when the step is halved (trapezoid error proxy).
    pub quadrature_error: f64,
}

fn peano_baker_sum(a: &dyn Fn(f64) -> Matrix, s: f64, t: f64, k_max: usize, steps: usize) -> Matrix {
    let n = a(s).n;
    let h = (t - s) / steps as f64;
    let grid: Vec<Matrix> = (0..=steps).map(|j| a(s + j as f64 * h)).collect();
    let mut term: Vec<Matrix> = vec![Matrix::identity(n); steps + 1];
    let mut total = Matrix::identity(n);
    for _ in 0..k_max {
        let mut next = vec![Matrix::zeros(n); steps + 1];
        let mut prev = grid[0].matmul(&term[0]);
        for j in 1..=steps {
            let cur = grid[j].matmul(&term[j]);
            next[j] = next[j - 1].add(&prev.add(&cur).scale(0.5 * h));
            prev = cur;
        }
        total = total.add(&next[steps]);
        term = next;
    }
    total
}

/// `Σ_{k ≤ K} I_k(t, s)` for `Y' = A(t) Y`, by nested trapezoid quadrature.
pub fn peano_baker(
    a: &dyn Fn(f64) -> Matrix,
    s: f64,
    t: f64,
    k_max: usize,
    dt: f64,
) -> Result<Propagator> {
    if t < s {
        return Err(invalid("t", "must not precede s"));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let n = a(s).n;
    if t == s {
        return Ok(Propagator {
            matrix: Matrix::identity(n),
            tail_bound: 0.0,
            quadrature_error: 0.0,
        });
    }
    let steps = ((t - s) / dt).ceil().max(1.0) as usize;
    let coarse = peano_baker_sum(a, s, t, k_max, steps);
    let fine = peano_baker_sum(a, s, t, k_max, 2 * steps);
    let sup = (0..=2 * steps)
        .map(|j| a(s + j as f64 * (t - s) / (2 * steps) as f64).frobenius())
        .fold(0.0, f64::max);
    let mut tail = 1.0;
    for k in 1..=k_max + 1 {
        tail *= (t - s) * sup / k as f64;
    }
    Ok(Propagator {
        quadrature_error: fine.sub(&coarse).frobenius() * 4.0 / 3.0,
        matrix: fine,
        tail_bound: tail,
    })
}

/// `A(t) = [[0, N^{-ε} I], [N^{ε} a(t), 0]]` of the first-order form of
/// `x'' = a x` in the variables `(x, N^ε x')`.
pub fn first_order_generator(a: &MatrixFunction, n_eps: f64, t: f64) -> Matrix {
    let at = a.eval(t);
    let d = at.n;
    let mut m = Matrix::zeros(2 * d);
    for i in 0..d {
        m[(i, d + i)] = 1.0 / n_eps;
        for j in 0..d {
            m[(d + i, j)] = n_eps * at[(i, j)];
        }
    }
    m
}
