//! Gauss rules and product rules on balls and spheres.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        for i in 0..m {
            // Tricomi initial guess, refined by Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule with `panels` equal panels on `[a, b]`.
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let h = (b - a) / panels as f64;
        (0..panels)
            .flat_map(|k| {
                let lo = a + h * k as f64;
                self.mapped(lo, lo + h).collect::<Vec<_>>()
            })
            .collect()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Hermite rule for the standard normal weight: `E[f(Z)] ≈ Σ w_i f(x_i)`,
/// `Z ~ N(0, 1)`. Weights sum to one.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        // Physicists' rule (weight e^{-x^2}) by Newton iteration on the
        // orthonormal recurrence, then rescaled to the normal density.
        let mut xs = vec![0.0; n];
        let mut ws = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let pim4 = PI.powf(-0.25);
        let mut z: f64 = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * xs[0],
                3 => 1.91 * z - 0.91 * xs[1],
                _ => 2.0 * z - xs[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() < 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            xs[i] = z;
            xs[n - 1 - i] = -z;
            ws[i] = 2.0 / (pp * pp);
            ws[n - 1 - i] = ws[i];
        }
        let sqrt_pi = PI.sqrt();
        let nodes = xs.iter().rev().map(|x| x * 2f64.sqrt()).collect();
        let weights = ws.iter().rev().map(|w| w / sqrt_pi).collect();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Surface area of the unit sphere `S^k ⊂ R^{k+1}`.
pub fn sphere_area(k: usize) -> f64 {
    let h = 0.5 * (k as f64 + 1.0);
    2.0 * (h * PI.ln() - ln_gamma(h)).exp()
}

/// Volume of the unit ball in `R^d`.
pub fn ball_volume(d: usize) -> f64 {
    sphere_area(d - 1) / d as f64
}

/// Product rule on `S^{d-1}` in hyperspherical coordinates: `d - 2` polar
/// angles with Gauss–Legendre nodes and an equispaced azimuth.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub dim: usize,
    pub directions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn product(dim: usize, n_polar: usize, n_azimuth: usize) -> Self {
        assert!(dim >= 2);
        let gl = GaussLegendre::new(n_polar);
        let polar: Vec<(f64, f64)> = gl.mapped(0.0, PI).collect();
        let mut directions = Vec::new();
        let mut weights = Vec::new();
        let n_polar_axes = dim - 2;
        let mut idx = vec![0usize; n_polar_axes];
        loop {
            // Angles θ_1..θ_{d-2} then azimuth φ.
            let mut w_polar = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                let (theta, w) = polar[i];
                w_polar *= w * theta.sin().powi((dim - 2 - k) as i32);
            }
            for j in 0..n_azimuth {
                let phi = 2.0 * PI * (j as f64 + 0.5) / n_azimuth as f64;
                let mut dir = vec![0.0; dim];
                let mut s = 1.0;
                for (k, &i) in idx.iter().enumerate() {
                    let theta = polar[i].0;
                    dir[k] = s * theta.cos();
                    s *= theta.sin();
                }
                dir[dim - 2] = s * phi.cos();
                dir[dim - 1] = s * phi.sin();
                directions.push(dir);
                weights.push(w_polar * 2.0 * PI / n_azimuth as f64);
            }
            // Odometer over the polar axes.
            let mut k = 0;
            loop {
                if k == n_polar_axes {
                    return Self {
                        dim,
                        directions,
                        weights,
                    };
                }
                idx[k] += 1;
                if idx[k] < n_polar {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Tensor-product Gauss–Hermite points for `E[f(Z)]`, `Z ~ N(0, I_d)`.
pub fn gaussian_tensor_rule(dim: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    let gh = GaussHermite::new(n);
    let total = n.pow(dim as u32);
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut point = vec![0.0; dim];
        let mut w = 1.0;
        for p in point.iter_mut() {
            let i = rem % n;
            rem /= n;
            *p = gh.nodes[i];
            w *= gh.weights[i];
        }
        out.push((point, w));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(8);
        // degree 15 is the exactness limit
        let v = gl.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn legendre_high_order_is_stable() {
        let gl = GaussLegendre::new(256);
        let v = gl.integrate(0.0, PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn hermite_matches_normal_moments() {
        let gh = GaussHermite::new(24);
        let m = |k: i32| -> f64 {
            gh.nodes
                .iter()
                .zip(&gh.weights)
                .map(|(x, w)| w * x.powi(k))
                .sum()
        };
        assert!((m(0) - 1.0).abs() < 1e-13);
        assert!(m(1).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-11);
        assert!((m(8) - 105.0).abs() < 1e-8);
    }

    #[test]
    fn sphere_area_known_values() {
        assert!((sphere_area(0) - 2.0).abs() < 1e-14);
        assert!((sphere_area(1) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 2.0 * PI * PI).abs() < 1e-12);
        assert!((ball_volume(4) - PI * PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_rule_integrates_quadratics() {
        for dim in 2..=5 {
            let rule = SphereRule::product(dim, 16, 16);
            let area: f64 = rule.weights.iter().sum();
            assert!((area - sphere_area(dim - 1)).abs() < 1e-10, "dim {dim}");
            // ∫ ω_i ω_j = δ_ij |S|/d
            for i in 0..dim {
                for j in 0..dim {
                    let v: f64 = rule
                        .directions
                        .iter()
                        .zip(&rule.weights)
                        .map(|(w, q)| q * w[i] * w[j])
                        .sum();
                    let expect = if i == j { area / dim as f64 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-10, "dim {dim} ({i},{j})");
                }
            }
        }
    }
}
