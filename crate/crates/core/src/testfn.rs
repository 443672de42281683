//! Smooth test functions of the velocity used by the generator and the
//! martingale estimators.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `v_i`
    Coordinate { i: usize },
    /// `v_i v_j`
    Product { i: usize, j: usize },
    /// `|v|²`
    SquaredNorm,
    /// `|v|⁴`
    QuarticNorm,
    /// `exp(-|v - c|² / (2 w²))`, bounded with bounded derivatives.
    GaussianWindow { center: Vec<f64>, width: f64 },
    /// The constant one.
    One,
}

impl TestFunction {
    pub fn value(&self, v: &[f64]) -> f64 {
        match self {
            Self::Coordinate { i } => v[*i],
            Self::Product { i, j } => v[*i] * v[*j],
            Self::SquaredNorm => sq(v),
            Self::QuarticNorm => sq(v).powi(2),
            Self::GaussianWindow { center, width } => window(v, center, *width),
            Self::One => 1.0,
        }
    }

    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let d = v.len();
        let mut g = vec![0.0; d];
        match self {
            Self::Coordinate { i } => g[*i] = 1.0,
            Self::Product { i, j } => {
                g[*i] += v[*j];
                g[*j] += v[*i];
            }
            Self::SquaredNorm => g.iter_mut().zip(v).for_each(|(g, x)| *g = 2.0 * x),
            Self::QuarticNorm => {
                let s = sq(v);
                g.iter_mut().zip(v).for_each(|(g, x)| *g = 4.0 * s * x);
            }
            Self::GaussianWindow { center, width } => {
                let w = window(v, center, *width);
                let w2 = width * width;
                for k in 0..d {
                    g[k] = -w * (v[k] - center[k]) / w2;
                }
            }
            Self::One => {}
        }
        g
    }

    pub fn hessian(&self, v: &[f64]) -> Matrix {
        let d = v.len();
        let mut h = Matrix::zeros(d);
        match self {
            Self::Coordinate { .. } | Self::One => {}
            Self::Product { i, j } => {
                h[(*i, *j)] += 1.0;
                h[(*j, *i)] += 1.0;
            }
            Self::SquaredNorm => {
                for k in 0..d {
                    h[(k, k)] = 2.0;
                }
            }
            Self::QuarticNorm => {
                let s = sq(v);
                for a in 0..d {
                    for b in 0..d {
                        h[(a, b)] = 8.0 * v[a] * v[b] + if a == b { 4.0 * s } else { 0.0 };
                    }
                }
            }
            Self::GaussianWindow { center, width } => {
                let w = window(v, center, *width);
                let w2 = width * width;
                for a in 0..d {
                    for b in 0..d {
                        let da = (v[a] - center[a]) / w2;
                        let db = (v[b] - center[b]) / w2;
                        h[(a, b)] = w * (da * db - if a == b { 1.0 / w2 } else { 0.0 });
                    }
                }
            }
        }
        h
    }
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn window(v: &[f64], c: &[f64], w: f64) -> f64 {
    let r2: f64 = v.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
    (-0.5 * r2 / (w * w)).exp()
}
