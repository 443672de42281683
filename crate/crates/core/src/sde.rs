//! Euler–Maruyama for `dV = 2Λ(V)dτ + √2 Σ(V) dB` with tabulated coefficients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientTable;
use crate::ensemble::{gaussian_vector, InitialLaw};
use crate::error::{invalid, Result};
use crate::rng::{tagged_stream, Rng};

const SDE_STREAM: u8 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub dtau: f64,
    pub tau_max: f64,
    pub paths: usize,
    pub law: InitialLaw,
    pub seed: u64,
    /// Times at which marginals are stored; rounded to the step grid.
    pub tau_grid: Vec<f64>,
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dtau > 0.0) {
            return Err(invalid("sde.dtau", "must be positive"));
        }
        if !(self.tau_max >= self.dtau) {
            return Err(invalid("sde.tau_max", "must be at least dtau"));
        }
        if self.paths == 0 {
            return Err(invalid("sde.paths", "must be positive"));
        }
        if self.tau_grid.iter().any(|&t| t < 0.0 || t > self.tau_max + 1e-12) {
            return Err(invalid("sde.tau_grid", "times must lie in [0, tau_max]"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.tau_max / self.dtau).round() as usize
    }
}

/// One step; `xi` is a standard Gaussian vector.
pub fn em_step_with(v: &[f64], dtau: f64, table: &CoefficientTable, xi: &[f64]) -> Vec<f64> {
    let c = table.coefficients(v);
    let noise = c.sigma.mul_vec(xi);
    let s = (2.0 * dtau).sqrt();
    v.iter()
        .zip(&c.lambda)
        .zip(&noise)
        .map(|((v, l), n)| v + 2.0 * l * dtau + s * n)
        .collect()
}

pub fn em_step(v: &[f64], dtau: f64, table: &CoefficientTable, rng: &mut Rng) -> Vec<f64> {
    let xi = gaussian_vector(v.len(), rng);
    em_step_with(v, dtau, table, &xi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeEnsemble {
    /// Grid times actually used (multiples of `dtau`).
    pub tau: Vec<f64>,
    /// `samples[k][path]` is the velocity at `tau[k]`.
    pub samples: Vec<Vec<Vec<f64>>>,
}

impl SdeEnsemble {
    /// Coordinate `i` of all paths at grid index `k`.
    pub fn coordinate(&self, k: usize, i: usize) -> Vec<f64> {
        self.samples[k].iter().map(|v| v[i]).collect()
    }
}

pub fn run_path(
    config: &SdeConfig,
    table: &CoefficientTable,
    index: u64,
    stops: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let mut rng = tagged_stream(config.seed, SDE_STREAM, index);
    let mut v = config.law.sample_velocity(&mut rng)?;
    let mut out = Vec::with_capacity(stops.len());
    let mut next = 0;
    for step in 0..=config.steps() {
        while next < stops.len() && stops[next] == step {
            out.push(v.clone());
            next += 1;
        }
        if step < config.steps() {
            v = em_step(&v, config.dtau, table, &mut rng);
        }
    }
    Ok(out)
}

/// Independent paths on index-derived streams: the result does not depend on
/// the thread count.
pub fn run_sde_ensemble(config: &SdeConfig, table: &CoefficientTable) -> Result<SdeEnsemble> {
    config.validate()?;
    let stops: Vec<usize> = config
        .tau_grid
        .iter()
        .map(|t| (t / config.dtau).round() as usize)
        .collect();
    let mut order: Vec<usize> = (0..stops.len()).collect();
    order.sort_by_key(|&k| stops[k]);
    let sorted: Vec<usize> = order.iter().map(|&k| stops[k]).collect();
    let paths: Vec<Vec<Vec<f64>>> = (0..config.paths as u64)
        .into_par_iter()
        .map(|i| run_path(config, table, i, &sorted))
        .collect::<Result<_>>()?;
    let mut samples = vec![Vec::with_capacity(config.paths); stops.len()];
    for path in paths {
        for (pos, v) in path.into_iter().enumerate() {
            samples[order[pos]].push(v);
        }
    }
    Ok(SdeEnsemble {
        tau: stops.iter().map(|&s| s as f64 * config.dtau).collect(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_table_keeps_paths_constant() {
        let table = CoefficientTable::zero(3);
        let mut rng = stream(3, 0);
        let v = vec![0.3, -1.0, 2.0];
        assert_eq!(em_step(&v, 0.1, &table, &mut rng), v);
    }
}
