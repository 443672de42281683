//! Run configuration: a TOML document with defaults for everything but the
//! physics you care about.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use landau_core::engine::{EngineConfig, Mode, Selector};
use landau_core::ensemble::{InitialLaw, G0};
use landau_core::potential::PotentialSpec;
use landau_core::sde::SdeConfig;
use landau_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(alias = "d")]
    pub dim: usize,
    #[serde(alias = "N")]
    pub density: f64,
    pub seed: u64,
    pub mode: Mode,
    /// Torus side `L` (full-torus mode).
    pub torus_side: f64,
    pub dt: f64,
    /// Macroscopic horizon; the microscopic one is `tau_max · N`.
    pub tau_max: f64,
    /// Steps between stored samples.
    pub stride: usize,
    /// Trajectories per ensemble.
    pub ensemble: usize,
    pub potential: PotentialSection,
    pub initial: G0,
    pub engine: EngineSection,
    pub coeffs: CoeffSection,
    pub sde: SdeSection,
    pub diagnostics: DiagnosticsSection,
    pub twin: TwinSection,
    pub bounds: BoundsSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    pub radius: f64,
    pub amplitude: f64,
    pub smoothness: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub v_ref: f64,
    pub v_slack: f64,
    pub particle_cap: usize,
    /// Recollision gap factor `c` in `c R / u`.
    pub exit_factor: f64,
    /// Record `Σ ∂_I Φ` accumulators for the fluctuation diagnostics.
    pub force_trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoeffSection {
    pub knots: usize,
    pub max_speed: f64,
    /// Velocities for the identity report; empty means the standard grid.
    pub grid: Vec<Vec<f64>>,
    pub fd_step: f64,
    pub drift_tolerance: f64,
    pub divergence_tolerance: f64,
    pub fourier_tolerance: f64,
    /// Gauss–Hermite nodes per axis for `∫ γ ℒf`.
    pub stationarity_nodes: usize,
    pub stationarity_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSection {
    pub dtau: f64,
    pub paths: usize,
    pub tau_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// `δ` of the good and better sets.
    pub delta: f64,
    /// `c_T` in units of `R`: interactions should last at most `c_T T_m`.
    pub c_t: f64,
    /// Fraction of interactions required within `c_T T_m`.
    pub within_fraction: f64,
    /// Minimum p-value of distribution tests.
    pub min_p: f64,
    /// Standard errors allowed in trend comparisons.
    pub se_multiple: f64,
    /// Normal quantile of Wilson intervals.
    pub wilson_z: f64,
    /// Steps between samples for the increment and martingale estimators.
    pub fine_stride: usize,
    /// Width of the Gaussian window `g₁` of the martingale test.
    pub window_width: f64,
    /// Past observation time `τ₁` of the martingale test.
    pub tau_past: f64,
    /// Allowed rise of the KS distance between consecutive densities, in
    /// units of `√(1/n + 1/m)`.
    pub ks_trend_quantile: f64,
    /// Allowed change of the martingale residual when the stride doubles, as
    /// a fraction of its standard error.
    pub stride_check_fraction: f64,
    pub large_gap_slope: f64,
    pub large_gap_tolerance: f64,
    pub short_gap_slope: f64,
    pub short_gap_tolerance: f64,
    /// Lower bound of the `p = 4` large-gap slope.
    pub quartic_min_slope: f64,
    /// Allowed fraction of trajectories violating a fluctuation bound.
    pub max_violation: f64,
    /// Relative energy drift allowed in full-torus runs.
    pub energy_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinSection {
    pub runs: usize,
    /// Microscopic horizon of each twin run.
    pub horizon: f64,
    pub selector: Selector,
    /// Fit window of `sup|X - X̄|` in `t - σ⁺`.
    pub fit_lo: f64,
    pub fit_hi: f64,
    pub slope: f64,
    pub slope_tolerance: f64,
    /// Allowed spread of `N · amplitude` across densities.
    pub amplitude_factor: f64,
    /// Required median of `|V - V̄|` over its corrected form at `σ⁺ + 5/u`.
    pub correction_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub n: f64,
    pub a_exp: f64,
    pub b_exp: f64,
    pub dim: usize,
    pub problems: usize,
    pub dt: f64,
    /// Allowed growth of `ĉ` when the horizon doubles.
    pub stability: f64,
    pub peano_terms: usize,
    pub cosh_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub densities: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dim: 4,
            density: 64.0,
            seed: 0,
            mode: Mode::Reservoir,
            torus_side: 8.0,
            dt: 1.0 / 80.0,
            tau_max: 0.5,
            stride: 10,
            ensemble: 400,
            potential: PotentialSection::default(),
            initial: G0::One,
            engine: EngineSection::default(),
            coeffs: CoeffSection::default(),
            sde: SdeSection::default(),
            diagnostics: DiagnosticsSection::default(),
            twin: TwinSection::default(),
            bounds: BoundsSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            radius: 1.0,
            amplitude: 1.0,
            smoothness: 4,
        }
    }
}

impl Default for EngineSection {
    fn default() -> Self {
        Self {
            v_ref: 4.0,
            v_slack: 2.0,
            particle_cap: 1_000_000,
            exit_factor: 6.0,
            force_trace: false,
        }
    }
}

impl Default for CoeffSection {
    fn default() -> Self {
        Self {
            knots: 64,
            max_speed: 8.0,
            grid: Vec::new(),
            fd_step: 1e-2,
            drift_tolerance: 1e-6,
            divergence_tolerance: 1e-3,
            fourier_tolerance: 1e-3,
            stationarity_nodes: 20,
            stationarity_tolerance: 1e-4,
        }
    }
}

impl Default for SdeSection {
    fn default() -> Self {
        Self {
            dtau: 5e-3,
            paths: 10_000,
            tau_grid: vec![0.0, 0.25, 0.5, 1.0],
        }
    }
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            delta: 0.3,
            c_t: 12.0,
            within_fraction: 0.99,
            min_p: 0.01,
            se_multiple: 3.0,
            wilson_z: 1.96,
            fine_stride: 1,
            window_width: 1.0,
            tau_past: 0.25,
            ks_trend_quantile: 1.36,
            stride_check_fraction: 0.1,
            large_gap_slope: 1.0,
            large_gap_tolerance: 0.2,
            short_gap_slope: 2.0,
            short_gap_tolerance: 0.3,
            quartic_min_slope: 1.0,
            max_violation: 0.01,
            energy_tolerance: 1e-6,
        }
    }
}

impl Default for TwinSection {
    fn default() -> Self {
        Self {
            runs: 50,
            horizon: 4.0,
            selector: Selector::FirstEntrant {
                u_min: 1.5,
                u_max: 3.0,
            },
            fit_lo: 0.025,
            fit_hi: 0.25,
            slope: 2.0,
            slope_tolerance: 0.3,
            amplitude_factor: 2.0,
            correction_ratio: 10.0,
        }
    }
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            n: 1e4,
            a_exp: 0.75,
            b_exp: 1.0,
            dim: 2,
            problems: 50,
            dt: 1e-2,
            stability: 1.5,
            peano_terms: 24,
            cosh_tolerance: 1e-8,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            densities: vec![32.0, 64.0, 128.0],
        }
    }
}

fn bad(field: &str, reason: &str) -> Error {
    Error::InvalidParameter {
        field: field.into(),
        reason: reason.into(),
    }
}

fn positive(field: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(bad(field, "must be positive and finite"))
    }
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical form: every field, in declaration order.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=6).contains(&self.dim) {
            return Err(bad("dim", "must be in 2..=6"));
        }
        if !(self.density >= 1.0 && self.density.is_finite()) {
            return Err(bad("density", "must be at least 1"));
        }
        positive("torus_side", self.torus_side)?;
        positive("dt", self.dt)?;
        positive("tau_max", self.tau_max)?;
        if self.stride == 0 {
            return Err(bad("stride", "must be positive"));
        }
        if self.ensemble == 0 {
            return Err(bad("ensemble", "must be positive"));
        }
        positive("potential.radius", self.potential.radius)?;
        if !(self.potential.amplitude >= 0.0 && self.potential.amplitude.is_finite()) {
            return Err(bad("potential.amplitude", "must be non-negative"));
        }
        if self.potential.smoothness < 4 {
            return Err(bad("potential.smoothness", "must be at least 4"));
        }
        positive("engine.v_ref", self.engine.v_ref)?;
        positive("engine.v_slack", self.engine.v_slack)?;
        positive("engine.exit_factor", self.engine.exit_factor)?;
        if self.engine.particle_cap == 0 {
            return Err(bad("engine.particle_cap", "must be positive"));
        }
        if self.coeffs.knots < 4 {
            return Err(bad("coeffs.knots", "need at least 4"));
        }
        positive("coeffs.max_speed", self.coeffs.max_speed)?;
        positive("coeffs.fd_step", self.coeffs.fd_step)?;
        positive("coeffs.drift_tolerance", self.coeffs.drift_tolerance)?;
        positive("coeffs.divergence_tolerance", self.coeffs.divergence_tolerance)?;
        positive("coeffs.fourier_tolerance", self.coeffs.fourier_tolerance)?;
        positive("coeffs.stationarity_tolerance", self.coeffs.stationarity_tolerance)?;
        if self.coeffs.stationarity_nodes < 2 {
            return Err(bad("coeffs.stationarity_nodes", "need at least 2"));
        }
        if self.coeffs.grid.iter().any(|v| v.len() != self.dim) {
            return Err(bad("coeffs.grid", "every velocity needs `dim` components"));
        }
        positive("sde.dtau", self.sde.dtau)?;
        if self.sde.paths == 0 {
            return Err(bad("sde.paths", "must be positive"));
        }
        if self.sde.tau_grid.is_empty() || self.sde.tau_grid.iter().any(|&t| !(t >= 0.0)) {
            return Err(bad("sde.tau_grid", "needs non-negative times"));
        }
        let dg = &self.diagnostics;
        positive("diagnostics.delta", dg.delta)?;
        positive("diagnostics.c_t", dg.c_t)?;
        if !(dg.within_fraction > 0.0 && dg.within_fraction <= 1.0) {
            return Err(bad("diagnostics.within_fraction", "must be in (0, 1]"));
        }
        if !(dg.min_p > 0.0 && dg.min_p < 1.0) {
            return Err(bad("diagnostics.min_p", "must be in (0, 1)"));
        }
        positive("diagnostics.se_multiple", dg.se_multiple)?;
        positive("diagnostics.wilson_z", dg.wilson_z)?;
        positive("diagnostics.window_width", dg.window_width)?;
        if dg.fine_stride == 0 {
            return Err(bad("diagnostics.fine_stride", "must be positive"));
        }
        if !(dg.tau_past >= 0.0 && dg.tau_past < self.tau_max) {
            return Err(bad("diagnostics.tau_past", "must lie in [0, tau_max)"));
        }
        if self.twin.runs == 0 {
            return Err(bad("twin.runs", "must be positive"));
        }
        positive("twin.horizon", self.twin.horizon)?;
        positive("twin.fit_lo", self.twin.fit_lo)?;
        if !(self.twin.fit_hi > self.twin.fit_lo) {
            return Err(bad("twin.fit_hi", "must exceed fit_lo"));
        }
        positive("twin.amplitude_factor", self.twin.amplitude_factor)?;
        positive("diagnostics.ks_trend_quantile", dg.ks_trend_quantile)?;
        positive("diagnostics.energy_tolerance", dg.energy_tolerance)?;
        let b = &self.bounds;
        positive("bounds.n", b.n)?;
        positive("bounds.a_exp", b.a_exp)?;
        positive("bounds.dt", b.dt)?;
        positive("bounds.stability", b.stability)?;
        positive("bounds.cosh_tolerance", b.cosh_tolerance)?;
        if b.dim == 0 || b.problems == 0 {
            return Err(bad("bounds", "dim and problems must be positive"));
        }
        if self.sweep.densities.is_empty() || self.sweep.densities.iter().any(|&n| !(n >= 1.0)) {
            return Err(bad("sweep.densities", "needs densities of at least 1"));
        }
        // the law and the engine validate the rest
        self.law()?;
        self.engine_config(self.density, self.mode).validate()?;
        Ok(())
    }

    pub fn spec(&self) -> PotentialSpec {
        PotentialSpec {
            radius: self.potential.radius,
            amplitude: self.potential.amplitude,
            smoothness: self.potential.smoothness,
            dim: self.dim,
        }
    }

    pub fn law(&self) -> Result<InitialLaw> {
        InitialLaw::new(self.initial.clone(), self.dim)
    }

    /// Engine settings at density `n`; horizon `tau_max · n`.
    pub fn engine_config(&self, n: f64, mode: Mode) -> EngineConfig {
        let mut c = EngineConfig::new(self.spec(), n, mode);
        c.torus_side = self.torus_side;
        c.dt = self.dt;
        c.horizon = self.tau_max * n;
        c.stride = self.stride;
        c.v_ref = self.engine.v_ref;
        c.v_slack = self.engine.v_slack;
        c.particle_cap = self.engine.particle_cap;
        c.exit_factor = self.engine.exit_factor;
        c.diagnostics = self.engine.force_trace;
        c.law = self
            .law()
            .unwrap_or_else(|_| InitialLaw::stationary(self.dim));
        c
    }

    pub fn sde_config(&self) -> Result<SdeConfig> {
        let tau_max = self.sde.tau_grid.iter().cloned().fold(self.sde.dtau, f64::max);
        Ok(SdeConfig {
            dtau: self.sde.dtau,
            tau_max,
            paths: self.sde.paths,
            law: self.law()?,
            seed: self.seed,
            tau_grid: self.sde.tau_grid.clone(),
        })
    }

    /// The identity grid: `0, ½e₁, e₁, 2e₁, 4e₁, (e₁+e₂)/√2` unless overridden.
    pub fn identity_grid(&self) -> Vec<Vec<f64>> {
        if !self.coeffs.grid.is_empty() {
            return self.coeffs.grid.clone();
        }
        standard_grid(self.dim)
    }
}

pub fn standard_grid(d: usize) -> Vec<Vec<f64>> {
    let e1 = |s: f64| {
        let mut v = vec![0.0; d];
        v[0] = s;
        v
    };
    let mut diag = vec![0.0; d];
    diag[0] = std::f64::consts::FRAC_1_SQRT_2;
    diag[1] = std::f64::consts::FRAC_1_SQRT_2;
    vec![e1(0.0), e1(0.5), e1(1.0), e1(2.0), e1(4.0), diag]
}
