//! Drivers shared by the subcommands and the acceptance suite. Everything
//! here is deterministic in `(config, seed)`: work is split by trajectory
//! index and results are collected in index order.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use landau_core::bounds::{
    averaged_gronwall_check, cosh_benchmark, cosh_problem, first_order_generator, gronwall_check,
    peano_baker, random_certified_problem, rk4, simple_constant, solve_linear_second_order,
    BoundParams, GronwallReport, LinearSecondOrderProblem, VectorFunction,
};
use landau_core::coefficients::{
    check_identities, fourier_table, CoefficientTable, IdentityReport, IdentityThresholds, Landau,
    QuadratureScheme, RadialCoefficients,
};
use landau_core::engine::{
    run_trajectory, twin_trajectory, EngineConfig, Mode, RunMeta, Selector, TrajectoryRecord,
    TwinResult,
};
use landau_core::linalg::norm;
use landau_core::rng::tagged_stream;
use landau_core::sde::{run_sde_ensemble, SdeEnsemble};
use landau_core::stats::{
    fluctuation_diagnostics, martingale_term, FluctuationParams, FluctuationReport,
    IncrementMoments, RecollisionAccumulator, Sample, SampledPath, TestFunctionBundle,
};
use landau_core::testfn::TestFunction;
use landau_core::{Error, Result};

use crate::config::RunConfig;

pub const TRAJECTORY_STREAM: u8 = 1;
pub const TWIN_STREAM: u8 = 3;
pub const BOUNDS_STREAM: u8 = 4;

/// Trajectories processed per parallel batch by the streaming accumulators.
const CHUNK: u64 = 16;

pub fn run_meta(seed: u64, index: u64, hash: &str) -> RunMeta {
    RunMeta {
        seed,
        index,
        config_hash: hash.to_string(),
    }
}

/// Runs trajectories `range` in parallel, returned in index order.
pub fn run_ensemble(
    ec: &EngineConfig,
    seed: u64,
    hash: &str,
    range: Range<u64>,
) -> Result<Vec<TrajectoryRecord>> {
    ec.validate()?;
    range
        .into_par_iter()
        .map(|i| {
            run_trajectory(
                ec,
                run_meta(seed, i, hash),
                tagged_stream(seed, TRAJECTORY_STREAM, i),
            )
        })
        .collect()
}

// ---------------------------------------------------------------- coefficients

pub fn landau(cfg: &RunConfig) -> Result<Landau> {
    Landau::new(&cfg.spec(), &QuadratureScheme::default())
}

pub fn coefficient_table(cfg: &RunConfig, landau: &Landau) -> Result<CoefficientTable> {
    CoefficientTable::build(landau, cfg.coeffs.knots, cfg.coeffs.max_speed)
}

pub fn thresholds(cfg: &RunConfig) -> IdentityThresholds {
    IdentityThresholds {
        drift_identity: cfg.coeffs.drift_tolerance,
        divergence: cfg.coeffs.divergence_tolerance,
        fourier: cfg.coeffs.fourier_tolerance,
        fd_step: cfg.coeffs.fd_step,
    }
}

/// Identity report on `grid`; the Fourier comparison is optional because
/// its table is the expensive part.
pub fn identity_report(
    cfg: &RunConfig,
    landau: &Landau,
    grid: &[Vec<f64>],
    with_fourier: bool,
) -> Result<IdentityReport> {
    let table = if with_fourier {
        Some(fourier_table(&landau.spec, &landau.scheme)?)
    } else {
        None
    };
    check_identities(grid, landau, table.as_ref(), &thresholds(cfg))
}

/// Table row with the spline error at the midpoint to the next knot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub knot: RadialCoefficients,
    pub midpoint: f64,
    pub spline_error: f64,
}

pub fn table_rows(landau: &Landau, table: &CoefficientTable) -> Vec<TableRow> {
    let n = table.rows.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let knot = table.rows[i];
            let midpoint = if i + 1 < n {
                0.5 * (table.speeds[i] + table.speeds[i + 1])
            } else {
                table.speeds[i]
            };
            let direct = landau.radial(midpoint);
            let interp = table.radial(midpoint);
            let spline_error = (direct.a - interp.a)
                .abs()
                .max((direct.b - interp.b).abs())
                .max((direct.lambda - interp.lambda).abs());
            TableRow {
                knot,
                midpoint,
                spline_error,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationarityRow {
    pub function: String,
    /// `∫ γ ℒf`
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn stationarity_functions() -> Vec<(String, TestFunction)> {
    vec![
        ("v1".into(), TestFunction::Coordinate { i: 0 }),
        ("v1*v2".into(), TestFunction::Product { i: 0, j: 1 }),
        ("|v|^2".into(), TestFunction::SquaredNorm),
        ("|v|^4".into(), TestFunction::QuarticNorm),
    ]
}

pub fn stationarity(cfg: &RunConfig, landau: &Landau) -> Vec<StationarityRow> {
    let tol = cfg.coeffs.stationarity_tolerance;
    stationarity_functions()
        .into_iter()
        .map(|(name, f)| {
            let value = landau.gaussian_generator_average(&f, cfg.coeffs.stationarity_nodes);
            StationarityRow {
                function: name,
                value,
                tolerance: tol,
                pass: value.abs() <= tol,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationRates {
    pub v: Vec<f64>,
    pub t: Vec<f64>,
    pub diffusion_deficit: Vec<f64>,
    pub drift_deficit: Vec<f64>,
    pub diffusion_slope: f64,
    pub drift_slope: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// `‖D̃(t) - D‖` and `‖Λ̃(t) - Λ‖` on a log grid over `[t_min, t_max]`.
pub fn truncation_rates(landau: &Landau, v: &[f64], t_min: f64, t_max: f64, points: usize) -> TruncationRates {
    let t: Vec<f64> = (0..points)
        .map(|k| t_min * (t_max / t_min).powf(k as f64 / (points - 1) as f64))
        .collect();
    let deficits: Vec<(f64, f64)> = t
        .par_iter()
        .map(|&t| {
            let (dl, dd) = landau.truncation_deficit(v, t);
            (dd.frobenius(), norm(&dl))
        })
        .collect();
    let diffusion_deficit: Vec<f64> = deficits.iter().map(|d| d.0).collect();
    let drift_deficit: Vec<f64> = deficits.iter().map(|d| d.1).collect();
    TruncationRates {
        v: v.to_vec(),
        diffusion_slope: loglog_slope(&t, &diffusion_deficit),
        drift_slope: loglog_slope(&t, &drift_deficit),
        t,
        diffusion_deficit,
        drift_deficit,
    }
}

// ------------------------------------------------------------------- ensembles

/// Increment gaps on a sample grid of spacing `h`: `{1,2,4,8}·h`, then
/// `√2`-spaced gaps from `N^{1/3}` to `horizon / 2`.
pub fn increment_gaps(density: f64, horizon: f64, h: f64) -> (Vec<f64>, Vec<f64>) {
    let short: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|k| k * h).collect();
    let mut large: Vec<f64> = Vec::new();
    let mut g = density.cbrt();
    while g <= 0.5 * horizon * (1.0 + 1e-12) {
        let snapped = (g / h).round().max(1.0) * h;
        if large.last().map_or(true, |&l| snapped > l) {
            large.push(snapped);
        }
        g *= std::f64::consts::SQRT_2;
    }
    (short, large)
}

/// What to accumulate from an ensemble at one density.
#[derive(Debug, Clone)]
pub struct EnsemblePlan {
    pub engine: EngineConfig,
    pub trajectories: usize,
    /// Macroscopic times at which velocities are kept.
    pub tau_points: Vec<f64>,
    pub short_gaps: Vec<f64>,
    pub large_gaps: Vec<f64>,
    pub bundle: TestFunctionBundle,
    pub c_t: f64,
    pub fluctuations: Option<FluctuationParams>,
}

impl EnsemblePlan {
    /// Samples every `fine_stride` steps so the increment and martingale
    /// estimators see the dynamics on their own time scale.
    pub fn new(cfg: &RunConfig, density: f64, mode: Mode) -> Self {
        let mut engine = cfg.engine_config(density, mode);
        engine.stride = cfg.diagnostics.fine_stride;
        let h = engine.dt * engine.stride as f64;
        let (short_gaps, large_gaps) = increment_gaps(density, engine.horizon, h);
        let d = cfg.dim;
        let bundle = TestFunctionBundle {
            f: TestFunction::Coordinate { i: 0 },
            g: vec![(
                TestFunction::GaussianWindow {
                    center: vec![0.0; d],
                    width: cfg.diagnostics.window_width,
                },
                cfg.diagnostics.tau_past,
            )],
            tau_n: cfg.diagnostics.tau_past,
            tau_next: cfg.tau_max,
        };
        Self {
            fluctuations: engine
                .diagnostics
                .then(|| FluctuationParams::starred(d, cfg.diagnostics.delta)),
            engine,
            trajectories: cfg.ensemble,
            tau_points: vec![0.0, 0.5 * cfg.tau_max, cfg.tau_max],
            short_gaps,
            large_gaps,
            bundle,
            c_t: cfg.diagnostics.c_t * cfg.potential.radius,
        }
    }

    pub fn gaps(&self) -> Vec<f64> {
        let mut g = self.short_gaps.clone();
        g.extend(self.large_gaps.iter().copied());
        g
    }
}

/// Merge-invariant summary of an ensemble at one density.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub density: f64,
    pub mode: Mode,
    pub trajectories: usize,
    pub tau_points: Vec<f64>,
    /// `marginals[k][j]`: velocity of trajectory `j` at `tau_points[k]`.
    pub marginals: Vec<Vec<Vec<f64>>>,
    pub short_gaps: Vec<f64>,
    pub large_gaps: Vec<f64>,
    pub increments2: IncrementMoments,
    pub increments4: IncrementMoments,
    pub martingale: Sample,
    /// Same residual with every other sample dropped.
    pub martingale_coarse: Sample,
    pub recollisions: RecollisionAccumulator,
    pub fluctuations: Option<FluctuationReport>,
    pub cutoff_violations: u64,
    /// `max_t |H(t) - H(0)| / |H(0)|` per trajectory (full torus only).
    pub energy_drift: Sample,
}

fn every_other(r: &TrajectoryRecord) -> SampledPath {
    SampledPath {
        times: r.sample_times.iter().step_by(2).copied().collect(),
        v: r.v_samples.iter().step_by(2).cloned().collect(),
    }
}

fn velocity_at(r: &TrajectoryRecord, t: f64) -> Result<Vec<f64>> {
    let k = r
        .sample_index(t)
        .ok_or_else(|| Error::OutOfRange(format!("no sample at t = {t}")))?;
    Ok(r.v_samples[k].clone())
}

/// Runs `plan` in chunks, keeping only the accumulators.
pub fn ensemble_stats(
    plan: &EnsemblePlan,
    table: &CoefficientTable,
    seed: u64,
    hash: &str,
) -> Result<EnsembleStats> {
    let ec = &plan.engine;
    let n = ec.density;
    let gaps = plan.gaps();
    let mut stats = EnsembleStats {
        density: n,
        mode: ec.mode,
        trajectories: 0,
        tau_points: plan.tau_points.clone(),
        marginals: vec![Vec::new(); plan.tau_points.len()],
        short_gaps: plan.short_gaps.clone(),
        large_gaps: plan.large_gaps.clone(),
        increments2: IncrementMoments::new(2, gaps.clone()),
        increments4: IncrementMoments::new(4, gaps),
        martingale: Sample::default(),
        martingale_coarse: Sample::default(),
        recollisions: RecollisionAccumulator::new(n, 4.0 * plan.c_t, landau_core::engine::RATIO_BINS),
        fluctuations: None,
        cutoff_violations: 0,
        energy_drift: Sample::default(),
    };
    let total = plan.trajectories as u64;
    let mut start = 0;
    while start < total {
        let end = (start + CHUNK).min(total);
        let records = run_ensemble(ec, seed, hash, start..end)?;
        for r in &records {
            for (k, tau) in plan.tau_points.iter().enumerate() {
                stats.marginals[k].push(velocity_at(r, tau * n)?);
            }
            stats.increments2.add(r)?;
            stats.increments4.add(r)?;
            stats
                .martingale
                .push(martingale_term(r, &plan.bundle, table, n)?);
            stats
                .martingale_coarse
                .push(martingale_term(&every_other(r), &plan.bundle, table, n)?);
            stats.recollisions.add_events(&r.events, plan.c_t);
            stats.cutoff_violations += r.counters.cutoff_violations;
            if let Some(&e0) = r.energy.first() {
                let drift = r.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
                stats.energy_drift.push(drift / e0.abs());
            }
        }
        if let Some(params) = plan.fluctuations {
            let chunk = fluctuation_diagnostics(&records, params)?;
            match stats.fluctuations.as_mut() {
                Some(f) => f.merge(&chunk),
                None => stats.fluctuations = Some(chunk),
            }
        }
        stats.trajectories += records.len();
        start = end;
    }
    Ok(stats)
}

/// SDE ensemble on the macroscopic times of `tau_points`.
pub fn sde_ensemble(cfg: &RunConfig, table: &CoefficientTable, tau_points: &[f64]) -> Result<SdeEnsemble> {
    let mut sc = cfg.sde_config()?;
    sc.tau_grid = tau_points.to_vec();
    sc.tau_max = tau_points.iter().cloned().fold(sc.dtau, f64::max);
    run_sde_ensemble(&sc, table)
}

// ----------------------------------------------------------------------- twins

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwinRun {
    pub index: u64,
    pub selected: u64,
    pub sigma_plus: f64,
    pub rel_speed: f64,
    /// Exponent of `sup|X - X̄|` against `t - σ⁺` over the fit window.
    pub slope: Option<f64>,
    /// Prefactor `c` in `sup|X - X̄| ≈ c (t - σ⁺)^slope`.
    pub amplitude: Option<f64>,
    /// `|V - V̄|` and its corrected form at `σ⁺ + 5/u`.
    pub dv_at_5tm: Option<f64>,
    pub dv_corrected_at_5tm: Option<f64>,
}

impl TwinRun {
    pub fn correction_ratio(&self) -> Option<f64> {
        match (self.dv_at_5tm, self.dv_corrected_at_5tm) {
            (Some(a), Some(b)) if b > 0.0 => Some(a / b),
            (Some(a), Some(_)) if a > 0.0 => Some(f64::INFINITY),
            _ => None,
        }
    }
}

/// Fit window of the influence law, in time after `σ⁺`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub lo: f64,
    pub hi: f64,
}

pub fn analyse_twin(index: u64, t: &TwinResult, window: FitWindow) -> TwinRun {
    let mut running = 0.0f64;
    let sup: Vec<f64> = t
        .dx
        .iter()
        .map(|&x| {
            running = running.max(x);
            running
        })
        .collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (k, &time) in t.times.iter().enumerate() {
        let s = time - t.sigma_plus;
        if s >= window.lo * (1.0 - 1e-9) && s <= window.hi * (1.0 + 1e-9) && sup[k] > 0.0 {
            xs.push(s);
            ys.push(sup[k]);
        }
    }
    let (slope, amplitude) = if xs.len() >= 3 {
        let slope = loglog_slope(&xs, &ys);
        let mx = xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64;
        let my = ys.iter().map(|y| y.ln()).sum::<f64>() / ys.len() as f64;
        (Some(slope), Some((my - slope * mx).exp()))
    } else {
        (None, None)
    };
    let target = t.sigma_plus + 5.0 / t.rel_speed;
    let k = t.times.partition_point(|&s| s < target);
    let (dv, dvc) = if k < t.times.len() {
        (Some(t.dv[k]), Some(t.dv_corrected[k]))
    } else {
        (None, None)
    };
    TwinRun {
        index,
        selected: t.selected,
        sigma_plus: t.sigma_plus,
        rel_speed: t.rel_speed,
        slope,
        amplitude,
        dv_at_5tm: dv,
        dv_corrected_at_5tm: dvc,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwinSuite {
    pub density: f64,
    pub selector: Selector,
    pub runs: Vec<TwinRun>,
    /// Indices whose configuration had no particle matching the selector.
    pub misses: Vec<u64>,
}

/// `runs` twin pairs at density `n` on the full torus.
pub fn twin_suite(
    cfg: &RunConfig,
    density: f64,
    selector: &Selector,
    runs: usize,
    window: FitWindow,
    hash: &str,
) -> Result<TwinSuite> {
    let mut ec = cfg.engine_config(density, Mode::FullTorus);
    ec.horizon = cfg.twin.horizon;
    ec.stride = 1;
    let results: Vec<Result<Option<TwinRun>>> = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let rng = tagged_stream(cfg.seed, TWIN_STREAM, i);
            match twin_trajectory(&ec, run_meta(cfg.seed, i, hash), rng, selector) {
                Ok(t) => Ok(Some(analyse_twin(i, &t, window))),
                Err(Error::SelectorMiss(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut suite = TwinSuite {
        density,
        selector: selector.clone(),
        runs: Vec::new(),
        misses: Vec::new(),
    };
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            Some(run) => suite.runs.push(run),
            None => suite.misses.push(i as u64),
        }
    }
    Ok(suite)
}

pub fn median(values: &[f64]) -> Option<f64> {
    let s = Sample {
        values: values.to_vec(),
    };
    (!s.is_empty()).then(|| s.median())
}

// ---------------------------------------------------------------------- bounds

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoshCheck {
    pub t: f64,
    pub numeric: f64,
    pub exact: f64,
    pub relative_error: f64,
    pub solver_error: f64,
    pub report: GronwallReport,
    /// `e^{2+C_A}/(2+C_A) + 1`
    pub constant: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemCheck {
    pub index: u64,
    pub c_a: f64,
    pub simple: GronwallReport,
    pub simple_constant: f64,
    pub averaged: GronwallReport,
    pub peano: PeanoCheck,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeanoCheck {
    pub t: f64,
    pub terms: usize,
    /// `|Φ(t,0) Y₀ - Y_rk4(t)|`
    pub difference: f64,
    pub tail_bound: f64,
    pub quadrature_error: f64,
    pub solver_error: f64,
    /// `(tail + quadrature)·|Y₀| + solver error`
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsSuite {
    pub cosh: CoshCheck,
    pub problems: Vec<ProblemCheck>,
}

pub fn cosh_check(cfg: &RunConfig) -> Result<CoshCheck> {
    let b = &cfg.bounds;
    let t = b.n.powf(0.5 * b.a_exp);
    let p = cosh_problem(b.dim, b.n, b.a_exp, b.b_exp, t);
    let sol = solve_linear_second_order(&p, b.dt)?;
    let numeric = sol.x.last().map_or(f64::NAN, |x| x[0]);
    let exact = cosh_benchmark(b.n, b.a_exp, b.b_exp, t);
    let report = gronwall_check(&p, b.dt)?;
    Ok(CoshCheck {
        t,
        numeric,
        exact,
        relative_error: ((numeric - exact) / exact).abs(),
        solver_error: sol.error_estimate,
        report,
        constant: simple_constant(p.params.c_a),
    })
}

/// Longest Peano–Baker interval; longer ones need very many terms.
const PEANO_WINDOW: f64 = 10.0;

fn peano_check(p: &LinearSecondOrderProblem, terms: usize, dt: f64) -> Result<PeanoCheck> {
    let d = p.x0.len();
    let t = p.horizon.min(PEANO_WINDOW);
    let n_eps = t;
    let a = p.a.clone();
    let prop = peano_baker(&|s| first_order_generator(&a, n_eps, s), 0.0, t, terms, dt)?;
    let mut y0 = p.x0.clone();
    y0.extend(p.v0.iter().map(|v| n_eps * v));
    let y = prop.matrix.mul_vec(&y0);
    // the oracle integrates x'' = a x with b = 0
    let homogeneous = LinearSecondOrderProblem {
        b: VectorFunction::constant(vec![0.0; d]),
        horizon: t,
        ..p.clone()
    };
    let sol = solve_linear_second_order(&homogeneous, 0.25 * dt)?;
    let (x, xp) = (sol.x.last().unwrap(), sol.xp.last().unwrap());
    let mut diff = 0.0;
    for i in 0..d {
        diff += (y[i] - x[i]).powi(2) + (y[d + i] - n_eps * xp[i]).powi(2);
    }
    let solver_error = sol.error_estimate * (1.0 + n_eps) * (2.0 * d as f64).sqrt();
    Ok(PeanoCheck {
        t,
        terms,
        difference: diff.sqrt(),
        tail_bound: prop.tail_bound,
        quadrature_error: prop.quadrature_error,
        solver_error,
        tolerance: (prop.tail_bound + prop.quadrature_error) * norm(&y0) + solver_error,
    })
}

/// One random certified problem: the averaged check runs on the problem as
/// drawn; the simple check reuses `a` with the pointwise constant, horizon
/// `N^{a/2}` and random initial data.
pub fn problem_check(cfg: &RunConfig, index: u64) -> Result<ProblemCheck> {
    use rand::Rng as _;
    let b = &cfg.bounds;
    let mut rng = tagged_stream(cfg.seed, BOUNDS_STREAM, index);
    let averaged_problem = random_certified_problem(b.dim, b.n, b.a_exp, &mut rng);
    let c_pointwise = averaged_problem.a.sup_bound() * b.n.powf(b.a_exp);
    let draw = |rng: &mut landau_core::rng::Rng| -> Vec<f64> {
        (0..b.dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    };
    let x0 = draw(&mut rng);
    let v0 = draw(&mut rng);
    let simple_problem = LinearSecondOrderProblem {
        x0,
        v0,
        horizon: b.n.powf(0.5 * b.a_exp),
        params: BoundParams {
            c_a: c_pointwise,
            ..averaged_problem.params
        },
        ..averaged_problem.clone()
    };
    let simple = gronwall_check(&simple_problem, b.dt)?;
    let averaged = averaged_gronwall_check(&averaged_problem, b.dt, &mut rng)?;
    let peano = peano_check(&simple_problem, b.peano_terms, b.dt)?;
    Ok(ProblemCheck {
        index,
        c_a: averaged_problem.params.c_a,
        simple_constant: simple_constant(c_pointwise),
        simple,
        averaged,
        peano,
    })
}

pub fn bounds_suite(cfg: &RunConfig) -> Result<BoundsSuite> {
    let cosh = cosh_check(cfg)?;
    let problems = (0..cfg.bounds.problems as u64)
        .into_par_iter()
        .map(|i| problem_check(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundsSuite { cosh, problems })
}

/// Time-reversal consistency: integrate to `T` and back.
pub fn reversal_error(p: &LinearSecondOrderProblem, dt: f64) -> f64 {
    let steps = (p.horizon / dt).ceil().max(1.0) as usize;
    let h = p.horizon / steps as f64;
    let (_, xs, xps) = rk4(p, 0.0, &p.x0, &p.v0, h, steps);
    let (_, back, backp) = rk4(p, p.horizon, xs.last().unwrap(), xps.last().unwrap(), -h, steps);
    let x = back.last().unwrap();
    let xp = backp.last().unwrap();
    x.iter()
        .zip(&p.x0)
        .chain(xp.iter().zip(&p.v0))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}
