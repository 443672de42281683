//! Estimators for comparing particle trajectories with the limiting
//! diffusion: distribution tests, martingale residuals, increment scaling,
//! fluctuation and recollision diagnostics.
//!
//! Accumulators keep their raw per-trajectory contributions and sort before
//! summing, so merging shards in any order gives bit-identical results.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::coefficients::CoefficientTable;
use crate::engine::{InteractionEvent, TrajectoryRecord};
use crate::error::{invalid, Error, Result};
use crate::testfn::TestFunction;

/// Values with an order-independent mean and standard error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Sample {
    pub fn push(&mut self, x: f64) {
        self.values.push(x);
    }

    pub fn merge(&mut self, other: &Sample) {
        self.values.extend_from_slice(&other.values);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn estimate(&self) -> Estimate {
        let n = self.values.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let v = self.sorted();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            let mut d: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
            d.sort_by(|a, b| a.total_cmp(b));
            d.iter().sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate {
            mean,
            se: (var / n as f64).sqrt(),
            n,
        }
    }

    pub fn median(&self) -> f64 {
        let v = self.sorted();
        match v.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => v[n / 2],
            n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
        }
    }
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn sorted(a: &[f64]) -> Vec<f64> {
    let mut v = a.to_vec();
    v.sort_by(|x, y| x.total_cmp(y));
    v
}

/// `sup |F_a - F_b|` of the empirical distribution functions.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic p-value with the Stephens small-sample correction.
fn ks_p(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientSamples("two-sample KS needs data".into()));
    }
    let d = ks_statistic(a, b);
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    Ok(KsResult {
        statistic: d,
        p_value: ks_p(d, ne),
    })
}

/// Exact permutation p-value `P(D ≥ d_obs)` by enumerating all splits of the
/// pooled sample; only for tiny samples.
pub fn ks_two_sample_exact(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let n = a.len() + b.len();
    if a.is_empty() || b.is_empty() || n > 20 {
        return Err(invalid("sample", "exact enumeration needs 1..=20 pooled points"));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let d_obs = ks_statistic(a, b);
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (k, &p) in pooled.iter().enumerate() {
            if mask >> k & 1 == 1 {
                x.push(p);
            } else {
                y.push(p);
            }
        }
        total += 1;
        if ks_statistic(&x, &y) >= d_obs - 1e-12 {
            hits += 1;
        }
    }
    Ok(KsResult {
        statistic: d_obs,
        p_value: hits as f64 / total as f64,
    })
}

/// One-sample KS against the standard normal.
pub fn ks_gaussian(a: &[f64]) -> Result<KsResult> {
    if a.is_empty() {
        return Err(Error::InsufficientSamples("KS needs data".into()));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let v = sorted(a);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = normal.cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p(d, n),
    })
}

/// `∫ |F_a - F_b|`.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = a[0].min(b[0]);
    let mut w = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => break,
        };
        w += (x - prev) * (i as f64 / n - j as f64 / m).abs();
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        prev = x;
    }
    w
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let half = z / (1.0 + z2 / nf) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalComparison {
    /// `v1 .. vd` or `|v|`.
    pub label: String,
    pub ks: KsResult,
    pub w1: f64,
}

fn columns(samples: &[Vec<f64>]) -> Vec<(String, Vec<f64>)> {
    let d = samples.first().map_or(0, |v| v.len());
    let mut out: Vec<(String, Vec<f64>)> = (0..d)
        .map(|i| (format!("v{}", i + 1), samples.iter().map(|v| v[i]).collect()))
        .collect();
    out.push((
        "|v|".into(),
        samples
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect(),
    ));
    out
}

/// Per-coordinate and speed comparison of two velocity samples.
pub fn compare_samples(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<MarginalComparison>> {
    columns(a)
        .into_iter()
        .zip(columns(b))
        .map(|((label, x), (_, y))| {
            Ok(MarginalComparison {
                label,
                ks: ks_two_sample(&x, &y)?,
                w1: wasserstein1(&x, &y),
            })
        })
        .collect()
}

/// Per-coordinate Gaussian KS (no speed row).
pub fn gaussian_marginals(a: &[Vec<f64>]) -> Result<Vec<KsResult>> {
    let d = a.first().map_or(0, |v| v.len());
    (0..d)
        .map(|i| ks_gaussian(&a.iter().map(|v| v[i]).collect::<Vec<_>>()))
        .collect()
}

/// A sampled velocity path.
pub trait VelocityPath {
    fn times(&self) -> &[f64];
    fn velocities(&self) -> &[Vec<f64>];

    /// Index of the sample at time `t` (within a small tolerance).
    fn index_at(&self, t: f64) -> Option<usize> {
        let times = self.times();
        let tol = 1e-9 * (1.0 + t.abs());
        let k = times.partition_point(|&s| s < t - tol);
        (k < times.len() && (times[k] - t).abs() <= tol.max(1e-9 * times[k].abs())).then_some(k)
    }
}

impl VelocityPath for TrajectoryRecord {
    fn times(&self) -> &[f64] {
        &self.sample_times
    }

    fn velocities(&self) -> &[Vec<f64>] {
        &self.v_samples
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    pub times: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

impl VelocityPath for SampledPath {
    fn times(&self) -> &[f64] {
        &self.times
    }

    fn velocities(&self) -> &[Vec<f64>] {
        &self.v
    }
}

/// `f` and the past observables `g_i(V_{τ_i N})` of a martingale test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionBundle {
    pub f: TestFunction,
    pub g: Vec<(TestFunction, f64)>,
    pub tau_n: f64,
    pub tau_next: f64,
}

/// Nearest sample index to the microscopic time `t`, snapped to the grid.
fn snap<P: VelocityPath>(path: &P, t: f64) -> Result<usize> {
    let times = path.times();
    if times.is_empty() {
        return Err(Error::MissingData("empty path".into()));
    }
    let step = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
    if t < times[0] - 0.5 * step || t > times[times.len() - 1] + 0.5 * step {
        return Err(Error::OutOfRange(format!("time {t} outside the record")));
    }
    let k = times.partition_point(|&s| s < t);
    let k = if k == times.len() || (k > 0 && t - times[k - 1] < times[k] - t) {
        k - 1
    } else {
        k
    };
    Ok(k)
}

/// Per-path term `Π g_i · (f(V_b) - f(V_a) - N⁻¹ ∫_a^b ℒf)`.
pub fn martingale_term<P: VelocityPath>(
    path: &P,
    bundle: &TestFunctionBundle,
    table: &CoefficientTable,
    density: f64,
) -> Result<f64> {
    if bundle.tau_next < bundle.tau_n {
        return Err(invalid("tau", "tau_next must not precede tau_n"));
    }
    let v = path.velocities();
    let times = path.times();
    let mut weight = 1.0;
    for (g, tau) in &bundle.g {
        if *tau > bundle.tau_n + 1e-12 {
            return Err(invalid("tau", "past observables must precede tau_n"));
        }
        weight *= g.value(&v[snap(path, tau * density)?]);
    }
    let a = snap(path, bundle.tau_n * density)?;
    let b = snap(path, bundle.tau_next * density)?;
    let mut integral = 0.0;
    let mut prev = table.generator(&bundle.f, &v[a]);
    for k in a + 1..=b {
        let cur = table.generator(&bundle.f, &v[k]);
        integral += 0.5 * (times[k] - times[k - 1]) * (prev + cur);
        prev = cur;
    }
    Ok(weight * (bundle.f.value(&v[b]) - bundle.f.value(&v[a]) - integral / density))
}

pub fn martingale_terms<P: VelocityPath>(
    paths: &[P],
    bundle: &TestFunctionBundle,
    table: &CoefficientTable,
    density: f64,
) -> Result<Sample> {
    let mut s = Sample::default();
    for p in paths {
        s.push(martingale_term(p, bundle, table, density)?);
    }
    Ok(s)
}

pub fn martingale_residual<P: VelocityPath>(
    paths: &[P],
    bundle: &TestFunctionBundle,
    table: &CoefficientTable,
    density: f64,
) -> Result<Estimate> {
    Ok(martingale_terms(paths, bundle, table, density)?.estimate())
}

/// Time-translation-pooled `E|V_{s+g} - V_s|^p`, one value per trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IncrementMoments {
    pub p: u32,
    /// Gaps in microscopic time.
    pub gaps: Vec<f64>,
    pub per_gap: Vec<Sample>,
}

impl IncrementMoments {
    pub fn new(p: u32, gaps: Vec<f64>) -> Self {
        let n = gaps.len();
        Self {
            p,
            gaps,
            per_gap: vec![Sample::default(); n],
        }
    }

    /// Adds one path; gaps must be multiples of the sampling interval.
    pub fn add<P: VelocityPath>(&mut self, path: &P) -> Result<()> {
        let times = path.times();
        let v = path.velocities();
        if times.len() < 2 {
            return Err(Error::InsufficientSamples("path too short".into()));
        }
        let h = times[1] - times[0];
        for (gap, acc) in self.gaps.iter().zip(self.per_gap.iter_mut()) {
            let k = (gap / h).round() as usize;
            if k == 0 || (k as f64 * h - gap).abs() > 1e-6 * h || k >= times.len() {
                return Err(Error::OutOfRange(format!("gap {gap} not on the sample grid")));
            }
            let mut sum = 0.0;
            let count = times.len() - k;
            for s in 0..count {
                let d2: f64 = v[s + k].iter().zip(&v[s]).map(|(a, b)| (a - b) * (a - b)).sum();
                sum += d2.powf(0.5 * self.p as f64);
            }
            acc.push(sum / count as f64);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.per_gap.iter_mut().zip(&other.per_gap) {
            a.merge(b);
        }
    }

    pub fn estimates(&self) -> Vec<Estimate> {
        self.per_gap.iter().map(Sample::estimate).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub slope_se: f64,
    /// Intercept of `log E` against `log(gap / N)`.
    pub intercept: f64,
    pub points: usize,
}

/// Weighted least squares of `log E|ΔV|^p` against `log(gap/N)` over the gaps
/// in `[lo, hi]`.
pub fn increment_exponent(
    moments: &IncrementMoments,
    density: f64,
    lo: f64,
    hi: f64,
    min_samples: usize,
) -> Result<ExponentFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for (gap, e) in moments.gaps.iter().zip(moments.estimates()) {
        if *gap < lo || *gap > hi {
            continue;
        }
        if e.n < min_samples {
            return Err(Error::InsufficientSamples(format!(
                "{} trajectories, need {min_samples}",
                e.n
            )));
        }
        if !(e.mean > 0.0) {
            continue;
        }
        let rel = (e.se / e.mean).max(1e-12);
        xs.push((gap / density).ln());
        ys.push(e.mean.ln());
        ws.push(1.0 / (rel * rel));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples("need two gaps in range".into()));
    }
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| w * (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    Ok(ExponentFit {
        slope,
        slope_se: (1.0 / sxx).sqrt(),
        intercept: my - slope * mx,
        points: xs.len(),
    })
}

/// `α* = 1/(4(d+2)) + δ`.
pub fn alpha_star(d: usize, delta: f64) -> f64 {
    1.0 / (4.0 * (d as f64 + 2.0)) + delta
}

/// `β* = (2d²+5d+4)/(2(d+2)(d+4)) - δ`.
pub fn beta_star(d: usize, delta: f64) -> f64 {
    let d = d as f64;
    (2.0 * d * d + 5.0 * d + 4.0) / (2.0 * (d + 2.0) * (d + 4.0)) - delta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationParams {
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl FluctuationParams {
    pub fn starred(d: usize, delta: f64) -> Self {
        Self {
            delta,
            alpha: alpha_star(d, delta),
            beta: beta_star(d, delta),
        }
    }
}

/// Merge-invariant per-trajectory diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub density: f64,
    pub params: Option<FluctuationParams>,
    /// (a) `sup_{t,I} |N^{-1/2} Σ ∂_I Φ| / N^{δ/2}` per trajectory.
    pub pointwise_ratio: Sample,
    /// (b) `sup_t #interacting / N` per trajectory (empirical `C_int`).
    pub interacting_ratio: Sample,
    /// (c) `sup_t Σ (T_m ∧ N^{1/3})^k` over its scaling, `k = 1..6`.
    pub tm_ratios: Vec<Sample>,
    /// (d) `sup |N^{-1}∫_s^t Σ ∂_I Φ| / (√(|t-s|/N) N^α)` over `|t-s| ≤ N^β`.
    pub window_ratio: Sample,
}

impl FluctuationReport {
    pub fn merge(&mut self, other: &Self) {
        self.pointwise_ratio.merge(&other.pointwise_ratio);
        self.interacting_ratio.merge(&other.interacting_ratio);
        if self.tm_ratios.is_empty() {
            self.tm_ratios = vec![Sample::default(); other.tm_ratios.len()];
        }
        for (a, b) in self.tm_ratios.iter_mut().zip(&other.tm_ratios) {
            a.merge(b);
        }
        self.window_ratio.merge(&other.window_ratio);
        if self.params.is_none() {
            self.params = other.params;
            self.density = other.density;
        }
    }

    /// Fraction of trajectories with a ratio above one, with its Wilson
    /// interval.
    pub fn violation_fraction(sample: &Sample) -> (f64, (f64, f64)) {
        let n = sample.len() as u64;
        let k = sample.values.iter().filter(|&&r| r > 1.0).count() as u64;
        let frac = if n == 0 { 0.0 } else { k as f64 / n as f64 };
        (frac, wilson(k, n, 1.96))
    }
}

pub fn fluctuation_diagnostics(
    records: &[TrajectoryRecord],
    params: FluctuationParams,
) -> Result<FluctuationReport> {
    let mut report = FluctuationReport {
        params: Some(params),
        tm_ratios: vec![Sample::default(); 6],
        ..Default::default()
    };
    for r in records {
        let trace = r
            .trace
            .as_ref()
            .ok_or_else(|| Error::MissingData("record has no force trace".into()))?;
        let n = r.density;
        report.density = n;
        let sup = trace.sup_abs.iter().cloned().fold(0.0, f64::max);
        report
            .pointwise_ratio
            .push(sup / n.sqrt() / n.powf(0.5 * params.delta));
        report
            .interacting_ratio
            .push(trace.max_interacting as f64 / n);
        for (k, s) in trace.tm_power_sup.iter().enumerate() {
            let k1 = (k + 1) as f64;
            let scale = if k < 3 {
                n.powf(1.0 + params.delta)
            } else {
                n.powf(k1 / 3.0 + params.delta)
            };
            report.tm_ratios[k].push(s / scale);
        }
        let window = n.powf(params.beta);
        let times = &r.sample_times;
        let mut worst: f64 = 0.0;
        for a in 0..times.len() {
            for b in a + 1..times.len() {
                let gap = times[b] - times[a];
                if gap > window {
                    break;
                }
                let bound = (gap / n).sqrt() * n.powf(params.alpha);
                for (ca, cb) in trace.cumulative[a].iter().zip(&trace.cumulative[b]) {
                    worst = worst.max(((cb - ca) / n).abs() / bound);
                }
            }
        }
        report.window_ratio.push(worst);
    }
    Ok(report)
}

/// `γ_r = 1/4 + 1/36`.
pub const GAMMA_R: f64 = 0.25 + 1.0 / 36.0;

/// Interaction durations and recollisions for one density.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecollisionAccumulator {
    pub density: f64,
    pub first_interactions: u64,
    pub recollisions: u64,
    /// Closed, uncensored interactions.
    pub checked: u64,
    pub within_bound: u64,
    /// Interactions with `|v - V| < N^{-γ_r}`.
    pub slow: u64,
    pub ratio_histogram: Vec<u64>,
    pub hist_max: f64,
}

impl RecollisionAccumulator {
    pub fn new(density: f64, hist_max: f64, bins: usize) -> Self {
        Self {
            density,
            hist_max,
            ratio_histogram: vec![0; bins],
            ..Default::default()
        }
    }

    pub fn add_events(&mut self, events: &[InteractionEvent], c_t: f64) {
        let slow = self.density.powf(-GAMMA_R);
        let bins = self.ratio_histogram.len();
        for e in events {
            match e.kind {
                crate::engine::EventKind::FirstInteraction => self.first_interactions += 1,
                crate::engine::EventKind::Recollision => self.recollisions += 1,
            }
            if e.rel_speed < slow {
                self.slow += 1;
            }
            if let (Some(exit), false) = (e.exit, e.left_censored) {
                let ratio = (exit - e.entry) * e.rel_speed;
                self.checked += 1;
                if ratio <= c_t {
                    self.within_bound += 1;
                }
                if bins > 0 {
                    let bin = (ratio / self.hist_max * bins as f64).floor() as usize;
                    self.ratio_histogram[bin.min(bins - 1)] += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.first_interactions += other.first_interactions;
        self.recollisions += other.recollisions;
        self.checked += other.checked;
        self.within_bound += other.within_bound;
        self.slow += other.slow;
        for (a, b) in self.ratio_histogram.iter_mut().zip(&other.ratio_histogram) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecollisionRow {
    pub density: f64,
    pub interactions: u64,
    pub recollisions: u64,
    /// Recollisions per first interaction.
    pub frequency: f64,
    pub wilson: (f64, f64),
    pub within_fraction: f64,
    pub within_wilson: (f64, f64),
    pub slow_fraction: f64,
}

pub fn interaction_recollision_stats(accs: &[RecollisionAccumulator]) -> Vec<RecollisionRow> {
    accs.iter()
        .map(|a| {
            let n = a.first_interactions;
            RecollisionRow {
                density: a.density,
                interactions: n,
                recollisions: a.recollisions,
                frequency: if n == 0 { 0.0 } else { a.recollisions as f64 / n as f64 },
                wilson: wilson(a.recollisions, n, 1.96),
                within_fraction: if a.checked == 0 {
                    1.0
                } else {
                    a.within_bound as f64 / a.checked as f64
                },
                within_wilson: wilson(a.within_bound, a.checked, 1.96),
                slow_fraction: if n + a.recollisions == 0 {
                    0.0
                } else {
                    a.slow as f64 / (n + a.recollisions) as f64
                },
            }
        })
        .collect()
}

/// One row of a [`DiagnosticsReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub uncertainty: Option<f64>,
    pub p_value: Option<f64>,
    pub threshold: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub checks: Vec<Check>,
}

impl DiagnosticsReport {
    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn merge(&mut self, other: &Self) {
        self.checks.extend(other.checks.iter().cloned());
    }
}
