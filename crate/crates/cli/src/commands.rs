//! Subcommands. Each writes its artifacts atomically into the output
//! directory; CSV files start with one `#` provenance line.

use std::path::{Path, PathBuf};

use serde::Serialize;

use landau_core::engine::{classify_events, EventSummary, Counters, RATIO_BINS};
use landau_core::io::{csv_bytes, events_csv, fmt, samples_csv, to_json, write_atomic};
use landau_core::stats::{interaction_recollision_stats, Check, DiagnosticsReport};
use landau_core::Result;

use crate::checks;
use crate::config::RunConfig;
use crate::experiments::{self, EnsemblePlan, EnsembleStats, FitWindow};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Coeffs,
    Sde,
    Validate,
    Twin,
    Bounds,
    Sweep,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Simulate,
        Command::Coeffs,
        Command::Sde,
        Command::Validate,
        Command::Twin,
        Command::Bounds,
        Command::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Coeffs => "coeffs",
            Command::Sde => "sde",
            Command::Validate => "validate",
            Command::Twin => "twin",
            Command::Bounds => "bounds",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    provenance: &'a Provenance,
    result: &'a T,
}

/// Files written by one command, and whether its checks passed.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub all_pass: Option<bool>,
}

struct Output<'a> {
    dir: &'a Path,
    prov: Provenance,
    files: Vec<PathBuf>,
}

impl<'a> Output<'a> {
    fn new(dir: &'a Path, command: Command, cfg: &RunConfig) -> Self {
        Self {
            dir,
            prov: Provenance {
                command: command.name().into(),
                config_hash: cfg.hash(),
                seed: cfg.seed,
                version: VERSION.into(),
            },
            files: Vec::new(),
        }
    }

    fn csv(&mut self, name: &str, body: Vec<u8>) -> Result<()> {
        let p = &self.prov;
        let mut bytes = format!(
            "# command={} config_hash={} seed={} version={}\n",
            p.command, p.config_hash, p.seed, p.version
        )
        .into_bytes();
        bytes.extend(body);
        self.write(name, &bytes)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let bytes = to_json(&Envelope {
            provenance: &self.prov,
            result: value,
        })?;
        self.write(name, &bytes)
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write(name, text.as_bytes())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    fn report(&self, checks: Vec<Check>) -> DiagnosticsReport {
        DiagnosticsReport {
            config_hash: self.prov.config_hash.clone(),
            seed: self.prov.seed,
            version: self.prov.version.clone(),
            checks,
        }
    }

    fn finish(self, all_pass: Option<bool>) -> Outcome {
        Outcome {
            files: self.files,
            all_pass,
        }
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// Runs `command`; the caller owns the thread pool.
pub fn dispatch(command: Command, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    cfg.validate()?;
    let mut o = Output::new(out, command, cfg);
    o.text("config.toml", &cfg.canonical())?;
    match command {
        Command::Simulate => simulate(cfg, o),
        Command::Coeffs => coeffs(cfg, o),
        Command::Sde => sde(cfg, o),
        Command::Validate => validate(cfg, o),
        Command::Twin => twin(cfg, o),
        Command::Bounds => bounds(cfg, o),
        Command::Sweep => sweep(cfg, o),
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    density: f64,
    mode: String,
    trajectories: usize,
    events: EventSummary,
    counters: Vec<Counters>,
}

fn simulate(cfg: &RunConfig, mut o: Output) -> Result<Outcome> {
    let ec = cfg.engine_config(cfg.density, cfg.mode);
    let records = experiments::run_ensemble(&ec, cfg.seed, &o.prov.config_hash, 0..cfg.ensemble as u64)?;
    let c_t = cfg.diagnostics.c_t * cfg.potential.radius;
    let mut events = EventSummary::default();
    for r in &records {
        events.merge(&classify_events(&r.events, c_t, 4.0 * c_t).1);
    }
    o.csv("samples.csv", samples_csv(&records)?)?;
    o.csv("events.csv", events_csv(&records)?)?;
    let summary = SimulateSummary {
        density: cfg.density,
        mode: cfg.mode.to_string(),
        trajectories: records.len(),
        events,
        counters: records.iter().map(|r| r.counters.clone()).collect(),
    };
    o.json("summary.json", &summary)?;
    Ok(o.finish(None))
}

#[derive(Serialize)]
struct CoeffsReport {
    identities: landau_core::coefficients::IdentityReport,
    stationarity: Vec<experiments::StationarityRow>,
    truncation: experiments::TruncationRates,
    all_pass: bool,
}

fn coeffs(cfg: &RunConfig, mut o: Output) -> Result<Outcome> {
    let landau = experiments::landau(cfg)?;
    let table = experiments::coefficient_table(cfg, &landau)?;
    let rows = experiments::table_rows(&landau, &table);
    let body = csv_bytes(
        &header(&["speed", "a", "b", "lambda", "midpoint", "spline_error"]),
        rows.iter().map(|r| {
            vec![
                fmt(r.knot.speed),
                fmt(r.knot.a),
                fmt(r.knot.b),
                fmt(r.knot.lambda),
                fmt(r.midpoint),
                fmt(r.spline_error),
            ]
        }),
    )?;
    o.csv("coefficients.csv", body)?;
    let identities = experiments::identity_report(cfg, &landau, &cfg.identity_grid(), true)?;
    let stationarity = experiments::stationarity(cfg, &landau);
    let mut e1 = vec![0.0; cfg.dim];
    e1[0] = 1.0;
    let truncation = experiments::truncation_rates(&landau, &e1, 4.0, 64.0, 9);
    o.csv(
        "truncation.csv",
        csv_bytes(
            &header(&["t", "diffusion_deficit", "drift_deficit"]),
            (0..truncation.t.len()).map(|k| {
                vec![
                    fmt(truncation.t[k]),
                    fmt(truncation.diffusion_deficit[k]),
                    fmt(truncation.drift_deficit[k]),
                ]
            }),
        )?,
    )?;
    let all_pass = identities.all_pass() && stationarity.iter().all(|s| s.pass);
    o.json(
        "identities.json",
        &CoeffsReport {
            identities,
            stationarity,
            truncation,
            all_pass,
        },
    )?;
    Ok(o.finish(Some(all_pass)))
}

fn sde(cfg: &RunConfig, mut o: Output) -> Result<Outcome> {
    let landau = experiments::landau(cfg)?;
    let table = experiments::coefficient_table(cfg, &landau)?;
    let ens = experiments::sde_ensemble(cfg, &table, &cfg.sde.tau_grid)?;
    let d = cfg.dim;
    let mut cols = vec!["tau".to_string(), "path".to_string()];
    cols.extend((1..=d).map(|i| format!("v{i}")));
    let rows = ens.tau.iter().enumerate().flat_map(|(k, tau)| {
        ens.samples[k].iter().enumerate().map(move |(j, v)| {
            let mut row = vec![fmt(*tau), j.to_string()];
            row.extend(v.iter().map(|&x| fmt(x)));
            row
        })
    });
    o.csv("sde_samples.csv", csv_bytes(&cols, rows)?)?;
    Ok(o.finish(None))
}

fn marginals_csv(stats: &[EnsembleStats]) -> Result<Vec<u8>> {
    let d = stats
        .first()
        .and_then(|s| s.marginals.first())
        .and_then(|m| m.first())
        .map_or(0, |v| v.len());
    let mut cols = vec!["density".to_string(), "tau".to_string(), "trajectory".to_string()];
    cols.extend((1..=d).map(|i| format!("v{i}")));
    let rows = stats.iter().flat_map(|s| {
        s.tau_points.iter().enumerate().flat_map(move |(k, tau)| {
            s.marginals[k].iter().enumerate().map(move |(j, v)| {
                let mut row = vec![fmt(s.density), fmt(*tau), j.to_string()];
                row.extend(v.iter().map(|&x| fmt(x)));
                row
            })
        })
    });
    csv_bytes(&cols, rows)
}

fn increments_csv(stats: &[EnsembleStats]) -> Result<Vec<u8>> {
    let rows = stats.iter().flat_map(|s| {
        [&s.increments2, &s.increments4].into_iter().flat_map(move |m| {
            m.gaps.iter().zip(m.estimates()).map(move |(g, e)| {
                vec![
                    fmt(s.density),
                    m.p.to_string(),
                    fmt(*g),
                    fmt(g / s.density),
                    fmt(e.mean),
                    fmt(e.se),
                    e.n.to_string(),
                ]
            })
        })
    });
    csv_bytes(
        &header(&["density", "p", "gap", "gap_over_n", "mean", "se", "trajectories"]),
        rows,
    )
}

fn recollisions_csv(stats: &[EnsembleStats]) -> Result<Vec<u8>> {
    let accs: Vec<_> = stats.iter().map(|s| s.recollisions.clone()).collect();
    let rows = interaction_recollision_stats(&accs).into_iter().map(|r| {
        vec![
            fmt(r.density),
            r.interactions.to_string(),
            r.recollisions.to_string(),
            fmt(r.frequency),
            fmt(r.wilson.0),
            fmt(r.wilson.1),
            fmt(r.within_fraction),
            fmt(r.slow_fraction),
        ]
    });
    csv_bytes(
        &header(&[
            "density",
            "first_interactions",
            "recollisions",
            "frequency",
            "wilson_lo",
            "wilson_hi",
            "within_fraction",
            "slow_fraction",
        ]),
        rows,
    )
}

fn durations_csv(stats: &[EnsembleStats]) -> Result<Vec<u8>> {
    let rows = stats.iter().flat_map(|s| {
        let r = &s.recollisions;
        let w = r.hist_max / RATIO_BINS as f64;
        r.ratio_histogram.iter().enumerate().map(move |(k, c)| {
            vec![fmt(s.density), fmt(k as f64 * w), fmt((k + 1) as f64 * w), c.to_string()]
        })
    });
    csv_bytes(&header(&["density", "ratio_lo", "ratio_hi", "count"]), rows)
}

fn checks_csv(checks: &[Check]) -> Result<Vec<u8>> {
    let opt = |x: Option<f64>| x.map(fmt).unwrap_or_default();
    csv_bytes(
        &header(&["name", "statistic", "uncertainty", "p_value", "threshold", "pass"]),
        checks.iter().map(|c| {
            vec![
                c.name.clone(),
                fmt(c.statistic),
                opt(c.uncertainty),
                opt(c.p_value),
                c.threshold.clone(),
                c.pass.to_string(),
            ]
        }),
    )
}

fn write_ensemble_tables(o: &mut Output, stats: &[EnsembleStats], checks: &[Check]) -> Result<()> {
    o.csv("marginals.csv", marginals_csv(stats)?)?;
    o.csv("increments.csv", increments_csv(stats)?)?;
    o.csv("recollisions.csv", recollisions_csv(stats)?)?;
    o.csv("durations.csv", durations_csv(stats)?)?;
    o.csv("checks.csv", checks_csv(checks)?)?;
    Ok(())
}

fn validate(cfg: &RunConfig, mut o: Output) -> Result<Outcome> {
    let landau = experiments::landau(cfg)?;
    let table = experiments::coefficient_table(cfg, &landau)?;
    let plan = EnsemblePlan::new(cfg, cfg.density, cfg.mode);
    let stats = experiments::ensemble_stats(&plan, &table, cfg.seed, &o.prov.config_hash)?;
    let sde = experiments::sde_ensemble(cfg, &table, &plan.tau_points)?;
    let checks = checks::density_checks(cfg, &stats, &sde)?;
    write_ensemble_tables(&mut o, std::slice::from_ref(&stats), &checks)?;
    let report = o.report(checks);
    let pass = report.all_pass();
    o.json("report.json", &report)?;
    Ok(o.finish(Some(pass)))
}

fn twin(cfg: &RunConfig, mut o: Output) -> Result<Outcome> {
    let window = FitWindow {
        lo: cfg.twin.fit_lo,
        hi: cfg.twin.fit_hi,
    };
    let suite = experiments::twin_suite(
        cfg,
        cfg.density,
        &cfg.twin.selector,
        cfg.twin.runs,
        window,
        &o.prov.config_hash,
    )?;
    let opt = |x: Option<f64>| x.map(fmt).unwrap_or_default();
    let rows = suite.runs.iter().map(|r| {
        vec![
            r.index.to_string(),
            r.selected.to_string(),
            fmt(r.sigma_plus),
            fmt(r.rel_speed),
            opt(r.slope),
            opt(r.amplitude),
            opt(r.dv_at_5tm),
            opt(r.dv_corrected_at_5tm),
        ]
    });
    o.csv(
        "twin.csv",
        csv_bytes(
            &header(&[
                "run",
                "particle",
                "sigma_plus",
                "rel_speed",
                "slope",
                "amplitude",
                "dv_at_5tm",
                "dv_corrected_at_5tm",
            ]),
            rows,
        )?,
    )?;
    let mut checks = checks::twin_slope_checks(cfg, std::slice::from_ref(&suite));
    checks.push(checks::twin_correction_check(cfg, &suite));
    let report = o.report(checks);
    let pass = report.all_pass();
    o.json("report.json", &report)?;
    Ok(o.finish(Some(pass)))
}

fn bounds(cfg: &RunConfig, mut o: Output) -> Result<Outcome> {
    let suite = experiments::bounds_suite(cfg)?;
    let rows = suite.problems.iter().map(|p| {
        vec![
            p.index.to_string(),
            fmt(p.c_a),
            fmt(p.simple.c_hat),
            fmt(p.simple.c_hat_half),
            fmt(p.simple_constant),
            fmt(p.averaged.c_hat),
            fmt(p.averaged.c_hat_half),
            fmt(p.peano.difference),
            fmt(p.peano.tolerance),
        ]
    });
    o.csv(
        "bounds.csv",
        csv_bytes(
            &header(&[
                "problem",
                "c_a",
                "simple_c_hat",
                "simple_c_hat_half",
                "simple_constant",
                "averaged_c_hat",
                "averaged_c_hat_half",
                "peano_difference",
                "peano_tolerance",
            ]),
            rows,
        )?,
    )?;
    let checks = bounds_checks(cfg, &suite);
    let report = o.report(checks);
    let pass = report.all_pass();
    #[derive(Serialize)]
    struct BoundsReport<'a> {
        suite: &'a experiments::BoundsSuite,
        report: &'a DiagnosticsReport,
    }
    o.json(
        "bounds.json",
        &BoundsReport {
            suite: &suite,
            report: &report,
        },
    )?;
    Ok(o.finish(Some(pass)))
}

/// Pass/fail rows of the bounds suite.
pub fn bounds_checks(cfg: &RunConfig, suite: &experiments::BoundsSuite) -> Vec<Check> {
    let b = &cfg.bounds;
    let c = &suite.cosh;
    let mut out = vec![
        Check {
            name: "cosh_benchmark".into(),
            statistic: c.relative_error,
            uncertainty: Some(c.solver_error),
            p_value: None,
            threshold: format!("relative error <= {}", b.cosh_tolerance),
            pass: c.relative_error <= b.cosh_tolerance,
        },
        Check {
            name: "cosh_simple_constant".into(),
            statistic: c.report.c_hat,
            uncertainty: None,
            p_value: None,
            threshold: format!("<= {}", c.constant),
            pass: c.report.hypotheses_ok && c.report.c_hat <= c.constant,
        },
    ];
    let count = |f: &dyn Fn(&experiments::ProblemCheck) -> bool| {
        suite.problems.iter().filter(|p| f(p)).count()
    };
    let n = suite.problems.len();
    let simple_ok = count(&|p| {
        p.simple.hypotheses_ok && p.simple.c_hat <= p.simple_constant && p.simple.stable(b.stability)
    });
    let averaged_ok = count(&|p| p.averaged.hypotheses_ok && p.averaged.stable(b.stability));
    let peano_ok = count(&|p| p.peano.difference <= p.peano.tolerance);
    let worst = |f: &dyn Fn(&experiments::ProblemCheck) -> f64| {
        suite.problems.iter().map(f).fold(0.0, f64::max)
    };
    out.push(Check {
        name: "simple_bound_problems".into(),
        statistic: worst(&|p| p.simple.c_hat),
        uncertainty: None,
        p_value: None,
        threshold: format!(
            "all {n}: hypotheses hold, c_hat <= explicit constant, c_hat <= {} c_hat(T/2)",
            b.stability
        ),
        pass: simple_ok == n,
    });
    out.push(Check {
        name: "averaged_bound_problems".into(),
        statistic: worst(&|p| p.averaged.c_hat),
        uncertainty: None,
        p_value: None,
        threshold: format!("all {n}: hypotheses hold, c_hat <= {} c_hat(T/2)", b.stability),
        pass: averaged_ok == n,
    });
    out.push(Check {
        name: "peano_baker_vs_rk4".into(),
        statistic: worst(&|p| p.peano.difference / p.peano.tolerance.max(f64::MIN_POSITIVE)),
        uncertainty: None,
        p_value: None,
        threshold: format!("all {n}: difference <= tail + quadrature + solver tolerance"),
        pass: peano_ok == n,
    });
    out
}

/// Runs the density sweep and returns the per-density statistics with the
/// combined report.
pub fn sweep_stats(
    cfg: &RunConfig,
    hash: &str,
) -> Result<(Vec<EnsembleStats>, landau_core::sde::SdeEnsemble, Vec<Check>)> {
    let landau = experiments::landau(cfg)?;
    let table = experiments::coefficient_table(cfg, &landau)?;
    let mut densities = cfg.sweep.densities.clone();
    densities.sort_by(f64::total_cmp);
    let mut all = Vec::new();
    let mut plans = Vec::new();
    for &n in &densities {
        let plan = EnsemblePlan::new(cfg, n, cfg.mode);
        all.push(experiments::ensemble_stats(&plan, &table, cfg.seed, hash)?);
        plans.push(plan);
    }
    let sde = experiments::sde_ensemble(cfg, &table, &plans[0].tau_points)?;
    let mut checks = Vec::new();
    for s in &all {
        checks.extend(checks::marginal_checks(cfg, s, &sde)?);
        if cfg.initial == landau_core::G0::One {
            checks.extend(checks::stationarity_checks(cfg, s)?);
        }
        checks.extend(checks::martingale_checks(cfg, s));
    }
    checks.extend(checks::sweep_checks(cfg, &all, &sde)?);
    Ok((all, sde, checks))
}

fn sweep(cfg: &RunConfig, mut o: Output) -> Result<Outcome> {
    let (stats, _, checks) = sweep_stats(cfg, &o.prov.config_hash)?;
    write_ensemble_tables(&mut o, &stats, &checks)?;
    let report = o.report(checks);
    let pass = report.all_pass();
    o.json("report.json", &report)?;
    Ok(o.finish(Some(pass)))
}
