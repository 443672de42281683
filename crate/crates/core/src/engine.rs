//! Trajectory driver: lifecycle of background particles, event log,
//! sampling, and twin runs with one particle's influence removed.
//!
//! Two modes share the same machinery. On the full torus every particle is
//! present from the start; those farther than `R_act` from the tagged
//! particle are dormant. In reservoir mode only a ball around the tagged
//! particle is populated and the rest of the gas enters through the
//! co-moving sphere of radius `R_act` with the exact Maxwellian flux.
//! Modified particles leaving `R_out` stay dormant so that returns are seen
//! exactly; unmodified ones are dropped and stand in for the reservoir.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::dynamics::{norm2, to_point, Geometry, Point, Status, SystemState, MAX_DIM};
use crate::ensemble::{
    sample_ball_configuration, sample_influx, sample_initial_configuration, InitialConfiguration,
    InitialLaw,
};
use crate::error::{invalid, Error, Result};
use crate::potential::{symmetric_multi_indices, PotentialSpec};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FullTorus,
    Reservoir,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::FullTorus => "full_torus",
            Mode::Reservoir => "reservoir",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub spec: PotentialSpec,
    pub density: f64,
    pub mode: Mode,
    /// Torus side `L` (full-torus mode only).
    pub torus_side: f64,
    pub dt: f64,
    /// Microscopic horizon `T`.
    pub horizon: f64,
    /// Steps between samples.
    pub stride: usize,
    /// Reference speed sizing the activation margins.
    pub v_ref: f64,
    /// Added to `|V|` for the speed bound of the re-entry scheduler.
    pub v_slack: f64,
    pub particle_cap: usize,
    pub law: InitialLaw,
    /// Accumulate `Σ ∂_I Φ` sums for the fluctuation diagnostics.
    pub diagnostics: bool,
    /// Exit-time factor `c` of the recollision gap `c R / u`.
    pub exit_factor: f64,
}

impl EngineConfig {
    pub fn new(spec: PotentialSpec, density: f64, mode: Mode) -> Self {
        let v_ref = 4.0;
        Self {
            spec,
            density,
            mode,
            torus_side: 8.0 * spec.radius,
            dt: spec.radius / (20.0 * v_ref),
            horizon: 0.5 * density,
            stride: 10,
            v_ref,
            v_slack: 2.0,
            particle_cap: 1_000_000,
            law: InitialLaw::stationary(spec.dim),
            diagnostics: false,
            exit_factor: 6.0,
        }
    }

    pub fn r_act(&self) -> f64 {
        self.spec.radius + 4.0 * self.dt * self.v_ref
    }

    pub fn r_out(&self) -> f64 {
        self.r_act() + 2.0 * self.dt * self.v_ref
    }

    pub fn steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let d = self.spec.dim;
        if !(2..=MAX_DIM).contains(&d) {
            return Err(invalid("dim", format!("must be in 2..={MAX_DIM}")));
        }
        if !(self.density >= 1.0) {
            return Err(invalid("density", "N must be at least 1"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.horizon > 0.0) {
            return Err(invalid("horizon", "must be positive"));
        }
        if self.stride == 0 {
            return Err(invalid("stride", "must be positive"));
        }
        if !(self.v_ref > 0.0) || !(self.v_slack > 0.0) {
            return Err(invalid("v_ref", "speeds must be positive"));
        }
        if self.law.dim != d {
            return Err(invalid("initial_law", "dimension mismatch"));
        }
        if self.mode == Mode::FullTorus && !(self.torus_side > 4.0 * self.spec.radius) {
            return Err(invalid("torus_side", "L must exceed 4R"));
        }
        if self.mode == Mode::FullTorus && self.torus_side <= 2.0 * self.r_out() {
            return Err(invalid("torus_side", "L must exceed twice the outer radius"));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        match self.mode {
            Mode::FullTorus => Geometry::Torus {
                side: self.torus_side,
            },
            Mode::Reservoir => Geometry::Free,
        }
    }
}

/// Provenance attached to a record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub index: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FirstInteraction,
    Recollision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub particle: u64,
    pub entry: f64,
    pub exit: Option<f64>,
    /// `|v - V|` at entry.
    pub rel_speed: f64,
    pub kind: EventKind,
    /// The particle was already inside at `t = 0`.
    pub left_censored: bool,
    /// Periodic image through which the interaction happens.
    pub image: [i32; MAX_DIM],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub initial: u64,
    pub injected: u64,
    pub retired: u64,
    pub demoted: u64,
    pub promoted: u64,
    pub reentry_checks: u64,
    pub bound_rebuilds: u64,
    pub max_active: u64,
    pub max_live: u64,
    /// Particles with `|v| > N^{1/2}` at creation.
    pub cutoff_violations: u64,
}

/// Running sums `Σ_i ∂_I Φ(X - x_i)` over interacting particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceTrace {
    pub multi_indices: Vec<Vec<usize>>,
    /// `sup_t |Σ_i ∂_I Φ|` per multi-index.
    pub sup_abs: Vec<f64>,
    /// `∫_0^t Σ_i ∂_I Φ` at the sample times.
    pub cumulative: Vec<Vec<f64>>,
    /// Number of particles inside `B(X, R)` at the sample times.
    pub interacting: Vec<u64>,
    pub max_interacting: u64,
    /// `sup_t Σ_i (T_m ∧ N^{1/3})^k` over interacting particles, `k = 1..6`.
    pub tm_power_sup: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub mode: Mode,
    pub dim: usize,
    pub density: f64,
    pub dt: f64,
    pub horizon: f64,
    pub meta: RunMeta,
    pub sample_times: Vec<f64>,
    pub x_samples: Vec<Vec<f64>>,
    pub v_samples: Vec<Vec<f64>>,
    /// Total energy at the sample times (full-torus mode only).
    pub energy: Vec<f64>,
    pub events: Vec<InteractionEvent>,
    pub trace: Option<ForceTrace>,
    pub counters: Counters,
}

impl TrajectoryRecord {
    /// Index of the last sample at or before `t`.
    pub fn sample_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.dt;
        match self.sample_times.partition_point(|&s| s <= t + tol) {
            0 => None,
            k => Some(k - 1),
        }
    }
}

/// Earliest time a dormant particle at distance `dist` could reach `r_act`
/// when the closing speed is at most `speed + v_bound`.
pub fn schedule_reentry(t: f64, dist: f64, speed: f64, v_bound: f64, r_act: f64) -> f64 {
    t + ((dist - r_act).max(0.0)) / (speed + v_bound)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scheduled {
    t: f64,
    slot: usize,
    generation: u32,
}

impl Eq for Scheduled {}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.slot.cmp(&other.slot))
            .then(self.generation.cmp(&other.generation))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Track {
    inside: bool,
    last_event: Option<usize>,
}

#[derive(Debug, Clone)]
struct TraceAcc {
    indices: Vec<Vec<usize>>,
    sup_abs: Vec<f64>,
    running: Vec<f64>,
    last: Vec<f64>,
    cumulative: Vec<Vec<f64>>,
    interacting: Vec<u64>,
    max_interacting: u64,
    tm_power_sup: [f64; 6],
}

/// One trajectory in progress.
#[derive(Debug, Clone)]
pub struct Engine {
    pub config: EngineConfig,
    pub state: SystemState,
    pub meta: RunMeta,
    rng: Rng,
    heap: BinaryHeap<Reverse<Scheduled>>,
    v_bound: f64,
    tracks: Vec<Track>,
    events: Vec<InteractionEvent>,
    steps: u64,
    sample_times: Vec<f64>,
    x_samples: Vec<Vec<f64>>,
    v_samples: Vec<Vec<f64>>,
    energy: Vec<f64>,
    counters: Counters,
    trace: Option<TraceAcc>,
}

impl Engine {
    /// Samples initial data for the configured mode.
    pub fn new(config: &EngineConfig, meta: RunMeta, mut rng: Rng) -> Result<Self> {
        config.validate()?;
        match config.mode {
            Mode::FullTorus => {
                let init = sample_initial_configuration(
                    &config.spec,
                    &config.law,
                    config.torus_side,
                    config.density,
                    &mut rng,
                )?;
                Self::from_initial(config, meta, &init, rng)
            }
            Mode::Reservoir => {
                let d = config.spec.dim;
                let v = config.law.sample_velocity(&mut rng)?;
                let ball =
                    sample_ball_configuration(&config.spec, config.density, config.r_act(), &mut rng)?;
                let init = InitialConfiguration {
                    tagged_x: vec![0.0; d],
                    tagged_v: v,
                    background: ball,
                    torus_side: f64::INFINITY,
                    density: config.density,
                };
                Self::from_initial(config, meta, &init, rng)
            }
        }
    }

    /// Starts from given initial data (positions absolute).
    pub fn from_initial(
        config: &EngineConfig,
        meta: RunMeta,
        init: &InitialConfiguration,
        rng: Rng,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.spec.dim;
        let mut state =
            SystemState::new(d, config.geometry(), config.density, config.spec.radius)?;
        state.x = to_point(&init.tagged_x);
        state.v = to_point(&init.tagged_v);
        let v_bound = norm2(&state.v, d).sqrt() + config.v_slack;
        let mut engine = Self {
            config: config.clone(),
            state,
            meta,
            rng,
            heap: BinaryHeap::new(),
            v_bound,
            tracks: Vec::new(),
            events: Vec::new(),
            steps: 0,
            sample_times: Vec::new(),
            x_samples: Vec::new(),
            v_samples: Vec::new(),
            energy: Vec::new(),
            counters: Counters::default(),
            trace: None,
        };
        if config.diagnostics {
            let mut indices = Vec::new();
            for order in 1..=3 {
                indices.extend(symmetric_multi_indices(d, order));
            }
            let n = indices.len();
            engine.trace = Some(TraceAcc {
                indices,
                sup_abs: vec![0.0; n],
                running: vec![0.0; n],
                last: vec![0.0; n],
                cumulative: Vec::new(),
                interacting: Vec::new(),
                max_interacting: 0,
                tm_power_sup: [0.0; 6],
            });
        }
        let r_act = config.r_act();
        for p in &init.background {
            let slot = engine.state.add_particle(to_point(&p.x), to_point(&p.v), false);
            engine.note_new_particle(slot);
            engine.counters.initial += 1;
            if engine.state.distance(slot) <= r_act {
                engine.state.activate(slot);
            } else {
                engine.schedule(slot);
            }
        }
        engine.check_cap()?;
        engine.state.compute_forces(&config.spec);
        // interactions already under way at t = 0
        let t = engine.state.t;
        for &slot in &engine.state.active.clone() {
            if engine.state.distance(slot) < config.spec.radius {
                engine.open_event(slot, t, true);
            }
        }
        engine.update_trace();
        engine.sample();
        Ok(engine)
    }

    fn note_new_particle(&mut self, slot: usize) {
        if self.tracks.len() <= slot {
            self.tracks.resize(slot + 1, Track::default());
        }
        self.tracks[slot] = Track::default();
        let d = self.state.dim;
        if norm2(&self.state.particles[slot].v, d) > self.config.density {
            self.counters.cutoff_violations += 1;
        }
    }

    fn check_cap(&mut self) -> Result<()> {
        let live = self.state.live_count() as u64;
        self.counters.max_live = self.counters.max_live.max(live);
        self.counters.max_active = self.counters.max_active.max(self.state.active.len() as u64);
        if live as usize > self.config.particle_cap {
            return Err(Error::ParticleCap {
                count: live as usize,
                cap: self.config.particle_cap,
            });
        }
        Ok(())
    }

    fn schedule(&mut self, slot: usize) {
        let d = self.state.dim;
        let p = &self.state.particles[slot];
        let speed = norm2(&p.v, d).sqrt();
        let generation = p.generation;
        let dist = self.state.distance(slot);
        let t = schedule_reentry(self.state.t, dist, speed, self.v_bound, self.config.r_act());
        self.heap.push(Reverse(Scheduled {
            t,
            slot,
            generation,
        }));
    }

    fn rebuild_schedule(&mut self) {
        self.counters.bound_rebuilds += 1;
        self.heap.clear();
        for slot in 0..self.state.particles.len() {
            if self.state.particles[slot].status == Status::Dormant {
                self.schedule(slot);
            }
        }
    }

    fn promote(&mut self) {
        let r_act = self.config.r_act();
        while let Some(Reverse(top)) = self.heap.peek().copied() {
            if top.t > self.state.t {
                break;
            }
            self.heap.pop();
            let p = &self.state.particles[top.slot];
            if p.status != Status::Dormant || p.generation != top.generation {
                continue;
            }
            self.counters.reentry_checks += 1;
            if self.state.distance(top.slot) <= r_act {
                self.state.activate(top.slot);
                self.counters.promoted += 1;
            } else {
                self.schedule(top.slot);
            }
        }
    }

    fn inject(&mut self) -> Result<()> {
        let d = self.state.dim;
        let v_tag = self.state.v[..d].to_vec();
        let batch = sample_influx(
            &v_tag,
            self.config.r_act(),
            self.config.dt,
            self.config.density,
            &mut self.rng,
        )?;
        for inj in batch {
            let mut x = self.state.x;
            for k in 0..d {
                x[k] += inj.offset[k];
            }
            let slot = self.state.add_particle(x, to_point(&inj.v), true);
            self.note_new_particle(slot);
            self.counters.injected += 1;
        }
        Ok(())
    }

    fn demote(&mut self) {
        let r_out2 = self.config.r_out().powi(2);
        let d = self.state.dim;
        let mut leaving = Vec::new();
        for &slot in &self.state.active {
            if norm2(&self.state.separation(slot), d) > r_out2 {
                leaving.push(slot);
            }
        }
        // fixed order independent of the active-list permutation
        leaving.sort_unstable();
        for slot in leaving {
            let keep = self.config.mode == Mode::FullTorus || self.state.particles[slot].modified;
            if keep {
                self.state.make_dormant(slot);
                self.counters.demoted += 1;
                self.schedule(slot);
            } else {
                self.state.retire(slot);
                self.counters.retired += 1;
            }
        }
    }

    fn open_event(&mut self, slot: usize, t: f64, left_censored: bool) {
        let d = self.state.dim;
        let p = &self.state.particles[slot];
        let mut rel = [0.0; MAX_DIM];
        for k in 0..d {
            rel[k] = p.v[k] - self.state.v[k];
        }
        let u = norm2(&rel, d).sqrt();
        let id = p.id;
        let image = self
            .state
            .geometry
            .image(&self.state.x, &self.state.position(slot), d);
        let radius = self.config.spec.radius;
        let track = &mut self.tracks[slot];
        track.inside = true;
        if self.state.particles[slot].sigma_entry.is_none() {
            self.state.particles[slot].sigma_entry = Some(t);
        }
        if let Some(e) = track.last_event {
            let prev = &mut self.events[e];
            if prev.image == image {
                if t - prev.entry < self.config.exit_factor * radius / prev.rel_speed {
                    prev.exit = None;
                    return;
                }
                self.events.push(InteractionEvent {
                    particle: id,
                    entry: t,
                    exit: None,
                    rel_speed: u,
                    kind: EventKind::Recollision,
                    left_censored,
                    image,
                });
                track.last_event = Some(self.events.len() - 1);
                return;
            }
        }
        self.events.push(InteractionEvent {
            particle: id,
            entry: t,
            exit: None,
            rel_speed: u,
            kind: EventKind::FirstInteraction,
            left_censored,
            image,
        });
        track.last_event = Some(self.events.len() - 1);
    }

    fn update_events(&mut self) {
        let r2 = self.config.spec.radius.powi(2);
        let d = self.state.dim;
        let t = self.state.t;
        let mut changes = Vec::new();
        for &slot in &self.state.active {
            let inside = norm2(&self.state.separation(slot), d) < r2;
            if inside != self.tracks[slot].inside {
                changes.push((slot, inside));
            }
        }
        changes.sort_unstable_by_key(|c| c.0);
        for (slot, inside) in changes {
            if inside {
                self.open_event(slot, t, false);
            } else {
                self.tracks[slot].inside = false;
                if let Some(e) = self.tracks[slot].last_event {
                    self.events[e].exit = Some(t);
                }
            }
        }
    }

    fn update_trace(&mut self) {
        let Some(acc) = self.trace.as_mut() else {
            return;
        };
        let d = self.state.dim;
        let spec = &self.config.spec;
        let mut sums = vec![0.0; acc.indices.len()];
        let mut count = 0u64;
        let mut tm_powers = [0.0; 6];
        let tm_cap = self.config.density.cbrt();
        let mut interacting = self.state.interacting.clone();
        interacting.sort_unstable();
        for slot in interacting {
            count += 1;
            let mut rel = [0.0; MAX_DIM];
            for k in 0..d {
                rel[k] = self.state.particles[slot].v[k] - self.state.v[k];
            }
            let tm = (1.0 / norm2(&rel, d).sqrt()).min(tm_cap);
            let mut pow = 1.0;
            for t in tm_powers.iter_mut() {
                pow *= tm;
                *t += pow;
            }
            let x = self.state.separation(slot);
            let s = norm2(&x, d);
            let f1 = spec.profile_derivative(1, s);
            let f2 = spec.profile_derivative(2, s);
            let f3 = spec.profile_derivative(3, s);
            for (sum, idx) in sums.iter_mut().zip(&acc.indices) {
                *sum += match idx.as_slice() {
                    [i] => 2.0 * f1 * x[*i],
                    [i, j] => 4.0 * f2 * x[*i] * x[*j] + if i == j { 2.0 * f1 } else { 0.0 },
                    [i, j, k] => {
                        let dl = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                        8.0 * f3 * x[*i] * x[*j] * x[*k]
                            + 4.0 * f2 * (dl(*i, *j) * x[*k] + dl(*i, *k) * x[*j] + dl(*j, *k) * x[*i])
                    }
                    _ => 0.0,
                };
            }
        }
        let first = self.steps == 0;
        for (k, &s) in sums.iter().enumerate() {
            acc.sup_abs[k] = acc.sup_abs[k].max(s.abs());
            if !first {
                acc.running[k] += 0.5 * self.config.dt * (acc.last[k] + s);
            }
            acc.last[k] = s;
        }
        acc.max_interacting = acc.max_interacting.max(count);
        for (s, t) in acc.tm_power_sup.iter_mut().zip(tm_powers) {
            *s = s.max(t);
        }
        if self.steps % self.config.stride as u64 == 0 {
            acc.cumulative.push(acc.running.clone());
            acc.interacting.push(count);
        }
    }

    fn sample(&mut self) {
        let d = self.state.dim;
        let x = self.state.geometry.canonical_point(&self.state.x, d);
        self.sample_times.push(self.state.t);
        self.x_samples.push(x[..d].to_vec());
        self.v_samples.push(self.state.v[..d].to_vec());
        if self.config.mode == Mode::FullTorus {
            self.energy.push(self.state.hamiltonian(&self.config.spec));
        }
    }

    /// Advances by one step.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.config.dt;
        let d = self.state.dim;
        self.state.kick(0.5 * dt);
        self.state.drift(dt);
        self.steps += 1;
        self.state.t = self.steps as f64 * dt;
        if norm2(&self.state.v, d).sqrt() > self.v_bound {
            self.v_bound = norm2(&self.state.v, d).sqrt() + self.config.v_slack;
            self.rebuild_schedule();
        }
        self.promote();
        if self.config.mode == Mode::Reservoir {
            self.inject()?;
        }
        self.demote();
        self.check_cap()?;
        self.state.refresh_cells();
        self.state.compute_forces(&self.config.spec);
        self.state.kick(0.5 * dt);
        self.update_events();
        self.update_trace();
        if self.steps % self.config.stride as u64 == 0 {
            self.sample();
        }
        Ok(())
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    pub fn events(&self) -> &[InteractionEvent] {
        &self.events
    }

    pub fn v_bound(&self) -> f64 {
        self.v_bound
    }

    /// Slot of the particle with the given id, if it is still tracked.
    pub fn slot_of(&self, id: u64) -> Option<usize> {
        self.state
            .particles
            .iter()
            .position(|p| p.id == id && p.status != Status::Retired)
    }

    pub fn finish(self) -> TrajectoryRecord {
        let trace = self.trace.map(|acc| ForceTrace {
            multi_indices: acc.indices,
            sup_abs: acc.sup_abs,
            cumulative: acc.cumulative,
            interacting: acc.interacting,
            max_interacting: acc.max_interacting,
            tm_power_sup: acc.tm_power_sup,
        });
        TrajectoryRecord {
            mode: self.config.mode,
            dim: self.state.dim,
            density: self.config.density,
            dt: self.config.dt,
            horizon: self.config.horizon,
            meta: self.meta,
            sample_times: self.sample_times,
            x_samples: self.x_samples,
            v_samples: self.v_samples,
            energy: self.energy,
            events: self.events,
            trace,
            counters: self.counters,
        }
    }
}

pub fn run_trajectory(config: &EngineConfig, meta: RunMeta, rng: Rng) -> Result<TrajectoryRecord> {
    let mut engine = Engine::new(config, meta, rng)?;
    let steps = config.steps();
    while engine.steps_taken() < steps {
        engine.step()?;
    }
    Ok(engine.finish())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotatedEvent {
    pub event: InteractionEvent,
    pub duration: Option<f64>,
    /// `T_m = 1/u`.
    pub t_m: f64,
    /// `duration ≤ c_T T_m`; `None` while the interaction is still open.
    pub within_bound: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventSummary {
    pub events: u64,
    pub first_interactions: u64,
    pub recollisions: u64,
    pub left_censored: u64,
    pub open: u64,
    /// Closed, uncensored interactions checked against the bound.
    pub checked: u64,
    pub within_bound: u64,
    /// Histogram of `duration / T_m` on `[0, hist_max)` (last bin collects overflow).
    pub ratio_histogram: Vec<u64>,
    pub hist_max: f64,
}

impl EventSummary {
    pub fn merge(&mut self, other: &Self) {
        self.events += other.events;
        self.first_interactions += other.first_interactions;
        self.recollisions += other.recollisions;
        self.left_censored += other.left_censored;
        self.open += other.open;
        self.checked += other.checked;
        self.within_bound += other.within_bound;
        if self.ratio_histogram.is_empty() {
            self.ratio_histogram = vec![0; other.ratio_histogram.len()];
            self.hist_max = other.hist_max;
        }
        for (a, b) in self.ratio_histogram.iter_mut().zip(&other.ratio_histogram) {
            *a += b;
        }
    }

    pub fn within_fraction(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.within_bound as f64 / self.checked as f64
        }
    }
}

pub const RATIO_BINS: usize = 48;

/// Durations against `c_T T_m`, with `c_T` a length (default `12 R`).
pub fn classify_events(
    events: &[InteractionEvent],
    c_t: f64,
    hist_max: f64,
) -> (Vec<AnnotatedEvent>, EventSummary) {
    let mut summary = EventSummary {
        ratio_histogram: vec![0; RATIO_BINS],
        hist_max,
        ..Default::default()
    };
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        summary.events += 1;
        match e.kind {
            EventKind::FirstInteraction => summary.first_interactions += 1,
            EventKind::Recollision => summary.recollisions += 1,
        }
        if e.left_censored {
            summary.left_censored += 1;
        }
        let duration = e.exit.map(|x| x - e.entry);
        if duration.is_none() {
            summary.open += 1;
        }
        let t_m = 1.0 / e.rel_speed;
        let within_bound = duration.map(|dur| dur <= c_t * t_m);
        if let (Some(dur), false) = (duration, e.left_censored) {
            summary.checked += 1;
            if dur <= c_t * t_m {
                summary.within_bound += 1;
            }
            let ratio = dur / t_m;
            let bin = ((ratio / hist_max) * RATIO_BINS as f64).floor() as usize;
            summary.ratio_histogram[bin.min(RATIO_BINS - 1)] += 1;
        }
        out.push(AnnotatedEvent {
            event: e.clone(),
            duration,
            t_m,
            within_bound,
        });
    }
    (out, summary)
}

/// Which particle the barred run removes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selector {
    /// Lowest-id particle inside at `t = 0` with `|X - x| ∈ [r_min, r_max]·R`
    /// and relative speed in `[u_min, u_max]`.
    InsideBand {
        r_min: f64,
        r_max: f64,
        u_min: f64,
        u_max: f64,
    },
    /// First particle entering `B(X, R)` after `t = 0` with relative speed in
    /// `[u_min, u_max]`.
    FirstEntrant { u_min: f64, u_max: f64 },
    Id { id: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwinResult {
    pub selected: u64,
    /// `σ⁺₁`: entry time of the removed particle, `0` if it starts inside.
    pub sigma_plus: f64,
    pub rel_speed: f64,
    pub times: Vec<f64>,
    /// `|X_t - X̄_t|`
    pub dx: Vec<f64>,
    /// `|V_t - V̄_t|`
    pub dv: Vec<f64>,
    /// `|X_t - X̄_t + N⁻¹ ∫_0^t ∫_0^s ∇Φ(X̄ - x̄¹)|`
    pub dx_corrected: Vec<f64>,
    /// `|V_t - V̄_t + N⁻¹ ∫_0^t ∇Φ(X̄ - x̄¹)|`
    pub dv_corrected: Vec<f64>,
    pub record: TrajectoryRecord,
    pub record_bar: TrajectoryRecord,
}

/// Runs the system and its barred copy from identical full-torus data.
pub fn twin_trajectory(
    config: &EngineConfig,
    meta: RunMeta,
    mut rng: Rng,
    selector: &Selector,
) -> Result<TwinResult> {
    if config.mode != Mode::FullTorus {
        return Err(invalid("mode", "twin runs need the full torus"));
    }
    config.validate()?;
    let d = config.spec.dim;
    let init = sample_initial_configuration(
        &config.spec,
        &config.law,
        config.torus_side,
        config.density,
        &mut rng,
    )?;
    let base = Engine::from_initial(config, meta.clone(), &init, rng.clone())?;
    let steps = config.steps();

    let (selected, sigma_plus, rel_speed) = match selector {
        Selector::InsideBand {
            r_min,
            r_max,
            u_min,
            u_max,
        } => {
            let r = config.spec.radius;
            let found = base.events.iter().find(|e| {
                let slot = e.particle as usize;
                let dist = base.state.distance(slot);
                e.left_censored
                    && dist >= r_min * r
                    && dist <= r_max * r
                    && e.rel_speed >= *u_min
                    && e.rel_speed <= *u_max
            });
            let e = found.ok_or_else(|| Error::SelectorMiss(format!("{selector:?}")))?;
            (e.particle, 0.0, e.rel_speed)
        }
        Selector::FirstEntrant { u_min, u_max } => {
            let mut probe = base.clone();
            let mut hit = None;
            while probe.steps_taken() < steps && hit.is_none() {
                probe.step()?;
                hit = probe
                    .events
                    .iter()
                    .find(|e| {
                        !e.left_censored
                            && e.kind == EventKind::FirstInteraction
                            && e.rel_speed >= *u_min
                            && e.rel_speed <= *u_max
                    })
                    .map(|e| (e.particle, e.entry, e.rel_speed));
            }
            hit.ok_or_else(|| Error::SelectorMiss(format!("{selector:?}")))?
        }
        Selector::Id { id } => {
            if *id as usize >= init.background.len() {
                return Err(Error::SelectorMiss(format!("no particle with id {id}")));
            }
            let slot = *id as usize;
            let dist = base.state.distance(slot);
            let u = {
                let p = &base.state.particles[slot];
                let mut rel = [0.0; MAX_DIM];
                for k in 0..d {
                    rel[k] = p.v[k] - base.state.v[k];
                }
                norm2(&rel, d).sqrt()
            };
            (*id, if dist < config.spec.radius { 0.0 } else { f64::NAN }, u)
        }
    };

    // particles are created in id order, so the initial slot equals the id
    let ghost_slot = selected as usize;
    let mut a = base;
    let mut b = Engine::from_initial(config, meta, &init, rng)?;
    b.state.particles[ghost_slot].ghost = true;
    b.state.compute_forces(&config.spec);

    let inv_n = 1.0 / config.density;
    let mut times = Vec::new();
    let (mut dx, mut dv, mut dxc, mut dvc) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut int_v = [0.0; MAX_DIM];
    let mut int_x = [0.0; MAX_DIM];
    let ghost_grad = |e: &Engine| -> Point {
        let sep = e.state.separation(ghost_slot);
        let mut g = [0.0; MAX_DIM];
        config.spec.gradient_into(&sep[..d], &mut g[..d]);
        g
    };
    let mut g_prev = ghost_grad(&b);
    let dt = config.dt;
    let mut record_point = |a: &Engine, b: &Engine, int_v: &Point, int_x: &Point| {
        let mut ex = [0.0; MAX_DIM];
        let mut ev = [0.0; MAX_DIM];
        let mut exc = [0.0; MAX_DIM];
        let mut evc = [0.0; MAX_DIM];
        for k in 0..d {
            ex[k] = a.state.x[k] - b.state.x[k];
            ev[k] = a.state.v[k] - b.state.v[k];
            exc[k] = ex[k] + int_x[k];
            evc[k] = ev[k] + int_v[k];
        }
        times.push(a.state.t);
        dx.push(norm2(&ex, d).sqrt());
        dv.push(norm2(&ev, d).sqrt());
        dxc.push(norm2(&exc, d).sqrt());
        dvc.push(norm2(&evc, d).sqrt());
    };
    record_point(&a, &b, &int_v, &int_x);
    while a.steps_taken() < steps {
        a.step()?;
        b.step()?;
        let g = ghost_grad(&b);
        for k in 0..d {
            let prev_v = int_v[k];
            int_v[k] += 0.5 * dt * inv_n * (g_prev[k] + g[k]);
            int_x[k] += 0.5 * dt * (prev_v + int_v[k]);
        }
        g_prev = g;
        record_point(&a, &b, &int_v, &int_x);
    }
    Ok(TwinResult {
        selected,
        sigma_plus,
        rel_speed,
        times,
        dx,
        dv,
        dx_corrected: dxc,
        dv_corrected: dvc,
        record: a.finish(),
        record_bar: b.finish(),
    })
}
