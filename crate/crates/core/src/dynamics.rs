//! Periodic geometry, the tagged/background coupling, and velocity Verlet.
//!
//! Background particles do not interact with each other; each feels only
//! the `1/N` force of the tagged particle and exerts the opposite force on
//! it. Only *active* particles are integrated. A *dormant* particle is known
//! to be outside the force range, so it moves on a straight line that is
//! evaluated lazily from its reference point `(x, t_ref)`.
//!
//! Positions are stored unwrapped; the canonical torus representative is
//! computed on demand and all pair geometry uses the minimal image.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ensemble::canonical;
use crate::error::{invalid, Result};
use crate::potential::PotentialSpec;

pub const MAX_DIM: usize = 6;
pub type Point = [f64; MAX_DIM];

pub fn to_point(v: &[f64]) -> Point {
    let mut p = [0.0; MAX_DIM];
    p[..v.len()].copy_from_slice(v);
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Torus { side: f64 },
    Free,
}

impl Geometry {
    #[inline]
    pub fn displacement(&self, a: &Point, b: &Point, d: usize) -> Point {
        let mut out = [0.0; MAX_DIM];
        match *self {
            Geometry::Torus { side } => {
                for k in 0..d {
                    out[k] = canonical(a[k] - b[k], side);
                }
            }
            Geometry::Free => {
                for k in 0..d {
                    out[k] = a[k] - b[k];
                }
            }
        }
        out
    }

    pub fn canonical_point(&self, a: &Point, d: usize) -> Point {
        match *self {
            Geometry::Torus { side } => {
                let mut out = *a;
                for x in out.iter_mut().take(d) {
                    *x = canonical(*x, side);
                }
                out
            }
            Geometry::Free => *a,
        }
    }

    /// Periodic image index of the unwrapped displacement `a - b`.
    pub fn image(&self, a: &Point, b: &Point, d: usize) -> [i32; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        if let Geometry::Torus { side } = *self {
            let m = self.displacement(a, b, d);
            for k in 0..d {
                out[k] = ((a[k] - b[k] - m[k]) / side).round() as i32;
            }
        }
        out
    }
}

/// Representative of `a - b` with every component in `[-L/2, L/2)`.
pub fn minimal_image(a: &[f64], b: &[f64], side: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| canonical(x - y, side)).collect()
}

#[inline]
pub fn norm2(a: &Point, d: usize) -> f64 {
    a[..d].iter().map(|x| x * x).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Dormant,
    Retired,
}

#[derive(Debug, Clone)]
pub struct BackgroundParticle {
    pub id: u64,
    /// Unwrapped position; for a dormant particle, the position at `t_ref`.
    pub x: Point,
    pub v: Point,
    pub t_ref: f64,
    pub x0: Point,
    pub v0: Point,
    pub status: Status,
    pub sigma_entry: Option<f64>,
    pub modified: bool,
    /// Ghosts neither feel nor exert force.
    pub ghost: bool,
    pub force: Point,
    /// Bumped whenever scheduled work for this slot becomes stale.
    pub generation: u32,
    cell: Option<([i32; MAX_DIM], usize)>,
    active_pos: Option<usize>,
}

/// Spatial hash of active particles with cells of side at least `R`.
#[derive(Debug, Clone)]
pub struct CellIndex {
    dim: usize,
    cell_size: f64,
    /// Cells per axis on a torus.
    periodic: Option<i32>,
    cells: HashMap<[i32; MAX_DIM], Vec<usize>>,
}

impl CellIndex {
    pub fn new(dim: usize, range: f64, geometry: Geometry) -> Self {
        let (cell_size, periodic) = match geometry {
            Geometry::Torus { side } => {
                let n = ((side / range).floor() as i32).max(1);
                (side / n as f64, Some(n))
            }
            Geometry::Free => (range, None),
        };
        Self {
            dim,
            cell_size,
            periodic,
            cells: HashMap::new(),
        }
    }

    /// Cell of a canonical position.
    #[inline]
    pub fn key(&self, x: &Point) -> [i32; MAX_DIM] {
        let mut k = [0; MAX_DIM];
        for i in 0..self.dim {
            let c = (x[i] / self.cell_size).floor() as i32;
            k[i] = match self.periodic {
                Some(n) => c.rem_euclid(n),
                None => c,
            };
        }
        k
    }

    fn insert(&mut self, key: [i32; MAX_DIM], idx: usize) -> usize {
        let bucket = self.cells.entry(key).or_default();
        bucket.push(idx);
        bucket.len() - 1
    }

    /// Removes `idx` from `key`; returns the index that moved into its slot.
    fn remove(&mut self, key: [i32; MAX_DIM], slot: usize) -> Option<usize> {
        let bucket = self.cells.get_mut(&key).expect("cell exists");
        bucket.swap_remove(slot);
        let moved = bucket.get(slot).copied();
        if bucket.is_empty() {
            self.cells.remove(&key);
        }
        moved
    }

    /// Visits every particle in the `3^d` block of cells around `x`, in a
    /// fixed order.
    pub fn for_neighbors(&self, x: &Point, mut visit: impl FnMut(usize)) {
        let center = self.key(x);
        let d = self.dim;
        let total = 3usize.pow(d as u32);
        let mut seen: Vec<[i32; MAX_DIM]> = Vec::new();
        for code in 0..total {
            let mut key = center;
            let mut c = code;
            for k in key.iter_mut().take(d) {
                let off = (c % 3) as i32 - 1;
                c /= 3;
                *k += off;
                if let Some(n) = self.periodic {
                    *k = k.rem_euclid(n);
                }
            }
            if self.periodic.is_some_and(|n| n < 3) {
                if seen.contains(&key) {
                    continue;
                }
                seen.push(key);
            }
            if let Some(bucket) = self.cells.get(&key) {
                for &i in bucket {
                    visit(i);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Tagged particle, background particles and the cached forces.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub dim: usize,
    pub t: f64,
    /// Unwrapped tagged position.
    pub x: Point,
    pub v: Point,
    pub particles: Vec<BackgroundParticle>,
    pub geometry: Geometry,
    pub density: f64,
    pub cells: CellIndex,
    pub tagged_force: Point,
    /// Slots carrying a non-zero cached force.
    pub interacting: Vec<usize>,
    pub active: Vec<usize>,
    free_slots: Vec<usize>,
    next_id: u64,
    range: f64,
}

impl SystemState {
    pub fn new(dim: usize, geometry: Geometry, density: f64, range: f64) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(invalid("dim", format!("engine supports 2..={MAX_DIM}")));
        }
        if !(density > 0.0) {
            return Err(invalid("density", "must be positive"));
        }
        Ok(Self {
            dim,
            t: 0.0,
            x: [0.0; MAX_DIM],
            v: [0.0; MAX_DIM],
            particles: Vec::new(),
            geometry,
            density,
            cells: CellIndex::new(dim, range, geometry),
            tagged_force: [0.0; MAX_DIM],
            interacting: Vec::new(),
            active: Vec::new(),
            free_slots: Vec::new(),
            next_id: 0,
            range,
        })
    }

    /// Adds a particle at the current time; returns its slot.
    pub fn add_particle(&mut self, x: Point, v: Point, active: bool) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        let p = BackgroundParticle {
            id,
            x,
            v,
            t_ref: self.t,
            x0: x,
            v0: v,
            status: Status::Dormant,
            sigma_entry: None,
            modified: false,
            ghost: false,
            force: [0.0; MAX_DIM],
            generation: 0,
            cell: None,
            active_pos: None,
        };
        let slot = match self.free_slots.pop() {
            Some(s) => {
                let gen = self.particles[s].generation.wrapping_add(1);
                self.particles[s] = BackgroundParticle {
                    generation: gen,
                    ..p
                };
                s
            }
            None => {
                self.particles.push(p);
                self.particles.len() - 1
            }
        };
        if active {
            self.activate(slot);
        }
        slot
    }

    /// Current unwrapped position of any particle.
    #[inline]
    pub fn position(&self, slot: usize) -> Point {
        let p = &self.particles[slot];
        match p.status {
            Status::Dormant => {
                let mut x = p.x;
                let dt = self.t - p.t_ref;
                for k in 0..self.dim {
                    x[k] += dt * p.v[k];
                }
                x
            }
            _ => p.x,
        }
    }

    /// Minimal-image `X - x_i`.
    #[inline]
    pub fn separation(&self, slot: usize) -> Point {
        self.geometry.displacement(&self.x, &self.position(slot), self.dim)
    }

    pub fn distance(&self, slot: usize) -> f64 {
        norm2(&self.separation(slot), self.dim).sqrt()
    }

    pub fn activate(&mut self, slot: usize) {
        let x = self.position(slot);
        let key = self.cells.key(&self.geometry.canonical_point(&x, self.dim));
        let cell_slot = self.cells.insert(key, slot);
        let pos = self.active.len();
        self.active.push(slot);
        let p = &mut self.particles[slot];
        p.x = x;
        p.t_ref = self.t;
        p.status = Status::Active;
        p.cell = Some((key, cell_slot));
        p.active_pos = Some(pos);
    }

    fn detach(&mut self, slot: usize) {
        if let Some((key, cs)) = self.particles[slot].cell.take() {
            if let Some(moved) = self.cells.remove(key, cs) {
                self.particles[moved].cell = Some((key, cs));
            }
        }
        if let Some(pos) = self.particles[slot].active_pos.take() {
            self.active.swap_remove(pos);
            if let Some(&moved) = self.active.get(pos) {
                self.particles[moved].active_pos = Some(pos);
            }
        }
        if self.particles[slot].force.iter().any(|&f| f != 0.0) {
            self.particles[slot].force = [0.0; MAX_DIM];
            self.interacting.retain(|&i| i != slot);
        }
    }

    /// Active → dormant: straight-line motion from now on.
    pub fn make_dormant(&mut self, slot: usize) {
        self.detach(slot);
        let t = self.t;
        let p = &mut self.particles[slot];
        p.status = Status::Dormant;
        p.t_ref = t;
        p.generation = p.generation.wrapping_add(1);
    }

    pub fn retire(&mut self, slot: usize) {
        if self.particles[slot].status == Status::Active {
            self.detach(slot);
        }
        let p = &mut self.particles[slot];
        p.status = Status::Retired;
        p.generation = p.generation.wrapping_add(1);
        self.free_slots.push(slot);
    }

    pub fn live_count(&self) -> usize {
        self.particles.len() - self.free_slots.len()
    }

    pub fn kick(&mut self, h: f64) {
        let d = self.dim;
        for k in 0..d {
            self.v[k] += h * self.tagged_force[k];
        }
        for &i in &self.interacting {
            let p = &mut self.particles[i];
            for k in 0..d {
                p.v[k] += h * p.force[k];
            }
            if !p.modified && p.v[..d] != p.v0[..d] {
                p.modified = true;
            }
        }
    }

    pub fn drift(&mut self, h: f64) {
        let d = self.dim;
        for k in 0..d {
            self.x[k] += h * self.v[k];
        }
        for &i in &self.active {
            let p = &mut self.particles[i];
            for k in 0..d {
                p.x[k] += h * p.v[k];
            }
        }
    }

    /// Moves active particles whose cell changed.
    pub fn refresh_cells(&mut self) {
        for pos in 0..self.active.len() {
            let slot = self.active[pos];
            let x = self.geometry.canonical_point(&self.particles[slot].x, self.dim);
            let key = self.cells.key(&x);
            let (old, cs) = self.particles[slot].cell.expect("active particle has a cell");
            if key != old {
                if let Some(moved) = self.cells.remove(old, cs) {
                    self.particles[moved].cell = Some((old, cs));
                }
                let ns = self.cells.insert(key, slot);
                self.particles[slot].cell = Some((key, ns));
            }
        }
    }

    /// Recomputes the cached forces from the cell index.
    pub fn compute_forces(&mut self, spec: &PotentialSpec) {
        let d = self.dim;
        for &i in &self.interacting {
            self.particles[i].force = [0.0; MAX_DIM];
        }
        self.interacting.clear();
        self.tagged_force = [0.0; MAX_DIM];
        if spec.is_zero() {
            return;
        }
        let r2 = spec.radius * spec.radius;
        let inv_n = 1.0 / self.density;
        let mut hits = Vec::new();
        self.cells.for_neighbors(&self.geometry.canonical_point(&self.x, d), |i| hits.push(i));
        let mut grad = [0.0; MAX_DIM];
        for i in hits {
            if self.particles[i].ghost {
                continue;
            }
            let sep = self.separation(i);
            if norm2(&sep, d) >= r2 {
                continue;
            }
            spec.gradient_into(&sep[..d], &mut grad[..d]);
            let p = &mut self.particles[i];
            for k in 0..d {
                let f = inv_n * grad[k];
                p.force[k] = f;
                self.tagged_force[k] -= f;
            }
            self.interacting.push(i);
        }
    }

    /// `(F_tagged, [(slot, f_i)])` for the current configuration.
    pub fn forces(&self) -> (Vec<f64>, Vec<(usize, Vec<f64>)>) {
        let d = self.dim;
        (
            self.tagged_force[..d].to_vec(),
            self.interacting
                .iter()
                .map(|&i| (i, self.particles[i].force[..d].to_vec()))
                .collect(),
        )
    }

    /// One velocity-Verlet step of the coupled system.
    pub fn verlet_step(&mut self, spec: &PotentialSpec, dt: f64) {
        self.kick(0.5 * dt);
        self.drift(dt);
        self.t += dt;
        self.refresh_cells();
        self.compute_forces(spec);
        self.kick(0.5 * dt);
    }

    /// `½|V|² + ½Σ|v_i|² + N⁻¹ΣΦ(X - x_i)` over all live particles, with
    /// compensated summation.
    pub fn hamiltonian(&self, spec: &PotentialSpec) -> f64 {
        let d = self.dim;
        let mut sum = Neumaier::default();
        sum.add(0.5 * norm2(&self.v, d));
        for (slot, p) in self.particles.iter().enumerate() {
            if p.status == Status::Retired {
                continue;
            }
            sum.add(0.5 * norm2(&p.v, d));
            if p.status == Status::Active && !p.ghost {
                let sep = self.separation(slot);
                sum.add(spec.value(&sep[..d]) / self.density);
            }
        }
        sum.value()
    }

    pub fn range(&self) -> f64 {
        self.range
    }
}

/// Kahan–Babuška–Neumaier summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
