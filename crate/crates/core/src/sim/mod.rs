//! Exact continuous-time simulation of the attachment tree.
//!
//! Each vertex carries its rate row `w_i.(n)`; a Fenwick tree over the row
//! totals gives logarithmic sampling of the birthing vertex. Only the parent
//! of a new vertex is re-evaluated after an event, and new vertices start
//! from a per-type row cached at the zero vector.
//!
//! Random numbers come from `ChaCha8Rng::seed_from_u64`. Replica `r` of a
//! run with seed `s` uses [`replica_seed`]`(s, r)`, which is
//! `splitmix64(s + r * 0x9E3779B97F4A7C15)` in wrapping arithmetic.

mod fenwick;
mod record;

pub use fenwick::Fenwick;
pub use record::{embed_discrete, TreeRecord};

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::rates::{RateError, RateSpec};
use record::ROOT_PARENT;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("max_vertices must be at least 1")]
    NoVertices,
    #[error("event guard tripped: {events} events in {elapsed} time units at t = {time} (limit {limit} per unit time)")]
    EventGuard {
        events: u64,
        elapsed: f64,
        time: f64,
        limit: f64,
    },
    #[error("record invariant violated: {0}")]
    Invariant(String),
    #[error("thread pool: {0}")]
    Threads(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Largest sustained event rate per unit time before a tabulated family
    /// is treated as exploding. Linear families are never guarded.
    pub event_guard: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { event_guard: 1e7 }
    }
}

const GUARD_WINDOW: u64 = 4096;

/// FNV-1a over the spec's JSON form.
pub fn spec_fingerprint(spec: &RateSpec) -> u64 {
    let json = serde_json::to_vec(spec).expect("rate specs serialise");
    json.iter().fold(0xcbf29ce484222325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

pub fn replica_seed(seed: u64, replica: u64) -> u64 {
    splitmix64(seed.wrapping_add(replica.wrapping_mul(0x9E3779B97F4A7C15)))
}

/// Incremental simulator. Cloning gives an independent copy of the state,
/// which together with [`Simulator::reseed`] allows replicated single steps
/// from a frozen configuration.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    spec: &'a RateSpec,
    opts: SimOptions,
    guarded: bool,
    rng: ChaCha8Rng,
    seed: u64,
    capacity: usize,
    weights: Fenwick,
    rows: Vec<f64>,
    base_rows: Vec<f64>,
    types: Vec<u32>,
    parents: Vec<u32>,
    birth_times: Vec<f64>,
    counts: Vec<u32>,
    time: f64,
    events: u64,
    rate_updates: u64,
    guard_mark: (u64, f64),
}

/// One birth: the parent, the child's type and the event time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Birth {
    pub parent: usize,
    pub child_type: usize,
    pub time: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(spec: &'a RateSpec, root_type: usize, max_vertices: usize, seed: u64, opts: SimOptions) -> Result<Self, SimError> {
        let p = spec.p();
        if root_type >= p {
            return Err(RateError::TypeOutOfRange { index: root_type, p }.into());
        }
        if max_vertices == 0 {
            return Err(SimError::NoVertices);
        }
        spec.check_nonexplosion()?;
        let zero = vec![0u32; p];
        let mut base_rows = vec![0.0; p * p];
        for i in 0..p {
            spec.rate_row(i, &zero, &mut base_rows[i * p..(i + 1) * p])?;
        }
        let mut sim = Self {
            spec,
            opts,
            guarded: spec.is_general_table(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            capacity: max_vertices,
            weights: Fenwick::new(max_vertices),
            rows: Vec::with_capacity(max_vertices * p),
            base_rows,
            types: Vec::with_capacity(max_vertices),
            parents: Vec::with_capacity(max_vertices),
            birth_times: Vec::with_capacity(max_vertices),
            counts: Vec::with_capacity(max_vertices * p),
            time: 0.0,
            events: 0,
            rate_updates: 0,
            guard_mark: (0, 0.0),
        };
        sim.push_vertex(root_type, ROOT_PARENT, 0.0);
        Ok(sim)
    }

    fn push_vertex(&mut self, ty: usize, parent: u32, time: f64) {
        let p = self.spec.p();
        let v = self.types.len();
        let row = &self.base_rows[ty * p..(ty + 1) * p];
        self.rows.extend_from_slice(row);
        self.weights.set(v, row.iter().sum());
        self.types.push(ty as u32);
        self.parents.push(parent);
        self.birth_times.push(time);
        self.counts.extend(std::iter::repeat_n(0, p));
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.seed = seed;
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Current rate row `w_i.(n)` of vertex `v`.
    pub fn rates(&self, v: usize) -> &[f64] {
        let p = self.spec.p();
        &self.rows[v * p..(v + 1) * p]
    }

    pub fn total_rate(&self) -> f64 {
        self.weights.total()
    }

    fn draw_wait(&mut self) -> f64 {
        let u: f64 = self.rng.sample(Open01);
        -u.ln() / self.weights.total()
    }

    /// Perform the next birth. Returns `None` once the vertex capacity is
    /// reached.
    pub fn step(&mut self) -> Result<Option<Birth>, SimError> {
        if self.len() >= self.capacity {
            return Ok(None);
        }
        let wait = self.draw_wait();
        self.apply(self.time + wait).map(Some)
    }

    /// Like [`Simulator::step`], but stop without an event when the next
    /// birth would fall after `t_end`; the clock is then set to `t_end`.
    pub fn step_until(&mut self, t_end: f64) -> Result<Option<Birth>, SimError> {
        if self.len() >= self.capacity {
            return Ok(None);
        }
        let t = self.time + self.draw_wait();
        if t > t_end {
            self.time = t_end;
            return Ok(None);
        }
        self.apply(t).map(Some)
    }

    fn apply(&mut self, t: f64) -> Result<Birth, SimError> {
        let p = self.spec.p();
        let total = self.weights.total();
        let target = self.rng.random::<f64>() * total;
        let v = self.weights.find(target);
        let row = &self.rows[v * p..(v + 1) * p];
        let w_v: f64 = row.iter().sum();
        let mut pick = self.rng.random::<f64>() * w_v;
        let mut j = p - 1;
        for (a, &w) in row.iter().enumerate() {
            if pick < w {
                j = a;
                break;
            }
            pick -= w;
        }
        while row[j] <= 0.0 && j > 0 {
            j -= 1;
        }

        self.time = t;
        self.events += 1;
        self.counts[v * p + j] += 1;
        let ty = self.types[v] as usize;
        let new_total = self
            .spec
            .rate_row(ty, &self.counts[v * p..(v + 1) * p], &mut self.rows[v * p..(v + 1) * p])?;
        self.rate_updates += 1;
        self.weights.set(v, new_total);
        self.push_vertex(j, v as u32, t);

        if self.guarded && self.events - self.guard_mark.0 >= GUARD_WINDOW {
            let elapsed = t - self.guard_mark.1;
            let n = self.events - self.guard_mark.0;
            if (n as f64) > self.opts.event_guard * elapsed {
                return Err(SimError::EventGuard {
                    events: n,
                    elapsed,
                    time: t,
                    limit: self.opts.event_guard,
                });
            }
            self.guard_mark = (self.events, t);
        }
        Ok(Birth {
            parent: v,
            child_type: j,
            time: t,
        })
    }

    pub fn run(&mut self) -> Result<(), SimError> {
        while self.step()?.is_some() {}
        Ok(())
    }

    pub fn run_until(&mut self, t_end: f64) -> Result<(), SimError> {
        while self.step_until(t_end)?.is_some() {}
        Ok(())
    }

    pub fn into_record(self) -> TreeRecord {
        TreeRecord {
            p: self.spec.p(),
            root_type: self.types[0] as usize,
            types: self.types,
            parents: self.parents,
            birth_times: self.birth_times,
            child_counts: self.counts,
            final_time: self.time,
            events: self.events,
            rate_updates: self.rate_updates,
            seed: self.seed,
            spec_fingerprint: spec_fingerprint(self.spec),
        }
    }
}

/// Grow a tree from a single root of type `root_type` until it has
/// `max_vertices` vertices.
pub fn simulate(
    spec: &RateSpec,
    root_type: usize,
    max_vertices: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<TreeRecord, SimError> {
    let mut sim = Simulator::new(spec, root_type, max_vertices, seed, opts.clone())?;
    sim.run()?;
    Ok(sim.into_record())
}

/// Replica thread cap from `MATREE_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("MATREE_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Run `replicas` independent trees, replica `r` seeded with
/// [`replica_seed`]`(seed, r)`. Output order is replica order regardless of
/// scheduling.
pub fn simulate_replicas(
    spec: &RateSpec,
    root_type: usize,
    max_vertices: usize,
    seed: u64,
    replicas: usize,
    opts: &SimOptions,
) -> Result<Vec<TreeRecord>, SimError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| SimError::Threads(e.to_string()))?;
    pool.install(|| {
        (0..replicas)
            .into_par_iter()
            .map(|r| simulate(spec, root_type, max_vertices, replica_seed(seed, r as u64), opts))
            .collect()
    })
}
