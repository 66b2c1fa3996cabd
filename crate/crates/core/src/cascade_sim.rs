//! Deterministic cascade with noisy per-vertex observations.
//!
//! At time `t` the affected set is exactly `ball(source, t)`. Every host
//! vertex emits one observation per step, drawn from `Q1` when affected and
//! from `Q0` otherwise. Each observation is generated from its own RNG keyed
//! by `(seed, t, vertex)`, so any single value can be regenerated without
//! replaying the run and the iteration order never matters.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use thiserror::Error;

use crate::graph::{Graph, GraphError, Vertex};
use crate::numeric::mix_words;
use crate::obs_model::ObservationModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid cascade source: {0}")]
    InvalidSource(#[from] GraphError),
}

/// One time step of observations, reduced to log-likelihood ratios.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepObservation {
    pub time: usize,
    /// `llr(y_w(time))` for every host vertex `w`, indexed by vertex index.
    pub llr_values: Vec<f64>,
    /// Number of entries drawn from `Q1`.
    pub affected_count: usize,
}

/// A cascade in progress.
#[derive(Debug, Clone)]
pub struct CascadeRun<'g> {
    graph: &'g Graph,
    source: Vertex,
    model: ObservationModel,
    seed: u64,
    time: usize,
    source_dist: Vec<u32>,
}

/// Seed of the RNG that produces `y_w(t)` in a run seeded with `seed`.
pub fn observation_seed(seed: u64, t: usize, w: Vertex) -> u64 {
    mix_words(&[seed, t as u64, w.index() as u64])
}

impl<'g> CascadeRun<'g> {
    /// Starts a run at time 0 with only `source` affected.
    pub fn start(graph: &'g Graph, source: Vertex, model: ObservationModel, seed: u64) -> Result<Self, SimError> {
        graph.check(source)?;
        Ok(CascadeRun { graph, source, model, seed, time: 0, source_dist: graph.bfs_distances(source) })
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn source(&self) -> Vertex {
        self.source
    }

    pub fn model(&self) -> &ObservationModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Time of the next step to be emitted.
    pub fn time(&self) -> usize {
        self.time
    }

    pub fn is_affected(&self, w: Vertex, t: usize) -> bool {
        self.source_dist[w.index()] as usize <= t
    }

    /// `ball(source, t)` in index order.
    pub fn affected_set(&self, t: usize) -> Vec<Vertex> {
        self.graph.vertices().filter(|&w| self.is_affected(w, t)).collect()
    }

    /// The raw public state `y_w(t)`.
    pub fn observation(&self, t: usize, w: Vertex) -> f64 {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(observation_seed(self.seed, t, w));
        self.model.sample(self.is_affected(w, t), &mut rng)
    }

    /// All raw public states at time `t`. Does not advance the run.
    pub fn raw_observations(&self, t: usize) -> Vec<f64> {
        self.graph.vertices().map(|w| self.observation(t, w)).collect()
    }

    /// Emits the observations for the current time and advances by one.
    pub fn step(&mut self) -> StepObservation {
        let mut obs = StepObservation::default();
        self.step_into(&mut obs);
        obs
    }

    /// [`Self::step`] reusing the buffer in `obs`.
    pub fn step_into(&mut self, obs: &mut StepObservation) {
        let t = self.time;
        obs.time = t;
        obs.llr_values.clear();
        obs.llr_values.reserve(self.graph.vertex_count());
        let mut affected = 0usize;
        for w in self.graph.vertices() {
            affected += usize::from(self.is_affected(w, t));
            let y = self.observation(t, w);
            obs.llr_values.push(self.model.llr(y).expect("sampled values lie in the model support"));
        }
        obs.affected_count = affected;
        debug_assert_eq!(affected, self.graph.ball_size(self.source, t).unwrap_or(0));
        self.time += 1;
    }

    /// Writes `t,vertex,y` rows for `t = 0..=t_max` (vertex as label).
    pub fn write_trace<W: Write>(&self, t_max: usize, mut out: W) -> io::Result<()> {
        writeln!(out, "t,vertex,y")?;
        for t in 0..=t_max {
            for w in self.graph.vertices() {
                writeln!(out, "{t},{w},{}", self.observation(t, w))?;
            }
        }
        Ok(())
    }
}
