//! Growth functions `f_vu`, their inverses, and the lower/upper bounds on
//! the optimal expected stopping time.
//!
//! `f_vu(t) = Σ_{s ≤ t} |N_v(s) \ N_u(s)|` is computed by a lockstep BFS
//! from both endpoints. `F_vu(z)` is the smallest integer `t` with
//! `f_vu(t) ≥ z`. The bounds are
//!
//! ```text
//! lower = max_{u,v ∈ V_n, d(u,v) > 2R} F_vu(log(n/α) / D̃)
//! upper = max_{u,v ∈ V_n, d(u,v) > R}  F_vu(log(n/α) / C)
//! ```
//!
//! with `C = min{D̃ − ε, I(D̃ − ε)}` from [`crate::obs_model`].

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{BallWalker, CandidateSet, Graph, GraphError, GraphKind, Vertex};
use crate::obs_model::{DivergenceReport, ModelError, ObservationModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("growth function needs two distinct vertices, got {0} twice")]
    SameVertex(Vertex),
    #[error("closed form covers even distances only, got {0}")]
    OddDistance(usize),
    #[error("f_vu for ({v}, {u}) saturates at {f_max} < {z} after t = {t_max}; the host graph is too small")]
    Horizon { v: Vertex, u: Vertex, z: f64, f_max: u64, t_max: usize },
    #[error("no candidate pair is farther apart than {0}")]
    NoAdmissiblePair(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `f_vu(0..=t_max)` for one ordered pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GrowthFunction {
    pub v: Vertex,
    pub u: Vertex,
    pub values: Vec<u64>,
    /// Both balls cover the whole graph: `f_vu` stays constant afterwards.
    pub saturated: bool,
}

impl GrowthFunction {
    pub fn at(&self, t: usize) -> Option<u64> {
        self.values.get(t).copied()
    }

    /// Smallest `t` with `f_vu(t) ≥ z`.
    pub fn inverse(&self, z: f64) -> Result<usize, TheoryError> {
        if let Some(t) = self.values.iter().position(|&f| f as f64 >= z) {
            return Ok(t);
        }
        Err(TheoryError::Horizon {
            v: self.v,
            u: self.u,
            z,
            f_max: self.values.last().copied().unwrap_or(0),
            t_max: self.values.len().saturating_sub(1),
        })
    }
}

/// Scratch for lockstep BFS from two vertices.
#[derive(Debug, Clone)]
pub struct PairWalker {
    stamp_v: Vec<u32>,
    stamp_u: Vec<u32>,
    epoch: u32,
    frontier_v: Vec<u32>,
    frontier_u: Vec<u32>,
    next: Vec<u32>,
}

impl PairWalker {
    pub fn new(graph: &Graph) -> Self {
        let n = graph.vertex_count();
        PairWalker {
            stamp_v: vec![0; n],
            stamp_u: vec![0; n],
            epoch: 0,
            frontier_v: Vec::new(),
            frontier_u: Vec::new(),
            next: Vec::new(),
        }
    }

    /// Grows `f_vu` until `t = t_max`, until it reaches `target`, or until
    /// it saturates, whichever comes first.
    pub fn growth(&mut self, graph: &Graph, v: Vertex, u: Vertex, t_max: usize, target: f64) -> GrowthFunction {
        if self.epoch == u32::MAX {
            self.stamp_v.iter_mut().for_each(|s| *s = 0);
            self.stamp_u.iter_mut().for_each(|s| *s = 0);
            self.epoch = 0;
        }
        self.epoch += 1;
        let epoch = self.epoch;

        let mut values = Vec::new();
        let (mut size_v, mut both) = (0u64, 0u64);
        let mut f = 0u64;
        self.frontier_v.clear();
        self.frontier_u.clear();
        let mut saturated = false;
        for s in 0..=t_max {
            // Layer s of each BFS. A vertex joins the intersection when its
            // second stamp is set.
            let seed_v = (s == 0).then_some(v.index() as u32);
            let seed_u = (s == 0).then_some(u.index() as u32);
            let added_v = expand(graph, &mut self.frontier_v, &mut self.next, &mut self.stamp_v, epoch, seed_v);
            for &w in &self.frontier_v {
                if self.stamp_u[w as usize] == epoch {
                    both += 1;
                }
            }
            let added_u = expand(graph, &mut self.frontier_u, &mut self.next, &mut self.stamp_u, epoch, seed_u);
            for &w in &self.frontier_u {
                if self.stamp_v[w as usize] == epoch {
                    both += 1;
                }
            }
            size_v += added_v as u64;
            f += size_v - both;
            values.push(f);
            if added_v == 0 && added_u == 0 && s > 0 {
                saturated = true;
                break;
            }
            if f as f64 >= target {
                break;
            }
        }
        GrowthFunction { v, u, values, saturated }
    }
}

/// Replaces `frontier` with the next BFS layer (or with `seed`), stamping
/// new vertices. Returns the size of the new layer.
fn expand(
    graph: &Graph,
    frontier: &mut Vec<u32>,
    next: &mut Vec<u32>,
    stamp: &mut [u32],
    epoch: u32,
    seed: Option<u32>,
) -> usize {
    next.clear();
    if let Some(s) = seed {
        stamp[s as usize] = epoch;
        next.push(s);
    } else {
        for &w in frontier.iter() {
            for &x in graph.neighbor_indices(w as usize) {
                if stamp[x as usize] != epoch {
                    stamp[x as usize] = epoch;
                    next.push(x);
                }
            }
        }
    }
    std::mem::swap(frontier, next);
    frontier.len()
}

fn distinct(v: Vertex, u: Vertex) -> Result<(), TheoryError> {
    if u == v {
        Err(TheoryError::SameVertex(v))
    } else {
        Ok(())
    }
}

/// `f_vu(t)` by direct BFS.
pub fn f_vu(graph: &Graph, v: Vertex, u: Vertex, t: usize) -> Result<u64, TheoryError> {
    Ok(*growth_function(graph, v, u, t)?.values.last().expect("t = 0 is always present"))
}

/// `f_vu(0..=t_max)`; saturated tails are padded with the constant value.
pub fn growth_function(graph: &Graph, v: Vertex, u: Vertex, t_max: usize) -> Result<GrowthFunction, TheoryError> {
    graph.check(v)?;
    graph.check(u)?;
    distinct(v, u)?;
    let mut g = PairWalker::new(graph).growth(graph, v, u, t_max, f64::INFINITY);
    let last = *g.values.last().expect("nonempty");
    g.values.resize(t_max + 1, last);
    Ok(g)
}

/// `F_vu(z)`: smallest `t` with `f_vu(t) ≥ z`, or a horizon error when the
/// finite host saturates first.
pub fn inverse_f(graph: &Graph, v: Vertex, u: Vertex, z: f64) -> Result<usize, TheoryError> {
    graph.check(v)?;
    graph.check(u)?;
    distinct(v, u)?;
    PairWalker::new(graph).growth(graph, v, u, usize::MAX - 1, z).inverse(z)
}

/// `f_vu(t)` on the infinite line for even `r = d(u, v)`:
/// `(t+1)²` for `t < r/2`, else `(r/2)(2t + 2 − r/2)`.
pub fn f_line_closed_form(r: usize, t: usize) -> Result<u64, TheoryError> {
    if r == 0 || r % 2 == 1 {
        return Err(TheoryError::OddDistance(r));
    }
    let (h, t) = ((r / 2) as u64, t as u64);
    Ok(if t < h { (t + 1) * (t + 1) } else { h * (2 * t + 2 - h) })
}

/// How candidate pairs are enumerated when maximizing `F_vu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSearch {
    /// Every ordered pair of candidates.
    Exhaustive,
    /// For each `v`, only the admissible partners at the smallest distance.
    /// Exact when `f_vu` depends on the pair only through `d(u, v)` and is
    /// nondecreasing in it, as on the interior of trees and lines.
    NearestShell,
    /// Exhaustive up to [`EXHAUSTIVE_LIMIT`] candidates, nearest shell above.
    #[default]
    Auto,
}

pub const EXHAUSTIVE_LIMIT: usize = 2000;

/// Value of a bound and the pair attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairMax {
    pub value: usize,
    pub v: Vertex,
    pub u: Vertex,
    pub z: f64,
}

/// `max F_vu(z)` over ordered candidate pairs with `d(u, v) > min_distance`.
/// A pair whose `F_vu` lies beyond [`exact_horizon`] yields a horizon error.
pub fn max_inverse_over_pairs(
    graph: &Graph,
    candidates: &CandidateSet,
    min_distance: usize,
    z: f64,
    search: PairSearch,
) -> Result<PairMax, TheoryError> {
    let vertices = candidates.vertices();
    let search = match search {
        PairSearch::Auto if vertices.len() <= EXHAUSTIVE_LIMIT => PairSearch::Exhaustive,
        PairSearch::Auto => PairSearch::NearestShell,
        s => s,
    };
    let mut member = vec![false; graph.vertex_count()];
    for &v in vertices {
        member[v.index()] = true;
    }
    let per_vertex = |walker: &mut (PairWalker, BallWalker), v: Vertex| -> Result<Option<PairMax>, TheoryError> {
        let partners: Vec<Vertex> = match search {
            PairSearch::Exhaustive | PairSearch::Auto => vertices
                .iter()
                .copied()
                .filter(|&u| graph.distance_unchecked(u.index(), v.index()) > min_distance)
                .collect(),
            PairSearch::NearestShell => nearest_shell(graph, &member, v, min_distance, &mut walker.1),
        };
        let mut best: Option<PairMax> = None;
        for u in partners {
            let t = walker.0.growth(graph, v, u, exact_horizon(graph, v, u), z).inverse(z)?;
            if best.is_none_or(|b| t > b.value) {
                best = Some(PairMax { value: t, v, u, z });
            }
        }
        Ok(best)
    };
    let results: Vec<Result<Option<PairMax>, TheoryError>> = vertices
        .par_iter()
        .map_init(|| (PairWalker::new(graph), BallWalker::new(graph)), |w, &v| per_vertex(w, v))
        .collect();
    let mut best: Option<PairMax> = None;
    for r in results {
        if let Some(cand) = r? {
            if best.is_none_or(|b| cand.value > b.value) {
                best = Some(cand);
            }
        }
    }
    best.ok_or(TheoryError::NoAdmissiblePair(min_distance))
}

/// Largest `t` for which `f_vu(t)` on `graph` equals its value on the
/// unbounded graph the host stands for. Trees are truncations of the
/// infinite tree, so balls must not extend past the leaves; other hosts are
/// taken as they are.
pub fn exact_horizon(graph: &Graph, v: Vertex, u: Vertex) -> usize {
    let height = match graph.kind() {
        GraphKind::RegularTree { height, .. } => height,
        GraphKind::CompleteTree { levels, .. } => levels - 1,
        _ => return usize::MAX - 1,
    };
    let deepest = graph.depth(v).max(graph.depth(u)).unwrap_or(0);
    height - deepest
}

fn nearest_shell(
    graph: &Graph,
    member: &[bool],
    v: Vertex,
    min_distance: usize,
    walker: &mut BallWalker,
) -> Vec<Vertex> {
    // Grow the search radius until a candidate shows up beyond min_distance.
    let mut radius = min_distance + 1;
    loop {
        let mut found: Vec<(usize, Vertex)> = Vec::new();
        let mut reached_edge = true;
        walker.for_each(graph, v, radius, |w, d| {
            if d == radius {
                reached_edge = false;
            }
            if d > min_distance && member[w.index()] {
                found.push((d, w));
            }
        });
        if let Some(&(dmin, _)) = found.iter().min_by_key(|(d, _)| *d) {
            return found.into_iter().filter(|(d, _)| *d == dmin).map(|(_, w)| w).collect();
        }
        if reached_edge {
            return Vec::new();
        }
        radius *= 2;
    }
}

/// Theorem-style lower bound:
/// `max_{d(u,v) > 2R} F_vu(log(n/α)/D̃)`.
pub fn lower_bound(
    graph: &Graph,
    candidates: &CandidateSet,
    radius: usize,
    alpha: f64,
    model: &ObservationModel,
    search: PairSearch,
) -> Result<PairMax, TheoryError> {
    check_alpha(alpha)?;
    let z = (candidates.len() as f64 / alpha).ln() / model.sym_kl();
    max_inverse_over_pairs(graph, candidates, 2 * radius, z, search)
}

/// Upper bound for the MSPRT at both thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpperBound {
    /// `max_{d(u,v) > R} F_vu(log(n/α)/C)`.
    pub value: usize,
    /// The same with `log n` in place of `log(n/α)`.
    pub value_log_n: usize,
    pub c_constant: f64,
}

/// Upper bound with `C` taken from `divergence`. Zero when `n = 1`.
pub fn upper_bound(
    graph: &Graph,
    candidates: &CandidateSet,
    radius: usize,
    alpha: f64,
    divergence: &DivergenceReport,
    search: PairSearch,
) -> Result<UpperBound, TheoryError> {
    check_alpha(alpha)?;
    let n = candidates.len() as f64;
    let c = divergence.c_constant;
    if candidates.len() == 1 {
        return Ok(UpperBound { value: 0, value_log_n: 0, c_constant: c });
    }
    let primary = max_inverse_over_pairs(graph, candidates, radius, (n / alpha).ln() / c, search)?;
    let secondary = max_inverse_over_pairs(graph, candidates, radius, n.ln() / c, search)?;
    Ok(UpperBound { value: primary.value, value_log_n: secondary.value, c_constant: c })
}

fn check_alpha(alpha: f64) -> Result<(), TheoryError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(TheoryError::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

/// `log|N_v(R)| / log n` at the center; the lower bound presumes it is small.
pub fn radius_ratio(graph: &Graph, candidates: &CandidateSet, radius: usize) -> Result<f64, TheoryError> {
    let ball = graph.ball_size(candidates.center(), radius)? as f64;
    Ok(ball.ln() / (candidates.len() as f64).ln())
}

/// Regular-tree asymptotics `log log n / log(k−1)`.
pub fn corollary_tree(n: f64, k: usize) -> Result<f64, TheoryError> {
    if k < 3 || n.is_nan() || n < 3.0 {
        return Err(TheoryError::InvalidArgument(format!("need k >= 3 and n >= 3, got k={k}, n={n}")));
    }
    Ok(n.ln().ln() / ((k - 1) as f64).ln())
}

/// Which line-graph display applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LineRegime {
    /// `R ≪ √log n`: `log n / (2R D̃)` .. `log n / (R C)`.
    Log,
    /// `R ≫ √log n`: `√(log n / D̃)` .. `√(log n / C)`.
    Sqrt,
    /// `R = √log n` exactly; both displays reported.
    Boundary,
    /// `R = 0`: the `Log` display evaluated at `R = 1`.
    UnitRadius,
}

impl LineRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            LineRegime::Log => "log",
            LineRegime::Sqrt => "sqrt",
            LineRegime::Boundary => "boundary",
            LineRegime::UnitRadius => "unit_radius",
        }
    }
}

/// Line-graph asymptotics for both regimes plus the applicable one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineCorollary {
    pub regime: LineRegime,
    pub lower: f64,
    pub upper: f64,
    pub log_regime: (f64, f64),
    pub sqrt_regime: (f64, f64),
}

pub fn corollary_line(n: f64, radius: usize, sym_kl: f64, c_constant: f64) -> Result<LineCorollary, TheoryError> {
    if n.is_nan() || n <= 1.0 || sym_kl.is_nan() || sym_kl <= 0.0 || c_constant.is_nan() || c_constant <= 0.0 {
        return Err(TheoryError::InvalidArgument(format!(
            "need n > 1 and positive constants, got n={n}, D={sym_kl}, C={c_constant}"
        )));
    }
    let log_n = n.ln();
    let r = radius.max(1) as f64;
    let log_regime = (log_n / (2.0 * r * sym_kl), log_n / (r * c_constant));
    let sqrt_regime = ((log_n / sym_kl).sqrt(), (log_n / c_constant).sqrt());
    let scale = log_n.sqrt();
    let regime = if radius == 0 {
        LineRegime::UnitRadius
    } else if ((radius as f64) - scale).abs() <= 1e-12 * scale.max(1.0) {
        LineRegime::Boundary
    } else if (radius as f64) < scale {
        LineRegime::Log
    } else {
        LineRegime::Sqrt
    };
    let (lower, upper) = match regime {
        LineRegime::Sqrt => sqrt_regime,
        _ => log_regime,
    };
    Ok(LineCorollary { regime, lower, upper, log_regime, sqrt_regime })
}
