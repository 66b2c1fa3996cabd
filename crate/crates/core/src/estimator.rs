//! Matrix sequential probability ratio test over a candidate set.
//!
//! Instead of the `n²` pairwise statistics `Z_vu(t)` the state keeps one
//! cumulative sum per candidate,
//!
//! ```text
//! A_v(t) = Σ_{s ≤ t} Σ_{w ∈ N_v(s)} llr(y_w(s)),
//! ```
//!
//! and recovers `Z_vu(t) = A_v(t) − A_u(t)`: the terms over `N_v(s) ∩ N_u(s)`
//! cancel. The statistic of `v` is its gap to the best competitor outside
//! `ball(v, R)`; the test stops once some gap reaches `log(n/α)`.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::cascade_sim::StepObservation;
use crate::graph::{BallWalker, CandidateSet, Graph, GraphError, Vertex};
use crate::numeric::{wilson_interval, Z95};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("observation for time {got} arrived, expected time {expected}")]
    OutOfOrder { expected: usize, got: usize },
    #[error("observation has {got} entries, host graph has {expected} vertices")]
    ObservationLength { expected: usize, got: usize },
    #[error("the test already stopped at time {0}")]
    AlreadyStopped(usize),
    #[error("vertex {0} is not a candidate")]
    NotCandidate(Vertex),
    #[error("no trial results to audit")]
    EmptyResults,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Parameters of the test: `V_n`, confidence radius `R` and error budget α.
#[derive(Debug, Clone, PartialEq)]
pub struct MsprtConfig {
    candidates: CandidateSet,
    radius: usize,
    alpha: f64,
    threshold: f64,
}

impl MsprtConfig {
    pub fn new(candidates: CandidateSet, radius: usize, alpha: f64) -> Result<Self, EstimatorError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(EstimatorError::Alpha(alpha));
        }
        let threshold = (candidates.len() as f64).ln() - alpha.ln();
        Ok(MsprtConfig { candidates, radius, alpha, threshold })
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn n(&self) -> usize {
        self.candidates.len()
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `log(n/α)`.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Where and when the test stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StopDecision {
    pub decision: Vertex,
    pub stopping_time: usize,
    pub statistic: f64,
}

/// Running state of one test.
#[derive(Debug, Clone)]
pub struct MsprtState<'c> {
    config: &'c MsprtConfig,
    a_stat: Vec<f64>,
    time: Option<usize>,
    stopped: Option<StopDecision>,
    position: HashMap<Vertex, usize>,
    walker: Option<BallWalker>,
    order: Vec<usize>,
}

impl<'c> MsprtState<'c> {
    /// Fresh state: all `A_v = 0`, no observation consumed yet.
    pub fn new(config: &'c MsprtConfig) -> Self {
        let position = config.candidates.vertices().iter().enumerate().map(|(i, &v)| (v, i)).collect();
        MsprtState {
            config,
            a_stat: vec![0.0; config.n()],
            time: None,
            stopped: None,
            position,
            walker: None,
            order: Vec::with_capacity(config.n()),
        }
    }

    pub fn config(&self) -> &MsprtConfig {
        self.config
    }

    /// Time of the last consumed observation, `None` before the first.
    pub fn time(&self) -> Option<usize> {
        self.time
    }

    pub fn stopped(&self) -> Option<StopDecision> {
        self.stopped
    }

    /// `A_v` per candidate, in candidate order.
    pub fn a_stat(&self) -> &[f64] {
        &self.a_stat
    }

    /// `A_v` for one candidate.
    pub fn a_of(&self, v: Vertex) -> Result<f64, EstimatorError> {
        self.position.get(&v).map(|&i| self.a_stat[i]).ok_or(EstimatorError::NotCandidate(v))
    }

    /// `Z_vu(t) = A_v(t) − A_u(t)`.
    pub fn z(&self, v: Vertex, u: Vertex) -> Result<f64, EstimatorError> {
        Ok(self.a_of(v)? - self.a_of(u)?)
    }

    /// Consumes the observations of the next time step and evaluates the
    /// stopping rule.
    pub fn update(&mut self, obs: &StepObservation, graph: &Graph) -> Result<Option<StopDecision>, EstimatorError> {
        if let Some(stop) = self.stopped {
            return Err(EstimatorError::AlreadyStopped(stop.stopping_time));
        }
        self.accumulate(obs, graph)?;
        Ok(self.check_stop(graph))
    }

    /// Adds the next time step to every `A_v` without evaluating the
    /// stopping rule, so the statistics can be followed past the stop.
    pub fn accumulate(&mut self, obs: &StepObservation, graph: &Graph) -> Result<(), EstimatorError> {
        let expected = self.time.map_or(0, |t| t + 1);
        if obs.time != expected {
            return Err(EstimatorError::OutOfOrder { expected, got: obs.time });
        }
        if obs.llr_values.len() != graph.vertex_count() {
            return Err(EstimatorError::ObservationLength {
                expected: graph.vertex_count(),
                got: obs.llr_values.len(),
            });
        }
        let walker = self.walker.get_or_insert_with(|| BallWalker::new(graph));
        for (a, &v) in self.a_stat.iter_mut().zip(self.config.candidates.vertices()) {
            *a += walker.ball_sum(graph, v, obs.time, &obs.llr_values);
        }
        self.time = Some(obs.time);
        Ok(())
    }

    /// `A_v − max{A_u : u ∈ V_n, d(u, v) > R}`, `+∞` without competitors.
    pub fn statistic(&self, v: Vertex, graph: &Graph) -> Result<f64, EstimatorError> {
        let i = *self.position.get(&v).ok_or(EstimatorError::NotCandidate(v))?;
        let radius = self.config.radius;
        let best = self
            .config
            .candidates
            .vertices()
            .iter()
            .zip(&self.a_stat)
            .filter(|(u, _)| graph.distance_unchecked(u.index(), v.index()) > radius)
            .map(|(_, &a)| a)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(if best == f64::NEG_INFINITY { f64::INFINITY } else { self.a_stat[i] - best })
    }

    /// Current estimate `D_n(t)`: the candidate with the largest statistic
    /// (lowest label on ties) and that statistic.
    pub fn leader(&mut self, graph: &Graph) -> (Vertex, f64) {
        let vertices = self.config.candidates.vertices();
        let radius = self.config.radius;
        self.order.clear();
        self.order.extend(0..vertices.len());
        let a = &self.a_stat;
        self.order.sort_unstable_by(|&x, &y| a[y].total_cmp(&a[x]).then(x.cmp(&y)));
        let mut best: Option<(Vertex, f64)> = None;
        for (i, &v) in vertices.iter().enumerate() {
            let competitor =
                self.order.iter().copied().find(|&j| graph.distance_unchecked(vertices[j].index(), v.index()) > radius);
            let stat = competitor.map_or(f64::INFINITY, |j| a[i] - a[j]);
            best = match best {
                Some((bv, bs)) if bs > stat || (bs == stat && bv < v) => Some((bv, bs)),
                _ => Some((v, stat)),
            };
        }
        best.expect("candidate set is nonempty")
    }

    /// Stops once the leading statistic reaches `log(n/α)`.
    pub fn check_stop(&mut self, graph: &Graph) -> Option<StopDecision> {
        if self.stopped.is_some() {
            return self.stopped;
        }
        let t = self.time?;
        let (decision, statistic) = self.leader(graph);
        if statistic >= self.config.threshold {
            self.stopped = Some(StopDecision { decision, stopping_time: t, statistic });
        }
        self.stopped
    }
}

/// Outcome of one simulated trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialResult {
    pub seed: u64,
    pub n: usize,
    pub radius: usize,
    pub alpha: f64,
    pub true_source: Vertex,
    pub decision: Vertex,
    pub stopping_time: usize,
    pub distance: usize,
    pub success: bool,
    pub timed_out: bool,
}

/// Empirical `P_v(D(T) = u)` for one source/decision pair with `d(u,v) > R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairwiseRate {
    pub source: Vertex,
    pub decision: Vertex,
    pub count: usize,
    pub trials: usize,
    pub rate: f64,
}

/// Empirical check of both error formulations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorAudit {
    pub trials: usize,
    pub failures: usize,
    pub timeouts: usize,
    pub alpha: f64,
    /// `P(d(D(T), v) > R)` pooled over sources.
    pub failure_rate: f64,
    pub failure_wilson_low: f64,
    pub failure_wilson_high: f64,
    /// `α / n`.
    pub pairwise_bound: f64,
    pub pairwise: Vec<PairwiseRate>,
    /// Point estimate of the failure rate exceeds α.
    pub failure_violation: bool,
    /// The Wilson interval lies entirely above α.
    pub failure_significant: bool,
    /// Some pairwise rate exceeds α/n.
    pub pairwise_violation: bool,
}

impl ErrorAudit {
    pub fn max_pairwise_rate(&self) -> f64 {
        self.pairwise.iter().map(|p| p.rate).fold(0.0, f64::max)
    }
}

/// Audits trial results against `P_v(d(D,v) > R) ≤ α` and
/// `P_v(D = u) ≤ α/n` for `d(u, v) > R`.
pub fn error_guarantee_audit(results: &[TrialResult], config: &MsprtConfig) -> Result<ErrorAudit, EstimatorError> {
    if results.is_empty() {
        return Err(EstimatorError::EmptyResults);
    }
    let trials = results.len();
    let failures = results.iter().filter(|r| r.distance > config.radius).count();
    let timeouts = results.iter().filter(|r| r.timed_out).count();
    let mut per_source: HashMap<Vertex, usize> = HashMap::new();
    let mut per_pair: HashMap<(Vertex, Vertex), usize> = HashMap::new();
    for r in results {
        *per_source.entry(r.true_source).or_default() += 1;
        if r.distance > config.radius {
            *per_pair.entry((r.true_source, r.decision)).or_default() += 1;
        }
    }
    let mut pairwise: Vec<PairwiseRate> = per_pair
        .into_iter()
        .map(|((source, decision), count)| {
            let trials = per_source[&source];
            PairwiseRate { source, decision, count, trials, rate: count as f64 / trials as f64 }
        })
        .collect();
    pairwise.sort_by_key(|p| (p.source, p.decision));
    let (lo, hi) = wilson_interval(failures as u64, trials as u64, Z95);
    let failure_rate = failures as f64 / trials as f64;
    let pairwise_bound = config.alpha / config.n() as f64;
    let pairwise_violation = pairwise.iter().any(|p| p.rate > pairwise_bound);
    Ok(ErrorAudit {
        trials,
        failures,
        timeouts,
        alpha: config.alpha,
        failure_rate,
        failure_wilson_low: lo,
        failure_wilson_high: hi,
        pairwise_bound,
        pairwise,
        failure_violation: failure_rate > config.alpha,
        failure_significant: lo > config.alpha,
        pairwise_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade_sim::CascadeRun;
    use crate::obs_model::ObservationModel;

    fn v(label: usize) -> Vertex {
        Vertex::from_label(label).unwrap()
    }

    fn config(graph: &Graph, center: usize, n: usize, radius: usize, alpha: f64) -> MsprtConfig {
        let c = CandidateSet::nearest(graph, v(center), n).unwrap();
        MsprtConfig::new(c, radius, alpha).unwrap()
    }

    fn obs(time: usize, llr_values: Vec<f64>) -> StepObservation {
        StepObservation { time, llr_values, affected_count: 0 }
    }

    #[test]
    fn thresholds() {
        let g = Graph::line(1000).unwrap();
        assert!((config(&g, 500, 1000, 0, 0.1).threshold() - 9.210_340_371_976_184).abs() < 1e-12);
        assert!((config(&g, 500, 500, 0, 0.2).threshold() - 7.824_046_010_856_292).abs() < 1e-12);
        let c = CandidateSet::nearest(&g, v(1), 3).unwrap();
        assert!(MsprtConfig::new(c.clone(), 0, 1.0).is_err());
        assert!(MsprtConfig::new(c, 0, 0.0).is_err());
    }

    #[test]
    fn init_is_empty() {
        let g = Graph::line(10).unwrap();
        let cfg = config(&g, 5, 4, 0, 0.1);
        let s = MsprtState::new(&cfg);
        assert_eq!(s.time(), None);
        assert!(s.stopped().is_none());
        assert!(s.a_stat().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn single_candidate_stops_immediately() {
        let g = Graph::line(10).unwrap();
        let cfg = config(&g, 4, 1, 0, 0.3);
        let mut s = MsprtState::new(&cfg);
        let stop = s.update(&obs(0, vec![0.0; 10]), &g).unwrap().unwrap();
        assert_eq!(stop.decision, v(4));
        assert_eq!(stop.stopping_time, 0);
        assert!(stop.statistic.is_infinite());
        assert!(matches!(s.update(&obs(1, vec![0.0; 10]), &g), Err(EstimatorError::AlreadyStopped(0))));
    }

    #[test]
    fn rejects_out_of_order_and_wrong_length() {
        let g = Graph::line(10).unwrap();
        let cfg = config(&g, 5, 3, 0, 0.1);
        let mut s = MsprtState::new(&cfg);
        assert!(matches!(
            s.update(&obs(1, vec![0.0; 10]), &g),
            Err(EstimatorError::OutOfOrder { expected: 0, got: 1 })
        ));
        assert!(matches!(s.update(&obs(0, vec![0.0; 9]), &g), Err(EstimatorError::ObservationLength { .. })));
        s.update(&obs(0, vec![0.0; 10]), &g).unwrap();
        assert!(matches!(
            s.update(&obs(0, vec![0.0; 10]), &g),
            Err(EstimatorError::OutOfOrder { expected: 1, got: 0 })
        ));
    }

    #[test]
    fn zero_observations_leave_statistics_unchanged() {
        let g = Graph::line(10).unwrap();
        let cfg = config(&g, 5, 5, 0, 0.1);
        let mut s = MsprtState::new(&cfg);
        for t in 0..3 {
            assert!(s.update(&obs(t, vec![0.0; 10]), &g).unwrap().is_none());
        }
        assert!(s.a_stat().iter().all(|&a| a == 0.0));
        for &c in cfg.candidates().vertices() {
            assert_eq!(s.statistic(c, &g).unwrap(), 0.0);
        }
    }

    #[test]
    fn ball_sums_accumulate() {
        let g = Graph::line(5).unwrap();
        let cfg = config(&g, 3, 5, 0, 0.1);
        let mut s = MsprtState::new(&cfg);
        let vals = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        s.update(&obs(0, vals.clone()), &g).unwrap();
        s.update(&obs(1, vals), &g).unwrap();
        // A_3 = y_3(0) + (y_2 + y_3 + y_4)(1) = 3 + 9
        assert_eq!(s.a_of(v(3)).unwrap(), 12.0);
        // A_1 = 1 + (1 + 2)
        assert_eq!(s.a_of(v(1)).unwrap(), 4.0);
        assert_eq!(s.z(v(3), v(1)).unwrap(), 8.0);
    }

    #[test]
    fn radius_zero_statistic_is_top_two_gap() {
        let g = Graph::line(5).unwrap();
        let cfg = config(&g, 3, 3, 0, 0.1);
        let mut s = MsprtState::new(&cfg);
        s.update(&obs(0, vec![0.0, 1.0, 5.0, 3.0, 0.0]), &g).unwrap();
        assert_eq!(s.statistic(v(3), &g).unwrap(), 2.0);
        assert_eq!(s.statistic(v(2), &g).unwrap(), -4.0);
        let (leader, stat) = s.leader(&g);
        assert_eq!((leader, stat), (v(3), 2.0));
    }

    #[test]
    fn empty_competitor_set_is_infinite() {
        // a = [5, 1, 3] on the path 1–2–3, R = 1: vertex 2 has no competitor.
        let g = Graph::line(3).unwrap();
        let c = CandidateSet::from_vertices(&g, v(2), vec![v(2), v(1), v(3)]).unwrap();
        let cfg = MsprtConfig::new(c, 1, 0.1).unwrap();
        let mut s = MsprtState::new(&cfg);
        s.update(&obs(0, vec![5.0, 1.0, 3.0]), &g).unwrap_or(None);
        assert_eq!(s.a_of(v(1)).unwrap(), 5.0);
        assert_eq!(s.statistic(v(2), &g).unwrap(), f64::INFINITY);
        assert_eq!(s.statistic(v(1), &g).unwrap(), 2.0);
        assert_eq!(s.stopped().unwrap().decision, v(2));
    }

    #[test]
    fn stopping_threshold_and_ties() {
        let g = Graph::line(10).unwrap();
        // Two candidates 1 and 10 are far apart; R = 0.
        let c = CandidateSet::from_vertices(&g, v(1), vec![v(1), v(10)]).unwrap();
        let cfg = MsprtConfig::new(c, 0, 0.5).unwrap();
        let th = cfg.threshold(); // log 4
        let mut s = MsprtState::new(&cfg);
        let mut vals = vec![0.0; 10];
        vals[0] = th - 0.01;
        assert!(s.update(&obs(0, vals.clone()), &g).unwrap().is_none());
        vals[0] = 0.02;
        let stop = s.update(&obs(1, vals), &g).unwrap().unwrap();
        assert_eq!((stop.decision, stop.stopping_time), (v(1), 1));

        // Exact tie at the threshold with no competitors for either: lower id wins.
        let c = CandidateSet::from_vertices(&g, v(5), vec![v(5), v(4), v(6)]).unwrap();
        let cfg = MsprtConfig::new(c, 2, 0.5).unwrap();
        let mut s = MsprtState::new(&cfg);
        let stop = s.update(&obs(0, vec![0.0; 10]), &g).unwrap().unwrap();
        assert_eq!(stop.decision, v(4));
    }

    #[test]
    fn raising_threshold_never_shortens_run() {
        let g = Graph::line(200).unwrap();
        let model = ObservationModel::gaussian(0.0, 0.5).unwrap();
        for seed in 0..20 {
            let mut last = 0usize;
            for alpha in [0.5, 0.2, 0.05, 0.01, 0.001] {
                let cfg = config(&g, 100, 25, 0, alpha);
                let mut run = CascadeRun::start(&g, v(100), model, seed).unwrap();
                let mut s = MsprtState::new(&cfg);
                let t = loop {
                    if let Some(stop) = s.update(&run.step(), &g).unwrap() {
                        break stop.stopping_time;
                    }
                };
                assert!(t >= last, "seed {seed}, alpha {alpha}: {t} < {last}");
                last = t;
            }
        }
    }

    #[test]
    fn candidate_order_does_not_change_outcome() {
        let g = Graph::regular_tree(3, 6).unwrap();
        let model = ObservationModel::gaussian(0.0, 1.0).unwrap();
        let base = CandidateSet::nearest(&g, v(1), 40).unwrap();
        // Reverse within each distance layer.
        let mut shuffled = base.vertices().to_vec();
        let layer = |w: &Vertex| g.distance(*w, v(1)).unwrap();
        shuffled.sort_by(|a, b| layer(a).cmp(&layer(b)).then(b.cmp(a)));
        let alt = CandidateSet::from_vertices(&g, v(1), shuffled).unwrap();
        for seed in 0..10 {
            let mut outcomes = Vec::new();
            for cands in [base.clone(), alt.clone()] {
                let cfg = MsprtConfig::new(cands, 0, 0.1).unwrap();
                let mut run = CascadeRun::start(&g, v(1), model, seed).unwrap();
                let mut s = MsprtState::new(&cfg);
                let stop = loop {
                    if let Some(stop) = s.update(&run.step(), &g).unwrap() {
                        break stop;
                    }
                };
                outcomes.push((stop.decision, stop.stopping_time));
            }
            assert_eq!(outcomes[0], outcomes[1]);
        }
    }

    fn result(source: usize, decision: usize, distance: usize) -> TrialResult {
        TrialResult {
            seed: 0,
            n: 10,
            radius: 0,
            alpha: 0.1,
            true_source: v(source),
            decision: v(decision),
            stopping_time: 3,
            distance,
            success: distance == 0,
            timed_out: false,
        }
    }

    #[test]
    fn audit_flags_violations() {
        let g = Graph::line(20).unwrap();
        let cfg = config(&g, 10, 10, 0, 0.1);
        let bad: Vec<_> = (0..50).map(|_| result(10, 11, 1)).collect();
        let audit = error_guarantee_audit(&bad, &cfg).unwrap();
        assert!(audit.failure_violation && audit.failure_significant && audit.pairwise_violation);
        assert_eq!(audit.failure_rate, 1.0);
        assert_eq!(audit.pairwise.len(), 1);
        assert_eq!(audit.pairwise[0].count, 50);
    }

    #[test]
    fn audit_clean_results() {
        let g = Graph::line(20).unwrap();
        let cfg = config(&g, 10, 10, 0, 0.1);
        let good: Vec<_> = (0..500).map(|_| result(10, 10, 0)).collect();
        let audit = error_guarantee_audit(&good, &cfg).unwrap();
        assert_eq!(audit.failure_rate, 0.0);
        assert!(!audit.failure_violation && !audit.pairwise_violation);
        assert!(audit.failure_wilson_high > 0.0 && audit.failure_wilson_high < 0.01);
        assert!(matches!(error_guarantee_audit(&[], &cfg), Err(EstimatorError::EmptyResults)));
    }
}
