//! Seeded Monte Carlo trials and sweeps over the candidate-set size.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, RadiusSpec};
use super::HarnessError;
use crate::cascade_sim::{CascadeRun, StepObservation};
use crate::estimator::{error_guarantee_audit, ErrorAudit, MsprtConfig, MsprtState, TrialResult};
use crate::graph::{complete_tree_vertex_count, regular_tree_vertex_count, CandidateSet, Graph, GraphKind, Vertex};
use crate::numeric::{mean_and_stderr, mix_words};
use crate::obs_model::{DivergenceReport, ObservationModel};
use crate::theory::{self, PairSearch, TheoryError, UpperBound};

/// Cap used when the upper bound cannot be evaluated.
pub const FALLBACK_TIME_CAP: usize = 100_000;

/// Allowance over α for the pooled Wilson upper bound before a cell is flagged.
pub const FAILURE_SLACK: f64 = 0.05;

/// A config with its graph, vertices and model resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub graph: Graph,
    pub source: Vertex,
    pub center: Vertex,
    pub model: ObservationModel,
    pub divergence: DivergenceReport,
}

/// Largest tree host built for evaluating bounds.
pub const MAX_THEORY_VERTICES: usize = 20_000_000;

/// Bounds at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointBounds {
    pub radius: usize,
    /// `None` when no candidate pair is farther apart than `2R`.
    pub lower: Option<usize>,
    pub upper: Option<UpperBound>,
    /// Tree height the bounds were evaluated on.
    pub host_height: Option<usize>,
}

/// Everything fixed at one grid point.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub n: usize,
    pub radius: usize,
    pub msprt: MsprtConfig,
    /// `None` when no candidate pair is farther apart than `2R`.
    pub lower: Option<usize>,
    pub upper: Option<UpperBound>,
    pub time_cap: usize,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let graph = Graph::from_kind(config.graph_kind()?)?;
        let source = config.source.resolve(&graph)?;
        let center = config.center.unwrap_or(config.source).resolve(&graph)?;
        let model = config.observation_model()?;
        if let Some(&n) = config.n_grid.iter().find(|&&n| n > graph.vertex_count()) {
            return Err(HarnessError::Config(super::config::ConfigError::Invalid(format!(
                "n = {n} exceeds the {} host vertices",
                graph.vertex_count()
            ))));
        }
        let divergence = model.best_c_constant();
        Ok(Experiment { config, graph, source, center, model, divergence })
    }

    /// Candidate set, bounds and time cap for candidate-set size `n`.
    pub fn point(&self, n: usize) -> Result<GridPoint, HarnessError> {
        let bounds = self.bounds(n)?;
        let candidates = CandidateSet::nearest(&self.graph, self.center, n)?;
        let time_cap = bounds.upper.map_or(FALLBACK_TIME_CAP, |u| 10 * u.value + 100);
        let msprt = MsprtConfig::new(candidates, bounds.radius, self.config.alpha)?;
        Ok(GridPoint { n, radius: bounds.radius, msprt, lower: bounds.lower, upper: bounds.upper, time_cap })
    }

    /// Lower and upper bound at size `n`.
    ///
    /// Trees stand in for the infinite regular tree: when a ball involved in
    /// some `F_vu` would pass the leaves, the bounds are recomputed on a
    /// taller copy. BFS numbering keeps candidate indices unchanged.
    pub fn bounds(&self, n: usize) -> Result<PointBounds, HarnessError> {
        let radius = self.config.radius.resolve(n);
        let alpha = self.config.alpha;
        let mut host = self.graph.clone();
        loop {
            let candidates = CandidateSet::nearest(&host, self.center, n)?;
            let lower = theory::lower_bound(&host, &candidates, radius, alpha, &self.model, PairSearch::Auto);
            let upper = theory::upper_bound(&host, &candidates, radius, alpha, &self.divergence, PairSearch::Auto);
            let height = match host.kind() {
                GraphKind::RegularTree { height, .. } => height,
                GraphKind::CompleteTree { levels, .. } => levels - 1,
                _ => {
                    return Ok(PointBounds {
                        radius,
                        lower: optional(lower)?.map(|b| b.value),
                        upper: optional(upper)?,
                        host_height: None,
                    })
                }
            };
            if !is_horizon(&lower) && !is_horizon(&upper) {
                return Ok(PointBounds {
                    radius,
                    lower: optional(lower)?.map(|b| b.value),
                    upper: optional(upper)?,
                    host_height: Some(height),
                });
            }
            let needed = height + 2;
            let taller = match host.kind() {
                GraphKind::RegularTree { k, .. } => GraphKind::RegularTree { k, height: needed },
                GraphKind::CompleteTree { branching, .. } => GraphKind::CompleteTree { branching, levels: needed + 1 },
                other => other,
            };
            let count = match taller {
                GraphKind::RegularTree { k, height } => regular_tree_vertex_count(k, height),
                GraphKind::CompleteTree { branching, levels } => complete_tree_vertex_count(branching, levels),
                _ => None,
            };
            match count.filter(|&c| c <= MAX_THEORY_VERTICES).map(|_| Graph::from_kind(taller)) {
                Some(Ok(g)) => host = g,
                _ => {
                    return Ok(PointBounds { radius, lower: None, upper: None, host_height: Some(height) });
                }
            }
        }
    }

    /// `hash(base_seed, n, trial_index)`.
    pub fn trial_seed(&self, n: usize, trial_index: usize) -> u64 {
        mix_words(&[self.config.base_seed, n as u64, trial_index as u64])
    }

    /// Runs one cascade with the test until it stops or hits the time cap.
    pub fn run_trial(&self, point: &GridPoint, trial_index: usize) -> Result<TrialResult, HarnessError> {
        let seed = self.trial_seed(point.n, trial_index);
        let mut run = CascadeRun::start(&self.graph, self.source, self.model, seed)?;
        let mut state = MsprtState::new(&point.msprt);
        let mut obs = StepObservation::default();
        let (decision, stopping_time, timed_out) = loop {
            run.step_into(&mut obs);
            if let Some(stop) = state.update(&obs, &self.graph)? {
                break (stop.decision, stop.stopping_time, false);
            }
            if obs.time >= point.time_cap {
                break (state.leader(&self.graph).0, obs.time, true);
            }
        };
        let distance = self.graph.distance(decision, self.source)?;
        Ok(TrialResult {
            seed,
            n: point.n,
            radius: point.radius,
            alpha: self.config.alpha,
            true_source: self.source,
            decision,
            stopping_time,
            distance,
            success: distance <= point.radius,
            timed_out,
        })
    }

    /// All trials of one grid point, in trial-index order.
    pub fn run_point(&self, point: &GridPoint) -> Result<Vec<TrialResult>, HarnessError> {
        (0..self.config.trials_per_point).into_par_iter().map(|i| self.run_trial(point, i)).collect()
    }
}

fn is_horizon<T>(r: &Result<T, TheoryError>) -> bool {
    matches!(r, Err(TheoryError::Horizon { .. }))
}

pub(crate) fn optional<T>(r: Result<T, TheoryError>) -> Result<Option<T>, HarnessError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(TheoryError::NoAdmissiblePair(_) | TheoryError::Horizon { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Builds the experiment and runs trial `trial_index` at size `n`.
pub fn run_trial(config: &ExperimentConfig, n: usize, trial_index: usize) -> Result<TrialResult, HarnessError> {
    let experiment = Experiment::new(config.clone())?;
    let point = experiment.point(n)?;
    experiment.run_trial(&point, trial_index)
}

/// Aggregates of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub series: String,
    pub n: usize,
    pub radius: usize,
    pub trials: usize,
    pub timeouts: usize,
    pub mean_t: f64,
    pub stderr_t: f64,
    pub empirical_failure_rate: f64,
    pub failure_wilson_high: f64,
    pub lower_t: Option<usize>,
    pub upper_t: Option<usize>,
    /// Pooled Wilson upper bound exceeds `α + FAILURE_SLACK`.
    pub flagged: bool,
}

/// One series of a sweep with the underlying trials.
#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub series: String,
    pub config: ExperimentConfig,
    pub graph_label: String,
    pub rows: Vec<SweepRow>,
    pub audits: Vec<ErrorAudit>,
    pub trials: Vec<TrialResult>,
    pub divergence: DivergenceReport,
}

impl SweepSummary {
    pub fn row(&self, n: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

/// Runs every grid point of `config`.
pub fn sweep(config: &ExperimentConfig) -> Result<SweepSummary, HarnessError> {
    let experiment = Experiment::new(config.clone())?;
    let series = config.series_label();
    let mut rows = Vec::new();
    let mut audits = Vec::new();
    let mut trials = Vec::new();
    for &n in &config.n_grid {
        let point = experiment.point(n)?;
        let results = experiment.run_point(&point)?;
        let audit = error_guarantee_audit(&results, &point.msprt)?;
        let times: Vec<f64> = results.iter().map(|r| r.stopping_time as f64).collect();
        let (mean_t, stderr_t) = mean_and_stderr(&times);
        rows.push(SweepRow {
            series: series.clone(),
            n,
            radius: point.radius,
            trials: results.len(),
            timeouts: audit.timeouts,
            mean_t,
            stderr_t,
            empirical_failure_rate: audit.failure_rate,
            failure_wilson_high: audit.failure_wilson_high,
            lower_t: point.lower,
            upper_t: point.upper.map(|u| u.value),
            flagged: audit.failure_wilson_high > config.alpha + FAILURE_SLACK,
        });
        audits.push(audit);
        trials.extend(results);
    }
    Ok(SweepSummary {
        series,
        config: config.clone(),
        graph_label: experiment.graph.kind().to_string(),
        rows,
        audits,
        trials,
        divergence: experiment.divergence,
    })
}

/// Configs of the tree experiment, one per `k ∈ {3, 4, 5}`.
pub fn figure1_configs(trials: usize, base_seed: u64) -> Vec<ExperimentConfig> {
    [3, 4, 5]
        .into_iter()
        .map(|k| ExperimentConfig { trials_per_point: trials, base_seed, ..ExperimentConfig::figure1(k) })
        .collect()
}

/// Configs of the line experiment, one per radius rule.
pub fn figure2_configs(trials: usize, base_seed: u64) -> Vec<ExperimentConfig> {
    [RadiusSpec::Zero, RadiusSpec::FiveLogN, RadiusSpec::SqrtN]
        .into_iter()
        .map(|r| ExperimentConfig { trials_per_point: trials, base_seed, ..ExperimentConfig::figure2(r) })
        .collect()
}

pub fn sweep_figure1(trials: usize, base_seed: u64) -> Result<Vec<SweepSummary>, HarnessError> {
    figure1_configs(trials, base_seed).iter().map(sweep).collect()
}

pub fn sweep_figure2(trials: usize, base_seed: u64) -> Result<Vec<SweepSummary>, HarnessError> {
    figure2_configs(trials, base_seed).iter().map(sweep).collect()
}

/// `a ≤ b` up to `k` pooled standard errors.
pub fn le_within(a: (f64, f64), b: (f64, f64), k: f64) -> bool {
    a.0 - b.0 <= k * (a.1 * a.1 + b.1 * b.1).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_tree() -> ExperimentConfig {
        ExperimentConfig {
            height: Some(8),
            n_grid: vec![1, 10, 40],
            trials_per_point: 8,
            ..ExperimentConfig::figure1(3)
        }
    }

    #[test]
    fn trials_are_reproducible() {
        let c = small_tree();
        let a = run_trial(&c, 40, 3).unwrap();
        let b = run_trial(&c, 40, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(run_trial(&c, 40, 4).unwrap().seed, a.seed);
        assert!(!a.timed_out);
    }

    #[test]
    fn single_candidate_stops_immediately() {
        let r = run_trial(&small_tree(), 1, 0).unwrap();
        assert_eq!(r.stopping_time, 0);
        assert!(r.success);
        assert_eq!(r.decision, r.true_source);
    }

    #[test]
    fn tree_trial_is_short() {
        let c = ExperimentConfig { n_grid: vec![1000], ..ExperimentConfig::figure1(3) };
        let r = run_trial(&c, 1000, 0).unwrap();
        assert!(r.stopping_time < 10, "{r:?}");
    }

    #[test]
    fn sweep_shape_and_order_independence() {
        let c = small_tree();
        let s = sweep(&c).unwrap();
        assert_eq!(s.rows.len(), 3);
        assert_eq!(s.trials.len(), 24);
        assert!(s.rows.iter().all(|r| r.mean_t >= 0.0 && (0.0..=1.0).contains(&r.empirical_failure_rate)));
        // Results do not depend on the worker count.
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let again = single.install(|| sweep(&c)).unwrap();
        assert_eq!(s.rows, again.rows);
        assert_eq!(s.trials, again.trials);
    }

    #[test]
    fn grid_point_bounds() {
        let e = Experiment::new(ExperimentConfig::figure2(RadiusSpec::SqrtN)).unwrap();
        let p = e.point(499).unwrap();
        assert_eq!(p.radius, 22);
        assert!(p.lower.unwrap() <= p.upper.unwrap().value);
        assert_eq!(p.time_cap, 10 * p.upper.unwrap().value + 100);
        let too_big = ExperimentConfig { n_grid: vec![2000], ..ExperimentConfig::figure2(RadiusSpec::Zero) };
        assert!(Experiment::new(too_big).is_err());
    }

    #[test]
    fn pooled_comparison() {
        assert!(le_within((1.0, 0.1), (1.1, 0.1), 2.0));
        assert!(le_within((1.2, 0.1), (1.0, 0.1), 2.0));
        assert!(!le_within((1.5, 0.1), (1.0, 0.1), 2.0));
    }
}
