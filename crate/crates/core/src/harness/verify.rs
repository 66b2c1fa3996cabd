//! Brute-force oracle suites run at small scale.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::Serialize;

use crate::cascade_sim::{CascadeRun, StepObservation};
use crate::estimator::{MsprtConfig, MsprtState};
use crate::graph::{CandidateSet, Graph, Vertex};
use crate::numeric::{mean_and_stderr, mix_words};
use crate::obs_model::ObservationModel;
use crate::theory::{f_line_closed_form, growth_function};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    LlrIdentity,
    FClosedForms,
    ChernoffGaussian,
    ExpectedDrift,
    MidpointTree,
}

impl Suite {
    pub const ALL: [Suite; 5] =
        [Suite::LlrIdentity, Suite::FClosedForms, Suite::ChernoffGaussian, Suite::ExpectedDrift, Suite::MidpointTree];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::LlrIdentity => "llr_identity",
            Suite::FClosedForms => "f_closed_forms",
            Suite::ChernoffGaussian => "chernoff_gaussian",
            Suite::ExpectedDrift => "expected_drift",
            Suite::MidpointTree => "midpoint_tree",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL.into_iter().find(|suite| suite.name() == s).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(Suite::name).collect();
            format!("unknown suite {s:?}; expected one of {}", names.join(", "))
        })
    }
}

/// Largest deviation found against the tolerance of a suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub checks: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl VerifyReport {
    fn new(suite: Suite, checks: usize, max_deviation: f64, tolerance: f64) -> Self {
        VerifyReport { suite, checks, max_deviation, tolerance, passed: max_deviation <= tolerance }
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} (max deviation {:.3e}, tolerance {:.1e}, {} checks)",
            self.suite,
            if self.passed { "PASS" } else { "FAIL" },
            self.max_deviation,
            self.tolerance,
            self.checks
        )
    }
}

/// Runs a suite at its default size.
pub fn verify(suite: Suite) -> VerifyReport {
    match suite {
        Suite::LlrIdentity => llr_identity(50, 0x11),
        Suite::FClosedForms => f_closed_forms(40, 40),
        Suite::ChernoffGaussian => chernoff_gaussian(50),
        Suite::ExpectedDrift => expected_drift(10_000, 0x22),
        Suite::MidpointTree => midpoint_tree(8, 10),
    }
}

/// `A_v − A_u` from the incremental state against the product-form
/// log-likelihood ratio of the raw observations, on line(50) and tree(3,5).
/// Deviation is `|a − b| / max(|b|, 1)`.
pub fn llr_identity(probes_per_graph: usize, seed: u64) -> VerifyReport {
    let model = ObservationModel::gaussian(0.0, 2.0).expect("valid model");
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut checks = 0;
    for graph in [Graph::line(50).expect("valid"), Graph::regular_tree(3, 5).expect("valid")] {
        let all = CandidateSet::nearest(&graph, graph.canonical_source(), graph.vertex_count()).expect("valid");
        let config = MsprtConfig::new(all, 0, 0.5).expect("valid");
        let n = graph.vertex_count();
        for _ in 0..probes_per_graph {
            let source = Vertex::from_index(rng.random_range(0..n));
            let v = Vertex::from_index(rng.random_range(0..n));
            let u = loop {
                let u = Vertex::from_index(rng.random_range(0..n));
                if u != v {
                    break u;
                }
            };
            let t = rng.random_range(0..=10usize);
            let mut run = CascadeRun::start(&graph, source, model, rng.random()).expect("valid source");
            let mut state = MsprtState::new(&config);
            let mut direct = 0.0;
            for s in 0..=t {
                let raw = run.raw_observations(s);
                for (w, &y) in graph.vertices().zip(&raw) {
                    let under_v = graph.distance(w, v).expect("valid") <= s;
                    let under_u = graph.distance(w, u).expect("valid") <= s;
                    direct += model.ln_density(y, under_v).expect("in support")
                        - model.ln_density(y, under_u).expect("in support");
                }
                state.accumulate(&run.step(), &graph).expect("in order");
            }
            let incremental = state.z(v, u).expect("candidates");
            worst = worst.max((incremental - direct).abs() / direct.abs().max(1.0));
            checks += 1;
        }
    }
    VerifyReport::new(Suite::LlrIdentity, checks, worst, 1e-9)
}

/// BFS `f_vu` on an interior line pair against the closed form for even
/// `r ≤ max_r` and `t ≤ max_t`.
pub fn f_closed_forms(max_r: usize, max_t: usize) -> VerifyReport {
    let length = 4 * (max_r + max_t) + 10;
    let graph = Graph::line(length).expect("valid");
    let base = 2 * (max_r + max_t) + 5;
    let mut worst = 0u64;
    let mut checks = 0;
    for r in (2..=max_r).step_by(2) {
        let g = growth_function(&graph, Vertex::from_index(base), Vertex::from_index(base + r), max_t).expect("valid");
        for (t, &f) in g.values.iter().enumerate() {
            worst = worst.max(f.abs_diff(f_line_closed_form(r, t).expect("even")));
            checks += 1;
        }
    }
    VerifyReport::new(Suite::FClosedForms, checks, worst as f64, 0.0)
}

/// Closed-form Gaussian `I(x)` against the numeric supremum over `λ` on
/// `points` values of `x ∈ [0, D̃)` for several mean shifts, plus the
/// closed-form `D̃` against quadrature.
pub fn chernoff_gaussian(points: usize) -> VerifyReport {
    let mut worst = 0.0f64;
    let mut checks = 0;
    for (mu0, mu1) in [(0.0, 2.0), (0.0, 0.5), (1.0, -0.5)] {
        let m = ObservationModel::gaussian(mu0, mu1).expect("valid");
        let d = m.sym_kl();
        worst = worst.max((d - m.sym_kl_numeric()).abs());
        checks += 1;
        for i in 0..points {
            let x = d * i as f64 / points as f64;
            let closed = m.chernoff_exponent(x).expect("in domain");
            let numeric = m.chernoff_exponent_numeric(x).expect("in domain");
            worst = worst.max((closed - numeric).abs());
            checks += 1;
        }
    }
    VerifyReport::new(Suite::ChernoffGaussian, checks, worst, 1e-6)
}

/// Mean of `Z_vu(t)` under source `v` against `D̃ f_vu(t)` on the line with
/// `d(u, v) = 4`, `t = 0..=3`. Deviation is measured in standard errors.
pub fn expected_drift(trials: usize, seed: u64) -> VerifyReport {
    let model = ObservationModel::gaussian(0.0, 2.0).expect("valid");
    let (z, expected) = drift_samples(&model, trials, seed);
    let worst = z
        .iter()
        .zip(&expected)
        .map(|(samples, &e)| {
            let (mean, se) = mean_and_stderr(samples);
            (mean - e).abs() / se
        })
        .fold(0.0, f64::max);
    VerifyReport::new(Suite::ExpectedDrift, z.len(), worst, 3.0)
}

/// Per-time samples of `Z_vu(t)` and their expectations `D̃ f_vu(t)`.
pub fn drift_samples(model: &ObservationModel, trials: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    const T_MAX: usize = 3;
    let graph = Graph::line(40).expect("valid");
    let (v, u) = (Vertex::from_index(18), Vertex::from_index(22));
    let pair = CandidateSet::from_vertices(&graph, v, vec![v, u]).expect("valid");
    let config = MsprtConfig::new(pair, 0, 0.5).expect("valid");
    let f = growth_function(&graph, v, u, T_MAX).expect("valid");
    let expected: Vec<f64> = f.values.iter().map(|&x| model.sym_kl() * x as f64).collect();
    let mut z: Vec<Vec<f64>> = (0..=T_MAX).map(|_| Vec::with_capacity(trials)).collect();
    let mut obs = StepObservation::default();
    for trial in 0..trials {
        let mut run = CascadeRun::start(&graph, v, *model, mix_words(&[seed, trial as u64])).expect("valid");
        let mut state = MsprtState::new(&config);
        for samples in z.iter_mut() {
            run.step_into(&mut obs);
            state.accumulate(&obs, &graph).expect("in order");
            samples.push(state.z(v, u).expect("candidates"));
        }
    }
    (z, expected)
}

/// `|N_v(s) ∩ N_u(s)| = |N_w(s − r/2)|` on regular_tree(3, 14) for pairs
/// whose midpoint is the root. Deviation counts mismatching vertices.
pub fn midpoint_tree(max_r: usize, max_s: usize) -> VerifyReport {
    let graph = Graph::regular_tree(3, 14).expect("valid");
    let root = graph.canonical_source();
    let child =
        |x: Vertex| graph.neighbors(x).filter(|&y| graph.depth(y) > graph.depth(x)).min().expect("inner vertex");
    let children: Vec<Vertex> = graph.neighbors(root).collect();
    let mut worst = 0usize;
    let mut checks = 0;
    for r in (2..=max_r).step_by(2) {
        let (mut a, mut b) = (children[0], children[1]);
        for _ in 1..r / 2 {
            a = child(a);
            b = child(b);
        }
        for s in 0..=max_s {
            let ba: HashSet<Vertex> = graph.ball(a, s).expect("valid").into_iter().collect();
            let bb: HashSet<Vertex> = graph.ball(b, s).expect("valid").into_iter().collect();
            let inter = ba.intersection(&bb).count();
            let expected = if s < r / 2 { 0 } else { graph.ball_size(root, s - r / 2).expect("valid") };
            worst = worst.max(inter.abs_diff(expected));
            checks += 1;
        }
    }
    VerifyReport::new(Suite::MidpointTree, checks, worst as f64, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn small_suites_pass() {
        assert!(llr_identity(5, 3).passed);
        assert!(f_closed_forms(10, 10).passed);
        assert!(chernoff_gaussian(5).passed);
        assert!(midpoint_tree(4, 5).passed);
        let r = expected_drift(500, 9);
        assert_eq!(r.checks, 4);
    }

    #[test]
    fn drift_expectations() {
        let m = ObservationModel::gaussian(0.0, 2.0).unwrap();
        let (_, e) = drift_samples(&m, 1, 0);
        assert_eq!(e, vec![4.0, 16.0, 32.0, 48.0]);
    }
}
