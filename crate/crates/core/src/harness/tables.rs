//! Theory rows evaluated on a sweep grid.

use serde::Serialize;

use super::sweep::Experiment;
use super::HarnessError;
use crate::graph::{CandidateSet, GraphKind};
use crate::theory;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryRow {
    pub graph: String,
    pub k_or_dim: usize,
    pub n: usize,
    pub radius: usize,
    pub alpha: f64,
    pub sym_kl: f64,
    pub c_constant: f64,
    pub lower_t: Option<usize>,
    pub upper_t: Option<usize>,
    pub upper_t_log_n: Option<usize>,
    /// Applicable asymptotic display; the lower one for lines.
    pub corollary_value: Option<f64>,
    pub regime: String,
    /// `log|N_v(R)| / log n` at the candidate center.
    pub radius_ratio: Option<f64>,
}

/// Bounds and asymptotics for every `n` in the experiment's grid.
pub fn theory_table(experiment: &Experiment) -> Result<Vec<TheoryRow>, HarnessError> {
    let config = &experiment.config;
    let kind = experiment.graph.kind();
    let d = &experiment.divergence;
    config
        .n_grid
        .iter()
        .map(|&n| {
            let candidates = CandidateSet::nearest(&experiment.graph, experiment.center, n)?;
            let bounds = experiment.bounds(n)?;
            let radius = bounds.radius;
            let (k_or_dim, corollary_value, regime) = match kind {
                GraphKind::RegularTree { k, .. } => (k, theory::corollary_tree(n as f64, k).ok(), "tree".to_string()),
                GraphKind::CompleteTree { branching, .. } => {
                    (branching + 1, theory::corollary_tree(n as f64, branching + 1).ok(), "tree".to_string())
                }
                GraphKind::Line { .. } => match theory::corollary_line(n as f64, radius, d.sym_kl, d.c_constant) {
                    Ok(c) => (1, Some(c.lower), c.regime.as_str().to_string()),
                    Err(_) => (1, None, "none".to_string()),
                },
                GraphKind::Lattice { dim, .. } => (dim, None, "none".to_string()),
            };
            let radius_ratio =
                if n > 1 { Some(theory::radius_ratio(&experiment.graph, &candidates, radius)?) } else { None };
            Ok(TheoryRow {
                graph: kind.to_string(),
                k_or_dim,
                n,
                radius,
                alpha: config.alpha,
                sym_kl: d.sym_kl,
                c_constant: d.c_constant,
                lower_t: bounds.lower,
                upper_t: bounds.upper.map(|u| u.value),
                upper_t_log_n: bounds.upper.map(|u| u.value_log_n),
                corollary_value,
                regime,
                radius_ratio,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ExperimentConfig, RadiusSpec};

    #[test]
    fn tree_corollary_column() {
        let e = Experiment::new(ExperimentConfig::figure1(3)).unwrap();
        let rows = theory_table(&e).unwrap();
        assert_eq!(rows.len(), 5);
        assert!((rows[0].corollary_value.unwrap() - 2.788).abs() < 1e-3);
        assert!((rows[4].corollary_value.unwrap() - 3.275).abs() < 1e-3);
        assert!(rows.iter().all(|r| r.lower_t.unwrap() <= r.upper_t.unwrap() && r.regime == "tree"));
    }

    #[test]
    fn line_regimes() {
        let e = Experiment::new(ExperimentConfig::figure2(RadiusSpec::SqrtN)).unwrap();
        let rows = theory_table(&e).unwrap();
        let last = rows.last().unwrap();
        assert_eq!((last.n, last.radius, last.regime.as_str()), (499, 22, "sqrt"));
        let e = Experiment::new(ExperimentConfig::figure2(RadiusSpec::Zero)).unwrap();
        assert!(theory_table(&e).unwrap().iter().all(|r| r.regime == "unit_radius"));
    }
}
