//! CSV tables and the run manifest.
//!
//! Missing values (undefined bounds) are written as `NaN`, which gnuplot
//! treats as a gap. Floats use the shortest round-trip representation, so
//! identical inputs give identical bytes.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::sweep::SweepSummary;
use super::tables::TheoryRow;
use super::HarnessError;
use crate::estimator::TrialResult;
use crate::obs_model::DivergenceReport;

pub const TRIALS_HEADER: [&str; 11] =
    ["seed", "graph", "n", "R", "alpha", "true_source", "decision", "T", "distance", "success", "timed_out"];
pub const SWEEP_HEADER: [&str; 11] = [
    "series",
    "n",
    "R",
    "trials",
    "timeouts",
    "mean_T",
    "stderr_T",
    "empirical_failure_rate",
    "lower_T",
    "upper_T",
    "failure_wilson_high",
];
pub const THEORY_HEADER: [&str; 13] = [
    "graph",
    "k_or_dim",
    "n",
    "R",
    "alpha",
    "sym_kl",
    "c_constant",
    "lower_T",
    "upper_T",
    "corollary_value",
    "regime",
    "upper_T_log_n",
    "radius_ratio",
];
pub const DIVERGENCE_HEADER: [&str; 5] = ["family", "params", "sym_kl", "epsilon", "c_constant"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| x.to_string())
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn write_trials<W: Write>(out: W, graph: &str, trials: &[TrialResult]) -> Result<(), HarnessError> {
    let mut w = writer(out);
    w.write_record(TRIALS_HEADER)?;
    for t in trials {
        w.write_record([
            t.seed.to_string(),
            graph.to_string(),
            t.n.to_string(),
            t.radius.to_string(),
            t.alpha.to_string(),
            t.true_source.to_string(),
            t.decision.to_string(),
            t.stopping_time.to_string(),
            t.distance.to_string(),
            t.success.to_string(),
            t.timed_out.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep<W: Write>(out: W, summaries: &[SweepSummary]) -> Result<(), HarnessError> {
    let mut w = writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in summaries.iter().flat_map(|s| &s.rows) {
        w.write_record([
            r.series.clone(),
            r.n.to_string(),
            r.radius.to_string(),
            r.trials.to_string(),
            r.timeouts.to_string(),
            r.mean_t.to_string(),
            r.stderr_t.to_string(),
            r.empirical_failure_rate.to_string(),
            opt(r.lower_t),
            opt(r.upper_t),
            r.failure_wilson_high.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_theory<W: Write>(out: W, rows: &[TheoryRow]) -> Result<(), HarnessError> {
    let mut w = writer(out);
    w.write_record(THEORY_HEADER)?;
    for r in rows {
        w.write_record([
            r.graph.clone(),
            r.k_or_dim.to_string(),
            r.n.to_string(),
            r.radius.to_string(),
            r.alpha.to_string(),
            r.sym_kl.to_string(),
            r.c_constant.to_string(),
            opt(r.lower_t),
            opt(r.upper_t),
            opt(r.corollary_value),
            r.regime.clone(),
            opt(r.upper_t_log_n),
            opt(r.radius_ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_divergence<W: Write>(out: W, reports: &[DivergenceReport]) -> Result<(), HarnessError> {
    let mut w = writer(out);
    w.write_record(DIVERGENCE_HEADER)?;
    for d in reports {
        w.write_record([
            d.model.family_name().to_string(),
            d.model.params_string(),
            d.sym_kl.to_string(),
            d.epsilon_used.to_string(),
            d.c_constant.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Machine-readable description of a run directory.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub radius_rounding: &'static str,
    pub seed_derivation: &'static str,
    pub files: Vec<String>,
    pub configs: Vec<ExperimentConfig>,
}

impl Manifest {
    pub fn new(command: &str, configs: Vec<ExperimentConfig>) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            radius_rounding: "5logn = round(5 ln n), sqrt_n = round(sqrt n)",
            seed_derivation:
                "trial seed = mix(base_seed, n, trial_index); observation seed = mix(trial seed, t, vertex index)",
            files: Vec::new(),
            configs,
        }
    }
}

/// Creates `dir` and writes a file into it, recording its name.
pub fn write_file(
    dir: &Path,
    name: &str,
    manifest: &mut Manifest,
    body: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<(), HarnessError>,
) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    body(&mut out)?;
    out.flush()?;
    manifest.files.push(name.to_string());
    Ok(path)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Writes `sweep.csv`, one `trials_<series>.csv` per series, `theory.csv`,
/// `divergence.csv` and `manifest.json` into `dir`.
pub fn write_sweep_dir(
    dir: &Path,
    command: &str,
    summaries: &[SweepSummary],
    theory: &[TheoryRow],
) -> Result<Manifest, HarnessError> {
    let mut manifest = Manifest::new(command, summaries.iter().map(|s| s.config.clone()).collect());
    write_file(dir, "sweep.csv", &mut manifest, |w| write_sweep(w, summaries))?;
    for s in summaries {
        let name = format!("trials_{}.csv", file_stem(&s.series));
        write_file(dir, &name, &mut manifest, |w| write_trials(w, &s.graph_label, &s.trials))?;
    }
    write_file(dir, "theory.csv", &mut manifest, |w| write_theory(w, theory))?;
    let divergences: Vec<DivergenceReport> = summaries.iter().map(|s| s.divergence).collect();
    let mut unique: Vec<DivergenceReport> = Vec::new();
    for d in divergences {
        if !unique.iter().any(|u| u.model == d.model) {
            unique.push(d);
        }
    }
    write_file(dir, "divergence.csv", &mut manifest, |w| write_divergence(w, &unique))?;
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// Series label reduced to `[A-Za-z0-9_]`.
pub fn file_stem(series: &str) -> String {
    series.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}
