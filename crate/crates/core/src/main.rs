use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use netcascade::harness::output::{self, Manifest};
use netcascade::harness::{self, sweep, Experiment, ExperimentConfig, HarnessError, Suite, SweepSummary};

#[derive(Parser)]
#[command(name = "netcascade", version, about = "Sequential source localization for noisy network cascades")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (flat TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the base seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override trials per grid point
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trial and print its result as JSON
    Simulate {
        /// Candidate-set size (default: first entry of n_grid)
        #[arg(long)]
        n: Option<usize>,
        /// Trial index used in the seed derivation
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Monte Carlo sweep over n
    Sweep {
        #[arg(value_enum)]
        which: Which,
    },
    /// Bound and asymptotics table for a config or a preset
    Theory {
        #[arg(value_enum)]
        which: Option<Which>,
    },
    /// Run an oracle suite (or `all`)
    Verify { suite: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Figure1,
    Figure2,
    Custom,
}

fn load(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let path = common.config.as_ref().ok_or_else(|| {
        HarnessError::Config(harness::ConfigError::Invalid("this command needs --config <path>".into()))
    })?;
    let mut config = ExperimentConfig::load(path)?;
    apply_overrides(&mut config, common);
    Ok(config)
}

fn apply_overrides(config: &mut ExperimentConfig, common: &Common) {
    if let Some(seed) = common.seed {
        config.base_seed = seed;
    }
    if let Some(trials) = common.trials {
        config.trials_per_point = trials;
    }
}

fn configs_for(which: Which, common: &Common) -> Result<(String, Vec<ExperimentConfig>), HarnessError> {
    let presets = match which {
        Which::Figure1 => sweep::figure1_configs(50, 1),
        Which::Figure2 => sweep::figure2_configs(50, 1),
        Which::Custom => return Ok(("custom".into(), vec![load(common)?])),
    };
    if common.config.is_some() {
        return Err(HarnessError::Config(harness::ConfigError::Invalid(
            "presets take no --config; use `custom` instead".into(),
        )));
    }
    let mut configs = presets;
    for c in &mut configs {
        apply_overrides(c, common);
    }
    let name = match which {
        Which::Figure1 => "figure1",
        _ => "figure2",
    };
    Ok((name.into(), configs))
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    let common = &cli.common;
    match cli.command {
        Command::Simulate { n, trial } => {
            let config = load(common)?;
            let n = n.unwrap_or(config.n_grid[0]);
            let experiment = Experiment::new(ExperimentConfig { n_grid: vec![n], ..config })?;
            let point = experiment.point(n)?;
            let result = experiment.run_trial(&point, trial)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(true)
        }
        Command::Sweep { which } => {
            let (name, configs) = configs_for(which, common)?;
            let summaries: Vec<SweepSummary> = configs.iter().map(harness::sweep).collect::<Result<_, _>>()?;
            let mut theory = Vec::new();
            for c in &configs {
                theory.extend(harness::theory_table(&Experiment::new(c.clone())?)?);
            }
            let dir = common.out.clone().unwrap_or_else(|| configs[0].output_dir.clone());
            output::write_sweep_dir(&dir, &format!("sweep {name}"), &summaries, &theory)?;
            output::write_sweep(io::stdout().lock(), &summaries)?;
            for row in summaries.iter().flat_map(|s| &s.rows) {
                if row.flagged || row.timeouts > 0 {
                    eprintln!(
                        "warning: {} n={}: failure rate {:.4} (Wilson upper {:.4}), {} timeouts",
                        row.series, row.n, row.empirical_failure_rate, row.failure_wilson_high, row.timeouts
                    );
                }
            }
            eprintln!("wrote {}", dir.display());
            Ok(true)
        }
        Command::Theory { which } => {
            let (name, configs) = match (which, &common.config) {
                (Some(w), _) => configs_for(w, common)?,
                (None, Some(_)) => ("custom".into(), vec![load(common)?]),
                (None, None) => {
                    let mut all = sweep::figure1_configs(50, 1);
                    all.extend(sweep::figure2_configs(50, 1));
                    ("figures".into(), all)
                }
            };
            let mut rows = Vec::new();
            let mut divergences = Vec::new();
            for c in &configs {
                let experiment = Experiment::new(c.clone())?;
                rows.extend(harness::theory_table(&experiment)?);
                if !divergences.iter().any(|d: &netcascade::DivergenceReport| d.model == experiment.model) {
                    divergences.push(experiment.divergence);
                }
            }
            if let Some(dir) = &common.out {
                let mut manifest = Manifest::new(&format!("theory {name}"), configs.clone());
                output::write_file(dir, "theory.csv", &mut manifest, |w| output::write_theory(w, &rows))?;
                output::write_file(dir, "divergence.csv", &mut manifest, |w| {
                    output::write_divergence(w, &divergences)
                })?;
                output::write_manifest(dir, &manifest)?;
            }
            output::write_theory(io::stdout().lock(), &rows)?;
            Ok(rows.iter().all(|r| match (r.lower_t, r.upper_t) {
                (Some(lo), Some(hi)) => lo <= hi,
                _ => true,
            }))
        }
        Command::Verify { suite } => {
            let suites: Vec<Suite> = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                vec![suite.parse().map_err(|e: String| HarnessError::Config(harness::ConfigError::Invalid(e)))?]
            };
            let mut ok = true;
            for s in suites {
                let report = harness::verify(s);
                ok &= report.passed;
                println!("{report}");
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
            eprintln!("error: cannot start {workers} workers: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
