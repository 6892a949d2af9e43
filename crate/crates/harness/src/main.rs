use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccke_core::quantile_net::{read_checkpoint, write_checkpoint, QuantileModel};
use ccke_harness::config::KEYS;
use ccke_harness::dataset::{log_dataset, write_dataset};
use ccke_harness::env::Environment;
use ccke_harness::experiment::{run_experiment, train_model, ExperimentSpec, ModelSource};
use ccke_harness::report::{aggregate, emit_report, read_trials, write_aggregate};
use ccke_harness::{EnvKind, ExperimentConfig, ExperimentReport, HarnessError, Result};
use ccke_sim::phy::ser::{DEFAULT_N_MC, DEFAULT_SER_SEED};
use ccke_sim::phy::SerTable;
use clap::{Arg, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ccke", version, about = "Counterfactual KPI estimation with weighted conformal calibration")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the PHY symbol-error-rate grid and write it as CSV.
    SerTable {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_N_MC)]
        n_mc: usize,
        #[arg(long, default_value_t = DEFAULT_SER_SEED)]
        seed: u64,
    },
    /// Fit a quantile model on target-app samples and checkpoint it.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment and write trials.csv and aggregate.csv.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
        /// Use a checkpointed model instead of training.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Aggregate one or more per-trial CSVs into box-plot statistics.
    Report {
        #[arg(long = "trials", required = true, num_args = 1..)]
        trials: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Log a dataset of (context, app, KPI) tuples under the selection policy.
    Log {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// `--config FILE` plus one `--key-name VALUE` override per config key.
struct ConfigArgs {
    file: Option<PathBuf>,
    overrides: Vec<(&'static str, String)>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.file {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        for (k, v) in &self.overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(m: &ArgMatches) -> std::result::Result<Self, clap::Error> {
        Ok(Self {
            file: m.get_one::<PathBuf>("config").cloned(),
            overrides: KEYS
                .iter()
                .filter_map(|(k, _)| m.get_one::<String>(k).map(|v| (*k, v.clone())))
                .collect(),
        })
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> std::result::Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for ConfigArgs {
    fn augment_args(cmd: Command) -> Command {
        let cmd = cmd.arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value configuration file"),
        );
        KEYS.iter().fold(cmd, |cmd, (k, help)| {
            cmd.arg(Arg::new(*k).long(k.replace('_', "-")).value_name("VALUE").help(*help))
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

fn load_model(path: &Path) -> Result<QuantileModel> {
    Ok(read_checkpoint(BufReader::new(File::open(path)?))?)
}

fn with_model<A>(mut spec: ExperimentSpec<A>, model: Option<&Path>) -> Result<ExperimentSpec<A>> {
    if let Some(p) = model {
        spec.model = ModelSource::Given(load_model(p)?);
    }
    Ok(spec)
}

fn run(cfg: &ExperimentConfig, model: Option<&Path>) -> Result<ExperimentReport> {
    match cfg.environment {
        EnvKind::Mac => {
            let (env, spec) = cfg.mac_env()?;
            run_experiment(&env, &with_model(spec, model)?)
        }
        EnvKind::Phy => {
            let (env, spec) = cfg.phy_env()?;
            run_experiment(&env, &with_model(spec, model)?)
        }
        EnvKind::Synthetic => {
            let (env, spec) = cfg.synthetic_env()?;
            run_experiment(&env, &with_model(spec, model)?)
        }
    }
}

fn save_model<E: Environment>(env: &E, spec: &ExperimentSpec<E::App>, out: &Path) -> Result<()> {
    spec.validate()?;
    let model = train_model(env, spec, spec.base_seed)?;
    write_checkpoint(&model, BufWriter::new(File::create(out)?))?;
    Ok(())
}

fn train(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    match cfg.environment {
        EnvKind::Mac => {
            let (env, spec) = cfg.mac_env()?;
            save_model(&env, &spec, out)
        }
        EnvKind::Phy => {
            let (env, spec) = cfg.phy_env()?;
            save_model(&env, &spec, out)
        }
        EnvKind::Synthetic => {
            let (env, spec) = cfg.synthetic_env()?;
            save_model(&env, &spec, out)
        }
    }
}

fn log<E: Environment>(env: &E, n: usize, seed: u64, out: &Path) -> Result<()> {
    if n == 0 {
        return Err(HarnessError::Config("--n must be at least 1".into()));
    }
    write_dataset(env, &log_dataset(env, n, seed), BufWriter::new(File::create(out)?))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::SerTable { out, n_mc, seed } => {
            SerTable::build(n_mc, seed)?.save(&out)?;
            println!("wrote {}", out.display());
        }
        Cmd::Train { cfg, out } => {
            train(&cfg.resolve()?, &out)?;
            println!("wrote {}", out.display());
        }
        Cmd::Run { cfg, out_dir, checkpoint } => {
            let cfg = cfg.resolve()?;
            let report = run(&cfg, checkpoint.as_deref())?;
            let (trials, agg) = emit_report(&report, &out_dir)?;
            for m in report.methods() {
                println!(
                    "{m}: mean coverage {:.4}, mean inefficiency {:.4}",
                    report.mean_coverage(m),
                    report.mean_inefficiency_clipped(m)
                );
            }
            if let Some(e) = report.weight_error {
                println!("measured mean |w_hat - w|: {e:.4}");
            }
            println!("wrote {} and {}", trials.display(), agg.display());
        }
        Cmd::Report { trials, out } => {
            let mut rows = Vec::new();
            for p in &trials {
                rows.extend(read_trials(File::open(p)?)?);
            }
            write_aggregate(&aggregate(&rows), BufWriter::new(File::create(&out)?))?;
            println!("wrote {}", out.display());
        }
        Cmd::Log { cfg, n, out } => {
            let cfg = cfg.resolve()?;
            match cfg.environment {
                EnvKind::Mac => log(&cfg.mac_env()?.0, n, cfg.base_seed, &out)?,
                EnvKind::Phy => log(&cfg.phy_env()?.0, n, cfg.base_seed, &out)?,
                EnvKind::Synthetic => log(&cfg.synthetic_env()?.0, n, cfg.base_seed, &out)?,
            }
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
