use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xdc::config::ExperimentConfig;
use xdc::eval::SweepAxis;
use xdc::runner;
use xdc::Regime;

/// Multi-modal deep clustering experiments.
#[derive(Parser)]
#[command(name = "xdc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run deep clustering end to end and evaluate the result.
    Run {
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Run once per value of one axis and tabulate the evaluations.
    Sweep {
        #[command(flatten)]
        common: ConfigArgs,
        /// `regime` or `k`.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. `sdc,xdc` or `4,8,16`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Summarise a finished run.
    Report { run_dir: PathBuf },
    /// Print the purest and least pure clusters of a finished run.
    InspectClusters {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value_t = 10)]
        bottom: usize,
    },
    /// Generate a dataset file (CSV when the path ends in .csv).
    GenData {
        #[command(flatten)]
        common: ConfigArgs,
        /// Destination file.
        #[arg(long = "path")]
        path: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Key-value or JSON config file; defaults apply to anything unset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    regime: Option<Regime>,
    #[arg(long)]
    k: Option<usize>,
    /// Seeds both the run and the data generator.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Overwrite existing artifacts.
    #[arg(long)]
    force: bool,
    /// Extra `dotted.key=value` overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> xdc::Result<ExperimentConfig> {
        let base = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let mut pairs: Vec<(String, String)> = Vec::new();
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| xdc::Error::ConfigField {
                field: s.clone(),
                reason: "expected KEY=VALUE".into(),
            })?;
            pairs.push((k.trim().into(), v.trim().into()));
        }
        if let Some(r) = self.regime {
            pairs.push(("regime".into(), r.name().into()));
        }
        if let Some(k) = self.k {
            pairs.push(("k".into(), k.to_string()));
        }
        if let Some(s) = self.seed {
            pairs.push(("run_seed".into(), s.to_string()));
            pairs.push(("data.generator.seed".into(), s.to_string()));
        }
        if let Some(o) = &self.out {
            // quoted so that numeric-looking directory names stay strings
            pairs.push(("output_dir".into(), format!("\"{o}\"")));
        }
        base.with_overrides(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }
}

fn execute(cli: Cli) -> xdc::Result<()> {
    match cli.command {
        Command::Run { common } => {
            let config = common.resolve()?;
            let manifest = runner::cmd_run(&config, common.force)?;
            println!(
                "{} iterations, fc-only {:.4}, finetune {:.4} -> {}",
                manifest.iterations.len(),
                manifest.metrics.as_ref().map_or(f64::NAN, |m| m.fc_only.top1),
                manifest.metrics.as_ref().map_or(f64::NAN, |m| m.full_finetune.top1),
                config.output_dir
            );
        }
        Command::Sweep { common, axis, values } => {
            let config = common.resolve()?;
            let table = runner::cmd_sweep(&config, axis, &values, common.force)?;
            print!("{}", table.to_csv());
            if table.rows.iter().any(|r| r.error.is_some()) {
                return Err(xdc::Error::Config("some sweep rows failed".into()));
            }
        }
        Command::Report { run_dir } => print!("{}", runner::cmd_report(&run_dir)?),
        Command::InspectClusters { run_dir, top, bottom } => {
            print!("{}", runner::cmd_inspect_clusters(&run_dir, top, bottom)?)
        }
        Command::GenData { common, path } => {
            let config = common.resolve()?;
            let data = runner::cmd_gen_data(&config.data.generator, &path, common.force)?;
            println!("{} samples -> {}", data.len(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match runner::thread_cap_from_env() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match runner::with_threads(threads, || execute(cli)).and_then(|r| r) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
