use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tempcode::experiment::{export_synthetic, render_plots, run_experiment, validate_config, ExperimentConfig, ExperimentError, Stage};

/// Temporal spike encoders for few-neuron keyword spotting.
#[derive(Debug, Parser)]
#[command(name = "tempcode", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a config and print it with every default filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run an experiment (or one stage of it).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory; defaults to `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: logical cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_enum, default_value_t = StageArg::All)]
        stage: StageArg,
    },
    /// Write the configured synthetic dataset as formant CSVs and a manifest.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Re-render the SVG charts of a run directory from its CSV reports.
    Plot {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StageArg {
    All,
    Encode,
    Analyze,
    Plot,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::All => Stage::All,
            StageArg::Encode => Stage::Encode,
            StageArg::Analyze => Stage::Analyze,
            StageArg::Plot => Stage::Plot,
        }
    }
}

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, ExitCode> {
    match validate_config(path) {
        Ok(mut cfg) => {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            Ok(cfg)
        }
        Err(errs) => {
            eprintln!("{}: invalid config", path.display());
            for e in errs {
                eprintln!("  {e}");
            }
            Err(ExitCode::from(CONFIG_ERROR))
        }
    }
}

fn set_jobs(jobs: Option<usize>) -> Result<(), ExitCode> {
    if let Some(n) = jobs {
        if n == 0 {
            eprintln!("--jobs must be at least 1");
            return Err(ExitCode::from(CONFIG_ERROR));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    Ok(())
}

fn report(e: &ExperimentError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn run(cli: Cli) -> Result<(), ExitCode> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load(&config, None)?;
            println!("{:#}", cfg.to_json());
            println!("# config_hash={}", cfg.hash());
        }
        Command::Run {
            config,
            seed,
            out,
            jobs,
            stage,
        } => {
            let cfg = load(&config, seed)?;
            set_jobs(jobs)?;
            let Some(out) = out.or_else(|| cfg.out_dir.as_ref().map(|p| cfg.base_dir.join(p))) else {
                eprintln!("no output directory: pass --out or set out_dir");
                return Err(ExitCode::from(CONFIG_ERROR));
            };
            let summary = run_experiment(&cfg, &out, stage.into()).map_err(|e| report(&e))?;
            for m in &summary.models {
                let a = &m.accuracy;
                println!(
                    "keyword {:>2}  {:<8} features {:>4}  train {:.3}  test {:.3}",
                    a.keyword,
                    a.architecture.name(),
                    a.n_features,
                    a.train_accuracy,
                    a.test_accuracy
                );
            }
            println!("run directory: {} (config_hash={})", summary.dir.display(), summary.config_hash);
        }
        Command::Synth { config, seed, out, jobs } => {
            let cfg = load(&config, seed)?;
            set_jobs(jobs)?;
            let n = export_synthetic(&cfg, &out).map_err(|e| report(&e))?;
            println!("wrote {n} samples and {}", out.join("manifest.csv").display());
        }
        Command::Plot { out } => {
            let n = render_plots(&out).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(RUNTIME_ERROR)
            })?;
            println!("rendered {n} charts into {}", out.join("plots").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { CONFIG_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
