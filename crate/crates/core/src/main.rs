use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use echovar::cli::commands::{cmd_analyze, cmd_fit, cmd_reproduce, cmd_sensitivity, cmd_simulate, sensitivity_params};
use echovar::cli::pipeline::{parse_beta, FitModel, FloorChoice, DEFAULT_BINS};
use echovar::cli::presets::decay_config;
use echovar::cli::{load_config, Preset, REFERENCE};
use echovar::{Error, Result};

#[derive(Parser)]
#[command(name = "echovar", version, about = "Photon-echo variance simulator and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate per-shot counts from a config file or a preset.
    Simulate {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<Preset>,
        /// Overrides the seed of the config or preset.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Reject outliers and compute per-delay moments from shots.csv.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = REFERENCE.outlier_threshold)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Fit decay.csv or an x,y[,sigma] curve.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// stretched, stretched_mean, exponential or cosine.
        #[arg(long, default_value = "stretched")]
        model: FitModel,
        /// A fixed stretch exponent or `free`.
        #[arg(long, default_value = "2")]
        beta: String,
        /// shot-noise, free or a fixed value.
        #[arg(long, default_value = "shot-noise")]
        floor: FloorChoice,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Signal-to-noise of variance detection against direct echo detection.
    Sensitivity {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Regenerate the data of one figure.
    Reproduce {
        #[arg(long)]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn report(paths: &[PathBuf]) {
    let mut out = std::io::stdout().lock();
    for p in paths {
        if writeln!(out, "{}", p.display()).is_err() {
            return;
        }
    }
}

fn load(path: &Path) -> Result<echovar::montecarlo::RunConfig> {
    load_config(path)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            preset,
            seed,
            out,
        } => {
            let mut cfg = match (&config, preset) {
                (Some(path), _) => load(path)?,
                (None, Some(p)) => decay_config(p, seed.unwrap_or(0))?,
                (None, None) => return Err(Error::InvalidArgument("--config or --preset is required".into())),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            report(&cmd_simulate(&cfg, &out, preset)?);
        }
        Command::Analyze {
            input,
            threshold,
            bins,
            out,
        } => report(&cmd_analyze(&input, &out, threshold, bins)?),
        Command::Fit {
            input,
            model,
            beta,
            floor,
            out,
        } => {
            let (fit, path) = cmd_fit(&input, &out, model, parse_beta(&beta)?, floor)?;
            for (name, v) in &fit.params {
                println!("{name} = {v:e} ± {:e}", fit.sigmas[name]);
            }
            println!("{}", path.display());
        }
        Command::Sensitivity { config, out } => {
            let cfg = config.as_deref().map(load).transpose()?;
            report(&cmd_sensitivity(&sensitivity_params(cfg.as_ref()), &out)?);
        }
        Command::Reproduce { preset, seed, out } => report(&cmd_reproduce(preset, seed, &out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
