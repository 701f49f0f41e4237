use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lowrank_dre::decay::{
    default_window, fit_sqrt_decay, fit_time_power, SingularSpectrum, DEFAULT_FLOOR,
};
use lowrank_dre::error::Result;
use lowrank_dre::experiments::{
    compare_oracle, read_spectrum_csv, read_sweep_csv, run_experiment, sweep_time,
    ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "lrdre", version, about = "Low-rank Lyapunov/Riccati benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=4))]
    example: u32,
    /// TOML file; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve on every level, fit the spectra and write the outputs.
    Run(Common),
    /// σ₁ at the sweep times on one level.
    SweepTime {
        #[command(flatten)]
        common: Common,
        /// Grid size; the finest configured level by default.
        #[arg(long)]
        nx: Option<usize>,
    },
    /// Low-rank solution against the dense reference (nx <= 16).
    CompareOracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8)]
        nx: usize,
    },
    /// Fit a spectra_*.csv (√k decay) or sweep_*.csv (time power) file.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Output count used for the default fit window.
        #[arg(long, default_value_t = 1)]
        dim_y: usize,
        #[arg(long, default_value_t = 0)]
        dim_z: usize,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.example_id = common.example;
    if let Some(out) = &common.output {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fit_file(input: &PathBuf, dim_y: usize, dim_z: usize) -> Result<serde_json::Value> {
    let name = input.file_name().and_then(|s| s.to_str()).unwrap_or("");
    if name.starts_with("sweep") {
        let points = read_sweep_csv(input)?;
        let p = fit_time_power(&points)?;
        return Ok(serde_json::json!({ "time_power": p }));
    }
    let sigmas = read_spectrum_csv(input)?;
    let spec = SingularSpectrum::new(0.0, 0, sigmas.len(), sigmas)?;
    let (shift, k_min, k_max) = default_window(&spec, dim_y, dim_z, DEFAULT_FLOOR).ok_or(
        lowrank_dre::error::Error::TooFewPoints {
            got: spec.len(),
            needed: 4,
        },
    )?;
    let fit = fit_sqrt_decay(&spec, shift, k_min, k_max, DEFAULT_FLOOR * spec.largest())?;
    Ok(serde_json::to_value(fit)?)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run(common) => {
            let cfg = load(&common)?;
            let summary = run_experiment(&cfg)?;
            for level in &summary.levels {
                match (&level.error, level.sigma1) {
                    (Some(e), _) => println!("nx={:<4} error: {e}", level.nx),
                    (None, Some(s1)) => println!(
                        "nx={:<4} rank={:<4} sigma1={s1:.6e} eta={} bound={}",
                        level.nx,
                        level.rank.unwrap_or(0),
                        level.fit.map_or("-".into(), |f| format!("{:.3}", f.eta)),
                        match level.bound_passed {
                            Some(true) => "pass",
                            Some(false) => "FAIL",
                            None => "-",
                        }
                    ),
                    (None, None) => println!("nx={:<4} empty solution", level.nx),
                }
            }
            if let Some(p) = summary.time_power {
                println!("time power p = {p:.4}");
            }
            Ok(summary.exit_code() as u8)
        }
        Command::SweepTime { common, nx } => {
            let cfg = load(&common)?;
            let nx = nx.unwrap_or(*cfg.levels.last().unwrap());
            let points = sweep_time(&cfg, nx)?;
            for (t, s) in &points {
                println!("{t:e} {s:e}");
            }
            if let Ok(p) = fit_time_power(&points) {
                println!("time power p = {p:.4}");
            }
            Ok(0)
        }
        Command::CompareOracle { common, nx } => {
            let cfg = load(&common)?;
            let report = compare_oracle(&cfg, nx)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        Command::Fit {
            input,
            dim_y,
            dim_z,
        } => {
            println!("{}", serde_json::to_string_pretty(&fit_file(&input, dim_y, dim_z)?)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
