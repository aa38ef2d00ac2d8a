use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qsmooth::scenarios::{pre_solve, run_scenario, Preset, ScenarioConfig};
use qsmooth::{Error, Result};

#[derive(Parser)]
#[command(name = "qsmooth", version, about = "Quantum state smoothing experiments for a monitored qubit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset and write its CSV files.
    Run {
        /// Preset name, e.g. classical-z or cost-comparison.
        preset: String,
        /// Base configuration file (`key = value` lines).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one configuration key.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the effective configuration instead of running.
        #[arg(long)]
        dry_run: bool,
    },
    /// Solve for the adaptive-scheme ensemble and print it.
    PreSolve {
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Also write pre-solve.csv and pre-solve.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite.
    Validate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn configure(
    mut cfg: ScenarioConfig,
    params: &[String],
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<ScenarioConfig> {
    let preset = cfg.preset;
    for kv in params {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--param `{kv}` is not KEY=VALUE")))?;
        let k = k.trim();
        cfg.set(k, v.trim())
            .map_err(|m| Error::Config(format!("--param {k}: {m}")))?;
    }
    if cfg.preset != preset {
        return Err(Error::Config("the preset cannot be overridden by --param".into()));
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            preset,
            config,
            params,
            seed,
            out,
            dry_run,
        } => {
            let preset: Preset = preset.parse()?;
            let base = match config {
                Some(path) => {
                    let mut c = ScenarioConfig::from_file(&path)?;
                    if c.preset != preset {
                        return Err(Error::Config(format!(
                            "{} is for preset {}, not {preset}",
                            path.display(),
                            c.preset
                        )));
                    }
                    c.preset = preset;
                    c
                }
                None => ScenarioConfig::new(preset),
            };
            let cfg = configure(base, &params, seed, out)?;
            if dry_run {
                print!("{}", cfg.to_text());
                return Ok(true);
            }
            let output = run_scenario(&cfg)?;
            for n in &output.notes {
                println!("{preset}: {n}");
            }
            for p in output.write(&cfg.out)? {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
        Command::PreSolve {
            params,
            seed,
            format,
            out,
        } => {
            let cfg = configure(ScenarioConfig::new(Preset::PreSolve), &params, seed, out.clone())?;
            let output = run_scenario(&cfg)?;
            match format {
                Format::Csv => print!("{}", output.datasets[0].to_csv()),
                Format::Json => {
                    let report = pre_solve(&cfg.params()?, cfg.multistart, cfg.seed)?;
                    let json = serde_json::to_string_pretty(&report)
                        .map_err(|e| Error::Validation(e.to_string()))?;
                    println!("{json}");
                }
            }
            for n in &output.notes {
                eprintln!("{n}");
            }
            if out.is_some() {
                output.write(&cfg.out)?;
            }
            Ok(true)
        }
        Command::Validate => {
            let checks = qsmooth::validation::run_checks();
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed", checks.len());
            Ok(failed == 0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
