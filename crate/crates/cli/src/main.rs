use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uplink_cli::{load_experiment, preset, presets, run_to_files, CliError};
use uplink_core::channel::write_channel_dump;
use uplink_core::rng::{stream, Domain};
use uplink_core::validation::{run_suite, SuiteOptions};
use uplink_core::{Scenario64, ScenarioConfig};

#[derive(Parser)]
#[command(name = "uplink", version, about = "Massive-MIMO uplink rate experiments")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV plus a JSON sidecar.
    Run {
        /// Experiment JSON; with --preset, a partial override of the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Output CSV path (default: `<experiment name>.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "UPLINK_THREADS")]
        threads: Option<usize>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List built-in presets.
    ListPresets,
    /// Print a preset as an experiment JSON file.
    ExportPreset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property and moment checks and write a JSON report.
    Validate {
        /// Scenario JSON for the convergence probes.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, env = "UPLINK_THREADS")]
        threads: Option<usize>,
    },
    /// Write one channel realization in the binary dump format.
    DumpChannel {
        /// Scenario JSON (default scenario if absent).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Trial index selecting the random stream.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
}

fn list_presets() {
    for p in presets() {
        println!("{:<28} {}", p.name, p.description);
    }
}

fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn scenario_config(path: Option<&PathBuf>) -> Result<ScenarioConfig, CliError> {
    Ok(match path {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    })
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            config,
            preset,
            out,
            threads,
            seed,
        } => {
            let exp = load_experiment(config.as_deref(), preset.as_deref())?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("{}.csv", exp.name)));
            let rows = with_threads(threads, || run_to_files(&exp, seed, &out))??;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::ListPresets => list_presets(),
        Command::ExportPreset { name, out } => {
            let text = serde_json::to_string_pretty(&preset(&name)?).expect("presets serialize");
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => println!("{text}"),
            }
        }
        Command::Validate {
            config,
            out,
            seed,
            threads,
        } => {
            let cfg = scenario_config(config.as_ref())?;
            let opts = SuiteOptions {
                seed,
                ..Default::default()
            };
            let report = with_threads(threads, || run_suite(&cfg, &opts))??;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => println!("{text}"),
            }
            if !report.passed {
                eprintln!("some checks failed");
            }
        }
        Command::DumpChannel { config, out, trial } => {
            let cfg = scenario_config(config.as_ref())?;
            let scn = Scenario64::build(&cfg)?;
            let real = scn.draw(&mut stream(cfg.seed, Domain::Trial, trial));
            let file = std::fs::File::create(&out)?;
            write_channel_dump(&real, std::io::BufWriter::new(file))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(command) = cli.command else {
        list_presets();
        return ExitCode::SUCCESS;
    };
    match execute(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("uplink: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
