use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use floodlab::twinlab::{default_twin, EventShape};
use floodlab_cli::{diagnose_bias, generate_truth, run_experiment, score_experiment, CliError, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "floodlab", version, about = "Flood simulation and data-assimilation twin experiments")]
struct Cli {
    /// Master seed (overrides the config's).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory (or file, for diagnose-bias).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    SinglePeak,
    DoublePeak,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from its config file.
    Run { config: PathBuf },
    /// Estimate per-station offsets from a free run.
    DiagnoseBias {
        /// Experiment directory of a free run.
        #[arg(long)]
        free_run: PathBuf,
        /// observations.toml of the bundle to compare against.
        #[arg(long)]
        observations: PathBuf,
        /// Calibration window start (s); defaults to the event start.
        #[arg(long)]
        from: Option<f64>,
        /// Calibration window length (s).
        #[arg(long, default_value_t = 86_400.0)]
        length: f64,
    },
    /// (Re)score an experiment directory.
    Score {
        dir: PathBuf,
        /// Score against another observation bundle.
        #[arg(long)]
        observations: Option<PathBuf>,
    },
    /// Build the default twin and write its scenario, observations and hidden truth.
    Truth {
        #[arg(value_enum)]
        scenario: Shape,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let opts = RunOptions { seed: cli.seed, jobs: cli.jobs, output: cli.output };
            let m = run_experiment(&cfg, &opts)?;
            println!("{}: {} files", m.experiment, m.outputs.len());
        }
        Command::DiagnoseBias { free_run, observations, from, length } => {
            let obs = floodlab_cli::load_observations(&observations)?;
            let t0 = from.unwrap_or(obs.manifest.event_start);
            let out = cli.output.unwrap_or_else(|| PathBuf::from("bias.csv"));
            let bias = diagnose_bias(&free_run, &observations, (t0, t0 + length), &out)?;
            for (station, b) in bias {
                println!("{station}: {b:.4} m");
            }
        }
        Command::Score { dir, observations } => {
            let rows = score_experiment(&dir, observations.as_deref())?;
            println!("{} scores", rows.len());
        }
        Command::Truth { scenario } => {
            let shape = match scenario {
                Shape::SinglePeak => EventShape::SinglePeak,
                Shape::DoublePeak => EventShape::DoublePeak,
            };
            let tw = default_twin(shape, cli.seed.unwrap_or(0))?;
            let out = cli.output.unwrap_or_else(|| PathBuf::from("twin"));
            let paths = generate_truth(&tw, &out)?;
            println!("scenario: {}", paths.scenario.display());
            println!("observations: {}", paths.observations.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
