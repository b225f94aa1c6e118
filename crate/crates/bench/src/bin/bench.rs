use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hybrid_demix::solver::write_trace_csv;
use hybrid_demix_bench::config::{ExperimentConfig, Method};
use hybrid_demix_bench::sweep::{load_config, run_sweep, write_csv, SweepOptions};
use hybrid_demix_bench::trial::{draw_inputs, run_trial, TrialContext};

#[derive(Parser)]
#[command(name = "bench", about = "Hybrid-field channel estimation benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config or run manifest (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in profile: desk or paper.
    #[arg(long)]
    profile: Option<String>,
    /// Comma-separated methods (anm, anm_true_order, omp); overrides the config.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full sweep and write results.csv and manifest.json.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Write zeros to wall_ms so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
        /// Directory for cached subspace bases.
        #[arg(long)]
        basis_cache: Option<PathBuf>,
    },
    /// Run one trial cell and print its CSV rows.
    Single {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Base seed override.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        point: usize,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Write the ANM solver trace (every 10 iterations) to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

fn resolve(args: &ConfigArgs) -> Result<ExperimentConfig, String> {
    let mut cfg = match (&args.config, &args.profile) {
        (Some(_), Some(_)) => return Err("--config and --profile are mutually exclusive".into()),
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            load_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        (None, Some(name)) => ExperimentConfig::profile(name).map_err(|e| e.to_string())?,
        (None, None) => return Err("one of --config or --profile is required".into()),
    };
    if let Some(list) = &args.methods {
        cfg.methods = list
            .iter()
            .map(|s| Method::parse(s))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run {
            cfg,
            out,
            jobs,
            no_timing,
            basis_cache,
        } => {
            let config = resolve(&cfg)?;
            let opts = SweepOptions {
                jobs,
                timing: !no_timing,
                basis_cache,
            };
            let n_cells = config.points().len() * config.trials;
            eprintln!("running {} ({n_cells} cells) into {}", config.name, out.display());
            let output = run_sweep(&config, &out, &opts).map_err(|e| e.to_string())?;
            eprintln!(
                "wrote {} and {}",
                output.csv_path.display(),
                output.manifest_path.display()
            );
            Ok(())
        }
        Command::Single {
            cfg,
            seed,
            point,
            trial,
            trace,
        } => {
            let mut config = resolve(&cfg)?;
            if let Some(s) = seed {
                config.base_seed = s;
            }
            let points = config.points();
            let p = points
                .get(point)
                .ok_or_else(|| format!("point {point} out of range (0..{})", points.len()))?;
            let ctx = TrialContext::new(&config, None).map_err(|e| e.to_string())?;
            let record = run_trial(&ctx, p, trial).map_err(|e| e.to_string())?;
            let mut stdout = std::io::stdout().lock();
            write_csv(std::slice::from_ref(&record), true, &mut stdout).map_err(|e| e.to_string())?;
            if let Some(path) = trace {
                let inputs = draw_inputs(&ctx, p, trial).map_err(|e| e.to_string())?;
                let mut opts = config.solver.options();
                opts.trace_every = Some(10);
                let est = hybrid_demix::demix::estimate_channel(
                    &inputs.ensemble,
                    &ctx.basis,
                    config.solver.tau,
                    Some(inputs.delta),
                    &opts,
                )
                .map_err(|e| e.to_string())?;
                let file = fs::File::create(&path).map_err(|e| e.to_string())?;
                write_trace_csv(&est.solution.trace, std::io::BufWriter::new(file))
                    .map_err(|e| e.to_string())?;
                eprintln!("trace written to {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
