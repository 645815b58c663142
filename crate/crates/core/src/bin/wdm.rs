use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use wdm_core::cli::{describe_plan, report, run_sweep, SweepConfig};
use wdm_core::datasets::{save_dataset, DatasetSpec};

#[derive(Parser)]
#[command(name = "wdm", version, about = "Dependency-measure sweeps on synthetic known-MI data")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and probe every cell of a sweep config.
    RunSweep {
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Comma-separated seeds replacing those in the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Validate and print the resolved plan without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Summarize sweep CSVs into a table, a markdown file and plots.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Dataset size for the exp(MI) > n flag, overriding manifests.
        #[arg(long)]
        dataset_size: Option<usize>,
    },
    /// Render a dataset spec (JSON) into a cached archive.
    GenerateDataset { spec: PathBuf, out: PathBuf },
}

fn run(args: Args) -> wdm_core::Result<ExitCode> {
    match args.command {
        Command::RunSweep { config, out_dir, seeds, dry_run } => {
            let mut cfg = SweepConfig::from_file(&config)?;
            if let Some(seeds) = seeds {
                cfg.seeds = seeds;
                cfg.validate()?;
            }
            if dry_run {
                println!("{}", serde_json::to_string_pretty(&cfg)?);
                print!("{}", describe_plan(&cfg)?);
                return Ok(ExitCode::SUCCESS);
            }
            let dir = out_dir.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("sweep_out"));
            let outcome = run_sweep(&cfg, &dir)?;
            println!("wrote {} rows to {}", outcome.rows, outcome.csv_path.display());
            println!("manifest {}", outcome.manifest_path.display());
            println!("plot {}", outcome.plot_path.display());
            if !outcome.failures.is_empty() {
                for f in &outcome.failures {
                    eprintln!("failed: axis={} objective={} seed={}: {}", f.axis_value, f.objective.name(), f.seed, f.error);
                }
                return Ok(ExitCode::from(3));
            }
        }
        Command::Report { csv, out_dir, dataset_size } => {
            let outcome = report(&csv, out_dir.as_deref(), dataset_size)?;
            print!("{}", outcome.markdown);
            eprintln!("markdown {}", outcome.markdown_path.display());
        }
        Command::GenerateDataset { spec, out } => {
            let spec: DatasetSpec = serde_json::from_str(&std::fs::read_to_string(&spec)?)?;
            let data = spec.generate()?;
            save_dataset(&out, &spec, &data)?;
            println!("{} samples, MI {:.4} nats -> {}", data.len(), data.mi_certificate, out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
