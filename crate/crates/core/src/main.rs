use cathseg::cli::{self, CliError, CliResult, TrainArgs};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Catheter segmentation and centerline extraction for X-ray fluoroscopy.
#[derive(Parser, Debug)]
#[command(name = "cathseg", version)]
struct Args {
    /// JSON run configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    GenData {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
    /// Train the network on a dataset.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint to write.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Loss trace CSV (default: next to the checkpoint).
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Segment frames and extract centerlines.
    Extract {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// A sequence directory or a dataset of `seq_*` directories.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use the ground-truth masks as probability maps instead of a model.
        #[arg(long)]
        no_model: bool,
    },
    /// Compare extracted centerlines with ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Report directory (default: the prediction directory).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threshold_mm: Option<f64>,
    },
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> CliResult<PathBuf> {
    flag.or_else(|| fallback.clone()).ok_or_else(|| CliError::Usage(format!("missing --{name}")))
}

fn run(args: Args) -> CliResult<()> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let cfg = cli::load_config(args.config.as_deref())?;
    match args.command {
        Command::GenData { out, n } => {
            let out = required(out, &cfg.paths.data_dir, "out")?;
            cli::cmd_gen_data(&cfg, &out, n, args.seed)?;
            println!("{}", out.join(cathseg::synthgen::MANIFEST).display());
        }
        Command::Train { data, out, epochs, resume, loss_csv } => {
            let data = required(data, &cfg.paths.data_dir, "data")?;
            let out = required(out, &cfg.paths.checkpoint, "out")?;
            let report = cli::cmd_train(&cfg, &data, &out, &TrainArgs { epochs, seed: args.seed, resume, loss_csv })?;
            if let Some((e, l)) = report.trace.last() {
                println!("epoch {e}: loss {l:.5}");
            }
            println!("{}", report.checkpoint.display());
        }
        Command::Extract { checkpoint, input, out, no_model } => {
            let out = required(out, &cfg.paths.out_dir, "out")?;
            let checkpoint = if no_model { None } else { Some(required(checkpoint, &cfg.paths.checkpoint, "checkpoint")?) };
            let report = cli::cmd_extract(&cfg, checkpoint.as_deref(), &input, &out)?;
            let (frames, failed) = report.sequences.iter().flat_map(|(_, c)| c).fold((0, 0), |(n, f), c| {
                (n + 1, f + usize::from(c.is_empty()))
            });
            println!("{frames} frames, {failed} without a centerline");
        }
        Command::Evaluate { pred, gt, out, threshold_mm } => {
            let out = out.unwrap_or_else(|| pred.clone());
            let report = cli::cmd_evaluate(&cfg, &pred, &gt, &out, threshold_mm)?;
            println!("{}", serde_json::to_string_pretty(&report.summary).expect("summary serializes"));
            println!("{}", Path::new(&out).join("report.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
