use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fsbench::{
    cmd_cross, cmd_eval, cmd_export_csv, cmd_inspect, cmd_plotdata, cmd_synth, CliResult,
    EmbeddingSource, GridOverrides, Outcome, RunConfig,
};
use fsbench_core::TransformMode;

#[derive(Parser)]
#[command(
    name = "fsbench",
    version,
    about = "Episodic few-shot evaluation over stored embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// In-domain grid over every embedding file.
    Eval(RunArgs),
    /// Protocol rows: in-domain baselines and cross-dataset transfers.
    Cross(RunArgs),
    /// Print metadata, class counts and norm statistics of an embedding file.
    Inspect { path: PathBuf },
    /// Turn a directory of cell reports into plot-ready CSV.
    Plotdata {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump an embedding file as CSV.
    ExportCsv {
        path: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write Gaussian stand-in embeddings with the class counts of a known dataset.
    Synth {
        /// msldv1, msid or msldv2.
        #[arg(long)]
        like: String,
        #[arg(long, default_value = "gaussian")]
        backbone: String,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        /// Distance between class means, in units of sigma.
        #[arg(long, default_value_t = 3.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin protocol name, or `all`.
    #[arg(long)]
    protocol: Option<String>,
    /// Embedding file as DATASET=PATH; repeatable.
    #[arg(long = "embeddings", value_name = "DATASET=PATH")]
    embeddings: Vec<EmbeddingSource>,
    #[arg(long, value_delimiter = ',')]
    n_way: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    shots: Vec<usize>,
    /// Queries per episode.
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Base seed; falls back to FSB_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Feature transforms: un, l2n, cl2n.
    #[arg(long = "transform", value_delimiter = ',')]
    modes: Vec<TransformMode>,
    /// Worker threads; 0 or unset uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exchange support and query datasets of cross-dataset protocols.
    #[arg(long)]
    swap: bool,
    /// Confidence level of the reported intervals.
    #[arg(long)]
    level: Option<f64>,
    /// Draw an equal number of queries from every class.
    #[arg(long)]
    stratified: bool,
}

impl RunArgs {
    fn into_config(self) -> CliResult<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let flags = RunConfig {
            embeddings: self.embeddings,
            protocol: self.protocol,
            protocols: Vec::new(),
            grid: GridOverrides {
                n_way: self.n_way,
                shots: self.shots,
                queries: self.queries,
                episodes: self.episodes,
                modes: self.modes,
                level: self.level,
                stratified_queries: self.stratified,
            },
            seed: self.seed,
            jobs: self.jobs,
            out: self.out,
            swap: self.swap,
        };
        Ok(base.override_with(flags))
    }
}

fn report(outcome: &Outcome) {
    for path in &outcome.written {
        log::debug!("wrote {}", path.display());
    }
    println!(
        "wrote {} files to {} (config {}, seed {})",
        outcome.written.len(),
        outcome.out_dir.display(),
        &outcome.config_hash[..12],
        outcome.base_seed
    );
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Eval(args) => report(&cmd_eval(&args.into_config()?)?),
        Command::Cross(args) => report(&cmd_cross(&args.into_config()?)?),
        Command::Inspect { path } => print!("{}", cmd_inspect(&path)?),
        Command::Plotdata { dir, out } => {
            for p in cmd_plotdata(&dir, out.as_deref())? {
                println!("wrote {}", p.display());
            }
        }
        Command::ExportCsv { path, out } => cmd_export_csv(&path, &out)?,
        Command::Synth {
            like,
            backbone,
            dim,
            separation,
            seed,
            out,
        } => {
            let n = cmd_synth(&like, &backbone, dim, separation, seed, &out)?;
            println!("wrote {n} bytes to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
