use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use muce_cli::{
    cmd_evaluate, cmd_generate, cmd_similarity_study, cmd_train, resolve_config, Axis, CliResult, GlobalOptions,
    Stage, Workspace,
};

#[derive(Parser)]
#[command(name = "muce", version, about = "Contrastive-feature multi-user channel estimation experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite existing artifacts
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the contrastive, downstream and test splits
    Generate,
    /// Train one stage: clnet, dsnet:<q>, joint, baselines or all
    Train {
        #[arg(long)]
        stage: Stage,
        /// Train every point of a pilot or labels sweep
        #[arg(long)]
        axis: Option<Axis>,
    },
    /// Score all methods along snr, pilot, labels or position
    Evaluate {
        #[arg(long)]
        axis: Axis,
    },
    /// Similarity of raw signals and features versus distance
    SimilarityStudy,
    /// Print the effective configuration
    Config,
}

fn run(cli: Cli) -> CliResult<()> {
    let opts = GlobalOptions {
        config: cli.global.config,
        seed: cli.global.seed,
        out: cli.global.out,
        force: cli.global.force,
    };
    let ws = Workspace::new(resolve_config(&opts)?);
    match cli.command {
        Command::Generate => {
            let s = cmd_generate(&ws, opts.force)?;
            for (path, bytes) in s.files {
                println!("{}\t{bytes}", path.display());
            }
        }
        Command::Train { stage, axis } => cmd_train(&ws, stage, axis, opts.force)?,
        Command::Evaluate { axis } => {
            let s = cmd_evaluate(&ws, axis)?;
            for m in &s.missing {
                eprintln!("missing: {m}");
            }
            println!("{}", s.csv.display());
        }
        Command::SimilarityStudy => {
            for r in cmd_similarity_study(&ws)? {
                println!(
                    "[{}, {}) m\tpairs {}\traw {:?}\tfeature {:?}",
                    r.lo, r.hi, r.pairs, r.raw, r.feature
                );
            }
        }
        Command::Config => print!("{}", ws.cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.error_line());
            ExitCode::FAILURE
        }
    }
}
