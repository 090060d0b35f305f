use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cogan::cli::{self, ConfigFile, Profile, Resolved};
use cogan::Result;

#[derive(clap::Args)]
struct Common {
    /// JSON configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Profile::Paper)]
    profile: Profile,
    /// Output directory
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Validate the configuration and print the network shapes
    #[arg(long)]
    dry_run: bool,
}

#[derive(Parser)]
#[command(name = "cogan", version, about = "Coupled GAN training, evaluation, adaptation and transformation")]
struct Args {
    #[command(subcommand)]
    verb: VerbArgs,
}

#[derive(Subcommand)]
enum VerbArgs {
    /// Train one coupled model
    Train(Common),
    /// Pixel agreement of a checkpoint
    Eval(Common),
    /// Weight-sharing sweep over (k, l) and seeds
    Sweep(Common),
    /// Domain adaptation with the source-only baseline
    Uda(Common),
    /// Cross-domain transformation by latent inversion
    Transform(Common),
}

fn run(args: Args) -> Result<()> {
    let (verb, c) = match args.verb {
        VerbArgs::Train(c) => ("train", c),
        VerbArgs::Eval(c) => ("eval", c),
        VerbArgs::Sweep(c) => ("sweep", c),
        VerbArgs::Uda(c) => ("uda", c),
        VerbArgs::Transform(c) => ("transform", c),
    };
    let file = match &c.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let r = Resolved::new(c.profile, &file, c.seed)?;
    if c.dry_run {
        print!("{}", cli::dry_run_report(&r)?);
        return Ok(());
    }
    match verb {
        "train" => {
            let path = cli::cmd_train(&r, &c.out)?;
            println!("wrote {}", path.display());
        }
        "eval" => {
            let rec = cli::cmd_eval(&r, &c.out)?;
            println!("agreement {:.6} (k={}, l={}, iteration {})", rec.ratio, rec.k, rec.l, rec.iteration);
        }
        "sweep" => {
            cli::cmd_sweep(&r, &c.out, |rec| {
                eprintln!("{} k={} l={} seed={} best {:.4} at {}", rec.task, rec.k, rec.l, rec.seed, rec.ratio, rec.iteration)
            })?;
            println!("wrote {}", c.out.join("sweep.csv").display());
        }
        "uda" => {
            cli::cmd_uda(&r, &c.out, |rec| eprintln!("{} trial {} accuracy {:.4}", rec.direction, rec.trial, rec.accuracy))?;
            println!("wrote {}", c.out.join("uda.csv").display());
        }
        _ => {
            let rows = cli::cmd_transform(&r, &c.out)?;
            let warned = rows.iter().filter(|r| r.coverage_warning).count();
            println!("transformed {} images ({warned} outside coverage)", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
