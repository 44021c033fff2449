use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ticopd::harness::{
    self, check, compare, CheckSpec, ExperimentConfig, Overrides, EXIT_CONFIG, EXIT_FAILURE, EXIT_OK,
};

#[derive(Parser)]
#[command(name = "ticopd", version, about = "Decentralized optimization with compressed communication")]
struct Cli {
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every algorithm listed in a config.
    Run(RunArgs),
    /// Run every point of the config's `sweep` grid.
    Sweep(RunArgs),
    /// Check compressor, graph and objective assumptions.
    Check(CheckArgs),
    /// Align result directories by iteration and by bits.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `out`.
    #[arg(long, env = "TICOPD_OUT")]
    out: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Record every N iterations.
    #[arg(long)]
    stride: Option<usize>,
    /// Worker threads per run (and concurrent cells for `sweep`).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Result directories, each holding a manifest.json.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
}

fn fail(code: i32, err: impl std::fmt::Display) -> i32 {
    eprintln!("error: {err}");
    code
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn run(args: RunArgs, sweep: bool, quiet: bool) -> i32 {
    let ov = Overrides {
        out: args.out,
        seed: args.seed,
        stride: args.stride,
        threads: args.threads,
    };
    if ov.stride == Some(0) || ov.threads == Some(0) {
        return fail(EXIT_CONFIG, "--stride and --threads must be at least 1");
    }
    let prepared = ExperimentConfig::load(&args.config).and_then(|cfg| {
        let base = base_dir(&args.config);
        if sweep {
            harness::prepare_sweep(cfg, &ov, base)
        } else {
            harness::prepare(cfg, &ov, base)
        }
    });
    let prepared = match prepared {
        Ok(p) => p,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    match prepared.execute() {
        Ok(out) => {
            if !quiet {
                print!("{}", out.summary());
                println!("wrote {}", out.dir.display());
            }
            for r in &out.records {
                if let harness::RunStatus::Diverged { t } = r.status {
                    log::warn!("{} diverged at t={t}", r.name);
                }
            }
            out.exit_code()
        }
        Err(e) => fail(EXIT_FAILURE, e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "error" } else { "warn" }))
        .init();
    let code = match cli.command {
        Command::Run(a) => run(a, false, cli.quiet),
        Command::Sweep(a) => run(a, true, cli.quiet),
        Command::Check(a) => match CheckSpec::load(&a.config).and_then(|mut spec| {
            if let Some(s) = a.seed {
                spec.seed = s;
            }
            check(&spec, base_dir(&a.config))
        }) {
            Ok(report) => {
                if !cli.quiet {
                    print!("{report}");
                }
                EXIT_OK
            }
            Err(e) => fail(EXIT_CONFIG, e),
        },
        Command::Compare(a) => match compare(&a.dirs) {
            Ok(c) => {
                print!("{}", c.render());
                EXIT_OK
            }
            Err(e) => fail(EXIT_CONFIG, e),
        },
    };
    ExitCode::from(code as u8)
}
