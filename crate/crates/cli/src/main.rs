use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use logbound::validate::Mutation;
use logbound_cli::config::RunConfig;
use logbound_cli::{cmd_limit_profile, cmd_saddle, cmd_solve, cmd_sweep, cmd_validate, CliError, Outcome, ProfileArgs, RunFlags};

/// Penalized variational solver for bound states of
/// −ε²Δv + V(x)v = K(x) v log v².
#[derive(Parser)]
#[command(name = "logbound", version)]
struct Cli {
    /// Worker threads for parallel sweeps and seed projections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Dump iterate snapshots (and per-ε fields for sweeps).
    #[arg(long)]
    dump_fields: bool,
    /// `gaussian` or a path to a field dump.
    #[arg(long)]
    seed: Option<String>,
}

impl RunArgs {
    fn flags(&self) -> RunFlags {
        RunFlags { out: self.out.clone(), dump_fields: self.dump_fields, seed: self.seed.clone() }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MutationArg {
    EtaSign,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for one ε.
    Solve(RunArgs),
    /// ε-continuation over `eps_list`.
    Sweep(RunArgs),
    /// Min-max over the configured seed points, then descend.
    Saddle(RunArgs),
    /// Run the property suite.
    Validate {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Random seed of the suite.
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        /// Inject a kernel defect (test mode).
        #[arg(long, value_enum, hide = true)]
        mutate: Option<MutationArg>,
    },
    /// Write U_{a,b} samples and print m(a,b).
    LimitProfile {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 6.0)]
        extent: f64,
        #[arg(long, default_value_t = 601)]
        samples: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Solve(a) => cmd_solve(&RunConfig::from_path(&a.config)?, &a.flags()),
        Command::Sweep(a) => cmd_sweep(&RunConfig::from_path(&a.config)?, &a.flags()),
        Command::Saddle(a) => cmd_saddle(&RunConfig::from_path(&a.config)?, &a.flags()),
        Command::Validate { out, seed, mutate } => {
            let m = match mutate {
                Some(MutationArg::EtaSign) => Mutation::EtaSign,
                None => Mutation::None,
            };
            cmd_validate(out.as_deref(), m, seed)
        }
        Command::LimitProfile { a, b, dim, extent, samples, out } => {
            cmd_limit_profile(&ProfileArgs { a, b, dim, extent, samples }, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(o) => {
            if o == Outcome::Unrecovered {
                eprintln!("warning: penalization active at the computed critical point; the original equation is not recovered");
            }
            ExitCode::from(o.code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
