mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use depex_core::store::TOOL_VERSION;

/// Library presence dependencies of an extracted Linux file tree.
#[derive(Debug, Parser)]
#[command(name = "depex", version = TOOL_VERSION)]
struct Cli {
    /// Database file holding all snapshots of a corpus.
    #[arg(long, env = "DEPEX_DB", global = true)]
    db: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ReadOpts {
    /// Snapshot label; defaults to the last one in version order.
    #[arg(long)]
    snapshot: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan a sysroot and store it as a new snapshot.
    Scan {
        #[arg(long)]
        sysroot: PathBuf,
        #[arg(long)]
        label: String,
        /// Absolute sysroot path prefix to skip, on top of /proc, /sys, /dev and /run.
        #[arg(long = "exclude")]
        excludes: Vec<String>,
        /// Extraction workers, 0 for one per core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Colon-separated directories searched like LD_LIBRARY_PATH.
        #[arg(long)]
        library_path: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Summary statistics of a snapshot.
    Stats(ReadOpts),
    /// List stored snapshots.
    Snapshots {
        #[arg(long)]
        json: bool,
    },
    /// Files that import a library.
    WhoUses {
        name: String,
        #[arg(long)]
        transitive: bool,
        #[command(flatten)]
        read: ReadOpts,
    },
    /// Direct dependencies of a file in DT_NEEDED order.
    GetDeps {
        path: String,
        #[command(flatten)]
        read: ReadOpts,
    },
    /// Every file a file transitively loads.
    GetAllDeps {
        path: String,
        #[command(flatten)]
        read: ReadOpts,
    },
    /// Files affected by an update of a library.
    Impact {
        name: String,
        #[command(flatten)]
        read: ReadOpts,
    },
    /// Emit the dependency graph in DOT.
    Dot {
        #[arg(long = "hide-top", default_value_t = 0)]
        hide_top: usize,
        #[arg(long = "hide-name")]
        hide_names: Vec<String>,
        #[arg(long = "root")]
        roots: Vec<String>,
        #[command(flatten)]
        read: ReadOpts,
    },
    /// Per-snapshot trend rows.
    Evolve {
        /// Comma-separated labels; defaults to all.
        #[arg(long, value_delimiter = ',')]
        snapshots: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Same as --format json.
        #[arg(long)]
        json: bool,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    User(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::User(_) => 1,
            Failure::Internal(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            if !err.use_stderr() {
                let _ = err.print();
                return ExitCode::SUCCESS;
            }
            let text = err.to_string();
            eprintln!("depex: {}", text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (Failure::User(msg) | Failure::Internal(msg)) = &failure;
            eprintln!("depex: {}", msg.replace('\n', " "));
            ExitCode::from(failure.code())
        }
    }
}
