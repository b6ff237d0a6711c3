//! `l2g`: staged local-to-global embedding pipeline over a work directory.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Config, Flags};
use l2g_core::Exec;

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nl2ge format 1\nmanifest format 1\npatch files: one node id per line; patch_graph.txt lines `i j w`"
);

#[derive(Parser, Debug)]
#[command(name = "l2g", version, long_version = LONG_VERSION, about = "Local-to-global graph embedding pipeline")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Load an edge list, keep its largest component and partition it.
    Partition,
    /// Build, sparsify and expand the patch graph.
    Patches,
    /// Spectral embedding of every patch.
    Embed,
    /// Align patch embeddings into one global embedding.
    Align {
        /// Emit the unaligned centroid baseline instead.
        #[arg(long)]
        no_trans: bool,
    },
    /// Reconstruction AUC of the full, l2g and no-trans scenarios.
    Eval,
    /// Write a synthetic instance with planted patch motions.
    Synth,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Partition => "partition",
            Command::Patches => "patches",
            Command::Embed => "embed",
            Command::Align { .. } => "align",
            Command::Eval => "eval",
            Command::Synth => "synth",
        }
    }
}

/// A classified failure, reported as `kind=` in the error line.
#[derive(Debug)]
pub struct Failure {
    kind: &'static str,
    message: String,
}

impl Failure {
    pub fn missing(message: String) -> Self {
        Failure {
            kind: "missing-artifact",
            message,
        }
    }

    pub fn stale(message: String) -> Self {
        Failure {
            kind: "stale-artifact",
            message,
        }
    }

    pub fn format(message: String) -> Self {
        Failure {
            kind: "format",
            message,
        }
    }

    pub fn config(message: String) -> Self {
        Failure {
            kind: "config",
            message,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

fn classify(err: &anyhow::Error) -> &'static str {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return f.kind;
    }
    match err.downcast_ref::<l2g_core::Error>() {
        Some(l2g_core::Error::Io { .. }) => "io",
        Some(l2g_core::Error::Parse { .. } | l2g_core::Error::Format { .. }) => "input",
        Some(_) => "pipeline",
        None => "config",
    }
}

fn exec_for(jobs: usize) -> Exec {
    if jobs == 1 {
        return Exec::Sequential;
    }
    #[cfg(feature = "parallel")]
    if jobs > 1 {
        // the global pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    Exec::Parallel
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let name = cli.command.name();
    let result = Config::resolve(&cli.flags)
        .map_err(|e| anyhow::Error::new(Failure::config(format!("{e:#}"))))
        .and_then(|cfg| {
            let exec = exec_for(cfg.jobs);
            let mut ctx = commands::Ctx::open(cfg, exec)?;
            match cli.command {
                Command::Partition => commands::partition(&mut ctx),
                Command::Patches => commands::patches(&mut ctx),
                Command::Embed => commands::embed(&mut ctx),
                Command::Align { no_trans } => commands::align(&mut ctx, no_trans),
                Command::Eval => commands::eval(&mut ctx),
                Command::Synth => commands::synth(&mut ctx),
            }
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let message = format!("{err:#}").replace('\n', " ");
            eprintln!("error: command={name} kind={} message={message:?}", classify(&err));
            ExitCode::FAILURE
        }
    }
}
