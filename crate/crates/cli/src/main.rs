mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, CommandFactory, FromArgMatches, Parser, Subcommand};

use config::{Config, Layered, ENV_PREFIX, KEYS};

#[derive(Parser, Debug)]
#[command(
    name = "cgfuzz",
    version,
    about = "Optimization-aware test synthesis and differential fuzzing for a toy graph compiler"
)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write the documented-test corpus, the seed pool and a manifest.
    CorpusGen,
    /// Extract the pattern pool from the corpus.
    Extract,
    /// Run a fuzzing campaign and write reports.
    /// Exit status: 0 clean, 1 bugs found, 2 infrastructure fault.
    Fuzz,
    /// Re-derive a stored report from its provenance and re-check it.
    /// Exit status: 1 when the bug reproduces identically, 2 otherwise.
    Replay {
        /// Path to a `<kind>-<hash>.json` report.
        report: PathBuf,
    },
    /// Reduce the pass pipeline that exposes a bug in a graph.
    Minimize {
        /// Graph file (`.cg.json`); a provenance header supplies defaults.
        graph: PathBuf,
        /// Comma-separated pass names; defaults to the pipelines in the
        /// provenance header, or the full pipeline.
        #[arg(long)]
        pipeline: Option<String>,
        /// Base seed for the random inputs.
        #[arg(long)]
        input_base: Option<u64>,
    },
    /// Run one campaign per seeded defect and emit a kill matrix.
    MutantSweep {
        /// Comma-separated mutant names; defaults to every mutant.
        #[arg(long)]
        mutants: Option<String>,
        /// Repeat the sweep for every extraction mode (reads the corpus).
        #[arg(long)]
        ablation: bool,
    },
    /// Summarize the reports directory.
    Report,
}

fn config_help() -> String {
    let width = KEYS.iter().map(|k| k.0.len()).max().unwrap_or(0);
    let mut s = String::from(
        "Configuration keys (defaults < --config file < CGFUZZ_<KEY> env < --<key> flag):\n",
    );
    for (k, d, doc) in KEYS {
        s.push_str(&format!("  {k:width$}  {doc} [default: {d}]\n"));
    }
    s
}

fn command() -> clap::Command {
    KEYS.iter().fold(
        Cli::command().after_help(config_help()),
        |cmd, (key, default, doc)| {
            cmd.arg(
                Arg::new(*key)
                    .long(key.replace('_', "-"))
                    .value_name("VALUE")
                    .global(true)
                    .action(ArgAction::Set)
                    .help(format!("{doc} [default: {default}]"))
                    .help_heading("Config"),
            )
        },
    )
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let sub = matches.subcommand().map(|(_, m)| m);
    let flags: Vec<(String, String)> = KEYS
        .iter()
        .filter_map(|(k, _, _)| {
            sub.and_then(|m| m.get_one::<String>(k))
                .or_else(|| matches.get_one::<String>(k))
                .map(|v| (k.to_string(), v.clone()))
        })
        .collect();
    let env = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX));
    let layers = match Layered::resolve(cli.config.as_deref(), env, &flags) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    eprint!("effective config:\n{}", layers.dump());
    let cfg = match Config::from_layers(&layers) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let ctx = commands::Ctx {
        cfg,
        layers,
        json: cli.json,
        force: cli.force,
    };
    let result = match cli.command {
        Cmd::CorpusGen => commands::corpus_gen(&ctx),
        Cmd::Extract => commands::extract(&ctx),
        Cmd::Fuzz => commands::fuzz(&ctx),
        Cmd::Replay { report } => commands::replay(&ctx, &report),
        Cmd::Minimize {
            graph,
            pipeline,
            input_base,
        } => commands::minimize(&ctx, &graph, pipeline.as_deref(), input_base),
        Cmd::MutantSweep { mutants, ablation } => {
            commands::mutant_sweep(&ctx, mutants.as_deref(), ablation)
        }
        Cmd::Report => commands::report(&ctx),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
