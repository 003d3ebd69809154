//! `hyde` — zero-shot dense retrieval experiments from the command line.
//!
//! The pipeline is staged; every stage reads the previous stage's artifact
//! and writes exactly one of its own:
//!
//! ```text
//! corpus.jsonl --embed--> store --index--> index
//! queries.tsv --generate--> cache --search--> run --eval--> report
//! ```
//!
//! `e2e` chains all stages. Configuration comes from a TOML file
//! (`--config`) with every key overridable by a flag; flags win. API keys
//! are taken only from `HYDE_ENCODER_API_KEY` / `HYDE_LLM_API_KEY`.

mod commands;
mod config;

use clap::{Parser, Subcommand};

use config::{Experiment, Overrides};
use hyde_core::Result;

#[derive(Parser)]
#[command(
    name = "hyde",
    version,
    about = "Zero-shot dense retrieval with hypothetical document embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode the corpus into the embedding store (resumes partial runs).
    Embed(Overrides),
    /// Build the flat vector index from the embedding store.
    Index(Overrides),
    /// Pre-generate hypothetical documents for all queries into the cache.
    Generate(Overrides),
    /// Retrieve top-k documents per query into a TREC run file.
    Search(Overrides),
    /// Score a run file against qrels and write a metric report.
    Eval(Overrides),
    /// Run the whole pipeline: embed, index, generate, search, eval.
    E2e(Overrides),
}

fn dispatch(command: &Command) -> Result<()> {
    let (overrides, run): (&Overrides, fn(&Experiment) -> Result<()>) = match command {
        Command::Embed(o) => (o, commands::cmd_embed),
        Command::Index(o) => (o, commands::cmd_index),
        Command::Generate(o) => (o, commands::cmd_generate),
        Command::Search(o) => (o, commands::cmd_search),
        Command::Eval(o) => (o, commands::cmd_eval),
        Command::E2e(o) => (o, commands::cmd_e2e),
    };
    let experiment = Experiment::resolve(overrides)?;
    run(&experiment)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(err) = dispatch(&cli.command) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}
