mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use entscore::scoring::Method;

const EXIT_CODES: &str = "Exit status: 0 on success, 1 on input or usage errors, 2 when a backend (LLM endpoint or NER worker) fails.";

#[derive(Debug, Parser)]
#[command(name = "entscore", version, about = "Entity-grounded similarity scoring for preliminary and final radiology reports", after_help = EXIT_CODES)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Cmd,
}

/// Flags that override the config file.
#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML config file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// lexicon | lexicon:PATH | tcp:HOST:PORT | spawn:COMMAND
    #[arg(long, global = true, value_name = "SPEC")]
    extractor: Option<String>,
    /// mock | http | an endpoint URL
    #[arg(long, global = true, value_name = "BACKEND")]
    llm: Option<String>,
    /// Weight overrides, e.g. missing=2,mismatch=1.5,surplus=1
    #[arg(long, global = true, value_name = "LIST")]
    weights: Option<String>,
    /// findings | impression | both
    #[arg(long, global = true)]
    section: Option<String>,
    /// Pairs (or entity judgments) processed in parallel
    #[arg(long, global = true, value_name = "N")]
    concurrency: Option<usize>,
    /// Sampling seed forwarded to the LLM endpoint
    #[arg(long, global = true)]
    seed: Option<u64>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PerturbMode {
    Rule,
    Llm,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// List the entities found in a text or in every report of a corpus
    Extract {
        #[arg(long, conflicts_with = "text")]
        corpus: Option<PathBuf>,
        #[arg(long, requires = "corpus")]
        pair_id: Option<String>,
        #[arg(long)]
        text: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score one pair of a corpus
    Compare {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        pair_id: String,
        /// wfw | llm | cosine | entscore
        #[arg(long, default_value = "entscore", value_parser = parse_method)]
        method: Method,
        /// Ask the LLM to explain an entity-agreement score
        #[arg(long)]
        explain: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score every pair and compare against the ground-truth scores
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        /// wfw | llm | cosine | entscore
        #[arg(long, default_value = "entscore", value_parser = parse_method)]
        method: Method,
        /// Summary file; CSV and SVG exports are written next to it
        #[arg(long)]
        out: PathBuf,
    },
    /// Build single-negation pairs from the final reports of a corpus
    Perturb {
        #[arg(long = "in", value_name = "CORPUS")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "rule")]
        mode: PerturbMode,
        /// Entity occurrence to flip (rule mode)
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Also emit an unchanged copy of every pair
        #[arg(long)]
        with_identical: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the colour-coded entity comparison of one pair as HTML
    Visualize {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        pair_id: String,
        /// Full report with scores, counts and weights
        #[arg(long)]
        full: bool,
        /// Include an LLM explanation (implies --full)
        #[arg(long)]
        explain: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
