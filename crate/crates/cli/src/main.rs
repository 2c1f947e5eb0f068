//! Command-line front end for orthography conversion experiments.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "orthoconv",
    version,
    about = "Convert text between orthographies and run conversion experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Profiles and rule sets are given as a JSON file path, `builtin:<id>`, or a bare built-in id.
#[derive(Subcommand)]
enum Command {
    /// Replace digraphs with their private-use characters, line by line.
    Normalize(TextArgs),
    /// Restore digraphs from private-use characters, line by line.
    Denormalize(TextArgs),
    /// Convert sentences with a deterministic rule set.
    ConvertRules {
        #[arg(long)]
        rules: String,
        #[arg(long)]
        from_profile: String,
        #[arg(long)]
        to_profile: String,
        #[command(flatten)]
        io: InOut,
    },
    /// Derive per-token edit tags from aligned source and target files.
    DeriveTags {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a tag file and print the edited sentences.
    ApplyTags(InOut),
    /// Generate a synthetic parallel corpus as TSV.
    Generate {
        #[arg(long)]
        profile_src: String,
        #[arg(long)]
        profile_tgt: String,
        #[arg(long)]
        rules: String,
        #[arg(short = 'n', long = "count")]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shuffle a corpus and label train/valid/test splits.
    Split {
        /// Train, validation and test sizes, comma separated.
        #[arg(long, value_parser = parse_sizes)]
        sizes: (usize, usize, usize),
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        io: InOut,
    },
    /// Train a sequence-to-sequence model and write its checkpoint.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON training config; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        profiles: ProfilePair,
    },
    /// Predict targets for each input line.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        io: InOut,
        #[command(flatten)]
        profiles: ProfilePair,
    },
    /// Train and score one model per grid entry.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Overrides every grid entry's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        profiles: ProfilePair,
    },
    /// Score hypotheses against references.
    Evaluate {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run normalize, train, predict, restore and evaluate from a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json: bool,
    },
    /// Print a built-in profile or rule set as JSON.
    Builtin { name: String },
}

#[derive(Args)]
struct InOut {
    /// Input file; stdin when absent.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TextArgs {
    #[arg(long)]
    profile: String,
    #[command(flatten)]
    io: InOut,
}

/// Digraph unification around the model; both or neither.
#[derive(Args)]
struct ProfilePair {
    #[arg(long, requires = "profile_tgt")]
    profile_src: Option<String>,
    #[arg(long, requires = "profile_src")]
    profile_tgt: Option<String>,
}

fn parse_sizes(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated sizes, got {s:?}"));
    }
    let n = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}"));
    Ok((n(parts[0])?, n(parts[1])?, n(parts[2])?))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(io::USAGE as u8),
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("orthoconv: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
