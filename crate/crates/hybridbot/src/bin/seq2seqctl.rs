//! Train, query and extend the generative fallback model.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hybridbot::checkpoint::{load_file, save_file};
use hybridbot::io::{read_json_file, read_pairs};
use hybridbot_core::controller::HybridBot;
use hybridbot_core::seq2seq::{train, Example, Seq2SeqConfig, Seq2SeqModel, TrainConfig, Vocabulary};
use hybridbot_core::sim::{train_fallback, FallbackRecipe};
use serde::Deserialize;

#[derive(Parser)]
#[command(version, about = "Seq2seq fallback model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a vocabulary from a pairs file and train a fresh model.
    Train {
        #[arg(long)]
        pairs: PathBuf,
        /// JSON with optional `model`, `train`, `min_count`, `buffer`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy-decode a reply for a whitespace-tokenized context.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        context: String,
        #[arg(long, default_value_t = 40)]
        max_len: usize,
    },
    /// Put a new token into the vocabulary buffer.
    AddToken {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        token: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate logs, preprocess them and train the reminders fallback.
    Fallback {
        /// JSON fallback recipe; defaults when absent.
        #[arg(long)]
        recipe: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct TrainFile {
    model: Seq2SeqConfig,
    train: TrainConfig,
    min_count: usize,
    buffer: usize,
}

impl Default for TrainFile {
    fn default() -> Self {
        TrainFile {
            model: Seq2SeqConfig::desk(),
            train: TrainConfig::default(),
            min_count: 1,
            buffer: 16,
        }
    }
}

fn main() -> Result<()> {
    env_logger::init();
    match Cli::parse().cmd {
        Cmd::Train { pairs, config, out } => {
            let cfg: TrainFile = match config {
                Some(p) => read_json_file(&p)?,
                None => TrainFile::default(),
            };
            let pairs = read_pairs(BufReader::new(
                File::open(&pairs).with_context(|| format!("opening {}", pairs.display()))?,
            ))?;
            let vocab = Vocabulary::build(
                pairs.iter().flat_map(|p| [p.context.as_slice(), p.target.as_slice()]),
                cfg.min_count,
                cfg.buffer,
            );
            let mut model = Seq2SeqModel::new(cfg.model, vocab)?;
            let examples: Vec<Example> = pairs.iter().map(|p| model.example(&p.context, &p.target)).collect();
            let report = train(&mut model, &examples, &cfg.train, |e, loss| eprintln!("epoch {e}: loss {loss:.4}"))?;
            if report.dropped > 0 {
                eprintln!("{} pairs did not fit any bucket", report.dropped);
            }
            save_file(&model, &out)?;
        }
        Cmd::Decode { model, context, max_len } => {
            let m = load_file(&model)?;
            let ctx: Vec<&str> = context.split_whitespace().collect();
            println!("{}", m.decode_greedy(&ctx, max_len)?.join(" "));
        }
        Cmd::AddToken { model, token, out } => {
            let mut m = load_file(&model)?;
            let id = m.add_token(&token)?;
            save_file(&m, &out)?;
            eprintln!("`{token}` has index {id}");
        }
        Cmd::Fallback { recipe, out } => {
            let recipe: FallbackRecipe = match recipe {
                Some(p) => read_json_file(&p)?,
                None => FallbackRecipe::default(),
            };
            let bot = HybridBot::reminders();
            let t = train_fallback(&bot, &recipe, |e, loss| eprintln!("epoch {e}: loss {loss:.4}"))?;
            eprintln!("trained on {} pairs", t.pairs.len());
            save_file(&t.model, &out)?;
        }
    }
    Ok(())
}
