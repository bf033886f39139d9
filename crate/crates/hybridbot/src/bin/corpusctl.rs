//! Preprocessing pipeline: raw chat logs to training pairs and statistics.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hybridbot::io::{read_conversations, read_graph_file, read_pairs, write_conversations, write_json_file, write_pairs};
use hybridbot_core::controller::{HybridBot, HybridConfig};
use hybridbot_core::corpus::{mix_sources, split, Pipeline};
use hybridbot_core::entity::Recognizer;
use hybridbot_core::graph::DialogueGraph;
use hybridbot_core::sim::raw_corpus;
use serde_json::json;

#[derive(Parser)]
#[command(version, about = "Chat-log preprocessing")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run pipeline steps over a JSON-lines conversation log.
    Run {
        /// Step range, e.g. `1-5` or `3`.
        #[arg(long, default_value = "1-5")]
        steps: String,
        #[arg(long = "in")]
        input: PathBuf,
        /// Pairs file (`context \t target \t source`).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Also write the processed conversations.
        #[arg(long)]
        corpus_out: Option<PathBuf>,
        /// Graph whose acknowledgements mark actions; built-in when absent.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Write a synthetic raw log.
    Simulate {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shuffle and split a pairs file.
    Split {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Subsample pairs to a human/graph mix.
    Mix {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        human_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_steps(s: &str) -> Result<std::ops::RangeInclusive<u8>> {
    let (a, b) = match s.split_once('-') {
        Some((a, b)) => (a.trim().parse()?, b.trim().parse()?),
        None => {
            let x = s.trim().parse()?;
            (x, x)
        }
    };
    if !(1..=5).contains(&a) || !(1..=5).contains(&b) || a > b {
        bail!("steps must be a range within 1-5, got `{s}`");
    }
    Ok(a..=b)
}

fn main() -> Result<()> {
    env_logger::init();
    match Cli::parse().cmd {
        Cmd::Run {
            steps,
            input,
            out,
            stats,
            corpus_out,
            graph,
        } => {
            let steps = parse_steps(&steps)?;
            let graph = match graph {
                Some(p) => read_graph_file(&p)?,
                None => DialogueGraph::reminders(),
            };
            let raw = read_conversations(BufReader::new(
                File::open(&input).with_context(|| format!("opening {}", input.display()))?,
            ))?;
            let result = Pipeline::for_graph(&graph).run(&raw, steps)?;
            write_pairs(BufWriter::new(File::create(&out)?), &result.pairs)?;
            if let Some(p) = stats {
                write_json_file(&p, &json!({ "stats": result.stats, "steps": result.steps }))?;
            }
            if let Some(p) = corpus_out {
                write_conversations(BufWriter::new(File::create(&p)?), &result.corpus)?;
            }
            for s in &result.steps {
                eprintln!("step {}: {} conversations, {} messages", s.step, s.conversations, s.messages);
            }
            eprintln!("{} pairs", result.pairs.len());
        }
        Cmd::Simulate { n, seed, out } => {
            let bot = HybridBot::new(DialogueGraph::reminders(), Recognizer::default(), HybridConfig::default())?;
            let raw = raw_corpus(&bot, n, seed)?;
            write_conversations(BufWriter::new(File::create(&out)?), &raw)?;
        }
        Cmd::Split {
            pairs,
            ratio,
            seed,
            train,
            test,
        } => {
            let p = read_pairs(BufReader::new(File::open(&pairs)?))?;
            let (a, b) = split(&p, ratio, seed)?;
            write_pairs(BufWriter::new(File::create(&train)?), &a)?;
            write_pairs(BufWriter::new(File::create(&test)?), &b)?;
            eprintln!("{} train, {} test", a.len(), b.len());
        }
        Cmd::Mix {
            pairs,
            human_fraction,
            seed,
            out,
        } => {
            let p = read_pairs(BufReader::new(File::open(&pairs)?))?;
            let m = mix_sources(&p, human_fraction, seed)?;
            write_pairs(BufWriter::new(File::create(&out)?), &m)?;
            eprintln!("kept {} of {} pairs", m.len(), p.len());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::parse_steps;

    #[test]
    fn step_ranges() {
        assert_eq!(parse_steps("1-5").unwrap(), 1..=5);
        assert_eq!(parse_steps("3").unwrap(), 3..=3);
        assert!(parse_steps("0-2").is_err());
        assert!(parse_steps("4-2").is_err());
    }
}
