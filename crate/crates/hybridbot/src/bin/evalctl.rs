//! E2E and AOR scoring of chat logs, and graph-only vs hybrid comparisons
//! on simulated conversations.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use hybridbot::checkpoint::load_file;
use hybridbot::events::{records_from_log, LogLine};
use hybridbot::io::{read_graph_file, read_jsonl, read_jsonl_file, write_json_file, write_jsonl};
use hybridbot_core::controller::{HybridBot, HybridConfig};
use hybridbot_core::entity::Recognizer;
use hybridbot_core::eval::score_report;
use hybridbot_core::sim::{generate_scripts, run_experiment, ExperimentConfig, NoiseConfig, Script};

#[derive(Parser)]
#[command(version, about = "Conversation evaluation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Score a conversation log or a service event log.
    Score {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write clean user scripts for `compare`.
    Scripts {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run graph-only and hybrid policies on the same noised scripts.
    Compare {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scripts: PathBuf,
        /// Spelling-noise level; deviations get half, code-mixing a quarter.
        #[arg(long, default_value_t = 0.2)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        days: usize,
        #[arg(long, default_value = "2018-01-01")]
        start_day: NaiveDate,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::init();
    match Cli::parse().cmd {
        Cmd::Score { log, out } => {
            let file = File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let lines: Vec<LogLine> = read_jsonl(BufReader::new(file))?;
            let report = score_report(&records_from_log(lines))?;
            match out {
                Some(p) => write_json_file(&p, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            eprintln!(
                "E2E {}  AOR {}  AOR-E2E {}",
                report.overall.e2e, report.overall.aor, report.overall.aor_minus_e2e
            );
        }
        Cmd::Scripts { n, seed, out } => {
            write_jsonl(BufWriter::new(File::create(&out)?), &generate_scripts(n, seed))?;
        }
        Cmd::Compare {
            graph,
            model,
            scripts,
            noise,
            seed,
            days,
            start_day,
            out,
        } => {
            let bot = HybridBot::new(read_graph_file(&graph)?, Recognizer::default(), HybridConfig::default())?;
            let model = load_file(&model)?;
            let scripts: Vec<Script> = read_jsonl_file(&scripts)?;
            let config = ExperimentConfig {
                noise: NoiseConfig::level(noise),
                seed,
                days,
                start_day,
            };
            let cmp = run_experiment(&bot, &scripts, &model, &config)?;
            write_json_file(&out, &cmp)?;
            eprintln!(
                "graph-only E2E {} AOR {} | hybrid E2E {} AOR {} | delta E2E {} AOR {}",
                cmp.graph_only.mean_over_days.e2e,
                cmp.graph_only.mean_over_days.aor,
                cmp.hybrid.mean_over_days.e2e,
                cmp.hybrid.mean_over_days.aor,
                cmp.delta.e2e,
                cmp.delta.aor
            );
        }
    }
    Ok(())
}
