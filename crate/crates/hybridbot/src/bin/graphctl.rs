//! Dialogue graph tools: validate a definition, rank states for a query,
//! print the shipped graph.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hybridbot::io::read_graph_file;
use hybridbot_core::conversation::SessionState;
use hybridbot_core::graph::DialogueGraph;

#[derive(Parser)]
#[command(version, about = "Dialogue graph tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load a graph definition and report problems.
    Validate { file: PathBuf },
    /// Rank the states reachable from `--state` for a query.
    Match {
        graph: PathBuf,
        query: String,
        /// Current state; the generic state when absent.
        #[arg(long)]
        state: Option<String>,
    },
    /// Print the built-in reminders graph as JSON.
    Dump,
}

fn main() -> Result<()> {
    env_logger::init();
    match Cli::parse().cmd {
        Cmd::Validate { file } => {
            let g = read_graph_file(&file).with_context(|| format!("{} is not a valid graph", file.display()))?;
            println!("ok: {} states, {} edges", g.states().len(), g.edge_count());
        }
        Cmd::Match { graph, query, state } => {
            let g = read_graph_file(&graph)?;
            let matcher = g.build_matcher()?;
            let start = state.unwrap_or_else(|| g.generic_state().id.clone());
            anyhow::ensure!(g.state(&start).is_some(), "no state `{start}`");
            let session = SessionState::new("cli", start, chrono::NaiveDate::default());
            let ranked = g.rank_states(&matcher, &session, &query)?;
            if ranked.is_empty() {
                println!("no match");
            }
            for r in ranked {
                println!("{:.4}\t{}\t{}", r.score, r.state_id, matcher.phrase(r.template_index));
            }
        }
        Cmd::Dump => {
            println!("{}", serde_json::to_string_pretty(&DialogueGraph::reminders().to_definition())?);
        }
    }
    Ok(())
}
