//! The reminder chat service.

use std::fs::OpenOptions;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Parser;
use hybridbot::checkpoint::load_file;
use hybridbot::clock::SystemClock;
use hybridbot::config::ServiceConfig;
use hybridbot::io::read_graph_file;
use hybridbot::service::{serve, spawn_ticker, Service};
use hybridbot::store::ReminderStore;
use hybridbot_core::controller::{BoxedResponder, HybridBot};
use hybridbot_core::entity::Recognizer;
use hybridbot_core::graph::DialogueGraph;

#[derive(Parser)]
#[command(version, about = "Hybrid reminders chat service")]
struct Cli {
    /// TOML configuration; `HYBRIDBOT_*` variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Listen address, overriding the configuration.
    #[arg(long)]
    bind: Option<String>,
}

#[tokio::main]
async fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => ServiceConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => ServiceConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok())?;
    if let Some(b) = cli.bind {
        cfg.bind = b;
    }

    let graph = match &cfg.graph {
        Some(p) => read_graph_file(p)?,
        None => DialogueGraph::reminders(),
    };
    let bot = HybridBot::new(graph, Recognizer::default(), cfg.hybrid.clone())?;
    let model: Option<BoxedResponder> = match &cfg.model {
        Some(p) => Some(Box::new(load_file(p).with_context(|| format!("loading model {}", p.display()))?)),
        None => {
            log::warn!("no model configured; graph misses go straight to a human");
            None
        }
    };
    let store = match &cfg.journal {
        Some(p) => ReminderStore::open(p)?,
        None => ReminderStore::in_memory(),
    };
    let clock = Arc::new(SystemClock {
        utc_offset_minutes: cfg.utc_offset_minutes,
    });
    let mut svc = Service::new(bot, model, store, clock);
    if let Some(p) = &cfg.event_log {
        svc = svc.with_event_log(OpenOptions::new().create(true).append(true).open(p)?);
    }
    let svc = Arc::new(svc);
    spawn_ticker(svc.clone(), Duration::from_millis(cfg.tick_interval_ms.max(10)));
    let listener = tokio::net::TcpListener::bind(&cfg.bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    serve(listener, svc).await?;
    Ok(())
}
