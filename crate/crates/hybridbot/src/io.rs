//! File formats: JSON-lines conversation logs, the tab-separated pairs file
//! and plain JSON documents.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use hybridbot_core::conversation::{Conversation, ConversationError};
use hybridbot_core::corpus::{PairSource, TrainingPair};
use hybridbot_core::graph::{load_graph, DialogueGraph, GraphError};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: {source}")]
    Conversation { line: usize, source: ConversationError },
    #[error("line {line}: {reason}")]
    Pairs { line: usize, reason: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| FormatError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    mut writer: impl Write,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<(), FormatError> {
    for item in items {
        serde_json::to_writer(&mut writer, item).map_err(|source| FormatError::Json { line: 0, source })?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Conversation log: one conversation per line, each validated.
pub fn read_conversations(reader: impl BufRead) -> Result<Vec<Conversation>, FormatError> {
    let convs: Vec<Conversation> = read_jsonl(reader)?;
    for (i, c) in convs.iter().enumerate() {
        c.validate().map_err(|source| FormatError::Conversation { line: i + 1, source })?;
    }
    Ok(convs)
}

pub fn write_conversations(writer: impl Write, convs: &[Conversation]) -> Result<(), FormatError> {
    write_jsonl(writer, convs)
}

/// Pairs file: `context \t target \t source`, tokens space-separated.
pub fn write_pairs(mut writer: impl Write, pairs: &[TrainingPair]) -> Result<(), FormatError> {
    for (i, p) in pairs.iter().enumerate() {
        let ctx = p.context.join(" ");
        let tgt = p.target.join(" ");
        if [&ctx, &tgt].iter().any(|s| s.contains(['\t', '\n', '\r'])) {
            return Err(FormatError::Pairs {
                line: i + 1,
                reason: "token contains a tab or line break".into(),
            });
        }
        writeln!(writer, "{ctx}\t{tgt}\t{}", p.source)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_pairs(reader: impl BufRead) -> Result<Vec<TrainingPair>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| FormatError::Pairs {
            line: i + 1,
            reason: reason.into(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [ctx, tgt, src] = fields[..] else {
            return Err(bad("expected 3 tab-separated fields"));
        };
        let source: PairSource = src.parse().map_err(|_| bad("source must be `human` or `graph`"))?;
        let words = |s: &str| s.split(' ').filter(|w| !w.is_empty()).map(String::from).collect::<Vec<_>>();
        out.push(TrainingPair {
            context: words(ctx),
            target: words(tgt),
            source,
        });
    }
    Ok(out)
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|source| FormatError::Json { line: 0, source })
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| FormatError::Json { line: 0, source })?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    read_jsonl(BufReader::new(File::open(path)?))
}

pub fn read_graph_file(path: &Path) -> Result<DialogueGraph, FormatError> {
    Ok(load_graph(&std::fs::read_to_string(path)?)?)
}
