//! Text checkpoint for [`Seq2SeqModel`].
//!
//! ```text
//! hybridbot-seq2seq 1
//! config {"layers":1,"hidden":64,...}
//! vocab {"tokens":[...],"size_total":N}
//! tensors K
//! tensor <name> <rows> <cols>
//! <rows*cols values, space-separated>
//! ...
//! end
//! ```
//!
//! Values use the shortest decimal form that parses back to the same bits.

use std::io::{BufRead, Write};

use hybridbot_core::seq2seq::{ModelError, Tensor, Seq2SeqConfig, Seq2SeqModel, Vocabulary};

pub const MAGIC: &str = "hybridbot-seq2seq";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn save(model: &Seq2SeqModel, mut w: impl Write) -> Result<(), CheckpointError> {
    let json = |v: serde_json::Result<String>| v.map_err(|e| CheckpointError::Parse { line: 0, reason: e.to_string() });
    writeln!(w, "{MAGIC} {VERSION}")?;
    writeln!(w, "config {}", json(serde_json::to_string(model.config()))?)?;
    writeln!(w, "vocab {}", json(serde_json::to_string(model.vocab()))?)?;
    writeln!(w, "tensors {}", model.params().len())?;
    for t in model.params() {
        writeln!(w, "tensor {} {} {}", t.name, t.rows, t.cols)?;
        let mut first = true;
        for v in &t.data {
            if !first {
                w.write_all(b" ")?;
            }
            first = false;
            write!(w, "{v:?}")?;
        }
        w.write_all(b"\n")?;
    }
    writeln!(w, "end")?;
    w.flush()?;
    Ok(())
}

pub fn load(r: impl BufRead) -> Result<Seq2SeqModel, CheckpointError> {
    let mut lines = r.lines().enumerate();
    let mut next = |want: &str| -> Result<(usize, String), CheckpointError> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(CheckpointError::Parse {
                line: 0,
                reason: format!("unexpected end of file, wanted {want}"),
            }),
        }
    };
    let err = |line, reason: &str| CheckpointError::Parse {
        line,
        reason: reason.into(),
    };

    let (n, header) = next("header")?;
    let version = header
        .strip_prefix(MAGIC)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| err(n, "not a seq2seq checkpoint"))?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let (n, l) = next("config")?;
    let config: Seq2SeqConfig = l
        .strip_prefix("config ")
        .and_then(|j| serde_json::from_str(j).ok())
        .ok_or_else(|| err(n, "bad config line"))?;
    let (n, l) = next("vocab")?;
    let vocab: Vocabulary = l
        .strip_prefix("vocab ")
        .and_then(|j| serde_json::from_str(j).ok())
        .ok_or_else(|| err(n, "bad vocab line"))?;
    let (n, l) = next("tensor count")?;
    let count: usize = l
        .strip_prefix("tensors ")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| err(n, "bad tensor count"))?;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, l) = next("tensor header")?;
        let parts: Vec<&str> = l.split(' ').collect();
        let ["tensor", name, rows, cols] = parts[..] else {
            return Err(err(n, "bad tensor header"));
        };
        let rows: usize = rows.parse().map_err(|_| err(n, "bad row count"))?;
        let cols: usize = cols.parse().map_err(|_| err(n, "bad column count"))?;
        let (n, l) = next("tensor values")?;
        let data = l
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| err(n, "bad value"))?;
        if data.len() != rows * cols {
            return Err(err(n, "value count does not match shape"));
        }
        tensors.push(Tensor {
            name: name.to_string(),
            rows,
            cols,
            data,
        });
    }
    let (n, l) = next("end")?;
    if l != "end" {
        return Err(err(n, "missing end marker"));
    }
    Ok(Seq2SeqModel::from_tensors(config, vocab, tensors)?)
}

pub fn save_file(model: &Seq2SeqModel, path: &std::path::Path) -> Result<(), CheckpointError> {
    save(model, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_file(path: &std::path::Path) -> Result<Seq2SeqModel, CheckpointError> {
    load(std::io::BufReader::new(std::fs::File::open(path)?))
}
