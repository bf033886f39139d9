//! Single-file reminder store with append-only journaling.
//!
//! Each line of the journal is one JSON record
//! `{"seq": <n>, "reminder": <Reminder>}` holding the full state of a
//! reminder after a change; `seq` counts up from 1. Replaying the file in
//! order and keeping the last record per reminder id rebuilds the book.
//! A final line with no trailing newline is a torn write from a crash and
//! is dropped on open; any other unreadable line is an error.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use hybridbot_core::reminder::{Reminder, ReminderBook};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("journal line {line} is corrupt: {reason}")]
    Corrupt { line: usize, reason: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    seq: u64,
    reminder: Reminder,
}

#[derive(Debug)]
pub struct ReminderStore {
    book: ReminderBook,
    journal: Option<(PathBuf, File)>,
    seq: u64,
}

impl ReminderStore {
    /// Store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        ReminderStore {
            book: ReminderBook::new(),
            journal: None,
            seq: 0,
        }
    }

    /// Opens or creates the journal at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut book = ReminderBook::new();
        let mut seq = 0;
        let mut valid_len = 0u64;
        if path.exists() {
            let mut reader = BufReader::new(File::open(&path)?);
            let mut line = String::new();
            let mut n = 0;
            loop {
                line.clear();
                let read = reader.read_line(&mut line)?;
                if read == 0 {
                    break;
                }
                n += 1;
                if !line.ends_with('\n') {
                    log::warn!("dropping torn journal tail at line {n}");
                    break;
                }
                let rec: Record = serde_json::from_str(line.trim_end()).map_err(|e| StoreError::Corrupt {
                    line: n,
                    reason: e.to_string(),
                })?;
                if rec.seq <= seq {
                    return Err(StoreError::Corrupt {
                        line: n,
                        reason: format!("sequence {} does not follow {seq}", rec.seq),
                    });
                }
                seq = rec.seq;
                book.restore(rec.reminder);
                valid_len += read as u64;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        if file.metadata()?.len() != valid_len {
            file.set_len(valid_len)?;
        }
        Ok(ReminderStore {
            book,
            journal: Some((path, file)),
            seq,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.journal.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn book(&self) -> &ReminderBook {
        &self.book
    }

    /// Number of records written so far.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Runs `f` on a copy of the book. The reminders it reports as changed
    /// are journaled and synced before the copy replaces the live book, so
    /// a failed write leaves the store as it was.
    pub fn mutate<T>(&mut self, f: impl FnOnce(&mut ReminderBook) -> (T, Vec<Reminder>)) -> Result<T, StoreError> {
        let mut next = self.book.clone();
        let (out, changed) = f(&mut next);
        if !changed.is_empty() {
            if let Some((_, file)) = &mut self.journal {
                let mut buf = Vec::new();
                let mut seq = self.seq;
                for r in changed {
                    seq += 1;
                    serde_json::to_writer(&mut buf, &Record { seq, reminder: r }).map_err(|e| StoreError::Corrupt {
                        line: 0,
                        reason: e.to_string(),
                    })?;
                    buf.push(b'\n');
                }
                file.write_all(&buf)?;
                file.sync_data()?;
                self.seq = seq;
            } else {
                self.seq += changed.len() as u64;
            }
        }
        self.book = next;
        Ok(out)
    }
}
