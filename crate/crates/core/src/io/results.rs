//! Append-only `.aljsonl` results logs: one JSON object per line, one line
//! per round. A torn final line (crash mid-write) is discarded on open.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::RoundMetrics;

pub const RESULTS_EXTENSION: &str = "aljsonl";

#[derive(Debug, Clone, Default)]
pub struct ResultsLog {
    path: Option<PathBuf>,
    records: Vec<RoundMetrics>,
}

impl ResultsLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Starts an empty log file, replacing any existing one.
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path: Some(path),
            records: Vec::new(),
        })
    }

    /// Opens an existing log for further appends. Complete records are kept;
    /// a trailing partial line is cut off the file.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let (records, valid_len) = parse_prefix(&path)?;
        let len = fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
        if valid_len < len {
            log::warn!(
                "{}: discarding {} bytes of incomplete record",
                path.display(),
                len - valid_len
            );
            let f = OpenOptions::new()
                .write(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            f.set_len(valid_len).map_err(|e| Error::io(&path, e))?;
        }
        let log = Self {
            path: Some(path),
            records,
        };
        log.check_sequence()?;
        Ok(log)
    }

    /// Reads every complete record of a log file.
    pub fn read(path: impl AsRef<Path>) -> Result<Vec<RoundMetrics>> {
        let (records, _) = parse_prefix(path.as_ref())?;
        Ok(records)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn records(&self) -> &[RoundMetrics] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn next_round(&self) -> usize {
        self.records.last().map_or(0, |m| m.round + 1)
    }

    pub fn append_round(&mut self, m: RoundMetrics) -> Result<()> {
        let expected = self.next_round();
        if m.round != expected {
            return Err(Error::Sequencing {
                expected,
                got: m.round,
            });
        }
        if let Some(path) = &self.path {
            append_json_line(path, &m)?;
        }
        self.records.push(m);
        Ok(())
    }

    /// Drops records with `round >= rounds`, in memory and on disk.
    pub fn truncate_rounds(&mut self, rounds: usize) -> Result<()> {
        if self.records.len() <= rounds {
            return Ok(());
        }
        self.records.truncate(rounds);
        if let Some(path) = &self.path {
            let mut text = String::new();
            for m in &self.records {
                text.push_str(&to_line(m)?);
            }
            fs::write(path, text).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    fn check_sequence(&self) -> Result<()> {
        for (i, m) in self.records.iter().enumerate() {
            if m.round != i {
                return Err(Error::Sequencing {
                    expected: i,
                    got: m.round,
                });
            }
        }
        Ok(())
    }
}

fn to_line<T: Serialize>(value: &T) -> Result<String> {
    let mut line = serde_json::to_string(value)
        .map_err(|e| Error::Integrity(format!("cannot serialize record: {e}")))?;
    line.push('\n');
    Ok(line)
}

/// Appends one JSON line and syncs it to disk.
pub fn append_json_line<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let line = to_line(value)?;
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.sync_data().map_err(|e| Error::io(path, e))
}

/// Parses complete, newline-terminated records. Returns them with the byte
/// length of the valid prefix. A bad line that is not the last one is an error.
fn parse_prefix(path: &Path) -> Result<(Vec<RoundMetrics>, u64)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(f);
    let mut records = Vec::new();
    let mut valid = 0u64;
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let complete = line.ends_with('\n');
        match serde_json::from_str::<RoundMetrics>(line.trim_end()) {
            Ok(m) if complete => {
                records.push(m);
                valid += n as u64;
            }
            // torn tail: no newline yet
            _ if !complete => break,
            Ok(_) => unreachable!(),
            Err(e) => {
                let mut rest = String::new();
                reader.read_line(&mut rest).map_err(|e| Error::io(path, e))?;
                if rest.is_empty() {
                    break;
                }
                return Err(Error::Format {
                    offset: valid,
                    message: format!("{} line {lineno}: {e}", path.display()),
                });
            }
        }
    }
    Ok((records, valid))
}
