//! Append-only CSV run store.
//!
//! Each record is one row per energy domain followed by a `total` row, and is
//! appended with a single write followed by fsync. The `total` row closes a
//! record; rows after the last one belong to an interrupted append and are
//! discarded when the store is reopened.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::matrix::RunCoordinates;

pub const STORE_HEADER: &str = "run_id,workload,variant,file_size_bytes,repetition,is_control,domain,joules,duration_s,trigger_firings,saves_performed,saves_skipped,bytes_written,log_records,started_at,status";

pub const TOTAL_DOMAIN: &str = "total";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("run store {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("run store {} line {line}: {reason}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Ok => "ok",
            RunStatus::Failed => "failed",
        })
    }
}

impl FromStr for RunStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ok" => Ok(RunStatus::Ok),
            "failed" => Ok(RunStatus::Failed),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

/// Per-run counters mirrored into the store.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordCounts {
    pub trigger_firings: u32,
    pub saves_performed: u32,
    pub saves_skipped: u32,
    pub bytes_written: u64,
    pub log_records: u32,
}

/// One record as it lives in the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub run_id: u32,
    pub coords: RunCoordinates,
    pub status: RunStatus,
    /// Joules per domain name (`package`, `dram`, ...). Empty for failed runs.
    pub per_domain_joules: BTreeMap<String, f64>,
    pub total_joules: Option<f64>,
    pub duration_s: Option<f64>,
    pub counts: Option<RecordCounts>,
    pub started_at: String,
}

impl StoredRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    fn row(&self, domain: &str, joules: Option<f64>) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let c = self.coords.clone();
        vec![
            self.run_id.to_string(),
            c.workload,
            c.variant,
            c.file_size_bytes.to_string(),
            c.repetition.to_string(),
            c.is_control.to_string(),
            domain.to_string(),
            opt(joules.map(|j| j.to_string())),
            opt(self.duration_s.map(|d| d.to_string())),
            opt(self.counts.map(|s| s.trigger_firings.to_string())),
            opt(self.counts.map(|s| s.saves_performed.to_string())),
            opt(self.counts.map(|s| s.saves_skipped.to_string())),
            opt(self.counts.map(|s| s.bytes_written.to_string())),
            opt(self.counts.map(|s| s.log_records.to_string())),
            self.started_at.clone(),
            self.status.to_string(),
        ]
    }

    /// CSV rows for this record, `total` last.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        for (domain, j) in &self.per_domain_joules {
            w.write_record(self.row(domain, Some(*j))).expect("in-memory write");
        }
        w.write_record(self.row(TOTAL_DOMAIN, self.total_joules))
            .expect("in-memory write");
        w.into_inner().expect("in-memory flush")
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    run_id: u32,
    workload: String,
    variant: String,
    file_size_bytes: u64,
    repetition: u32,
    is_control: bool,
    domain: String,
    joules: Option<f64>,
    duration_s: Option<f64>,
    trigger_firings: Option<u32>,
    saves_performed: Option<u32>,
    saves_skipped: Option<u32>,
    bytes_written: Option<u64>,
    log_records: Option<u32>,
    started_at: String,
    status: String,
}

impl Row {
    fn coords(&self) -> RunCoordinates {
        RunCoordinates {
            workload: self.workload.clone(),
            variant: self.variant.clone(),
            file_size_bytes: self.file_size_bytes,
            repetition: self.repetition,
            is_control: self.is_control,
        }
    }

    fn counts(&self) -> Option<RecordCounts> {
        Some(RecordCounts {
            trigger_firings: self.trigger_firings?,
            saves_performed: self.saves_performed?,
            saves_skipped: self.saves_skipped?,
            bytes_written: self.bytes_written?,
            log_records: self.log_records?,
        })
    }
}

const FIELDS: [&str; 16] = [
    "run_id", "workload", "variant", "file_size_bytes", "repetition", "is_control", "domain",
    "joules", "duration_s", "trigger_firings", "saves_performed", "saves_skipped",
    "bytes_written", "log_records", "started_at", "status",
];

fn parse_row(line: &str) -> Result<Row, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(line.as_bytes());
    let record = rdr
        .records()
        .next()
        .ok_or("empty row")?
        .map_err(|e| e.to_string())?;
    if record.len() != FIELDS.len() {
        return Err(format!("expected {} fields, found {}", FIELDS.len(), record.len()));
    }
    let headers = csv::StringRecord::from(FIELDS.to_vec());
    record
        .deserialize::<Row>(Some(&headers))
        .map_err(|e| e.to_string())
}

/// Parsed store contents.
#[derive(Debug, Clone, Default)]
pub struct LoadedStore {
    /// Complete records in file order.
    pub records: Vec<StoredRecord>,
    /// Byte length of the well-formed prefix (header plus complete records).
    pub valid_len: u64,
    /// Rows dropped from an interrupted trailing append.
    pub discarded_rows: usize,
}

impl LoadedStore {
    /// Latest record per run id; reruns supersede earlier attempts.
    pub fn latest(&self) -> Vec<&StoredRecord> {
        let mut by_id: BTreeMap<u32, &StoredRecord> = BTreeMap::new();
        for r in &self.records {
            by_id.insert(r.run_id, r);
        }
        by_id.into_values().collect()
    }

    pub fn ok_records(&self) -> Vec<&StoredRecord> {
        self.latest().into_iter().filter(|r| r.is_ok()).collect()
    }

    pub fn failed_records(&self) -> Vec<&StoredRecord> {
        self.latest().into_iter().filter(|r| !r.is_ok()).collect()
    }
}

pub fn load_store(path: &Path) -> Result<LoadedStore, StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    parse_store(path, &text)
}

fn parse_store(path: &Path, text: &str) -> Result<LoadedStore, StoreError> {
    let malformed = |line: usize, reason: String| StoreError::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut out = LoadedStore::default();
    let mut offset = 0usize;
    let mut pending: Vec<Row> = Vec::new();
    let mut pending_first_line = 0;
    let mut lines = text.split_inclusive('\n').enumerate().peekable();
    match lines.next() {
        Some((_, header)) if header.trim_end() == STORE_HEADER => offset += header.len(),
        Some((_, header)) if !header.ends_with('\n') && STORE_HEADER.starts_with(header) => {
            return Ok(out);
        }
        Some(_) => return Err(malformed(1, "unexpected header".into())),
        None => return Ok(out),
    }
    out.valid_len = offset as u64;
    while let Some((idx, line)) = lines.next() {
        let line_no = idx + 1;
        let is_last = lines.peek().is_none();
        if !line.ends_with('\n') {
            // torn final write
            out.discarded_rows += pending.len() + 1;
            return Ok(out);
        }
        offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);
        if content.is_empty() {
            if pending.is_empty() {
                out.valid_len = offset as u64;
            }
            continue;
        }
        let row = match parse_row(content) {
            Ok(row) => row,
            Err(_) if is_last && !pending.is_empty() => {
                out.discarded_rows += pending.len() + 1;
                return Ok(out);
            }
            Err(reason) => return Err(malformed(line_no, reason)),
        };
        RunStatus::from_str(&row.status).map_err(|e| malformed(line_no, e))?;
        if let Some(first) = pending.first() {
            if first.run_id != row.run_id {
                return Err(malformed(
                    line_no,
                    format!(
                        "record {} starting at line {pending_first_line} has no total row",
                        first.run_id
                    ),
                ));
            }
        } else {
            pending_first_line = line_no;
        }
        let closes = row.domain == TOTAL_DOMAIN;
        pending.push(row);
        if closes {
            out.records
                .push(assemble(std::mem::take(&mut pending)).map_err(|e| malformed(line_no, e))?);
            out.valid_len = offset as u64;
        }
    }
    out.discarded_rows += pending.len();
    Ok(out)
}

fn assemble(rows: Vec<Row>) -> Result<StoredRecord, String> {
    let total = rows.last().expect("record has a total row");
    let status: RunStatus = total.status.parse()?;
    let mut per_domain = BTreeMap::new();
    for r in &rows[..rows.len() - 1] {
        let j = r
            .joules
            .ok_or_else(|| format!("domain {} of run {} has no joules", r.domain, r.run_id))?;
        per_domain.insert(r.domain.clone(), j);
    }
    if status == RunStatus::Ok && total.joules.is_none() {
        return Err(format!("run {} is ok but has no total", total.run_id));
    }
    Ok(StoredRecord {
        run_id: total.run_id,
        coords: total.coords(),
        status,
        per_domain_joules: per_domain,
        total_joules: total.joules,
        duration_s: total.duration_s,
        counts: total.counts(),
        started_at: total.started_at.clone(),
    })
}

/// Writer side of the store. Opening repairs an interrupted trailing record.
#[derive(Debug)]
pub struct RunStore {
    path: PathBuf,
    file: File,
}

impl RunStore {
    /// Opens (creating if needed) and returns the complete records present.
    pub fn open(path: &Path) -> Result<(Self, LoadedStore), StoreError> {
        let io_err = |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        let existing = match std::fs::read_to_string(path) {
            Ok(text) => Some(text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => return Err(io_err(e)),
        };
        let loaded = match &existing {
            Some(text) => parse_store(path, text)?,
            None => LoadedStore::default(),
        };
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        let len = existing.as_ref().map_or(0, |t| t.len() as u64);
        if loaded.valid_len < len {
            file.set_len(loaded.valid_len).map_err(io_err)?;
        }
        if loaded.valid_len == 0 {
            file.set_len(0).map_err(io_err)?;
            file.write_all(format!("{STORE_HEADER}\n").as_bytes())
                .map_err(io_err)?;
            file.sync_all().map_err(io_err)?;
        }
        Ok((
            RunStore {
                path: path.to_path_buf(),
                file,
            },
            loaded,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &StoredRecord) -> Result<(), StoreError> {
        let bytes = record.to_csv();
        self.file
            .write_all(&bytes)
            .and_then(|_| self.file.sync_data())
            .map_err(|source| StoreError::Io {
                path: self.path.clone(),
                source,
            })
    }
}
