//! Line-delimited JSON run logs.
//!
//! Every line is one record whose leading fields are, in order,
//! `schema_version`, `run_id` and `record_type` (`meta`, `trial` or
//! `document`), followed by the type-specific fields.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DocumentRecord, RunConfig, RunLog, RunMeta, TrialRecord};
use crate::error::{Error, Result};
use crate::topology::{EdgeList, StructureKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordType {
    Meta,
    Trial,
    Document,
}

#[derive(Serialize)]
struct LineOut<'a, T: Serialize> {
    schema_version: u32,
    run_id: &'a str,
    record_type: RecordType,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Deserialize)]
struct Header {
    schema_version: u32,
    run_id: String,
    record_type: RecordType,
}

#[derive(Deserialize)]
struct LineIn<T> {
    #[serde(flatten)]
    body: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetaBody {
    n: usize,
    structure: StructureKind,
    trials: u32,
    seed: u64,
    response_deadline: u64,
    narrative_id: String,
    topology: EdgeList,
}

impl MetaBody {
    fn from_meta(meta: &RunMeta) -> Self {
        let c = &meta.config;
        MetaBody {
            n: c.n,
            structure: c.structure,
            trials: c.trials,
            seed: c.seed,
            response_deadline: c.response_deadline,
            narrative_id: c.narrative_id.clone(),
            topology: meta.topology.clone(),
        }
    }

    fn into_meta(self, run_id: String) -> RunMeta {
        RunMeta {
            config: RunConfig {
                run_id,
                n: self.n,
                structure: self.structure,
                trials: self.trials,
                seed: self.seed,
                response_deadline: self.response_deadline,
                narrative_id: self.narrative_id,
            },
            topology: self.topology,
        }
    }
}

/// Appends records to a run log, one JSON object per line.
pub struct LogWriter<W: Write> {
    out: W,
}

impl LogWriter<BufWriter<File>> {
    /// Opens `path` for appending, creating it if needed.
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(LogWriter::new(BufWriter::new(file)))
    }
}

impl<W: Write> LogWriter<W> {
    pub fn new(out: W) -> Self {
        LogWriter { out }
    }

    fn line<T: Serialize>(&mut self, run_id: &str, record_type: RecordType, body: &T) -> Result<()> {
        let line = LineOut {
            schema_version: SCHEMA_VERSION,
            run_id,
            record_type,
            body,
        };
        serde_json::to_writer(&mut self.out, &line)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn write_meta(&mut self, meta: &RunMeta) -> Result<()> {
        self.line(&meta.config.run_id, RecordType::Meta, &MetaBody::from_meta(meta))
    }

    pub fn write_trial(&mut self, run_id: &str, rec: &TrialRecord) -> Result<()> {
        self.line(run_id, RecordType::Trial, rec)
    }

    pub fn write_document(&mut self, run_id: &str, doc: &DocumentRecord) -> Result<()> {
        self.line(run_id, RecordType::Document, doc)
    }

    /// Writes the header, documents in phase order, then trials.
    pub fn write_log(&mut self, log: &RunLog) -> Result<()> {
        let run_id = log.run_id().unwrap_or_default().to_string();
        if let Some(meta) = &log.meta {
            self.write_meta(meta)?;
        }
        let (pre, post): (Vec<_>, Vec<_>) = log
            .documents
            .iter()
            .partition(|d| d.phase == super::Phase::Pre);
        for d in &pre {
            self.write_document(&run_id, d)?;
        }
        for r in &log.trials {
            self.write_trial(&run_id, r)?;
        }
        for d in &post {
            self.write_document(&run_id, d)?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// A loaded log plus non-fatal observations made while reading it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedLog {
    pub log: RunLog,
    pub warnings: Vec<String>,
}

pub fn load_log(path: &Path) -> Result<LoadedLog> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(Error::Io(e)),
        Err(e) => return Err(e.into()),
    };
    parse_log(path, &bytes)
}

pub(crate) fn parse_log(path: &Path, bytes: &[u8]) -> Result<LoadedLog> {
    let mut loaded = LoadedLog::default();
    let path_buf = path.to_path_buf();
    let mut offset = 0u64;
    let mut run_id: Option<String> = None;

    if bytes.iter().all(u8::is_ascii_whitespace) {
        let msg = format!("{}: empty run log", path.display());
        log::warn!("{msg}");
        loaded.warnings.push(msg);
        return Ok(loaded);
    }

    for raw in bytes.split_inclusive(|&b| b == b'\n') {
        let line_offset = offset;
        offset += raw.len() as u64;
        let text = std::str::from_utf8(raw).map_err(|_| load_err(&path_buf, line_offset, "invalid UTF-8"))?;
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let header: Header = serde_json::from_str(text)
            .map_err(|e| load_err(&path_buf, line_offset, format!("malformed record: {e}")))?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                path: path_buf,
                offset: line_offset,
                found: header.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        match &run_id {
            Some(id) if *id != header.run_id => {
                return Err(load_err(
                    &path_buf,
                    line_offset,
                    format!("run_id `{}` differs from `{id}`", header.run_id),
                ))
            }
            None => run_id = Some(header.run_id.clone()),
            _ => {}
        }
        let body_err = |e: serde_json::Error| load_err(&path_buf, line_offset, format!("bad {:?} record: {e}", header.record_type));
        match header.record_type {
            RecordType::Meta => {
                if loaded.log.meta.is_some() {
                    return Err(load_err(&path_buf, line_offset, "duplicate meta record"));
                }
                let line: LineIn<MetaBody> = serde_json::from_str(text).map_err(body_err)?;
                loaded.log.meta = Some(line.body.into_meta(header.run_id));
            }
            RecordType::Trial => {
                let line: LineIn<TrialRecord> = serde_json::from_str(text).map_err(body_err)?;
                loaded.log.trials.push(line.body);
            }
            RecordType::Document => {
                let line: LineIn<DocumentRecord> = serde_json::from_str(text).map_err(body_err)?;
                loaded.log.documents.push(line.body);
            }
        }
    }
    if loaded.log.meta.is_none() {
        let msg = format!("{}: run log has no meta record", path.display());
        log::warn!("{msg}");
        loaded.warnings.push(msg);
    }
    Ok(loaded)
}

fn load_err(path: &Path, offset: u64, message: impl Into<String>) -> Error {
    Error::LogLoad {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}
