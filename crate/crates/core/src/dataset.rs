//! JSONL corpus ingestion: one `{"func": "...", "target": 0|1}` object per line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::flow::build_cfg;
use crate::frontend::{parse_source, SourceFunction};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
}

/// One corpus record. Extra fields are ignored on input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub func: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub functions: Vec<SourceFunction>,
    pub skipped: Vec<Skipped>,
    /// Non-blank lines read.
    pub total: usize,
}

/// Why `source` falls outside the supported subset, if it does.
pub fn unsupported_reason(source: &str) -> Option<String> {
    match parse_source(source) {
        Err(e) => Some(e.to_string()),
        Ok(ast) => build_cfg(&ast).err().map(|e| e.to_string()),
    }
}

pub fn parse_jsonl(text: &str) -> Result<Ingested, DatasetError> {
    let mut out = Ingested::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        out.total += 1;
        let record: Record = serde_json::from_str(raw).map_err(|e| DatasetError::MalformedLine {
            line,
            message: e.to_string(),
        })?;
        if let Some(t) = record.target {
            if t > 1 {
                return Err(DatasetError::MalformedLine {
                    line,
                    message: format!("target must be 0 or 1, got {t}"),
                });
            }
        }
        if let Some(reason) = unsupported_reason(&record.func) {
            log::info!("skipping line {line}: {reason}");
            out.skipped.push(Skipped { line, reason });
            continue;
        }
        let f = SourceFunction::new(record.func, record.target).expect("source already lexed");
        out.functions.push(f);
    }
    Ok(out)
}

pub fn ingest_jsonl(path: &Path) -> Result<Ingested, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_jsonl(&text)
}

pub fn to_jsonl(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}
