//! Transcript files: one JSON object per line.
//!
//! Line 1 is the header (schema version, config echo, seed), followed by
//! the ordered protocol events — odd rounds are server messages, even
//! rounds client messages — then the reward settlement and a summary.
//! Files carry no timestamps, so one seed and config produce
//! byte-identical output.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("byte offset {offset}: {detail}")]
    Corrupt { offset: usize, detail: String },
    #[error("schema version {found} unsupported (this build reads {expected})")]
    SchemaMismatch { found: u32, expected: u32 },
    #[error("transcript structure invalid: {detail}")]
    BadStructure { detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Server,
    Client,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub round: u32,
    pub from: Party,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub rewards: Value,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(Header),
    Event(Event),
    Settlement(Settlement),
    Summary { report: Value },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptFile {
    pub header: Header,
    pub events: Vec<Event>,
    pub settlement: Option<Settlement>,
    pub summary: Value,
}

impl TranscriptFile {
    pub fn new(command: &str, seed: u64, config: Value) -> TranscriptFile {
        TranscriptFile {
            header: Header {
                schema_version: SCHEMA_VERSION,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                seed,
                config,
            },
            events: Vec::new(),
            settlement: None,
            summary: Value::Null,
        }
    }

    pub fn push_event(&mut self, round: u32, from: Party, payload: Value) {
        self.events.push(Event {
            round,
            from,
            payload,
        });
    }

    /// Stable identifier derived from command and seed; also usable as a
    /// default file name stem.
    pub fn reference(&self) -> String {
        format!("{}-{:016x}", self.header.command, self.header.seed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &Line| {
            out.push_str(&serde_json::to_string(line).expect("serializable"));
            out.push('\n');
        };
        push(&Line::Header(self.header.clone()));
        for event in &self.events {
            push(&Line::Event(event.clone()));
        }
        if let Some(settlement) = &self.settlement {
            push(&Line::Settlement(settlement.clone()));
        }
        push(&Line::Summary {
            report: self.summary.clone(),
        });
        out
    }
}

pub fn persist_transcript(path: &Path, transcript: &TranscriptFile) -> Result<(), TranscriptError> {
    fs::write(path, transcript.render()).map_err(|source| TranscriptError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_transcript(path: &Path) -> Result<TranscriptFile, TranscriptError> {
    let text = fs::read_to_string(path).map_err(|source| TranscriptError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_transcript(&text)
}

pub fn parse_transcript(text: &str) -> Result<TranscriptFile, TranscriptError> {
    let mut header: Option<Header> = None;
    let mut events = Vec::new();
    let mut settlement = None;
    let mut summary = None;
    let mut offset = 0usize;

    for raw in text.split_inclusive('\n') {
        let line = raw.trim_end_matches('\n');
        if !line.trim().is_empty() {
            let parsed: Line = serde_json::from_str(line).map_err(|e| TranscriptError::Corrupt {
                offset: offset + e.column().saturating_sub(1),
                detail: e.to_string(),
            })?;
            match parsed {
                Line::Header(h) => {
                    if h.schema_version != SCHEMA_VERSION {
                        return Err(TranscriptError::SchemaMismatch {
                            found: h.schema_version,
                            expected: SCHEMA_VERSION,
                        });
                    }
                    if header.is_some() {
                        return Err(TranscriptError::BadStructure {
                            detail: "duplicate header".into(),
                        });
                    }
                    header = Some(h);
                }
                Line::Event(e) => {
                    if header.is_none() {
                        return Err(TranscriptError::BadStructure {
                            detail: "event before header".into(),
                        });
                    }
                    events.push(e);
                }
                Line::Settlement(s) => settlement = Some(s),
                Line::Summary { report } => summary = Some(report),
            }
        }
        offset += raw.len();
    }

    let header = header.ok_or(TranscriptError::BadStructure {
        detail: "missing header line".into(),
    })?;
    let summary = summary.ok_or(TranscriptError::BadStructure {
        detail: "missing summary line".into(),
    })?;
    // Events must alternate per the transcript definition: odd rounds
    // from the server, even rounds from the client.
    for event in &events {
        let expected = if event.round % 2 == 1 {
            Party::Server
        } else {
            Party::Client
        };
        if event.from != expected {
            return Err(TranscriptError::BadStructure {
                detail: format!("round {} attributed to {:?}", event.round, event.from),
            });
        }
    }
    Ok(TranscriptFile {
        header,
        events,
        settlement,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> TranscriptFile {
        let mut t = TranscriptFile::new("estimate", 7, json!({"k": 1}));
        t.push_event(1, Party::Server, json!({"reports": [0.25, 0.25]}));
        t.push_event(2, Party::Client, json!({"rewards": [0.75, 0.75]}));
        t.settlement = Some(Settlement {
            rewards: json!([0.75, 0.75]),
            total: 1.5,
        });
        t.summary = json!({"ok": true});
        t
    }

    #[test]
    fn round_trips_losslessly() {
        let t = sample();
        let parsed = parse_transcript(&t.render()).unwrap();
        assert_eq!(t, parsed);
    }

    #[test]
    fn rendering_is_deterministic() {
        assert_eq!(sample().render(), sample().render());
    }

    #[test]
    fn rejects_other_schema_versions() {
        let mut t = sample();
        t.header.schema_version = 2;
        match parse_transcript(&t.render()) {
            Err(TranscriptError::SchemaMismatch { found: 2, expected }) => {
                assert_eq!(expected, SCHEMA_VERSION)
            }
            other => panic!("expected schema mismatch, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_reports_byte_offset() {
        let text = sample().render();
        let cut = &text[..text.len() - 30];
        match parse_transcript(cut) {
            Err(TranscriptError::Corrupt { offset, .. }) => {
                assert!(offset > 0 && offset <= cut.len(), "offset {offset}");
            }
            other => panic!("expected corrupt-file error, got {other:?}"),
        }
    }

    #[test]
    fn alternation_is_validated() {
        let mut t = sample();
        t.events[0].from = Party::Client;
        assert!(matches!(
            parse_transcript(&t.render()),
            Err(TranscriptError::BadStructure { .. })
        ));
    }

    #[test]
    fn missing_header_is_structural() {
        let t = sample();
        let body: String = t
            .render()
            .lines()
            .skip(1)
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(
            parse_transcript(&body),
            Err(TranscriptError::BadStructure { .. })
        ));
    }
}
