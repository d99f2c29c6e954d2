//! Append-only results log.
//!
//! One CSV row per (point, heading, task). Resume works by scanning the
//! existing file; an unparseable line aborts with its line number — a row is
//! never silently dropped.

use std::path::Path;

use super::ScoringError;
use crate::imagery::fmt_compact;

pub const LOG_HEADER: [&str; 6] = [
    "point_id",
    "heading_deg",
    "task_id",
    "status",
    "score",
    "raw_response",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreStatus {
    Scored,
    Unavailable,
    ParseError,
    BackendError,
}

impl ScoreStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreStatus::Scored => "scored",
            ScoreStatus::Unavailable => "unavailable",
            ScoreStatus::ParseError => "parse_error",
            ScoreStatus::BackendError => "backend_error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "scored" => Some(ScoreStatus::Scored),
            "unavailable" => Some(ScoreStatus::Unavailable),
            "parse_error" => Some(ScoreStatus::ParseError),
            "backend_error" => Some(ScoreStatus::BackendError),
            _ => None,
        }
    }
}

/// One (image, task) inference outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub point_id: String,
    pub heading_deg: f64,
    pub task_id: String,
    pub status: ScoreStatus,
    /// Present iff status is `scored`; always inside the task answer domain.
    pub score: Option<f64>,
    /// Backend output verbatim; empty for unavailable records.
    pub raw_response: String,
}

impl ScoreRecord {
    pub fn key(&self) -> (String, String, String) {
        (
            self.point_id.clone(),
            fmt_compact(self.heading_deg),
            self.task_id.clone(),
        )
    }
}

pub fn read_log(path: &Path) -> Result<Vec<ScoreRecord>, ScoringError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    {
        let header = reader.headers().map_err(|e| ScoringError::CorruptLog {
            line: 1,
            message: e.to_string(),
        })?;
        if header != LOG_HEADER.as_slice() {
            return Err(ScoringError::CorruptLog {
                line: 1,
                message: format!("unexpected header {header:?}"),
            });
        }
    }
    let mut out = Vec::new();
    for result in reader.records() {
        let row = result.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(out.len() + 2);
            ScoringError::CorruptLog {
                line,
                message: e.to_string(),
            }
        })?;
        let line = row
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(out.len() + 2);
        let corrupt = |message: String| ScoringError::CorruptLog { line, message };
        if row.len() != 6 {
            return Err(corrupt(format!("expected 6 columns, got {}", row.len())));
        }
        let heading_deg: f64 = row[1]
            .parse()
            .map_err(|_| corrupt(format!("bad heading {:?}", &row[1])))?;
        let status = ScoreStatus::parse(&row[3])
            .ok_or_else(|| corrupt(format!("bad status {:?}", &row[3])))?;
        let score = if row[4].is_empty() {
            None
        } else {
            Some(
                row[4]
                    .parse::<f64>()
                    .map_err(|_| corrupt(format!("bad score {:?}", &row[4])))?,
            )
        };
        if (status == ScoreStatus::Scored) != score.is_some() {
            return Err(corrupt(format!(
                "status {} does not match score presence",
                status.as_str()
            )));
        }
        out.push(ScoreRecord {
            point_id: row[0].to_string(),
            heading_deg,
            task_id: row[2].to_string(),
            status,
            score,
            raw_response: row[5].to_string(),
        });
    }
    Ok(out)
}

/// Appends rows in arrival order, writing the header once for a fresh file.
pub struct LogAppender {
    writer: csv::Writer<std::fs::File>,
}

impl LogAppender {
    pub fn open(path: &Path) -> Result<Self, ScoringError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let is_new = !path.exists() || std::fs::metadata(path)?.len() == 0;
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        if is_new {
            writer.write_record(LOG_HEADER)?;
        }
        Ok(LogAppender { writer })
    }

    pub fn append(&mut self, r: &ScoreRecord) -> Result<(), ScoringError> {
        self.writer.write_record([
            r.point_id.as_str(),
            &fmt_compact(r.heading_deg),
            r.task_id.as_str(),
            r.status.as_str(),
            &r.score.map(fmt_compact).unwrap_or_default(),
            r.raw_response.as_str(),
        ])?;
        self.writer.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(point: &str, status: ScoreStatus, score: Option<f64>, raw: &str) -> ScoreRecord {
        ScoreRecord {
            point_id: point.into(),
            heading_deg: 90.0,
            task_id: "T1".into(),
            status,
            score,
            raw_response: raw.into(),
        }
    }

    #[test]
    fn append_then_read_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let rows = vec![
            record("a#0", ScoreStatus::Scored, Some(1.0), "1"),
            record("a#1", ScoreStatus::Unavailable, None, ""),
            record("a#2", ScoreStatus::ParseError, None, "no idea, sorry"),
            record(
                "a#3",
                ScoreStatus::Scored,
                Some(0.0),
                "0, because\nthe scene is \"rural\"",
            ),
        ];
        let mut appender = LogAppender::open(&path).unwrap();
        for r in &rows {
            appender.append(r).unwrap();
        }
        drop(appender);
        assert_eq!(read_log(&path).unwrap(), rows);
    }

    #[test]
    fn corrupt_line_aborts_with_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        std::fs::write(
            &path,
            "point_id,heading_deg,task_id,status,score,raw_response\n\
             a#0,90,T1,scored,1,ok\n\
             a#1,90,T1,scored,not-a-number,bad\n",
        )
        .unwrap();
        match read_log(&path) {
            Err(ScoringError::CorruptLog { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scored_rows_must_carry_a_score() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        std::fs::write(
            &path,
            "point_id,heading_deg,task_id,status,score,raw_response\n\
             a#0,90,T1,scored,,missing\n",
        )
        .unwrap();
        assert!(matches!(
            read_log(&path),
            Err(ScoringError::CorruptLog { line: 2, .. })
        ));
    }
}
