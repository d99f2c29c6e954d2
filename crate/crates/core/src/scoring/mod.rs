//! Prompted image scoring through a pluggable vision-language backend.
//!
//! Every available image in the manifest is sent to the backend once per
//! task; raw responses are stored verbatim, parsed defensively and appended
//! to a resumable results log. Images flagged placeholder or failed are
//! skipped from inference but still logged to preserve traceability.

mod backend;
mod log;
mod parse;
mod task;

pub use backend::{
    make_backend, BackendConfig, BackendError, BackendKind, HttpBackend, MockBackend,
    ScoreBackend, ScoreRequest,
};
pub use log::{read_log, LogAppender, ScoreRecord, ScoreStatus, LOG_HEADER};
pub use parse::{parse_answer, ParseFailure};
pub use task::{task_t1, task_t2, task_t3, AnswerDomain, TaskRegistry, TaskSpec};

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use thiserror::Error;

use crate::imagery::{ImageRecord, ImageStatus};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("task {0:?} is not in the registry")]
    UnknownTask(String),
    #[error("task {task_id}: prompt block {block} is empty")]
    EmptyPromptBlock { task_id: String, block: String },
    #[error("task {task_id}: answer domain is empty")]
    EmptyAnswerDomain { task_id: String },
    #[error("task file {path}: {message}")]
    BadTaskFile { path: String, message: String },
    #[error("invalid backend config: {0}")]
    BadBackendConfig(String),
    #[error("results log line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Score one manifest row. Placeholder and failed images become
/// `unavailable` records without touching the backend.
pub fn score_image(
    image: &ImageRecord,
    task: &TaskSpec,
    backend: &dyn ScoreBackend,
    image_root: &Path,
) -> Result<ScoreRecord, ScoringError> {
    let base = |status, score, raw: String| ScoreRecord {
        point_id: image.point_id.clone(),
        heading_deg: image.heading_deg,
        task_id: task.task_id.clone(),
        status,
        score,
        raw_response: raw,
    };

    if image.status != ImageStatus::Available {
        return Ok(base(ScoreStatus::Unavailable, None, String::new()));
    }

    let prompt = task.assemble_prompt()?;
    let bytes = match std::fs::read(image_root.join(&image.file_path)) {
        Ok(bytes) => bytes,
        Err(e) => {
            return Ok(base(
                ScoreStatus::BackendError,
                None,
                format!("image file unreadable: {e}"),
            ));
        }
    };

    let request = ScoreRequest {
        prompt: &prompt,
        image_bytes: &bytes,
        point_id: &image.point_id,
        heading_deg: image.heading_deg,
        task_id: &task.task_id,
    };
    match backend.complete(&request) {
        Ok(raw) => match parse_answer(&raw, &task.answer_domain) {
            Ok(score) => Ok(base(ScoreStatus::Scored, Some(score), raw)),
            Err(_) => Ok(base(ScoreStatus::ParseError, None, raw)),
        },
        Err(e) => Ok(base(ScoreStatus::BackendError, None, e.to_string())),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunTaskOptions {
    pub concurrency: usize,
    /// Stop after appending this many new records (useful to budget a batch;
    /// the run resumes from the log next time).
    pub max_records: Option<usize>,
}

impl Default for RunTaskOptions {
    fn default() -> Self {
        RunTaskOptions {
            concurrency: 4,
            max_records: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunTaskReport {
    pub manifest_rows: usize,
    pub skipped_existing: usize,
    pub appended: usize,
    pub scored: usize,
    pub unavailable: usize,
    pub parse_errors: usize,
    pub backend_errors: usize,
}

/// Score every manifest row for one task, resumably.
///
/// Rows whose (point, heading, task) already sit in the log are skipped.
/// New records are appended in manifest order regardless of worker
/// completion order, so an interrupted run converges to the same log bytes.
pub fn run_task(
    manifest: &[ImageRecord],
    task: &TaskSpec,
    backend: &dyn ScoreBackend,
    image_root: &Path,
    log_path: &Path,
    options: &RunTaskOptions,
) -> Result<RunTaskReport, ScoringError> {
    task.assemble_prompt()?; // validate before doing any work

    let existing: HashSet<(String, String, String)> = if log_path.exists() {
        read_log(log_path)?.iter().map(ScoreRecord::key).collect()
    } else {
        HashSet::new()
    };

    let mut report = RunTaskReport {
        manifest_rows: manifest.len(),
        ..RunTaskReport::default()
    };

    let mut pending: Vec<&ImageRecord> = Vec::new();
    for image in manifest {
        let key = (
            image.point_id.clone(),
            crate::imagery::fmt_compact(image.heading_deg),
            task.task_id.clone(),
        );
        if existing.contains(&key) {
            report.skipped_existing += 1;
        } else {
            pending.push(image);
        }
    }
    if let Some(limit) = options.max_records {
        pending.truncate(limit);
    }

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<ScoreRecord, ScoringError>)>();

    let mut appender = LogAppender::open(log_path)?;
    std::thread::scope(|scope| {
        let workers = options.concurrency.max(1).min(pending.len().max(1));
        for _ in 0..workers {
            let tx = tx.clone();
            let pending = &pending;
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(image) = pending.get(i) else { break };
                let result = score_image(image, task, backend, image_root);
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // reorder buffer: append strictly in manifest order
        let mut buffer: BTreeMap<usize, ScoreRecord> = BTreeMap::new();
        let mut next_to_append = 0usize;
        for (i, result) in rx {
            buffer.insert(i, result?);
            while let Some(record) = buffer.remove(&next_to_append) {
                appender.append(&record)?;
                report.appended += 1;
                match record.status {
                    ScoreStatus::Scored => report.scored += 1,
                    ScoreStatus::Unavailable => report.unavailable += 1,
                    ScoreStatus::ParseError => report.parse_errors += 1,
                    ScoreStatus::BackendError => report.backend_errors += 1,
                }
                next_to_append += 1;
            }
        }
        Ok::<(), ScoringError>(())
    })?;

    Ok(report)
}
