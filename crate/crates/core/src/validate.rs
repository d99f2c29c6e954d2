//! Validation of model predictions against human annotations: stratified
//! sampling by predicted class, class-specific precision, overall accuracy
//! and NA accounting.
//!
//! A row is correct iff the human label equals the prediction. NA rows —
//! where the annotator could not decide — are excluded from every numerator
//! and denominator but stay in the reported sample size.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use thiserror::Error;

use crate::imagery::fmt_compact;
use crate::scoring::{AnswerDomain, ScoreRecord, ScoreStatus, TaskSpec};

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("no scored records for task {0}")]
    EmptyLog(String),
    #[error("annotation file line {line}: {message}")]
    BadAnnotation { line: usize, message: String },
    #[error("predicted value {value} outside the answer domain of task {task_id}")]
    PredictedOutOfDomain { task_id: String, value: f64 },
    #[error("report csv: {0}")]
    BadReportCsv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const ANNOTATION_HEADER: [&str; 5] =
    ["point_id", "heading_deg", "task_id", "predicted", "human"];

/// One prediction/annotation pair; `human` is `None` for an NA case.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRow {
    pub point_id: String,
    pub heading_deg: f64,
    pub task_id: String,
    pub predicted: f64,
    pub human: Option<f64>,
}

/// Stratum labels of a task, in reporting order. Half-step tasks bucket to
/// {0, 0.5, 1, 1.5} plus a "2+" overflow; enumerated tasks use their exact
/// values.
pub fn class_labels(task: &TaskSpec) -> Vec<String> {
    match &task.answer_domain {
        AnswerDomain::Enumerated { values } => values.iter().map(|v| fmt_compact(*v)).collect(),
        AnswerDomain::HalfSteps => ["0", "0.5", "1", "1.5", "2+"]
            .into_iter()
            .map(String::from)
            .collect(),
    }
}

/// Stratum of a predicted value.
pub fn class_of(task: &TaskSpec, predicted: f64) -> String {
    match &task.answer_domain {
        AnswerDomain::Enumerated { .. } => fmt_compact(predicted),
        AnswerDomain::HalfSteps => {
            if predicted >= 2.0 {
                "2+".to_string()
            } else {
                fmt_compact(predicted)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shortfall {
    pub class_label: String,
    pub requested: usize,
    pub taken: usize,
}

#[derive(Debug, Clone)]
pub struct StratifiedSample {
    pub rows: Vec<ScoreRecord>,
    pub shortfalls: Vec<Shortfall>,
}

/// Draw up to `per_class_n` scored records per predicted class,
/// deterministically for a given seed. Classes short of the quota yield all
/// their records plus a shortfall note.
pub fn stratified_sample(
    records: &[ScoreRecord],
    task: &TaskSpec,
    per_class_n: usize,
    seed: u64,
) -> Result<StratifiedSample, ValidateError> {
    let mut by_class: BTreeMap<String, Vec<&ScoreRecord>> = BTreeMap::new();
    for r in records {
        if r.task_id != task.task_id || r.status != ScoreStatus::Scored {
            continue;
        }
        let Some(score) = r.score else { continue };
        by_class.entry(class_of(task, score)).or_default().push(r);
    }
    if by_class.values().all(Vec::is_empty) {
        return Err(ValidateError::EmptyLog(task.task_id.clone()));
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut shortfalls = Vec::new();

    for label in class_labels(task) {
        let Some(candidates) = by_class.get(&label) else { continue };
        if candidates.len() <= per_class_n {
            if candidates.len() < per_class_n {
                shortfalls.push(Shortfall {
                    class_label: label.clone(),
                    requested: per_class_n,
                    taken: candidates.len(),
                });
            }
            rows.extend(candidates.iter().map(|r| (*r).clone()));
        } else {
            let mut picked = rand::seq::index::sample(&mut rng, candidates.len(), per_class_n)
                .into_vec();
            picked.sort_unstable();
            rows.extend(picked.into_iter().map(|i| candidates[i].clone()));
        }
    }

    Ok(StratifiedSample { rows, shortfalls })
}

/// Write an annotation template for a drawn sample: predictions filled in,
/// the human column left blank for the annotator.
pub fn write_sample_template(path: &Path, rows: &[ScoreRecord]) -> Result<(), ValidateError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(ANNOTATION_HEADER)?;
    for r in rows {
        writer.write_record([
            r.point_id.as_str(),
            &fmt_compact(r.heading_deg),
            r.task_id.as_str(),
            &r.score.map(fmt_compact).unwrap_or_default(),
            "",
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Read annotator-completed rows. The human column accepts a number or the
/// literal "NA"; anything else (including blank) is an error.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRow>, ValidateError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    {
        let header = reader.headers()?;
        if header != ANNOTATION_HEADER.as_slice() {
            return Err(ValidateError::BadAnnotation {
                line: 1,
                message: format!("unexpected header {header:?}"),
            });
        }
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let bad = |message: String| ValidateError::BadAnnotation { line, message };
        let row = row?;
        if row.len() != 5 {
            return Err(bad(format!("expected 5 columns, got {}", row.len())));
        }
        let heading_deg: f64 = row[1]
            .parse()
            .map_err(|_| bad(format!("bad heading {:?}", &row[1])))?;
        let predicted: f64 = row[3]
            .parse()
            .map_err(|_| bad(format!("bad predicted value {:?}", &row[3])))?;
        let human = match &row[4] {
            "NA" => None,
            text => Some(
                text.parse::<f64>()
                    .map_err(|_| bad(format!("human must be a number or NA, got {text:?}")))?,
            ),
        };
        out.push(AnnotationRow {
            point_id: row[0].to_string(),
            heading_deg,
            task_id: row[2].to_string(),
            predicted,
            human,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassStat {
    pub correct: u32,
    pub evaluated: u32,
}

impl ClassStat {
    pub fn precision(&self) -> f64 {
        f64::from(self.correct) / f64::from(self.evaluated)
    }
}

/// Class-specific precision, overall accuracy and NA accounting of one
/// annotated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionReport {
    pub task_id: String,
    /// Full column set of the task, in order; classes without evaluated
    /// rows are absent from `classes`.
    pub class_labels: Vec<String>,
    pub classes: BTreeMap<String, ClassStat>,
    pub overall_correct: u32,
    pub overall_evaluated: u32,
    pub na_count: u32,
    pub sample_size: u32,
}

impl PrecisionReport {
    pub fn accuracy(&self) -> Option<f64> {
        (self.overall_evaluated > 0)
            .then(|| f64::from(self.overall_correct) / f64::from(self.overall_evaluated))
    }
}

pub fn compute_report(
    rows: &[AnnotationRow],
    task: &TaskSpec,
) -> Result<PrecisionReport, ValidateError> {
    let mut classes: BTreeMap<String, ClassStat> = BTreeMap::new();
    let mut overall_correct = 0;
    let mut overall_evaluated = 0;
    let mut na_count = 0;

    for row in rows {
        if !task.answer_domain.contains(row.predicted) {
            return Err(ValidateError::PredictedOutOfDomain {
                task_id: task.task_id.clone(),
                value: row.predicted,
            });
        }
        match row.human {
            None => na_count += 1,
            Some(human) => {
                let stat = classes
                    .entry(class_of(task, row.predicted))
                    .or_insert(ClassStat {
                        correct: 0,
                        evaluated: 0,
                    });
                stat.evaluated += 1;
                overall_evaluated += 1;
                if human == row.predicted {
                    stat.correct += 1;
                    overall_correct += 1;
                }
            }
        }
    }

    Ok(PrecisionReport {
        task_id: task.task_id.clone(),
        class_labels: class_labels(task),
        classes,
        overall_correct,
        overall_evaluated,
        na_count,
        sample_size: rows.len() as u32,
    })
}

/// "95.83% (23/24)" style cell.
fn pct_cell(correct: u32, evaluated: u32) -> String {
    format!(
        "{:.2}% ({}/{})",
        100.0 * f64::from(correct) / f64::from(evaluated),
        correct,
        evaluated
    )
}

/// Render the report as an aligned text table, one column per class plus
/// overall accuracy and NA cases. Absent classes print an em dash.
pub fn render_text(report: &PrecisionReport) -> String {
    let mut headers = vec![format!("Task {}", report.task_id)];
    let mut cells = vec![String::new()];
    for label in &report.class_labels {
        headers.push(format!("Precision {label}"));
        cells.push(match report.classes.get(label) {
            Some(stat) => pct_cell(stat.correct, stat.evaluated),
            None => "—".to_string(),
        });
    }
    headers.push("Overall Accuracy".to_string());
    cells.push(if report.overall_evaluated > 0 {
        pct_cell(report.overall_correct, report.overall_evaluated)
    } else {
        "—".to_string()
    });
    headers.push("NA Cases".to_string());
    cells.push(report.na_count.to_string());
    headers.push("Sample".to_string());
    cells.push(report.sample_size.to_string());

    let widths: Vec<usize> = headers
        .iter()
        .zip(&cells)
        .map(|(h, c)| h.chars().count().max(c.chars().count()))
        .collect();
    let pad = |s: &str, w: usize| {
        let fill = w - s.chars().count();
        format!("{s}{}", " ".repeat(fill))
    };
    let mut out = String::new();
    out.push_str(
        &headers
            .iter()
            .zip(&widths)
            .map(|(h, w)| pad(h, *w))
            .collect::<Vec<_>>()
            .join("  "),
    );
    out.push('\n');
    out.push_str(
        &cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| pad(c, *w))
            .collect::<Vec<_>>()
            .join("  "),
    );
    out.push('\n');
    out
}

pub const REPORT_CSV_HEADER: [&str; 5] = ["task_id", "kind", "class", "correct", "evaluated"];

/// Machine-readable report: one row per class column (blank counts when the
/// class saw no rows), then overall / na / sample rows.
pub fn to_csv(report: &PrecisionReport) -> String {
    let mut out = String::new();
    out.push_str(&REPORT_CSV_HEADER.join(","));
    out.push('\n');
    for label in &report.class_labels {
        match report.classes.get(label) {
            Some(stat) => out.push_str(&format!(
                "{},class,{},{},{}\n",
                report.task_id, label, stat.correct, stat.evaluated
            )),
            None => out.push_str(&format!("{},class,{},,\n", report.task_id, label)),
        }
    }
    out.push_str(&format!(
        "{},overall,,{},{}\n",
        report.task_id, report.overall_correct, report.overall_evaluated
    ));
    out.push_str(&format!("{},na,,{},\n", report.task_id, report.na_count));
    out.push_str(&format!(
        "{},sample,,{},\n",
        report.task_id, report.sample_size
    ));
    out
}

/// Inverse of [`to_csv`].
pub fn parse_report_csv(text: &str) -> Result<PrecisionReport, ValidateError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ValidateError::BadReportCsv("empty document".into()))?;
    if header != REPORT_CSV_HEADER.join(",") {
        return Err(ValidateError::BadReportCsv(format!(
            "unexpected header {header:?}"
        )));
    }
    let mut task_id = None;
    let mut class_labels = Vec::new();
    let mut classes = BTreeMap::new();
    let mut overall = (0, 0);
    let mut na_count = 0;
    let mut sample_size = 0;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(ValidateError::BadReportCsv(format!("bad row {line:?}")));
        }
        let parse_u32 = |s: &str| -> Result<u32, ValidateError> {
            s.parse()
                .map_err(|_| ValidateError::BadReportCsv(format!("bad count {s:?}")))
        };
        task_id.get_or_insert_with(|| fields[0].to_string());
        match fields[1] {
            "class" => {
                class_labels.push(fields[2].to_string());
                if !fields[3].is_empty() {
                    classes.insert(
                        fields[2].to_string(),
                        ClassStat {
                            correct: parse_u32(fields[3])?,
                            evaluated: parse_u32(fields[4])?,
                        },
                    );
                }
            }
            "overall" => overall = (parse_u32(fields[3])?, parse_u32(fields[4])?),
            "na" => na_count = parse_u32(fields[3])?,
            "sample" => sample_size = parse_u32(fields[3])?,
            other => {
                return Err(ValidateError::BadReportCsv(format!(
                    "unknown row kind {other:?}"
                )))
            }
        }
    }
    Ok(PrecisionReport {
        task_id: task_id.ok_or_else(|| ValidateError::BadReportCsv("no data rows".into()))?,
        class_labels,
        classes,
        overall_correct: overall.0,
        overall_evaluated: overall.1,
        na_count,
        sample_size,
    })
}
