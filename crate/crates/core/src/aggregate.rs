//! Summarize image-level scores into point-level and segment-level
//! statistics.
//!
//! Only `scored` records contribute values; unavailable, parse-error and
//! backend-error records are visible through `count_valid` alone. Segment
//! statistics weight member points equally so a point with fewer valid
//! images is not under-represented.

use thiserror::Error;

use crate::geom::SamplePoint;
use crate::scoring::{ScoreRecord, ScoreStatus};

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("results log references unknown point ids: {}", .0.join(", "))]
    UnknownPoints(Vec<String>),
}

/// Per-point or per-segment statistics for one task. All-absent statistics
/// (`count_valid == 0`) mark an entity that renders grey.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub entity_id: String,
    pub task_id: String,
    pub mean: Option<f64>,
    pub sum: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub count_valid: u32,
}

impl SummaryRow {
    fn empty(entity_id: String, task_id: String) -> Self {
        SummaryRow {
            entity_id,
            task_id,
            mean: None,
            sum: None,
            min: None,
            max: None,
            count_valid: 0,
        }
    }

    fn from_values(entity_id: String, task_id: String, values: &[f64]) -> Self {
        if values.is_empty() {
            return SummaryRow::empty(entity_id, task_id);
        }
        let sum: f64 = values.iter().sum();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        SummaryRow {
            entity_id,
            task_id,
            mean: Some(sum / values.len() as f64),
            sum: Some(sum),
            min: Some(min),
            max: Some(max),
            count_valid: values.len() as u32,
        }
    }
}

/// One row per sample point, in input point order.
pub fn aggregate_points(
    records: &[ScoreRecord],
    task_id: &str,
    points: &[SamplePoint],
) -> Result<Vec<SummaryRow>, AggregateError> {
    let known: std::collections::HashSet<&str> =
        points.iter().map(|p| p.point_id.as_str()).collect();
    let mut unknown: Vec<String> = records
        .iter()
        .filter(|r| r.task_id == task_id && !known.contains(r.point_id.as_str()))
        .map(|r| r.point_id.clone())
        .collect();
    if !unknown.is_empty() {
        unknown.sort();
        unknown.dedup();
        return Err(AggregateError::UnknownPoints(unknown));
    }

    let mut values_by_point: std::collections::HashMap<&str, Vec<f64>> =
        std::collections::HashMap::new();
    for r in records {
        if r.task_id != task_id {
            continue;
        }
        if r.status == ScoreStatus::Scored {
            if let Some(score) = r.score {
                values_by_point
                    .entry(r.point_id.as_str())
                    .or_default()
                    .push(score);
            }
        }
    }

    Ok(points
        .iter()
        .map(|p| {
            let values = values_by_point
                .get(p.point_id.as_str())
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            SummaryRow::from_values(p.point_id.clone(), task_id.to_string(), values)
        })
        .collect())
}

/// Roll point rows up to their segments: segment mean is the equal-weight
/// mean of member-point means, segment sum the sum of member-point sums,
/// min/max over member-point means, `count_valid` the number of member
/// points that carried data.
pub fn aggregate_segments(
    point_rows: &[SummaryRow],
    points: &[SamplePoint],
    task_id: &str,
) -> Vec<SummaryRow> {
    let segment_of: std::collections::HashMap<&str, &str> = points
        .iter()
        .map(|p| (p.point_id.as_str(), p.segment_id.as_str()))
        .collect();

    // deterministic segment order: first appearance in the points list
    let mut segment_order: Vec<&str> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for p in points {
        if seen.insert(p.segment_id.as_str()) {
            segment_order.push(p.segment_id.as_str());
        }
    }

    let mut members: std::collections::HashMap<&str, Vec<&SummaryRow>> =
        std::collections::HashMap::new();
    for row in point_rows {
        if row.task_id != task_id {
            continue;
        }
        if let Some(seg) = segment_of.get(row.entity_id.as_str()) {
            members.entry(seg).or_default().push(row);
        }
    }

    segment_order
        .into_iter()
        .map(|seg| {
            let rows = members.get(seg).map(Vec::as_slice).unwrap_or(&[]);
            let with_data: Vec<&&SummaryRow> =
                rows.iter().filter(|r| r.count_valid > 0).collect();
            if with_data.is_empty() {
                return SummaryRow::empty(seg.to_string(), task_id.to_string());
            }
            let means: Vec<f64> = with_data.iter().filter_map(|r| r.mean).collect();
            let sum: f64 = with_data.iter().filter_map(|r| r.sum).sum();
            let mean = means.iter().sum::<f64>() / means.len() as f64;
            let min = means.iter().copied().fold(f64::INFINITY, f64::min);
            let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            SummaryRow {
                entity_id: seg.to_string(),
                task_id: task_id.to_string(),
                mean: Some(mean),
                sum: Some(sum),
                min: Some(min),
                max: Some(max),
                count_valid: with_data.len() as u32,
            }
        })
        .collect()
}
