//! Sample point placement along street segments.
//!
//! Points sit at chainages `offset, offset + spacing, offset + 2·spacing, …`
//! up to and including `length − offset`. A segment shorter than twice the
//! offset yields no points, which keeps every point at least `offset` meters
//! away from both endpoints — and endpoints coincide with intersections
//! after network splitting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{interpolate_at, BoundingBox, GeomError, SamplePoint, StreetSegment};
use crate::osm::NetworkDataset;
use crate::proj::MetricCrs;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Distance between consecutive points along a segment, meters.
    pub spacing_m: f64,
    /// Minimum distance from both segment endpoints, meters.
    pub offset_m: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            spacing_m: 40.0,
            offset_m: 15.0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        if !(self.spacing_m > 0.0) {
            return Err(SampleError::InvalidConfig(format!(
                "spacing_m must be > 0, got {}",
                self.spacing_m
            )));
        }
        if !(self.offset_m >= 0.0) {
            return Err(SampleError::InvalidConfig(format!(
                "offset_m must be ≥ 0, got {}",
                self.offset_m
            )));
        }
        Ok(())
    }
}

/// Run statistics in the shape of the coverage table: network metrics filled
/// by the sampling stage, imagery counters by the fetch stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsReport {
    pub segments: usize,
    pub total_length_km: f64,
    pub points: usize,
    pub bbox_km2: f64,
    pub points_4_images: Option<usize>,
    pub points_no_coverage: Option<usize>,
}

/// Chainages for one segment; the geometric core of [`sample_segment`],
/// shared with its tests.
pub fn sample_chainages(length_m: f64, cfg: &SamplingConfig) -> Vec<f64> {
    if length_m < 2.0 * cfg.offset_m {
        return Vec::new();
    }
    let limit = length_m - cfg.offset_m;
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let chainage = cfg.offset_m + k as f64 * cfg.spacing_m;
        if chainage > limit {
            break;
        }
        out.push(chainage);
        k += 1;
    }
    out
}

/// Place points along one segment. Point ids are `<segment_id>#<ordinal>`.
pub fn sample_segment(
    segment: &StreetSegment,
    cfg: &SamplingConfig,
    crs: &MetricCrs,
) -> Result<Vec<SamplePoint>, SampleError> {
    cfg.validate()?;
    sample_chainages(segment.length_m, cfg)
        .into_iter()
        .enumerate()
        .map(|(ordinal, chainage_m)| {
            let position = interpolate_at(segment, chainage_m, crs)?;
            Ok(SamplePoint {
                point_id: format!("{}#{}", segment.segment_id, ordinal),
                segment_id: segment.segment_id.clone(),
                chainage_m,
                position,
            })
        })
        .collect()
}

/// Sample every segment of the network and report the run counts.
pub fn sample_network(
    net: &NetworkDataset,
    cfg: &SamplingConfig,
    crs: &MetricCrs,
    bbox: &BoundingBox,
) -> Result<(Vec<SamplePoint>, CountsReport), SampleError> {
    cfg.validate()?;
    let mut points = Vec::new();
    for segment in &net.segments {
        points.extend(sample_segment(segment, cfg, crs)?);
    }
    let report = CountsReport {
        segments: net.segments.len(),
        total_length_km: net.total_length_m() / 1000.0,
        points: points.len(),
        bbox_km2: bbox.area_km2(crs).map_err(GeomError::Projection)?,
        points_4_images: None,
        points_no_coverage: None,
    };
    Ok((points, report))
}

/// Closed-form point count: `floor((L − 2·offset)/spacing) + 1` for
/// `L ≥ 2·offset`, else 0.
pub fn expected_point_count(length_m: f64, cfg: &SamplingConfig) -> usize {
    if length_m < 2.0 * cfg.offset_m {
        0
    } else {
        ((length_m - 2.0 * cfg.offset_m) / cfg.spacing_m).floor() as usize + 1
    }
}
