//! Core geographic types: coordinates, bounding boxes, street segments and
//! sample points, plus linear referencing along segment polylines.
//!
//! Coordinates are WGS84 decimal degrees, axis order lon,lat, stored as f64.
//! Distances are computed in a projected metric CRS (see [`crate::proj`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proj::{MetricCrs, ProjError};

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("invalid bounding box: {0}")]
    InvalidBoundingBox(String),
    #[error("polyline needs at least 2 vertices, got {0}")]
    PolylineTooShort(usize),
    #[error("chainage {chainage_m} m outside [0, {length_m}] m on segment {segment_id}")]
    ChainageOutOfRange {
        segment_id: String,
        chainage_m: f64,
        length_m: f64,
    },
    #[error(transparent)]
    Projection(#[from] ProjError),
}

/// Slack allowed when comparing a chainage against a segment length, to
/// absorb float rounding in `offset + k * spacing` style arithmetic.
const CHAINAGE_SLACK_M: f64 = 1e-6;

/// A WGS84 position, lon/lat in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub fn new(lon: f64, lat: f64) -> Self {
        LonLat { lon, lat }
    }
}

/// A planar metric position (easting/northing in meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XY {
    pub x: f64,
    pub y: f64,
}

impl XY {
    pub fn new(x: f64, y: f64) -> Self {
        XY { x, y }
    }

    pub fn distance(&self, other: &XY) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned WGS84 bounding box, the sole required spatial input of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BoundingBox {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self, GeomError> {
        let bbox = BoundingBox {
            min_lon,
            min_lat,
            max_lon,
            max_lat,
        };
        bbox.validate()?;
        Ok(bbox)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.min_lon < self.max_lon) {
            return Err(GeomError::InvalidBoundingBox(format!(
                "min_lon {} must be < max_lon {}",
                self.min_lon, self.max_lon
            )));
        }
        if !(self.min_lat < self.max_lat) {
            return Err(GeomError::InvalidBoundingBox(format!(
                "min_lat {} must be < max_lat {}",
                self.min_lat, self.max_lat
            )));
        }
        if self.min_lon < -180.0 || self.max_lon > 180.0 {
            return Err(GeomError::InvalidBoundingBox(
                "longitudes must lie in [-180, 180]".into(),
            ));
        }
        if self.min_lat < -90.0 || self.max_lat > 90.0 {
            return Err(GeomError::InvalidBoundingBox(
                "latitudes must lie in [-90, 90]".into(),
            ));
        }
        Ok(())
    }

    pub fn centroid(&self) -> LonLat {
        LonLat::new(
            (self.min_lon + self.max_lon) / 2.0,
            (self.min_lat + self.max_lat) / 2.0,
        )
    }

    pub fn contains(&self, p: &LonLat) -> bool {
        p.lon >= self.min_lon && p.lon <= self.max_lon && p.lat >= self.min_lat && p.lat <= self.max_lat
    }

    /// Planar area of the box in km², measured in the given metric CRS.
    pub fn area_km2(&self, crs: &MetricCrs) -> Result<f64, ProjError> {
        let corners = [
            LonLat::new(self.min_lon, self.min_lat),
            LonLat::new(self.max_lon, self.min_lat),
            LonLat::new(self.max_lon, self.max_lat),
            LonLat::new(self.min_lon, self.max_lat),
        ];
        let xy: Vec<XY> = corners
            .iter()
            .map(|c| crs.to_metric(c))
            .collect::<Result<_, _>>()?;
        // shoelace
        let mut twice_area = 0.0;
        for i in 0..xy.len() {
            let j = (i + 1) % xy.len();
            twice_area += xy[i].x * xy[j].y - xy[j].x * xy[i].y;
        }
        Ok(twice_area.abs() / 2.0 / 1e6)
    }
}

/// A cleaned, intersection-split street polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct StreetSegment {
    /// Unique within a dataset; `<source_way_id>_<running index>`.
    pub segment_id: String,
    pub source_way_id: i64,
    /// WGS84 vertices, ≥ 2.
    pub polyline: Vec<LonLat>,
    /// Sum of consecutive-vertex distances in the working metric CRS.
    pub length_m: f64,
    /// OSM highway tag value.
    pub highway_class: String,
}

impl StreetSegment {
    /// Build a segment, computing its metric length from the polyline.
    pub fn new(
        segment_id: String,
        source_way_id: i64,
        polyline: Vec<LonLat>,
        highway_class: String,
        crs: &MetricCrs,
    ) -> Result<Self, GeomError> {
        if polyline.len() < 2 {
            return Err(GeomError::PolylineTooShort(polyline.len()));
        }
        let length_m = polyline_length_m(&polyline, crs)?;
        Ok(StreetSegment {
            segment_id,
            source_way_id,
            polyline,
            length_m,
            highway_class,
        })
    }
}

/// A chainage-referenced location on a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    /// `<segment_id>#<ordinal>`.
    pub point_id: String,
    pub segment_id: String,
    /// Distance along the segment from its first vertex, meters.
    pub chainage_m: f64,
    pub position: LonLat,
}

/// Metric length of a WGS84 polyline: vertices are projected and consecutive
/// planar distances summed.
pub fn polyline_length_m(polyline: &[LonLat], crs: &MetricCrs) -> Result<f64, ProjError> {
    let xy: Vec<XY> = polyline
        .iter()
        .map(|c| crs.to_metric(c))
        .collect::<Result<_, _>>()?;
    Ok(xy.windows(2).map(|w| w[0].distance(&w[1])).sum())
}

/// Point on the segment polyline at the given arc distance from its first
/// vertex. Interpolation happens in metric space; the result is returned in
/// WGS84. Chainage 0 and `length_m` return the first/last vertex exactly.
pub fn interpolate_at(
    segment: &StreetSegment,
    chainage_m: f64,
    crs: &MetricCrs,
) -> Result<LonLat, GeomError> {
    if chainage_m < -CHAINAGE_SLACK_M || chainage_m > segment.length_m + CHAINAGE_SLACK_M {
        return Err(GeomError::ChainageOutOfRange {
            segment_id: segment.segment_id.clone(),
            chainage_m,
            length_m: segment.length_m,
        });
    }
    let target = chainage_m.clamp(0.0, segment.length_m);
    if target == 0.0 {
        return Ok(segment.polyline[0]);
    }
    if target == segment.length_m {
        return Ok(*segment.polyline.last().expect("polyline has vertices"));
    }

    let xy: Vec<XY> = segment
        .polyline
        .iter()
        .map(|c| crs.to_metric(c))
        .collect::<Result<_, _>>()
        .map_err(GeomError::Projection)?;

    let mut remaining = target;
    for (i, pair) in xy.windows(2).enumerate() {
        let step = pair[0].distance(&pair[1]);
        if remaining <= step {
            if step == 0.0 {
                return Ok(segment.polyline[i]);
            }
            let t = remaining / step;
            let p = XY::new(
                pair[0].x + t * (pair[1].x - pair[0].x),
                pair[0].y + t * (pair[1].y - pair[0].y),
            );
            return Ok(crs.from_metric(&p)?);
        }
        remaining -= step;
    }
    // accumulated rounding pushed us past the last vertex
    Ok(*segment.polyline.last().expect("polyline has vertices"))
}
