//! Thematic map rendering: deterministic SVG documents with a continuous
//! color ramp and grey no-data styling.
//!
//! Geometry is projected to the working metric CRS, fitted to the canvas and
//! written at fixed precision in a stable element order, so identical inputs
//! produce byte-identical files. Cartography is geometry-only; there is no
//! basemap.

use thiserror::Error;

use crate::aggregate::SummaryRow;
use crate::geom::{SamplePoint, StreetSegment, XY};
use crate::proj::{MetricCrs, ProjError};

#[derive(Debug, Error)]
pub enum MapError {
    #[error("invalid map style: {0}")]
    InvalidStyle(String),
    #[error(transparent)]
    Projection(#[from] ProjError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Mean,
    Sum,
}

impl Statistic {
    pub fn as_str(&self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Sum => "sum",
        }
    }

    pub fn of(&self, row: &SummaryRow) -> Option<f64> {
        match self {
            Statistic::Mean => row.mean,
            Statistic::Sum => row.sum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleMode {
    /// Clamp to a fixed `[lo, hi]` domain.
    Fixed { lo: f64, hi: f64 },
    /// Domain from the rendered layer's own min and max.
    DataMinMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapStyle {
    pub statistic: Statistic,
    /// Ordered color stops, light to dark; ≥ 2.
    pub ramp: Vec<[u8; 3]>,
    pub nodata_color: [u8; 3],
    pub scale: ScaleMode,
    pub stroke_width: f64,
    pub point_radius: f64,
    pub canvas_width: u32,
    pub canvas_height: u32,
}

/// Light yellow to dark purple, five stops.
pub const DEFAULT_RAMP: [[u8; 3]; 5] = [
    [253, 231, 37],
    [94, 201, 98],
    [33, 145, 140],
    [59, 82, 139],
    [68, 1, 84],
];

pub const NODATA_GREY: [u8; 3] = [128, 128, 128];

impl MapStyle {
    pub fn new(statistic: Statistic, scale: ScaleMode) -> Self {
        MapStyle {
            statistic,
            ramp: DEFAULT_RAMP.to_vec(),
            nodata_color: NODATA_GREY,
            scale,
            stroke_width: 2.0,
            point_radius: 3.0,
            canvas_width: 900,
            canvas_height: 700,
        }
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if self.ramp.len() < 2 {
            return Err(MapError::InvalidStyle(format!(
                "ramp needs at least 2 stops, got {}",
                self.ramp.len()
            )));
        }
        if let ScaleMode::Fixed { lo, hi } = self.scale {
            if !(lo < hi) {
                return Err(MapError::InvalidStyle(format!(
                    "fixed domain requires lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Clamped position of a value within the `[lo, hi]` domain.
pub fn ramp_position(value: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    ((value - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Piecewise-linear interpolation between ramp stops in RGB.
pub fn color_at(t: f64, ramp: &[[u8; 3]]) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let n = ramp.len();
    let scaled = t * (n - 1) as f64;
    let i = (scaled.floor() as usize).min(n - 2);
    let frac = scaled - i as f64;
    let lerp = |a: u8, b: u8| (f64::from(a) + (f64::from(b) - f64::from(a)) * frac).round() as u8;
    [
        lerp(ramp[i][0], ramp[i + 1][0]),
        lerp(ramp[i][1], ramp[i + 1][1]),
        lerp(ramp[i][2], ramp[i + 1][2]),
    ]
}

/// Color for a value under the resolved domain; absent values get the
/// no-data grey.
pub fn color_for(value: Option<f64>, lo: f64, hi: f64, style: &MapStyle) -> [u8; 3] {
    match value {
        Some(v) => color_at(ramp_position(v, lo, hi), &style.ramp),
        None => style.nodata_color,
    }
}

pub fn hex_color(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// The two thematic maps of one task.
#[derive(Debug, Clone)]
pub struct MapDocuments {
    pub points_svg: String,
    pub streets_svg: String,
}

struct CanvasTransform {
    scale: f64,
    min_x: f64,
    max_y: f64,
    offset_x: f64,
    offset_y: f64,
}

const CANVAS_MARGIN: f64 = 24.0;
const LEGEND_HEIGHT: f64 = 56.0;

impl CanvasTransform {
    fn fit(bounds: Option<(XY, XY)>, width: u32, height: u32) -> Self {
        let (min, max) = bounds.unwrap_or((XY::new(0.0, 0.0), XY::new(1.0, 1.0)));
        let dx = (max.x - min.x).max(1e-9);
        let dy = (max.y - min.y).max(1e-9);
        let usable_w = f64::from(width) - 2.0 * CANVAS_MARGIN;
        let usable_h = f64::from(height) - 2.0 * CANVAS_MARGIN - LEGEND_HEIGHT;
        let scale = (usable_w / dx).min(usable_h / dy);
        // center the drawing in the usable area
        let offset_x = CANVAS_MARGIN + (usable_w - dx * scale) / 2.0;
        let offset_y = CANVAS_MARGIN + (usable_h - dy * scale) / 2.0;
        CanvasTransform {
            scale,
            min_x: min.x,
            max_y: max.y,
            offset_x,
            offset_y,
        }
    }

    fn apply(&self, p: &XY) -> (f64, f64) {
        (
            self.offset_x + (p.x - self.min_x) * self.scale,
            self.offset_y + (self.max_y - p.y) * self.scale,
        )
    }
}

fn bounds_of(xys: impl Iterator<Item = XY>) -> Option<(XY, XY)> {
    let mut bounds: Option<(XY, XY)> = None;
    for p in xys {
        bounds = Some(match bounds {
            None => (p, p),
            Some((min, max)) => (
                XY::new(min.x.min(p.x), min.y.min(p.y)),
                XY::new(max.x.max(p.x), max.y.max(p.y)),
            ),
        });
    }
    bounds
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

/// Resolve the color domain of one layer's values.
fn resolve_domain(values: &[f64], scale: &ScaleMode) -> (f64, f64) {
    match scale {
        ScaleMode::Fixed { lo, hi } => (*lo, *hi),
        ScaleMode::DataMinMax => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if values.is_empty() || lo == hi {
                // degenerate data domain; pin something sensible
                (if values.is_empty() { 0.0 } else { lo }, if values.is_empty() { 1.0 } else { lo + 1.0 })
            } else {
                (lo, hi)
            }
        }
    }
}

fn svg_header(width: u32, height: u32, ramp: &[[u8; 3]]) -> String {
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    );
    out.push_str("  <defs>\n    <linearGradient id=\"ramp\" x1=\"0\" y1=\"0\" x2=\"1\" y2=\"0\">\n");
    let n = ramp.len();
    for (i, stop) in ramp.iter().enumerate() {
        let offset = i as f64 / (n - 1) as f64;
        out.push_str(&format!(
            "      <stop offset=\"{}\" stop-color=\"{}\"/>\n",
            fmt2(offset),
            hex_color(*stop)
        ));
    }
    out.push_str("    </linearGradient>\n  </defs>\n");
    out.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n"
    ));
    out
}

fn svg_legend(out: &mut String, title: &str, lo: f64, hi: f64, width: u32, height: u32) {
    let bar_w = 220.0;
    let bar_h = 12.0;
    let x = CANVAS_MARGIN;
    let y = f64::from(height) - LEGEND_HEIGHT + 8.0;
    let _ = width;
    out.push_str(&format!(
        "  <g id=\"legend\">\n    <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        fmt2(x),
        fmt2(y),
        title
    ));
    out.push_str(&format!(
        "    <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"url(#ramp)\" stroke=\"#444444\" stroke-width=\"0.5\"/>\n",
        fmt2(x),
        fmt2(y + 6.0),
        fmt2(bar_w),
        fmt2(bar_h)
    ));
    out.push_str(&format!(
        "    <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        fmt2(x),
        fmt2(y + 6.0 + bar_h + 12.0),
        fmt2(lo)
    ));
    out.push_str(&format!(
        "    <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
        fmt2(x + bar_w),
        fmt2(y + 6.0 + bar_h + 12.0),
        fmt2(hi)
    ));
    out.push_str(&format!(
        "    <rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n    <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">no data</text>\n",
        fmt2(x + bar_w + 24.0),
        fmt2(y + 6.0),
        hex_color(NODATA_GREY),
        fmt2(x + bar_w + 40.0),
        fmt2(y + 6.0 + 10.0)
    ));
    out.push_str("  </g>\n");
}

fn polyline_attr(seg: &StreetSegment, crs: &MetricCrs, t: &CanvasTransform) -> Result<String, MapError> {
    let mut parts = Vec::with_capacity(seg.polyline.len());
    for v in &seg.polyline {
        let (x, y) = t.apply(&crs.to_metric(v)?);
        parts.push(format!("{},{}", fmt2(x), fmt2(y)));
    }
    Ok(parts.join(" "))
}

/// Render the two thematic maps (point level, street level) for one task.
pub fn render_maps(
    segments: &[StreetSegment],
    points: &[SamplePoint],
    point_rows: &[SummaryRow],
    segment_rows: &[SummaryRow],
    style: &MapStyle,
    task_id: &str,
    crs: &MetricCrs,
) -> Result<MapDocuments, MapError> {
    style.validate()?;

    let mut all_xy: Vec<XY> = Vec::new();
    for s in segments {
        for v in &s.polyline {
            all_xy.push(crs.to_metric(v)?);
        }
    }
    for p in points {
        all_xy.push(crs.to_metric(&p.position)?);
    }
    let transform = CanvasTransform::fit(
        bounds_of(all_xy.into_iter()),
        style.canvas_width,
        style.canvas_height,
    );

    let points_svg = render_point_map(segments, points, point_rows, style, task_id, crs, &transform)?;
    let streets_svg = render_street_map(segments, segment_rows, style, task_id, crs, &transform)?;
    Ok(MapDocuments {
        points_svg,
        streets_svg,
    })
}

#[allow(clippy::too_many_arguments)]
fn render_point_map(
    segments: &[StreetSegment],
    points: &[SamplePoint],
    point_rows: &[SummaryRow],
    style: &MapStyle,
    task_id: &str,
    crs: &MetricCrs,
    transform: &CanvasTransform,
) -> Result<String, MapError> {
    let values: Vec<f64> = point_rows.iter().filter_map(|r| style.statistic.of(r)).collect();
    let (lo, hi) = resolve_domain(&values, &style.scale);
    let value_of: std::collections::HashMap<&str, Option<f64>> = point_rows
        .iter()
        .map(|r| (r.entity_id.as_str(), style.statistic.of(r)))
        .collect();

    let mut out = svg_header(style.canvas_width, style.canvas_height, &style.ramp);

    // street context beneath the points
    let mut ordered_segments: Vec<&StreetSegment> = segments.iter().collect();
    ordered_segments.sort_by(|a, b| a.segment_id.cmp(&b.segment_id));
    out.push_str("  <g id=\"context\" stroke=\"#dddddd\" fill=\"none\" stroke-width=\"1\">\n");
    for seg in &ordered_segments {
        out.push_str(&format!(
            "    <polyline points=\"{}\"/>\n",
            polyline_attr(seg, crs, transform)?
        ));
    }
    out.push_str("  </g>\n");

    let mut ordered_points: Vec<&SamplePoint> = points.iter().collect();
    ordered_points.sort_by(|a, b| a.point_id.cmp(&b.point_id));

    // grey features first, colored above
    for (group, keep_data) in [("nodata", false), ("data", true)] {
        out.push_str(&format!("  <g id=\"{group}\">\n"));
        for p in &ordered_points {
            let value = value_of.get(p.point_id.as_str()).copied().flatten();
            if value.is_some() != keep_data {
                continue;
            }
            let (x, y) = transform.apply(&crs.to_metric(&p.position)?);
            out.push_str(&format!(
                "    <circle data-id=\"{}\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>\n",
                p.point_id,
                fmt2(x),
                fmt2(y),
                fmt2(style.point_radius),
                hex_color(color_for(value, lo, hi, style))
            ));
        }
        out.push_str("  </g>\n");
    }

    svg_legend(
        &mut out,
        &format!("{task_id} {} (points)", style.statistic.as_str()),
        lo,
        hi,
        style.canvas_width,
        style.canvas_height,
    );
    out.push_str("</svg>\n");
    Ok(out)
}

fn render_street_map(
    segments: &[StreetSegment],
    segment_rows: &[SummaryRow],
    style: &MapStyle,
    task_id: &str,
    crs: &MetricCrs,
    transform: &CanvasTransform,
) -> Result<String, MapError> {
    let values: Vec<f64> = segment_rows.iter().filter_map(|r| style.statistic.of(r)).collect();
    let (lo, hi) = resolve_domain(&values, &style.scale);
    let value_of: std::collections::HashMap<&str, Option<f64>> = segment_rows
        .iter()
        .map(|r| (r.entity_id.as_str(), style.statistic.of(r)))
        .collect();

    let mut ordered: Vec<&StreetSegment> = segments.iter().collect();
    ordered.sort_by(|a, b| a.segment_id.cmp(&b.segment_id));

    let mut out = svg_header(style.canvas_width, style.canvas_height, &style.ramp);
    for (group, keep_data) in [("nodata", false), ("data", true)] {
        out.push_str(&format!(
            "  <g id=\"{group}\" fill=\"none\" stroke-width=\"{}\" stroke-linecap=\"round\">\n",
            fmt2(style.stroke_width)
        ));
        for seg in &ordered {
            let value = value_of.get(seg.segment_id.as_str()).copied().flatten();
            if value.is_some() != keep_data {
                continue;
            }
            out.push_str(&format!(
                "    <polyline data-id=\"{}\" points=\"{}\" stroke=\"{}\"/>\n",
                seg.segment_id,
                polyline_attr(seg, crs, transform)?,
                hex_color(color_for(value, lo, hi, style))
            ));
        }
        out.push_str("  </g>\n");
    }

    svg_legend(
        &mut out,
        &format!("{task_id} {} (streets)", style.statistic.as_str()),
        lo,
        hi,
        style.canvas_width,
        style.canvas_height,
    );
    out.push_str("</svg>\n");
    Ok(out)
}
