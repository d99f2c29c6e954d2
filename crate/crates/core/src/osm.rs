//! OpenStreetMap ingestion: parse Overpass JSON responses and build a
//! cleaned, intersection-split street segment set.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{GeomError, LonLat, StreetSegment};
use crate::proj::MetricCrs;

#[derive(Debug, Error)]
pub enum OsmError {
    #[error("overpass request to {endpoint} failed after {attempts} attempt(s): {message}")]
    Http {
        endpoint: String,
        attempts: u32,
        message: String,
    },
    #[error("malformed overpass response at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("no coordinates for node {node_id} referenced by way {way_id}")]
    MissingNode { way_id: i64, node_id: i64 },
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("cache i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// One OSM way as returned by Overpass, before any cleaning.
#[derive(Debug, Clone, PartialEq)]
pub struct RawOsmWay {
    pub way_id: i64,
    /// Ordered node identifiers, ≥ 2.
    pub node_refs: Vec<i64>,
    pub tags: BTreeMap<String, String>,
}

impl RawOsmWay {
    pub fn highway(&self) -> Option<&str> {
        self.tags.get("highway").map(String::as_str)
    }
}

/// Element tallies of a parsed response.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ElementCounts {
    pub elements: usize,
    pub highway_ways: usize,
    pub skipped_ways: usize,
    pub nodes: usize,
}

/// Output of [`parse_overpass`].
#[derive(Debug, Clone)]
pub struct ParsedOsm {
    pub ways: Vec<RawOsmWay>,
    pub nodes: BTreeMap<i64, LonLat>,
    pub counts: ElementCounts,
}

/// Where a raw response came from; carried through to the dataset outputs so
/// a run can be traced back to its snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub endpoint: String,
    pub query: String,
    pub retrieved_at: String,
}

/// The cleaned street network.
#[derive(Debug, Clone)]
pub struct NetworkDataset {
    pub segments: Vec<StreetSegment>,
    pub nodes: BTreeMap<i64, LonLat>,
    pub provenance: Provenance,
}

impl NetworkDataset {
    pub fn total_length_m(&self) -> f64 {
        self.segments.iter().map(|s| s.length_m).sum()
    }
}

/// Highway classes retained when building the network. A class in the set
/// also admits its `*_link` variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HighwayFilter {
    classes: BTreeSet<String>,
}

impl Default for HighwayFilter {
    fn default() -> Self {
        HighwayFilter::new(
            [
                "motorway",
                "trunk",
                "primary",
                "secondary",
                "tertiary",
                "unclassified",
                "residential",
                "living_street",
                "pedestrian",
                "service",
            ]
            .into_iter()
            .map(String::from),
        )
    }
}

impl HighwayFilter {
    pub fn new(classes: impl IntoIterator<Item = String>) -> Self {
        HighwayFilter {
            classes: classes.into_iter().collect(),
        }
    }

    pub fn matches(&self, highway_class: &str) -> bool {
        if self.classes.contains(highway_class) {
            return true;
        }
        highway_class
            .strip_suffix("_link")
            .is_some_and(|base| self.classes.contains(base))
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(String::as_str)
    }
}

#[derive(Deserialize)]
struct RawDocument {
    #[serde(default)]
    elements: Vec<RawElement>,
}

#[derive(Deserialize)]
struct RawElement {
    #[serde(rename = "type")]
    kind: String,
    id: i64,
    #[serde(default)]
    nodes: Vec<i64>,
    #[serde(default)]
    tags: BTreeMap<String, String>,
    #[serde(default)]
    geometry: Option<Vec<Option<RawLatLon>>>,
    lat: Option<f64>,
    lon: Option<f64>,
}

#[derive(Deserialize)]
struct RawLatLon {
    lat: f64,
    lon: f64,
}

/// Parse the JSON output of an Overpass query run with geometry output.
///
/// Every way element carrying a `highway` tag is returned; node coordinates
/// come from node elements and from inline way geometry. A way node without
/// coordinates anywhere in the document is a structural error.
pub fn parse_overpass(doc: &[u8]) -> Result<ParsedOsm, OsmError> {
    let raw: RawDocument = serde_json::from_slice(doc).map_err(|e| {
        let offset = byte_offset(doc, e.line(), e.column());
        OsmError::Parse {
            offset,
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    })?;

    let mut counts = ElementCounts {
        elements: raw.elements.len(),
        ..ElementCounts::default()
    };
    let mut nodes: BTreeMap<i64, LonLat> = BTreeMap::new();
    let mut ways = Vec::new();

    for el in &raw.elements {
        match el.kind.as_str() {
            "node" => {
                if let (Some(lat), Some(lon)) = (el.lat, el.lon) {
                    nodes.insert(el.id, LonLat::new(lon, lat));
                    counts.nodes += 1;
                }
            }
            "way" => {
                if !el.tags.contains_key("highway") {
                    counts.skipped_ways += 1;
                    continue;
                }
                if el.node_refs_valid() {
                    if let Some(geometry) = &el.geometry {
                        for (node_id, coord) in el.nodes.iter().zip(geometry.iter()) {
                            if let Some(c) = coord {
                                nodes.insert(*node_id, LonLat::new(c.lon, c.lat));
                            }
                        }
                    }
                    ways.push(RawOsmWay {
                        way_id: el.id,
                        node_refs: el.nodes.clone(),
                        tags: el.tags.clone(),
                    });
                    counts.highway_ways += 1;
                } else {
                    log::warn!("way {} has fewer than 2 node refs, skipped", el.id);
                    counts.skipped_ways += 1;
                }
            }
            _ => {}
        }
    }

    // every referenced node must have coordinates
    for way in &ways {
        for node_id in &way.node_refs {
            if !nodes.contains_key(node_id) {
                return Err(OsmError::MissingNode {
                    way_id: way.way_id,
                    node_id: *node_id,
                });
            }
        }
    }

    Ok(ParsedOsm {
        ways,
        nodes,
        counts,
    })
}

impl RawElement {
    fn node_refs_valid(&self) -> bool {
        self.nodes.len() >= 2
    }
}

fn byte_offset(doc: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut remaining = line - 1;
    let mut offset = 0;
    for (i, b) in doc.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if *b == b'\n' {
            remaining -= 1;
            offset = i + 1;
        }
    }
    offset + column.saturating_sub(1)
}

/// Split retained ways at intersections and produce the cleaned segment set.
///
/// A way is cut at every interior node that is shared by two or more retained
/// ways or has street-degree ≥ 3 in the retained-way node-incidence map.
/// Segment ids are `<way_id>_<running index>`, lengths are computed in the
/// working metric CRS.
pub fn build_network(
    parsed: &ParsedOsm,
    filter: &HighwayFilter,
    crs: &MetricCrs,
    provenance: Provenance,
) -> Result<NetworkDataset, OsmError> {
    let retained: Vec<&RawOsmWay> = parsed
        .ways
        .iter()
        .filter(|w| w.highway().is_some_and(|h| filter.matches(h)))
        .collect();

    let mut degree: HashMap<i64, u32> = HashMap::new();
    let mut ways_at: HashMap<i64, BTreeSet<i64>> = HashMap::new();
    let deduped: Vec<Vec<i64>> = retained
        .iter()
        .map(|w| dedup_consecutive(&w.node_refs))
        .collect();

    for (way, refs) in retained.iter().zip(&deduped) {
        for pair in refs.windows(2) {
            *degree.entry(pair[0]).or_default() += 1;
            *degree.entry(pair[1]).or_default() += 1;
        }
        for r in refs {
            ways_at.entry(*r).or_default().insert(way.way_id);
        }
    }

    let is_split_node = |node: i64| {
        degree.get(&node).copied().unwrap_or(0) >= 3
            || ways_at.get(&node).map(BTreeSet::len).unwrap_or(0) >= 2
    };

    let mut segments = Vec::new();
    let mut used_nodes: BTreeMap<i64, LonLat> = BTreeMap::new();

    for (way, refs) in retained.iter().zip(&deduped) {
        if refs.len() < 2 {
            continue;
        }
        let highway = way.highway().unwrap_or_default().to_string();
        let mut index = 0usize;
        let mut run: Vec<i64> = vec![refs[0]];
        for (pos, node) in refs.iter().enumerate().skip(1) {
            run.push(*node);
            let interior = pos + 1 < refs.len();
            if interior && is_split_node(*node) {
                segments.push(segment_from_run(way, index, &run, &highway, parsed, crs)?);
                index += 1;
                run = vec![*node];
            }
        }
        if run.len() >= 2 {
            segments.push(segment_from_run(way, index, &run, &highway, parsed, crs)?);
        }
        for r in refs {
            if let Some(c) = parsed.nodes.get(r) {
                used_nodes.insert(*r, *c);
            }
        }
    }

    Ok(NetworkDataset {
        segments,
        nodes: used_nodes,
        provenance,
    })
}

fn segment_from_run(
    way: &RawOsmWay,
    index: usize,
    run: &[i64],
    highway: &str,
    parsed: &ParsedOsm,
    crs: &MetricCrs,
) -> Result<StreetSegment, OsmError> {
    let polyline: Vec<LonLat> = run
        .iter()
        .map(|node_id| {
            parsed.nodes.get(node_id).copied().ok_or(OsmError::MissingNode {
                way_id: way.way_id,
                node_id: *node_id,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(StreetSegment::new(
        format!("{}_{}", way.way_id, index),
        way.way_id,
        polyline,
        highway.to_string(),
        crs,
    )?)
}

fn dedup_consecutive(refs: &[i64]) -> Vec<i64> {
    let mut out: Vec<i64> = Vec::with_capacity(refs.len());
    for r in refs {
        if out.last() != Some(r) {
            out.push(*r);
        }
    }
    out
}
