//! GeoJSON layer writers and readers.
//!
//! Layers are the hand-off format between pipeline stages, so everything
//! here is deterministic: features sorted by id, JSON keys sorted by the
//! serializer, floats in shortest round-trip form. Rewriting the same data
//! gives byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::aggregate::SummaryRow;
use crate::geom::{LonLat, SamplePoint, StreetSegment};

#[derive(Debug, Error)]
pub enum GeoJsonError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("layer schema: {0}")]
    Schema(String),
    #[error("id mismatch between rows and features: {0}")]
    IdMismatch(String),
}

fn coords(polyline: &[LonLat]) -> Value {
    Value::Array(
        polyline
            .iter()
            .map(|c| json!([c.lon, c.lat]))
            .collect(),
    )
}

/// Streets layer: one LineString feature per segment, sorted by segment id.
pub fn streets_layer(segments: &[StreetSegment]) -> Value {
    let mut ordered: Vec<&StreetSegment> = segments.iter().collect();
    ordered.sort_by(|a, b| a.segment_id.cmp(&b.segment_id));
    let features: Vec<Value> = ordered
        .into_iter()
        .map(|s| {
            json!({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords(&s.polyline)},
                "properties": {
                    "segment_id": s.segment_id,
                    "source_way_id": s.source_way_id,
                    "highway_class": s.highway_class,
                    "length_m": s.length_m,
                }
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

/// Points layer: one Point feature per sample point, sorted by point id.
pub fn points_layer(points: &[SamplePoint]) -> Value {
    let mut ordered: Vec<&SamplePoint> = points.iter().collect();
    ordered.sort_by(|a, b| a.point_id.cmp(&b.point_id));
    let features: Vec<Value> = ordered
        .into_iter()
        .map(|p| {
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [p.position.lon, p.position.lat]},
                "properties": {
                    "point_id": p.point_id,
                    "segment_id": p.segment_id,
                    "chainage_m": p.chainage_m,
                }
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

fn stat_properties(
    properties: &mut Map<String, Value>,
    entity_id: &str,
    rows_by_task: &BTreeMap<String, BTreeMap<&str, &SummaryRow>>,
) {
    let to_value = |v: Option<f64>| v.map(Value::from).unwrap_or(Value::Null);
    for (task_id, rows) in rows_by_task {
        let row = rows.get(entity_id);
        let stat = |f: fn(&SummaryRow) -> Option<f64>| to_value(row.and_then(|r| f(r)));
        properties.insert(format!("{task_id}_mean"), stat(|r| r.mean));
        properties.insert(format!("{task_id}_sum"), stat(|r| r.sum));
        properties.insert(format!("{task_id}_min"), stat(|r| r.min));
        properties.insert(format!("{task_id}_max"), stat(|r| r.max));
        properties.insert(
            format!("{task_id}_count"),
            Value::from(row.map(|r| r.count_valid).unwrap_or(0)),
        );
    }
}

fn index_rows(rows_by_task: &BTreeMap<String, Vec<SummaryRow>>) -> BTreeMap<String, BTreeMap<&str, &SummaryRow>> {
    rows_by_task
        .iter()
        .map(|(task, rows)| {
            (
                task.clone(),
                rows.iter()
                    .map(|r| (r.entity_id.as_str(), r))
                    .collect::<BTreeMap<_, _>>(),
            )
        })
        .collect()
}

/// Points layer with per-task statistics joined onto each feature. Entities
/// without data keep the property keys, null-valued.
pub fn scored_points_layer(
    points: &[SamplePoint],
    rows_by_task: &BTreeMap<String, Vec<SummaryRow>>,
) -> Result<Value, GeoJsonError> {
    check_ids(
        rows_by_task,
        &points.iter().map(|p| p.point_id.as_str()).collect::<Vec<_>>(),
    )?;
    let indexed = index_rows(rows_by_task);
    let mut ordered: Vec<&SamplePoint> = points.iter().collect();
    ordered.sort_by(|a, b| a.point_id.cmp(&b.point_id));
    let features: Vec<Value> = ordered
        .into_iter()
        .map(|p| {
            let mut properties = Map::new();
            properties.insert("point_id".into(), Value::from(p.point_id.clone()));
            properties.insert("segment_id".into(), Value::from(p.segment_id.clone()));
            properties.insert("chainage_m".into(), Value::from(p.chainage_m));
            stat_properties(&mut properties, &p.point_id, &indexed);
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [p.position.lon, p.position.lat]},
                "properties": Value::Object(properties),
            })
        })
        .collect();
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

/// Streets layer with per-task statistics joined onto each feature.
pub fn scored_streets_layer(
    segments: &[StreetSegment],
    rows_by_task: &BTreeMap<String, Vec<SummaryRow>>,
) -> Result<Value, GeoJsonError> {
    check_ids(
        rows_by_task,
        &segments.iter().map(|s| s.segment_id.as_str()).collect::<Vec<_>>(),
    )?;
    let indexed = index_rows(rows_by_task);
    let mut ordered: Vec<&StreetSegment> = segments.iter().collect();
    ordered.sort_by(|a, b| a.segment_id.cmp(&b.segment_id));
    let features: Vec<Value> = ordered
        .into_iter()
        .map(|s| {
            let mut properties = Map::new();
            properties.insert("segment_id".into(), Value::from(s.segment_id.clone()));
            properties.insert("source_way_id".into(), Value::from(s.source_way_id));
            properties.insert("highway_class".into(), Value::from(s.highway_class.clone()));
            properties.insert("length_m".into(), Value::from(s.length_m));
            stat_properties(&mut properties, &s.segment_id, &indexed);
            json!({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords(&s.polyline)},
                "properties": Value::Object(properties),
            })
        })
        .collect();
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

fn check_ids(
    rows_by_task: &BTreeMap<String, Vec<SummaryRow>>,
    known: &[&str],
) -> Result<(), GeoJsonError> {
    let known: std::collections::HashSet<&&str> = known.iter().collect();
    for rows in rows_by_task.values() {
        for row in rows {
            if !known.contains(&row.entity_id.as_str()) {
                return Err(GeoJsonError::IdMismatch(row.entity_id.clone()));
            }
        }
    }
    Ok(())
}

/// Pretty-printed with a trailing newline; byte-identical for equal values.
pub fn write_json(path: &Path, value: &Value) -> Result<(), GeoJsonError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json(path: &Path) -> Result<Value, GeoJsonError> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

fn features_of(doc: &Value) -> Result<&Vec<Value>, GeoJsonError> {
    doc.get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| GeoJsonError::Schema("missing features array".into()))
}

fn property_str(feature: &Value, key: &str) -> Result<String, GeoJsonError> {
    feature["properties"][key]
        .as_str()
        .map(String::from)
        .ok_or_else(|| GeoJsonError::Schema(format!("missing string property {key}")))
}

fn property_f64(feature: &Value, key: &str) -> Result<f64, GeoJsonError> {
    feature["properties"][key]
        .as_f64()
        .ok_or_else(|| GeoJsonError::Schema(format!("missing numeric property {key}")))
}

/// Read a points layer (plain or scored) back into sample points.
pub fn read_points_layer(path: &Path) -> Result<Vec<SamplePoint>, GeoJsonError> {
    let doc = read_json(path)?;
    features_of(&doc)?
        .iter()
        .map(|f| {
            let c = f["geometry"]["coordinates"]
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| GeoJsonError::Schema("bad point coordinates".into()))?;
            Ok(SamplePoint {
                point_id: property_str(f, "point_id")?,
                segment_id: property_str(f, "segment_id")?,
                chainage_m: property_f64(f, "chainage_m")?,
                position: LonLat::new(
                    c[0].as_f64().ok_or_else(|| GeoJsonError::Schema("lon".into()))?,
                    c[1].as_f64().ok_or_else(|| GeoJsonError::Schema("lat".into()))?,
                ),
            })
        })
        .collect()
}

/// Read a streets layer (plain or scored) back into segments. Lengths come
/// from the stored property, not a recomputation.
pub fn read_streets_layer(path: &Path) -> Result<Vec<StreetSegment>, GeoJsonError> {
    let doc = read_json(path)?;
    features_of(&doc)?
        .iter()
        .map(|f| {
            let line = f["geometry"]["coordinates"]
                .as_array()
                .ok_or_else(|| GeoJsonError::Schema("bad line coordinates".into()))?;
            let polyline: Vec<LonLat> = line
                .iter()
                .map(|v| {
                    let pair = v
                        .as_array()
                        .filter(|a| a.len() == 2)
                        .ok_or_else(|| GeoJsonError::Schema("bad vertex".into()))?;
                    Ok(LonLat::new(
                        pair[0].as_f64().ok_or_else(|| GeoJsonError::Schema("lon".into()))?,
                        pair[1].as_f64().ok_or_else(|| GeoJsonError::Schema("lat".into()))?,
                    ))
                })
                .collect::<Result<_, GeoJsonError>>()?;
            let source_way_id = f["properties"]["source_way_id"]
                .as_i64()
                .ok_or_else(|| GeoJsonError::Schema("missing source_way_id".into()))?;
            Ok(StreetSegment {
                segment_id: property_str(f, "segment_id")?,
                source_way_id,
                polyline,
                length_m: property_f64(f, "length_m")?,
                highway_class: property_str(f, "highway_class")?,
            })
        })
        .collect()
}

/// Tasks present in a scored layer, inferred from `<task>_count` keys.
pub fn tasks_in_layer(doc: &Value) -> Vec<String> {
    let mut tasks: Vec<String> = Vec::new();
    if let Ok(features) = features_of(doc) {
        if let Some(props) = features.first().and_then(|f| f["properties"].as_object()) {
            for key in props.keys() {
                if let Some(task) = key.strip_suffix("_count") {
                    if props.contains_key(&format!("{task}_mean")) {
                        tasks.push(task.to_string());
                    }
                }
            }
        }
    }
    tasks.sort();
    tasks
}

/// Rebuild the summary rows of one task from a scored layer.
pub fn summaries_from_layer(
    doc: &Value,
    id_key: &str,
    task_id: &str,
) -> Result<Vec<SummaryRow>, GeoJsonError> {
    features_of(doc)?
        .iter()
        .map(|f| {
            let props = f["properties"]
                .as_object()
                .ok_or_else(|| GeoJsonError::Schema("missing properties".into()))?;
            let entity_id = props
                .get(id_key)
                .and_then(Value::as_str)
                .ok_or_else(|| GeoJsonError::Schema(format!("missing {id_key}")))?
                .to_string();
            let stat = |name: &str| props.get(&format!("{task_id}_{name}")).and_then(Value::as_f64);
            let count_valid = props
                .get(&format!("{task_id}_count"))
                .and_then(Value::as_u64)
                .unwrap_or(0) as u32;
            Ok(SummaryRow {
                entity_id,
                task_id: task_id.to_string(),
                mean: stat("mean"),
                sum: stat("sum"),
                min: stat("min"),
                max: stat("max"),
                count_valid,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::BoundingBox;
    use crate::proj::select_metric_crs;

    fn crs() -> crate::proj::MetricCrs {
        select_metric_crs(&BoundingBox::new(7.29, 43.73, 7.31, 43.75).unwrap())
    }

    fn segment(id: &str, way: i64) -> StreetSegment {
        StreetSegment::new(
            id.into(),
            way,
            vec![LonLat::new(7.300, 43.740), LonLat::new(7.302, 43.741)],
            "residential".into(),
            &crs(),
        )
        .unwrap()
    }

    fn point(id: &str, seg: &str, chainage: f64) -> SamplePoint {
        SamplePoint {
            point_id: id.into(),
            segment_id: seg.into(),
            chainage_m: chainage,
            position: LonLat::new(7.3005, 43.7402),
        }
    }

    fn row(entity: &str, task: &str, values: &[f64]) -> SummaryRow {
        let sum: f64 = values.iter().sum();
        SummaryRow {
            entity_id: entity.into(),
            task_id: task.into(),
            mean: Some(sum / values.len() as f64),
            sum: Some(sum),
            min: values.iter().copied().reduce(f64::min),
            max: values.iter().copied().reduce(f64::max),
            count_valid: values.len() as u32,
        }
    }

    #[test]
    fn layers_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let segments = vec![segment("1_0", 1), segment("1_1", 1)];
        let points = vec![point("1_0#0", "1_0", 15.0), point("1_0#1", "1_0", 55.0)];

        let streets_path = dir.path().join("streets.geojson");
        write_json(&streets_path, &streets_layer(&segments)).unwrap();
        let points_path = dir.path().join("points.geojson");
        write_json(&points_path, &points_layer(&points)).unwrap();

        assert_eq!(read_streets_layer(&streets_path).unwrap(), segments);
        assert_eq!(read_points_layer(&points_path).unwrap(), points);
    }

    #[test]
    fn scored_layer_reproduces_summary_rows_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let points = vec![point("1_0#0", "1_0", 15.0), point("1_0#1", "1_0", 55.0)];
        let mut rows_by_task = BTreeMap::new();
        rows_by_task.insert(
            "T1".to_string(),
            vec![
                row("1_0#0", "T1", &[1.0, 0.0, 1.0, 1.0]),
                SummaryRow {
                    entity_id: "1_0#1".into(),
                    task_id: "T1".into(),
                    mean: None,
                    sum: None,
                    min: None,
                    max: None,
                    count_valid: 0,
                },
            ],
        );
        rows_by_task.insert(
            "T3".to_string(),
            vec![
                row("1_0#0", "T3", &[0.5, 1.5]),
                row("1_0#1", "T3", &[2.5]),
            ],
        );

        let path = dir.path().join("points_scored.geojson");
        write_json(&path, &scored_points_layer(&points, &rows_by_task).unwrap()).unwrap();

        let doc = read_json(&path).unwrap();
        assert_eq!(tasks_in_layer(&doc), ["T1", "T3"]);
        for (task, rows) in &rows_by_task {
            let read_back = summaries_from_layer(&doc, "point_id", task).unwrap();
            assert_eq!(&read_back, rows, "task {task}");
        }
    }

    #[test]
    fn entity_without_data_keeps_null_properties() {
        let points = vec![point("a#0", "s", 0.0)];
        let mut rows_by_task = BTreeMap::new();
        rows_by_task.insert("T1".to_string(), vec![]);
        let doc = scored_points_layer(&points, &rows_by_task).unwrap();
        let props = &doc["features"][0]["properties"];
        assert!(props["T1_mean"].is_null());
        assert!(props["T1_sum"].is_null());
        assert_eq!(props["T1_count"], 0);
    }

    #[test]
    fn unknown_row_ids_abort() {
        let points = vec![point("a#0", "s", 0.0)];
        let mut rows_by_task = BTreeMap::new();
        rows_by_task.insert("T1".to_string(), vec![row("ghost", "T1", &[1.0])]);
        assert!(matches!(
            scored_points_layer(&points, &rows_by_task),
            Err(GeoJsonError::IdMismatch(_))
        ));
    }

    #[test]
    fn features_are_sorted_by_id() {
        let segments = vec![segment("9_0", 9), segment("10_0", 10), segment("1_0", 1)];
        let doc = streets_layer(&segments);
        let ids: Vec<&str> = doc["features"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| f["properties"]["segment_id"].as_str().unwrap())
            .collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn rewriting_identical_inputs_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let segments = vec![segment("1_0", 1)];
        let a = dir.path().join("a.geojson");
        let b = dir.path().join("b.geojson");
        write_json(&a, &streets_layer(&segments)).unwrap();
        write_json(&b, &streets_layer(&segments)).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
