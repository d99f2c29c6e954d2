//! Street-level scene scoring pipeline.
//!
//! The crate covers the full chain from raw OpenStreetMap geometry to
//! validated scores: street-network ingestion and cleaning, chainage-based
//! point sampling, batched street-view image retrieval with placeholder
//! detection, prompt-based scoring through a pluggable vision-language
//! backend, point/segment aggregation, SVG map rendering and a validation
//! harness against human annotations.

pub mod aggregate;
pub mod geojson;
pub mod geom;
pub mod imagery;
pub mod mapping;
pub mod osm;
pub mod overpass;
pub mod proj;
pub mod sample;
pub mod scoring;
pub mod validate;
