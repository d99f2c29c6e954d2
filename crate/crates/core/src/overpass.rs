//! Overpass API client with a content-addressed disk cache.
//!
//! Raw responses are persisted verbatim, keyed by the SHA-256 of the query
//! text, so every downstream step replays offline. Live network access
//! happens only here.

use std::path::{Path, PathBuf};
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::geom::BoundingBox;
use crate::osm::{OsmError, Provenance};

/// All ways with a highway tag intersecting the bbox, with geometry output,
/// JSON format. Overpass bbox order is (south, west, north, east).
pub fn build_query(bbox: &BoundingBox) -> String {
    format!(
        "[out:json][timeout:180];way[\"highway\"]({},{},{},{});out body geom;",
        bbox.min_lat, bbox.min_lon, bbox.max_lat, bbox.max_lon
    )
}

/// Cache file for a query: `<dir>/<sha256-of-query>.json`.
pub fn cache_path(cache_dir: &Path, query: &str) -> PathBuf {
    let digest = Sha256::digest(query.as_bytes());
    cache_dir.join(format!("{}.json", hex::encode(digest)))
}

fn meta_path(cache_dir: &Path, query: &str) -> PathBuf {
    let digest = Sha256::digest(query.as_bytes());
    cache_dir.join(format!("{}.meta.json", hex::encode(digest)))
}

/// A raw response document plus its provenance.
#[derive(Debug, Clone)]
pub struct FetchedDocument {
    pub bytes: Vec<u8>,
    pub provenance: Provenance,
    pub from_cache: bool,
}

#[derive(Debug, Clone)]
pub struct OverpassClient {
    pub endpoint: String,
    pub max_retries: u32,
}

impl OverpassClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        OverpassClient {
            endpoint: endpoint.into(),
            max_retries: 3,
        }
    }

    /// Return the cached response for the bbox query, fetching and persisting
    /// it first when absent. Cache hits never touch the network.
    pub fn fetch_cached(
        &self,
        bbox: &BoundingBox,
        cache_dir: &Path,
    ) -> Result<FetchedDocument, OsmError> {
        let query = build_query(bbox);
        let path = cache_path(cache_dir, &query);
        if path.exists() {
            let bytes = std::fs::read(&path)?;
            let provenance = match std::fs::read(meta_path(cache_dir, &query)) {
                Ok(meta) => serde_json::from_slice(&meta).unwrap_or_else(|_| Provenance {
                    endpoint: self.endpoint.clone(),
                    query: query.clone(),
                    retrieved_at: String::new(),
                }),
                Err(_) => Provenance {
                    endpoint: self.endpoint.clone(),
                    query: query.clone(),
                    retrieved_at: String::new(),
                },
            };
            return Ok(FetchedDocument {
                bytes,
                provenance,
                from_cache: true,
            });
        }

        let bytes = self.fetch_raw(&query)?;
        let provenance = Provenance {
            endpoint: self.endpoint.clone(),
            query: query.clone(),
            retrieved_at: chrono::Utc::now().to_rfc3339(),
        };

        std::fs::create_dir_all(cache_dir)?;
        write_atomic(&path, &bytes)?;
        write_atomic(
            &meta_path(cache_dir, &query),
            serde_json::to_string_pretty(&provenance)
                .expect("provenance serializes")
                .as_bytes(),
        )?;

        Ok(FetchedDocument {
            bytes,
            provenance,
            from_cache: false,
        })
    }

    fn fetch_raw(&self, query: &str) -> Result<Vec<u8>, OsmError> {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .new_agent();

        let mut attempts = 0;
        let mut last_error = String::new();
        while attempts <= self.max_retries {
            attempts += 1;
            match agent
                .post(&self.endpoint)
                .send_form([("data", query)])
            {
                Ok(mut resp) => match resp.body_mut().read_to_vec() {
                    Ok(bytes) => return Ok(bytes),
                    Err(e) => last_error = format!("body read: {e}"),
                },
                Err(ureq::Error::StatusCode(code)) => {
                    last_error = format!("http status {code}");
                    if !(500..600).contains(&code) && code != 429 {
                        break; // non-retriable
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
            if attempts <= self.max_retries {
                std::thread::sleep(Duration::from_millis(250 * 2u64.pow(attempts - 1)));
            }
        }
        Err(OsmError::Http {
            endpoint: self.endpoint.clone(),
            attempts,
            message: last_error,
        })
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
