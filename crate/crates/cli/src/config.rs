//! Declarative run configuration.
//!
//! One TOML document per case study. Secrets never live here: the
//! street-view key and the backend token come from the environment
//! (`STREETVIEW_API_KEY`, `SCORING_BACKEND_TOKEN`).

use std::path::Path;

use serde::Deserialize;
use streetscore::geom::BoundingBox;
use streetscore::imagery::{CameraConfig, FetchLimits};
use streetscore::osm::HighwayFilter;
use streetscore::sample::SamplingConfig;
use streetscore::scoring::{BackendConfig, TaskRegistry};

use crate::CliError;

pub const STREETVIEW_KEY_ENV: &str = "STREETVIEW_API_KEY";
pub const BACKEND_TOKEN_ENV: &str = "SCORING_BACKEND_TOKEN";

fn default_tasks() -> Vec<String> {
    vec!["T1".into(), "T2".into(), "T3".into()]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case_name: String,
    pub bbox: BoundingBox,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub camera: CameraConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub endpoints: Endpoints,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<String>,
    /// Extra task definition files (TOML), loaded into the registry.
    #[serde(default)]
    pub task_files: Vec<String>,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub placeholder: PlaceholderSection,
    #[serde(default)]
    pub style: StyleSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoints {
    #[serde(default = "default_overpass_url")]
    pub overpass_url: String,
    #[serde(default = "default_street_view_url")]
    pub street_view_url: String,
    /// Optional street-view key in the config; the environment wins.
    #[serde(default)]
    pub street_view_api_key: Option<String>,
}

fn default_overpass_url() -> String {
    "https://overpass-api.de/api/interpreter".into()
}

fn default_street_view_url() -> String {
    "https://maps.googleapis.com/maps/api/streetview".into()
}

impl Default for Endpoints {
    fn default() -> Self {
        Endpoints {
            overpass_url: default_overpass_url(),
            street_view_url: default_street_view_url(),
            street_view_api_key: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    /// Highway classes to retain; defaults to the drivable/walkable set.
    pub highway_classes: Option<Vec<String>>,
}

impl FilterSection {
    pub fn to_filter(&self) -> HighwayFilter {
        match &self.highway_classes {
            Some(classes) => HighwayFilter::new(classes.iter().cloned()),
            None => HighwayFilter::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    #[serde(default = "default_rps")]
    pub requests_per_second: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_fetch_concurrency")]
    pub fetch_concurrency: usize,
    #[serde(default = "default_score_concurrency")]
    pub score_concurrency: usize,
}

fn default_rps() -> f64 {
    10.0
}
fn default_retries() -> u32 {
    3
}
fn default_fetch_concurrency() -> usize {
    8
}
fn default_score_concurrency() -> usize {
    4
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            requests_per_second: default_rps(),
            max_retries: default_retries(),
            fetch_concurrency: default_fetch_concurrency(),
            score_concurrency: default_score_concurrency(),
        }
    }
}

impl Limits {
    pub fn fetch_limits(&self) -> FetchLimits {
        FetchLimits {
            requests_per_second: self.requests_per_second,
            max_retries: self.max_retries,
            concurrency: self.fetch_concurrency,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaceholderSection {
    #[serde(default = "default_dominance")]
    pub dominance_threshold: f64,
}

fn default_dominance() -> f64 {
    0.9
}

impl Default for PlaceholderSection {
    fn default() -> Self {
        PlaceholderSection {
            dominance_threshold: default_dominance(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleSection {
    /// Color stops as `#rrggbb`, light to dark.
    pub ramp: Option<Vec<String>>,
    pub nodata: Option<String>,
    pub canvas: Option<[u32; 2]>,
    pub stroke_width: Option<f64>,
    pub point_radius: Option<f64>,
}

impl StyleSection {
    pub fn apply(&self, style: &mut streetscore::mapping::MapStyle) -> Result<(), CliError> {
        if let Some(ramp) = &self.ramp {
            style.ramp = ramp
                .iter()
                .map(|s| parse_hex_color(s))
                .collect::<Result<_, _>>()?;
        }
        if let Some(nodata) = &self.nodata {
            style.nodata_color = parse_hex_color(nodata)?;
        }
        if let Some([w, h]) = self.canvas {
            style.canvas_width = w;
            style.canvas_height = h;
        }
        if let Some(w) = self.stroke_width {
            style.stroke_width = w;
        }
        if let Some(r) = self.point_radius {
            style.point_radius = r;
        }
        Ok(())
    }
}

pub fn parse_hex_color(text: &str) -> Result<[u8; 3], CliError> {
    let hex = text.strip_prefix('#').unwrap_or(text);
    if hex.len() != 6 {
        return Err(CliError::Config(format!("bad color {text:?}")));
    }
    let byte = |i: usize| {
        u8::from_str_radix(&hex[i..i + 2], 16)
            .map_err(|_| CliError::Config(format!("bad color {text:?}")))
    };
    Ok([byte(0)?, byte(2)?, byte(4)?])
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Everything checkable without touching the network.
    pub fn validate(&self) -> Result<(), CliError> {
        self.bbox
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.sampling
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.camera
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.backend
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.case_name.trim().is_empty() {
            return Err(CliError::Config("case_name must not be empty".into()));
        }
        if !(0.0..=1.0).contains(&self.placeholder.dominance_threshold) {
            return Err(CliError::Config(format!(
                "dominance_threshold must lie in [0, 1], got {}",
                self.placeholder.dominance_threshold
            )));
        }
        let registry = self.task_registry()?;
        for task in &self.tasks {
            registry
                .get(task)
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Shipped tasks plus the configured task files.
    pub fn task_registry(&self) -> Result<TaskRegistry, CliError> {
        let mut registry = TaskRegistry::default();
        for file in &self.task_files {
            registry
                .load_file(Path::new(file))
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(registry)
    }

    pub fn street_view_api_key(&self) -> Option<String> {
        std::env::var(STREETVIEW_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .or_else(|| self.endpoints.street_view_api_key.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
case_name = "demo"

[bbox]
min_lon = 7.29
min_lat = 43.73
max_lon = 7.31
max_lat = 43.75
"#;

    /// Insert extra top-level keys ahead of the `[bbox]` table.
    fn with_top_level(extra: &str) -> String {
        MINIMAL.replacen("\n[bbox]", &format!("\n{extra}\n[bbox]"), 1)
    }

    #[test]
    fn minimal_config_gets_full_defaults() {
        let config: RunConfig = toml::from_str(MINIMAL).unwrap();
        config.validate().unwrap();
        assert_eq!(config.sampling.spacing_m, 40.0);
        assert_eq!(config.sampling.offset_m, 15.0);
        assert_eq!(config.camera.headings_deg, vec![0.0, 90.0, 180.0, 270.0]);
        assert_eq!(config.tasks, ["T1", "T2", "T3"]);
        assert_eq!(config.limits.fetch_concurrency, 8);
        assert_eq!(config.placeholder.dominance_threshold, 0.9);
        assert!(config.endpoints.overpass_url.contains("overpass"));
    }

    #[test]
    fn invalid_bbox_is_a_config_error() {
        let text = MINIMAL.replace("max_lon = 7.31", "max_lon = 7.20");
        let config: RunConfig = toml::from_str(&text).unwrap();
        assert!(matches!(config.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_task_is_a_config_error() {
        let text = with_top_level("tasks = [\"T7\"]");
        let config: RunConfig = toml::from_str(&text).unwrap();
        assert!(matches!(config.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = with_top_level("banana = 1");
        assert!(toml::from_str::<RunConfig>(&text).is_err());
    }

    #[test]
    fn hex_colors_parse() {
        assert_eq!(parse_hex_color("#808080").unwrap(), [128, 128, 128]);
        assert_eq!(parse_hex_color("fde725").unwrap(), [253, 231, 37]);
        assert!(parse_hex_color("#80808").is_err());
        assert!(parse_hex_color("#gggggg").is_err());
    }
}
