//! Run directory layout and stage tracking.
//!
//! Everything a case study produces lives under one directory: caches,
//! images, logs, layers, maps and reports. Stage completion markers enforce
//! the pipeline order sample → fetch → score → aggregate → render.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn overpass_cache_dir(&self) -> PathBuf {
        self.root.join("cache").join("overpass")
    }

    pub fn layers_dir(&self) -> PathBuf {
        self.root.join("layers")
    }

    pub fn streets_layer(&self) -> PathBuf {
        self.layers_dir().join("streets.geojson")
    }

    pub fn points_layer(&self) -> PathBuf {
        self.layers_dir().join("points.geojson")
    }

    pub fn scored_points_layer(&self) -> PathBuf {
        self.layers_dir().join("points_scored.geojson")
    }

    pub fn scored_streets_layer(&self) -> PathBuf {
        self.layers_dir().join("streets_scored.geojson")
    }

    pub fn images_dir(&self) -> PathBuf {
        self.root.join("images")
    }

    pub fn image_manifest(&self) -> PathBuf {
        self.images_dir().join("manifest.csv")
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn score_log(&self, task_id: &str) -> PathBuf {
        self.logs_dir().join(format!("scores_{task_id}.csv"))
    }

    pub fn maps_dir(&self) -> PathBuf {
        self.root.join("maps")
    }

    pub fn map_path(&self, case_name: &str, task_id: &str, level: &str) -> PathBuf {
        self.maps_dir()
            .join(format!("{case_name}_{task_id}_{level}.svg"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn counts_report(&self) -> PathBuf {
        self.reports_dir().join("counts.json")
    }

    pub fn provenance_report(&self) -> PathBuf {
        self.reports_dir().join("provenance.json")
    }

    pub fn validation_report(&self, task_id: &str, extension: &str) -> PathBuf {
        self.reports_dir()
            .join(format!("validation_{task_id}.{extension}"))
    }

    pub fn tasks_dir(&self) -> PathBuf {
        self.root.join("tasks")
    }

    pub fn state_path(&self) -> PathBuf {
        self.root.join("run_state.json")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageEntry {
    pub completed_at: String,
}

/// Per-run state: which stages completed, under which config.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunState {
    pub config_sha256: String,
    pub tool_version: String,
    #[serde(default)]
    pub stages: BTreeMap<String, StageEntry>,
}

impl RunState {
    pub fn load(run: &RunDir) -> Result<RunState, CliError> {
        let path = run.state_path();
        if !path.exists() {
            return Ok(RunState::default());
        }
        let bytes = std::fs::read(&path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Other(format!("corrupt {}: {e}", path.display())))
    }

    pub fn save(&self, run: &RunDir) -> Result<(), CliError> {
        std::fs::create_dir_all(run.root())?;
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::write(run.state_path(), text + "\n")?;
        Ok(())
    }

    pub fn is_done(&self, stage: &str) -> bool {
        self.stages.contains_key(stage)
    }

    pub fn mark_done(&mut self, stage: &str) {
        self.stages.insert(
            stage.to_string(),
            StageEntry {
                completed_at: chrono::Utc::now().to_rfc3339(),
            },
        );
    }

    /// Fails with a pipeline-order message naming the missing stage.
    pub fn require(&self, stage: &str, wanted_by: &str) -> Result<(), CliError> {
        if self.is_done(stage) {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "stage {wanted_by} requires completed stage {stage}; run `streetscore {}` first",
                stage.split(':').next().unwrap_or(stage)
            )))
        }
    }

    /// Track the config the run was started with; a change is suspicious but
    /// not fatal.
    pub fn observe_config(&mut self, config_sha256: &str, tool_version: &str) {
        if self.config_sha256.is_empty() {
            self.config_sha256 = config_sha256.to_string();
            self.tool_version = tool_version.to_string();
        } else if self.config_sha256 != config_sha256 {
            log::warn!(
                "config changed since this run directory was created (was {}, now {})",
                &self.config_sha256[..12.min(self.config_sha256.len())],
                &config_sha256[..12.min(config_sha256.len())]
            );
        }
    }
}
