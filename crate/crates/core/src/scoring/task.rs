//! Scoring task definitions: prompt blocks, answer domains and the registry
//! of shipped plus user-supplied tasks.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScoringError;

/// The set of scalar values a task accepts as a valid answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerDomain {
    /// A finite list of accepted values.
    Enumerated { values: Vec<f64> },
    /// Zero or any positive multiple of 0.5.
    HalfSteps,
}

impl AnswerDomain {
    pub fn contains(&self, value: f64) -> bool {
        match self {
            AnswerDomain::Enumerated { values } => values.iter().any(|v| *v == value),
            AnswerDomain::HalfSteps => {
                value >= 0.0 && value.is_finite() && (value * 2.0).fract() == 0.0
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, AnswerDomain::Enumerated { values } if values.is_empty())
    }
}

/// A prompted scoring task. The full prompt is the four text blocks joined
/// in order by blank lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub role_description: String,
    pub theory_model: String,
    pub task: String,
    pub response_format: String,
    pub answer_domain: AnswerDomain,
}

impl TaskSpec {
    /// Concatenate the four blocks, byte-deterministically.
    pub fn assemble_prompt(&self) -> Result<String, ScoringError> {
        for (name, block) in [
            ("role_description", &self.role_description),
            ("theory_model", &self.theory_model),
            ("task", &self.task),
            ("response_format", &self.response_format),
        ] {
            if block.trim().is_empty() {
                return Err(ScoringError::EmptyPromptBlock {
                    task_id: self.task_id.clone(),
                    block: name.to_string(),
                });
            }
        }
        if self.answer_domain.is_empty() {
            return Err(ScoringError::EmptyAnswerDomain {
                task_id: self.task_id.clone(),
            });
        }
        Ok(format!(
            "{}\n\n{}\n\n{}\n\n{}",
            self.role_description, self.theory_model, self.task, self.response_format
        ))
    }
}

/// Urban-vs-rural scene categorization, answers in {0, 1}.
pub fn task_t1() -> TaskSpec {
    TaskSpec {
        task_id: "T1".into(),
        role_description: "You are an AI assistant designed to analyze street-level images. \
                           Your task is to determine whether the environment shown in the image \
                           is urban or rural."
            .into(),
        theory_model: "Classification Guide:\n\
                       - 0: Rural area — sparse built environment, natural surroundings, few or no buildings.\n\
                       - 1: Urban area — dense built environment, visible infrastructure, buildings."
            .into(),
        task: "Carefully observe the image and determine whether it depicts a rural or urban environment.\n\
               Use the classification guide above to assign a score.\n\
               Return only the classification (0 or 1). Do not explain your answer or add extra text."
            .into(),
        response_format: "Answer format: 0 or 1".into(),
        answer_domain: AnswerDomain::Enumerated {
            values: vec![0.0, 1.0],
        },
    }
}

/// Visible shopfront counting, answers in {0, 1, 2}.
pub fn task_t2() -> TaskSpec {
    TaskSpec {
        task_id: "T2".into(),
        role_description: "You are an AI assistant designed to analyze street-level images.\n\
                           Your job is to detect the presence of commercial storefronts, such as \
                           shops, restaurants, or businesses."
            .into(),
        theory_model: "Scoring Guide:\n\
                       - 0: No visible shops or commercial storefronts.\n\
                       - 1: One visible shop or storefront.\n\
                       - 2: More than one shop or storefront is visible."
            .into(),
        task: "Look at the image carefully and apply the scoring guide above.\n\
               Return only the score (0, 1, or 2) based on how many shops are visible.\n\
               Do not explain your answer or add text. Only output the number."
            .into(),
        response_format: "Answer format: 0, 1, or 2".into(),
        answer_domain: AnswerDomain::Enumerated {
            values: vec![0.0, 1.0, 2.0],
        },
    }
}

/// Sidewalk width estimation in meters, answers 0 or positive multiples of 0.5.
pub fn task_t3() -> TaskSpec {
    TaskSpec {
        task_id: "T3".into(),
        role_description: "You are an AI assistant designed to analyze street-level images. \
                           Your task is to estimate the visible width of a sidewalk."
            .into(),
        theory_model: "Scoring Guide:\n\
                       - 0: No visible sidewalk or the sidewalk is not clearly identifiable.\n\
                       - Otherwise: Return the estimated width of the sidewalk in meters, rounded \
                       to the nearest 0.5 (e.g., 1.0, 1.5, 2.0, 2.5, 3.0)."
            .into(),
        task: "Look at the image carefully. If a sidewalk is visible, estimate its width in meters.\n\
               If no sidewalk is visible or it's unclear, return 0.\n\
               Do not explain your answer or add any text. Only output a single number."
            .into(),
        response_format: "Answer format: 0 or a number (e.g., 1.0, 1.5, 2.0, 2.5, 3.0)".into(),
        answer_domain: AnswerDomain::HalfSteps,
    }
}

/// The shipped tasks plus any user-supplied ones, keyed by task id.
#[derive(Debug, Clone)]
pub struct TaskRegistry {
    tasks: BTreeMap<String, TaskSpec>,
}

impl Default for TaskRegistry {
    fn default() -> Self {
        let mut tasks = BTreeMap::new();
        for t in [task_t1(), task_t2(), task_t3()] {
            tasks.insert(t.task_id.clone(), t);
        }
        TaskRegistry { tasks }
    }
}

impl TaskRegistry {
    pub fn get(&self, task_id: &str) -> Result<&TaskSpec, ScoringError> {
        self.tasks
            .get(task_id)
            .ok_or_else(|| ScoringError::UnknownTask(task_id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.tasks.keys().map(String::as_str)
    }

    /// Register a task, replacing any existing one with the same id.
    pub fn register(&mut self, task: TaskSpec) {
        self.tasks.insert(task.task_id.clone(), task);
    }

    /// Load a task definition from a TOML document.
    pub fn load_file(&mut self, path: &Path) -> Result<&TaskSpec, ScoringError> {
        let text = std::fs::read_to_string(path)?;
        let task: TaskSpec = toml::from_str(&text).map_err(|e| ScoringError::BadTaskFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        task.assemble_prompt()?; // validates blocks and domain
        let id = task.task_id.clone();
        self.register(task);
        Ok(&self.tasks[&id])
    }

    /// Write one TOML file per task into `dir`; returns the written paths.
    pub fn export_all(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>, ScoringError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for task in self.tasks.values() {
            let path = dir.join(format!("{}.toml", task.task_id));
            let text = toml::to_string_pretty(task).map_err(|e| ScoringError::BadTaskFile {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            std::fs::write(&path, text)?;
            written.push(path);
        }
        Ok(written)
    }
}
