//! End-to-end assembly: dataset -> hotspots -> units -> features ->
//! experiences, plus the wiring for method evaluation and task modeling.
//!
//! Hotspots are clustered per task, so registry occurrence counts are
//! task-scoped and hotspot ids are dense within each task.

use std::collections::BTreeMap;

use crate::evaluation::{self, EvalError, ManualSpec, MatchMode, MethodConfig, MethodRow};
use crate::features::{extract_features, FeatureError, FeatureVector, FEATURE_NAMES};
use crate::prototype::{
    difficult_hotspots, select_prototypes, Experience, HotspotMode, PrototypeConfig,
    PrototypeError, SelectionResult,
};
use crate::records::{SessionSet, TrialKey};
use crate::segmentation::{
    label_touches, HotspotRegistry, OperationalUnit, SegmentError, SegmentationParams,
};
use crate::stats::{skill_correlation_table, CorrelationTable};
use crate::taskmodel::{ModelError, TaskModel};

/// Everything derived from one task's trials.
#[derive(Debug, Clone)]
pub struct TaskAnalysis {
    pub task_id: String,
    pub registry: HotspotRegistry,
    /// The task's trials with filtered, hotspot-labeled touches.
    pub labeled: SessionSet,
    pub units: BTreeMap<TrialKey, Vec<OperationalUnit>>,
    /// One experience per trial with at least one unit, in trial order.
    pub experiences: Vec<Experience>,
}

/// Per-task analyses over a full dataset.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub tasks: Vec<TaskAnalysis>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("task {task}: {source}")]
    Segmentation {
        task: String,
        #[source]
        source: SegmentError,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Prototype(#[from] PrototypeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Data(String),
}

/// Segment every task and extract all unit features.
pub fn analyze(set: &SessionSet, params: &SegmentationParams) -> Result<Analysis, PipelineError> {
    let mut tasks = Vec::new();
    for task_id in set.task_ids() {
        let trials: Vec<_> = set.task_trials(&task_id).into_iter().cloned().collect();
        let task_set = SessionSet::new(trials, set.map_width_px, set.map_height_px)
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        let (registry, labeled) =
            label_touches(&task_set, params).map_err(|source| PipelineError::Segmentation {
                task: task_id.clone(),
                source,
            })?;
        let mut units = BTreeMap::new();
        let mut experiences = Vec::new();
        for trial in &labeled.trials {
            let trial_units = crate::segmentation::segment_units(trial, &registry, params);
            if trial_units.is_empty() {
                units.insert(trial.key(), trial_units);
                continue;
            }
            let mut features = Vec::with_capacity(trial_units.len());
            for (i, unit) in trial_units.iter().enumerate() {
                features.push(extract_features(unit, i + 1, trial, &registry)?);
            }
            experiences.push(Experience {
                key: trial.key(),
                hotspot_sequence: trial_units.iter().map(|u| u.hotspot_id).collect(),
                features,
            });
            units.insert(trial.key(), trial_units);
        }
        tasks.push(TaskAnalysis {
            task_id,
            registry,
            labeled,
            units,
            experiences,
        });
    }
    Ok(Analysis { tasks })
}

impl Analysis {
    pub fn task(&self, task_id: &str) -> Option<&TaskAnalysis> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    /// All unit feature vectors across every task.
    pub fn all_features(&self) -> Vec<&FeatureVector> {
        self.tasks
            .iter()
            .flat_map(|t| t.experiences.iter().flat_map(|e| e.features.iter()))
            .collect()
    }

    /// Skill correlation table over the full feature name set.
    pub fn skill_table(&self) -> CorrelationTable {
        let features: Vec<FeatureVector> = self.all_features().into_iter().cloned().collect();
        skill_correlation_table(&features, &FEATURE_NAMES)
    }

    pub fn experiences_by_task(&self) -> BTreeMap<String, Vec<Experience>> {
        self.tasks
            .iter()
            .map(|t| (t.task_id.clone(), t.experiences.clone()))
            .collect()
    }
}

/// File-level selection settings; resolved per task into a
/// [`PrototypeConfig`] using the skill table and difficulty ratings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SelectionSettings {
    /// Explicit feature names; when empty, the top `feature_count` from the
    /// skill table are used.
    pub features: Vec<String>,
    pub feature_count: usize,
    pub pool_size_n: usize,
    pub select_q: usize,
    /// true = rank only on difficult hotspots (DF), false = all (AL).
    pub difficult_only: bool,
    /// Mean-rating threshold defining a difficult hotspot.
    pub difficult_threshold: f64,
    pub use_global: bool,
    pub majority_threshold: f64,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        SelectionSettings {
            features: Vec::new(),
            feature_count: 5,
            pool_size_n: 5,
            select_q: 3,
            difficult_only: false,
            difficult_threshold: 1.0,
            use_global: false,
            majority_threshold: 0.30,
        }
    }
}

impl SelectionSettings {
    pub fn base_config(&self) -> PrototypeConfig {
        PrototypeConfig {
            feature_set: self.features.clone(),
            weights: None,
            pool_size_n: self.pool_size_n,
            select_q: self.select_q,
            hotspot_mode: HotspotMode::All,
            use_global: self.use_global,
            majority_threshold: self.majority_threshold,
        }
    }
}

/// Selection outcome for one task.
#[derive(Debug, Clone)]
pub struct TaskSelection {
    pub task_id: String,
    pub result: SelectionResult,
    pub feature_set: Vec<String>,
}

/// Resolve settings against the analysis and select prototypes per task.
pub fn select_all_tasks(
    analysis: &Analysis,
    set: &SessionSet,
    settings: &SelectionSettings,
) -> Result<Vec<TaskSelection>, PipelineError> {
    let table = analysis.skill_table();
    let correlations: BTreeMap<String, f64> = table
        .results
        .iter()
        .map(|r| (r.feature.clone(), r.coefficient))
        .collect();
    let feature_set = if settings.features.is_empty() {
        table.top_features(settings.feature_count)
    } else {
        settings.features.clone()
    };

    let mut out = Vec::new();
    for task in &analysis.tasks {
        let hotspot_mode = if settings.difficult_only {
            let task_trials: Vec<_> = set
                .task_trials(&task.task_id)
                .into_iter()
                .cloned()
                .collect();
            let task_set = SessionSet::new(task_trials, set.map_width_px, set.map_height_px)
                .map_err(|e| PipelineError::Data(e.to_string()))?;
            HotspotMode::Difficult(difficult_hotspots(&task_set, settings.difficult_threshold)?)
        } else {
            HotspotMode::All
        };
        let config = PrototypeConfig {
            feature_set: feature_set.clone(),
            hotspot_mode,
            ..settings.base_config()
        };
        let result = select_prototypes(&task.experiences, &config, &correlations)?;
        out.push(TaskSelection {
            task_id: task.task_id.clone(),
            result,
            feature_set: feature_set.clone(),
        });
    }
    Ok(out)
}

/// Build a task model per task: baseline from the selected prototypes,
/// then integrate every remaining experience in set order.
pub fn build_models(
    analysis: &Analysis,
    selections: &[TaskSelection],
) -> Result<Vec<(String, TaskModel)>, PipelineError> {
    let mut out = Vec::new();
    for selection in selections {
        let task = analysis.task(&selection.task_id).ok_or_else(|| {
            PipelineError::Data(format!("no analysis for task {}", selection.task_id))
        })?;
        let find = |key: &TrialKey| {
            task.experiences
                .iter()
                .find(|e| &e.key == key)
                .expect("selected experiences exist")
        };
        let prototypes: Vec<Vec<u32>> = selection
            .result
            .selected
            .iter()
            .map(|k| find(k).hotspot_sequence.clone())
            .collect();
        let mut model = TaskModel::build_baseline(&prototypes)?;
        for e in &task.experiences {
            if !selection.result.selected.contains(&e.key) {
                model.integrate(&e.hotspot_sequence);
            }
        }
        out.push((selection.task_id.clone(), model));
    }
    Ok(out)
}

/// Evaluate the method grid against ground-truth manuals.
pub fn evaluate(
    analysis: &Analysis,
    set: &SessionSet,
    manuals: &[ManualSpec],
    settings: &SelectionSettings,
    grid: &[MethodConfig],
    mode: MatchMode,
) -> Result<Vec<MethodRow>, PipelineError> {
    let table = analysis.skill_table();
    let correlations: BTreeMap<String, f64> = table
        .results
        .iter()
        .map(|r| (r.feature.clone(), r.coefficient))
        .collect();
    let ranked: Vec<String> = table.results.iter().map(|r| r.feature.clone()).collect();

    let mut difficult_by_task = BTreeMap::new();
    for task in &analysis.tasks {
        let task_trials: Vec<_> = set
            .task_trials(&task.task_id)
            .into_iter()
            .cloned()
            .collect();
        let task_set = SessionSet::new(task_trials, set.map_width_px, set.map_height_px)
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        difficult_by_task.insert(
            task.task_id.clone(),
            difficult_hotspots(&task_set, settings.difficult_threshold).unwrap_or_default(),
        );
    }

    let manuals_by_task: BTreeMap<String, ManualSpec> = manuals
        .iter()
        .map(|m| (m.task_id.clone(), m.clone()))
        .collect();
    let rows = evaluation::evaluate_methods(
        &analysis.experiences_by_task(),
        &manuals_by_task,
        &difficult_by_task,
        &correlations,
        &ranked,
        &settings.base_config(),
        grid,
        mode,
    )?;
    Ok(rows)
}
