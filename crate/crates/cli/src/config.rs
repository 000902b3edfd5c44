//! Pipeline configuration file: one JSON document covering segmentation,
//! selection, evaluation, and export settings.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use opskill::evaluation::MatchMode;
use opskill::pipeline::SelectionSettings;
use opskill::segmentation::SegmentationParams;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub segmentation: SegmentationParams,
    pub selection: SelectionSettings,
    pub match_mode: MatchMode,
    /// Cell size of the gaze heat grid export, pixels.
    pub heat_cell_px: f64,
    /// Ground-truth manual file; defaults to `truth.json` next to the data.
    pub manual_path: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<PipelineConfig> {
        let Some(path) = path else {
            return Ok(PipelineConfig::with_defaults());
        };
        let bytes =
            std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: PipelineConfig = serde_json::from_slice(&bytes)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if config.heat_cell_px <= 0.0 {
            config.heat_cell_px = 40.0;
        }
        Ok(config)
    }

    pub fn with_defaults() -> PipelineConfig {
        PipelineConfig {
            heat_cell_px: 40.0,
            ..PipelineConfig::default()
        }
    }
}
