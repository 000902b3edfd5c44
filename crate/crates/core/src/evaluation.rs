//! Scoring selected prototypes against a ground-truth operating manual.
//!
//! A manual lists every legal ordering of a task's steps (order-changeable
//! groups expanded into explicit variants). Selections are scored by
//! recall / precision / F-score; matching is multiset-based by default, so
//! step order never penalizes, with an LCS alternative for comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::prototype::{
    select_prototypes, Experience, HotspotMode, PrototypeConfig, PrototypeError,
};
use crate::records::TrialKey;

/// Ground truth for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualSpec {
    pub task_id: String,
    /// Every legal step ordering.
    pub variants: Vec<Vec<u32>>,
    /// Degrees of freedom: the number of variants.
    pub dof: usize,
}

impl ManualSpec {
    pub fn new(task_id: &str, variants: Vec<Vec<u32>>) -> Self {
        let dof = variants.len();
        ManualSpec {
            task_id: task_id.into(),
            variants,
            dof,
        }
    }
}

/// Recall, precision, and F-score, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub recall: f64,
    pub precision: f64,
    pub fscore: f64,
}

impl ScoreTriple {
    fn from_counts(intersection: f64, truth_len: f64, selected_len: f64) -> ScoreTriple {
        let recall = intersection / truth_len;
        let precision = intersection / selected_len;
        let fscore = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ScoreTriple {
            recall,
            precision,
            fscore,
        }
    }
}

/// How a selected sequence is matched against a manual variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Multiset intersection; order-free.
    #[default]
    Multiset,
    /// Longest common subsequence; order-sensitive.
    Lcs,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("empty selection cannot be scored")]
    EmptySelection,
    #[error("manual for task {0} has no variants")]
    EmptyManual(String),
    #[error("no manual found for task {0}")]
    MissingManual(String),
    #[error("selection failed: {0}")]
    Selection(#[from] PrototypeError),
}

/// Score a selected step sequence against the manual, taking the variant
/// that maximizes the F-score (first such variant on ties).
pub fn fscore(selected: &[u32], manual: &ManualSpec) -> Result<ScoreTriple, EvalError> {
    fscore_with(selected, manual, MatchMode::Multiset)
}

/// [`fscore`] with an explicit matching mode.
pub fn fscore_with(
    selected: &[u32],
    manual: &ManualSpec,
    mode: MatchMode,
) -> Result<ScoreTriple, EvalError> {
    if selected.is_empty() {
        return Err(EvalError::EmptySelection);
    }
    if manual.variants.is_empty() || manual.variants.iter().any(|v| v.is_empty()) {
        return Err(EvalError::EmptyManual(manual.task_id.clone()));
    }
    let mut best: Option<ScoreTriple> = None;
    for variant in &manual.variants {
        let overlap = match mode {
            MatchMode::Multiset => multiset_intersection(selected, variant),
            MatchMode::Lcs => lcs_length(selected, variant),
        };
        let triple =
            ScoreTriple::from_counts(overlap as f64, variant.len() as f64, selected.len() as f64);
        if best.map(|b| triple.fscore > b.fscore).unwrap_or(true) {
            best = Some(triple);
        }
    }
    Ok(best.expect("at least one variant"))
}

fn multiset_intersection(a: &[u32], b: &[u32]) -> usize {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &x in a {
        *counts.entry(x).or_insert(0) += 1;
    }
    let mut overlap = 0;
    for &x in b {
        if let Some(c) = counts.get_mut(&x) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    overlap
}

fn lcs_length(a: &[u32], b: &[u32]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut current = vec![0usize; b.len() + 1];
    for &x in a {
        for (j, &y) in b.iter().enumerate() {
            current[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(current[j])
            };
        }
        std::mem::swap(&mut prev, &mut current);
    }
    prev[b.len()]
}

/// One cell of the method grid: which hotspots vote, how many features
/// rank, and whether the global voters join.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodConfig {
    /// true = only difficult hotspots (DF), false = all hotspots (AL).
    pub difficult_only: bool,
    /// Number of top skill-correlated features.
    pub feature_count: usize,
    pub use_global: bool,
}

impl MethodConfig {
    pub fn label(&self) -> String {
        format!(
            "{}{}({})",
            if self.difficult_only { "DF" } else { "AL" },
            if self.use_global { "+GB" } else { "" },
            self.feature_count
        )
    }
}

/// The standard 12-method grid: AL/DF x 3/5/7 features x with/without
/// global features.
pub fn full_method_grid() -> Vec<MethodConfig> {
    let mut grid = Vec::with_capacity(12);
    for feature_count in [3, 5, 7] {
        for difficult_only in [false, true] {
            for use_global in [false, true] {
                grid.push(MethodConfig {
                    difficult_only,
                    feature_count,
                    use_global,
                });
            }
        }
    }
    grid
}

/// One report row: a method's mean scores over every selected experience of
/// every task, plus the selections themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub label: String,
    pub recall: f64,
    pub precision: f64,
    pub fscore: f64,
    pub selections: BTreeMap<String, Vec<TrialKey>>,
}

/// Run prototype selection for every method in the grid and score each
/// selected experience against its task manual.
///
/// `ranked_features` is the feature list ordered by skill-correlation
/// strength; each method uses its top `feature_count` names (capped at the
/// available count). `difficult_by_task` supplies the DF voter sets.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_methods(
    experiences_by_task: &BTreeMap<String, Vec<Experience>>,
    manuals: &BTreeMap<String, ManualSpec>,
    difficult_by_task: &BTreeMap<String, Vec<u32>>,
    correlations: &BTreeMap<String, f64>,
    ranked_features: &[String],
    base: &PrototypeConfig,
    grid: &[MethodConfig],
    mode: MatchMode,
) -> Result<Vec<MethodRow>, EvalError> {
    let mut rows = Vec::with_capacity(grid.len());
    for method in grid {
        let k = method.feature_count.min(ranked_features.len()).max(1);
        let mut triples = Vec::new();
        let mut selections = BTreeMap::new();
        for (task_id, experiences) in experiences_by_task {
            let manual = manuals
                .get(task_id)
                .ok_or_else(|| EvalError::MissingManual(task_id.clone()))?;
            let config = PrototypeConfig {
                feature_set: ranked_features[..k].to_vec(),
                weights: base.weights.clone(),
                pool_size_n: base.pool_size_n,
                select_q: base.select_q,
                hotspot_mode: if method.difficult_only {
                    HotspotMode::Difficult(
                        difficult_by_task.get(task_id).cloned().unwrap_or_default(),
                    )
                } else {
                    HotspotMode::All
                },
                use_global: method.use_global,
                majority_threshold: base.majority_threshold,
            };
            let result = select_prototypes(experiences, &config, correlations)?;
            for key in &result.selected {
                let experience = experiences
                    .iter()
                    .find(|e| &e.key == key)
                    .expect("selected keys come from the experiences");
                triples.push(fscore_with(&experience.hotspot_sequence, manual, mode)?);
            }
            selections.insert(task_id.clone(), result.selected);
        }
        let n = triples.len().max(1) as f64;
        rows.push(MethodRow {
            label: method.label(),
            recall: triples.iter().map(|t| t.recall).sum::<f64>() / n,
            precision: triples.iter().map(|t| t.precision).sum::<f64>() / n,
            fscore: triples.iter().map(|t| t.fscore).sum::<f64>() / n,
            selections,
        });
    }
    Ok(rows)
}
