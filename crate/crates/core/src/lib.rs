//! Skill analytics and task modeling for recorded machine-operation sessions.
//!
//! The pipeline turns raw per-trial tracks (gaze, hand, head motion,
//! touches) into: hotspots and operational units, per-unit behavioral
//! features, skill and difficulty correlation tables, automatically
//! selected high-skill prototype experiences, and a transition-probability
//! task model integrating all experiences.
//!
//! ```
//! use opskill::pipeline::{analyze, select_all_tasks, SelectionSettings};
//! use opskill::segmentation::SegmentationParams;
//! use opskill::synth::{generate_dataset, SynthSpec};
//!
//! let spec = SynthSpec { users: 3, trials_per_user: 3, experts_per_task: 1, ..SynthSpec::default() };
//! let set = generate_dataset(&spec);
//! let analysis = analyze(&set, &SegmentationParams::default()).unwrap();
//! let selections = select_all_tasks(&analysis, &set, &SelectionSettings::default()).unwrap();
//! assert_eq!(selections.len(), 2); // one selection per task
//! ```

pub mod evaluation;
pub mod features;
pub mod pipeline;
pub mod prototype;
pub mod records;
pub mod segmentation;
pub mod stats;
pub mod synth;
pub mod taskmodel;

pub use features::{extract_features, FeatureVector, FEATURE_NAMES};
pub use records::{load_dataset, parse_trial, validate, SessionSet, TrialKey, TrialRecord};
pub use segmentation::{
    cluster_touches, segment_units, HotspotRegistry, OperationalUnit, SegmentationParams,
};
