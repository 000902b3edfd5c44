//! Canonical data model for recorded operation sessions.
//!
//! A session file is one JSON document per trial holding the time-sorted
//! gaze / hand / head-motion / touch tracks on the global machine map,
//! camera intrinsics, and per-step difficulty ratings. All tracks of a
//! trial share one clock; cross-device alignment is assumed done upstream.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// One gaze tracker sample on the global map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Invalid samples (tracking loss) carry no position contract.
    pub valid: bool,
}

/// One detected hand location. If `visible` is false, x/y are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

/// Egocentric global-motion vector components, in pixels per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalMotionSample {
    pub t: f64,
    pub vx: f64,
    pub vy: f64,
}

/// Head-mounted camera optics, needed to convert global motion to angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub image_width_px: f64,
    pub image_height_px: f64,
    pub sensor_width_mm: f64,
    pub sensor_height_mm: f64,
    pub focal_mm: f64,
}

impl CameraIntrinsics {
    fn check(&self) -> Result<(), RecordError> {
        let fields = [
            self.image_width_px,
            self.image_height_px,
            self.sensor_width_mm,
            self.sensor_height_mm,
            self.focal_mm,
        ];
        if fields.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(RecordError::Schema(
                "intrinsics must be finite and strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// A hand--machine contact interval with one representative location.
///
/// `hotspot_id` is absent until touch clustering assigns one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouchEvent {
    pub t_start: f64,
    pub t_end: f64,
    pub x: f64,
    pub y: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hotspot_id: Option<u32>,
}

impl TouchEvent {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Subjective difficulty of one operational step, 0 (easiest) to 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyRating {
    /// Step ordinal; steps are identified with hotspot ids.
    pub step_index: u32,
    pub score: u8,
}

/// Identity of a trial within a dataset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrialKey {
    pub user_id: String,
    pub task_id: String,
    pub trial_index: u32,
}

impl fmt::Display for TrialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.user_id, self.task_id, self.trial_index)
    }
}

/// One user's one recorded trial of one task.
///
/// `trial_index` is the position in that user's learning sequence for the
/// task (1-based); it doubles as the ordinal skill rank, since skill is
/// assumed non-decreasing over a user's trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub user_id: String,
    pub task_id: String,
    pub trial_index: u32,
    pub intrinsics: CameraIntrinsics,
    pub gaze: Vec<GazeSample>,
    pub hand: Vec<HandSample>,
    pub head_motion: Vec<GlobalMotionSample>,
    pub touches: Vec<TouchEvent>,
    pub ratings: Vec<DifficultyRating>,
}

impl TrialRecord {
    pub fn key(&self) -> TrialKey {
        TrialKey {
            user_id: self.user_id.clone(),
            task_id: self.task_id.clone(),
            trial_index: self.trial_index,
        }
    }

    /// Earliest timestamp over all tracks; the trial's clock origin.
    pub fn start_time(&self) -> f64 {
        let mut t = f64::INFINITY;
        if let Some(s) = self.gaze.first() {
            t = t.min(s.t);
        }
        if let Some(s) = self.hand.first() {
            t = t.min(s.t);
        }
        if let Some(s) = self.head_motion.first() {
            t = t.min(s.t);
        }
        if let Some(s) = self.touches.first() {
            t = t.min(s.t_start);
        }
        if t.is_finite() {
            t
        } else {
            0.0
        }
    }

    /// Rating score for a step, if the user rated it.
    pub fn rating_for(&self, step_index: u32) -> Option<u8> {
        self.ratings
            .iter()
            .find(|r| r.step_index == step_index)
            .map(|r| r.score)
    }

    fn check(&self) -> Result<(), RecordError> {
        self.intrinsics.check()?;
        check_sorted(self.gaze.iter().map(|s| s.t), "gaze")?;
        check_sorted(self.hand.iter().map(|s| s.t), "hand")?;
        check_sorted(self.head_motion.iter().map(|s| s.t), "head_motion")?;
        check_sorted(self.touches.iter().map(|s| s.t_start), "touches")?;
        if let Some(s) = self.gaze.iter().find(|s| s.t < 0.0) {
            return Err(RecordError::Order {
                track: "gaze".into(),
                t: s.t,
            });
        }
        if self.trial_index < 1 {
            return Err(RecordError::Schema("trial_index must be >= 1".into()));
        }
        for touch in &self.touches {
            if touch.t_end <= touch.t_start {
                return Err(RecordError::Schema(format!(
                    "touch interval [{}, {}) is empty or reversed",
                    touch.t_start, touch.t_end
                )));
            }
        }
        for r in &self.ratings {
            if r.score > 5 {
                return Err(RecordError::Bounds {
                    what: format!("rating for step {}", r.step_index),
                    value: r.score as f64,
                });
            }
        }
        Ok(())
    }
}

/// A loaded dataset: every trial plus the global-map extent in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSet {
    pub trials: Vec<TrialRecord>,
    pub map_width_px: f64,
    pub map_height_px: f64,
}

impl SessionSet {
    /// Assemble a set from parsed trials, rejecting duplicate identities and
    /// ordering trials by (user_id, task_id, trial_index).
    pub fn new(
        mut trials: Vec<TrialRecord>,
        map_width_px: f64,
        map_height_px: f64,
    ) -> Result<Self, RecordError> {
        if trials.is_empty() {
            return Err(RecordError::Schema("session set must be nonempty".into()));
        }
        trials.sort_by_key(|t| t.key());
        for pair in trials.windows(2) {
            if pair[0].key() == pair[1].key() {
                return Err(RecordError::DuplicateTrial(pair[0].key()));
            }
        }
        Ok(SessionSet {
            trials,
            map_width_px,
            map_height_px,
        })
    }

    pub fn trial(&self, key: &TrialKey) -> Option<&TrialRecord> {
        self.trials.iter().find(|t| &t.key() == key)
    }

    /// Distinct task ids, sorted.
    pub fn task_ids(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.trials.iter().map(|t| t.task_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Trials belonging to one task, in set order.
    pub fn task_trials(&self, task_id: &str) -> Vec<&TrialRecord> {
        self.trials
            .iter()
            .filter(|t| t.task_id == task_id)
            .collect()
    }
}

/// Errors raised while parsing or assembling session records.
#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("non-monotone timestamps in {track} track near t={t}")]
    Order { track: String, t: f64 },
    #[error("{what} out of bounds: {value}")]
    Bounds { what: String, value: f64 },
    #[error("duplicate trial {0}")]
    DuplicateTrial(TrialKey),
    #[error("in {}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<RecordError>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn check_sorted(times: impl Iterator<Item = f64>, track: &str) -> Result<(), RecordError> {
    let mut prev = f64::NEG_INFINITY;
    for t in times {
        if !t.is_finite() {
            return Err(RecordError::Schema(format!("{track} timestamp not finite")));
        }
        if t < prev {
            return Err(RecordError::Order {
                track: track.into(),
                t,
            });
        }
        prev = t;
    }
    Ok(())
}

// The on-disk schema stores tracks as compact tuple rows.
#[derive(Serialize, Deserialize)]
struct TrialDocument {
    user_id: String,
    task_id: String,
    trial_index: u32,
    intrinsics: CameraIntrinsics,
    gaze: Vec<(f64, f64, f64, bool)>,
    hand: Vec<(f64, f64, f64, bool)>,
    head_motion: Vec<(f64, f64, f64)>,
    touches: Vec<(f64, f64, f64, f64)>,
    ratings: Vec<(u32, u8)>,
}

impl From<&TrialRecord> for TrialDocument {
    fn from(r: &TrialRecord) -> Self {
        TrialDocument {
            user_id: r.user_id.clone(),
            task_id: r.task_id.clone(),
            trial_index: r.trial_index,
            intrinsics: r.intrinsics,
            gaze: r.gaze.iter().map(|s| (s.t, s.x, s.y, s.valid)).collect(),
            hand: r.hand.iter().map(|s| (s.t, s.x, s.y, s.visible)).collect(),
            head_motion: r.head_motion.iter().map(|s| (s.t, s.vx, s.vy)).collect(),
            touches: r
                .touches
                .iter()
                .map(|s| (s.t_start, s.t_end, s.x, s.y))
                .collect(),
            ratings: r.ratings.iter().map(|s| (s.step_index, s.score)).collect(),
        }
    }
}

impl From<TrialDocument> for TrialRecord {
    fn from(d: TrialDocument) -> Self {
        TrialRecord {
            user_id: d.user_id,
            task_id: d.task_id,
            trial_index: d.trial_index,
            intrinsics: d.intrinsics,
            gaze: d
                .gaze
                .into_iter()
                .map(|(t, x, y, valid)| GazeSample { t, x, y, valid })
                .collect(),
            hand: d
                .hand
                .into_iter()
                .map(|(t, x, y, visible)| HandSample { t, x, y, visible })
                .collect(),
            head_motion: d
                .head_motion
                .into_iter()
                .map(|(t, vx, vy)| GlobalMotionSample { t, vx, vy })
                .collect(),
            touches: d
                .touches
                .into_iter()
                .map(|(t_start, t_end, x, y)| TouchEvent {
                    t_start,
                    t_end,
                    x,
                    y,
                    hotspot_id: None,
                })
                .collect(),
            ratings: d
                .ratings
                .into_iter()
                .map(|(step_index, score)| DifficultyRating { step_index, score })
                .collect(),
        }
    }
}

/// Parse one session document into a validated trial.
pub fn parse_trial(document: &[u8]) -> Result<TrialRecord, RecordError> {
    let doc: TrialDocument =
        serde_json::from_slice(document).map_err(|e| RecordError::Schema(e.to_string()))?;
    let record: TrialRecord = doc.into();
    record.check()?;
    Ok(record)
}

/// Serialize a trial back to its on-disk document form.
pub fn serialize_trial(record: &TrialRecord) -> Vec<u8> {
    let doc = TrialDocument::from(record);
    let mut out = serde_json::to_vec_pretty(&doc).expect("trial document serializes");
    out.push(b'\n');
    out
}

/// Load every path as one trial and assemble a session set.
///
/// Map extent is the smallest integer-pixel box covering all coordinates.
/// Output ordering depends only on trial contents, not on path order.
pub fn load_dataset(paths: &[PathBuf]) -> Result<SessionSet, RecordError> {
    load_dataset_with_bounds(paths, None)
}

/// [`load_dataset`] with an explicit map extent.
pub fn load_dataset_with_bounds(
    paths: &[PathBuf],
    bounds: Option<(f64, f64)>,
) -> Result<SessionSet, RecordError> {
    let mut trials = Vec::with_capacity(paths.len());
    for path in paths {
        let bytes = std::fs::read(path)?;
        let trial = parse_trial(&bytes).map_err(|e| RecordError::File {
            path: path.clone(),
            source: Box::new(e),
        })?;
        trials.push(trial);
    }
    let (w, h) = bounds.unwrap_or_else(|| derive_bounds(&trials));
    SessionSet::new(trials, w, h)
}

/// Expand a dataset argument: a directory (all `*.json` inside, sorted), a
/// newline-separated manifest, or a single session file.
pub fn resolve_dataset_paths(path: &Path) -> Result<Vec<PathBuf>, RecordError> {
    if path.is_dir() {
        let mut out: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|x| x == "json").unwrap_or(false))
            // truth.json is the ground-truth sidecar, not a session file.
            .filter(|p| p.file_name().map(|n| n != "truth.json").unwrap_or(true))
            .collect();
        out.sort();
        return Ok(out);
    }
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        // A single session document.
        return Ok(vec![path.to_path_buf()]);
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = PathBuf::from(l);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        })
        .collect())
}

fn derive_bounds(trials: &[TrialRecord]) -> (f64, f64) {
    let mut w: f64 = 0.0;
    let mut h: f64 = 0.0;
    for t in trials {
        for s in t.gaze.iter().filter(|s| s.valid) {
            w = w.max(s.x);
            h = h.max(s.y);
        }
        for s in t.hand.iter().filter(|s| s.visible) {
            w = w.max(s.x);
            h = h.max(s.y);
        }
        for s in &t.touches {
            w = w.max(s.x);
            h = h.max(s.y);
        }
    }
    (w.ceil() + 1.0, h.ceil() + 1.0)
}

/// One validation finding. Diagnostics never abort a pipeline; they carry
/// the trial identity, a stable rule id, and a human-readable message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub trial: TrialKey,
    pub rule: &'static str,
    pub message: String,
}

/// Check every set-level invariant; an empty list means the set is clean.
pub fn validate(set: &SessionSet) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for trial in &set.trials {
        let key = trial.key();
        let bounds = |x: f64, y: f64, what: &str| {
            if x < 0.0 || x > set.map_width_px || y < 0.0 || y > set.map_height_px {
                Some(Diagnostic {
                    trial: key.clone(),
                    rule: "bounds",
                    message: format!(
                        "{what} at ({x}, {y}) outside {}x{} map",
                        set.map_width_px, set.map_height_px
                    ),
                })
            } else {
                None
            }
        };
        out.extend(
            trial
                .gaze
                .iter()
                .filter(|s| s.valid)
                .filter_map(|s| bounds(s.x, s.y, "gaze sample")),
        );
        out.extend(
            trial
                .hand
                .iter()
                .filter(|s| s.visible)
                .filter_map(|s| bounds(s.x, s.y, "hand sample")),
        );
        out.extend(
            trial
                .touches
                .iter()
                .filter_map(|s| bounds(s.x, s.y, "touch")),
        );
        if let Err(e) = trial.check() {
            out.push(Diagnostic {
                trial: key.clone(),
                rule: "schema",
                message: e.to_string(),
            });
        }
        for pair in trial.touches.windows(2) {
            if pair[1].t_start < pair[0].t_end {
                out.push(Diagnostic {
                    trial: key.clone(),
                    rule: "touch_overlap",
                    message: format!(
                        "touches [{}, {}) and [{}, {}) overlap",
                        pair[0].t_start, pair[0].t_end, pair[1].t_start, pair[1].t_end
                    ),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_doc() -> serde_json::Value {
        serde_json::json!({
            "user_id": "u01",
            "task_id": "t1",
            "trial_index": 1,
            "intrinsics": {
                "image_width_px": 1280.0,
                "image_height_px": 720.0,
                "sensor_width_mm": 5.12,
                "sensor_height_mm": 2.88,
                "focal_mm": 1.93
            },
            "gaze": [[0.0, 10.0, 20.0, true]],
            "hand": [[0.0, 11.0, 21.0, true]],
            "head_motion": [[0.0, 0.5, -0.5]],
            "touches": [[1.0, 2.0, 12.0, 22.0]],
            "ratings": [[1, 3]]
        })
    }

    #[test]
    fn parses_minimal_document() {
        let bytes = serde_json::to_vec(&minimal_doc()).unwrap();
        let trial = parse_trial(&bytes).unwrap();
        assert_eq!(trial.gaze.len(), 1);
        assert_eq!(trial.hand.len(), 1);
        assert_eq!(trial.head_motion.len(), 1);
        assert_eq!(trial.touches.len(), 1);
        assert_eq!(trial.ratings.len(), 1);
        assert_eq!(trial.trial_index, 1);
    }

    #[test]
    fn rejects_unsorted_gaze() {
        let mut doc = minimal_doc();
        doc["gaze"] = serde_json::json!([[1.0, 0.0, 0.0, true], [0.5, 0.0, 0.0, true]]);
        let err = parse_trial(&serde_json::to_vec(&doc).unwrap()).unwrap_err();
        assert!(matches!(err, RecordError::Order { .. }), "{err}");
    }

    #[test]
    fn rejects_rating_out_of_range() {
        let mut doc = minimal_doc();
        doc["ratings"] = serde_json::json!([[1, 7]]);
        let err = parse_trial(&serde_json::to_vec(&doc).unwrap()).unwrap_err();
        assert!(matches!(err, RecordError::Bounds { .. }), "{err}");
    }

    #[test]
    fn rejects_missing_field() {
        let mut doc = minimal_doc();
        doc.as_object_mut().unwrap().remove("intrinsics");
        let err = parse_trial(&serde_json::to_vec(&doc).unwrap()).unwrap_err();
        assert!(matches!(err, RecordError::Schema(_)), "{err}");
    }

    #[test]
    fn round_trips_through_serialization() {
        let bytes = serde_json::to_vec(&minimal_doc()).unwrap();
        let trial = parse_trial(&bytes).unwrap();
        let again = parse_trial(&serialize_trial(&trial)).unwrap();
        assert_eq!(trial, again);
    }

    fn trial(user: &str, task: &str, index: u32) -> TrialRecord {
        let mut doc = minimal_doc();
        doc["user_id"] = user.into();
        doc["task_id"] = task.into();
        doc["trial_index"] = index.into();
        parse_trial(&serde_json::to_vec(&doc).unwrap()).unwrap()
    }

    #[test]
    fn set_rejects_duplicate_identity() {
        let err = SessionSet::new(
            vec![trial("u01", "t1", 1), trial("u01", "t1", 1)],
            100.0,
            100.0,
        )
        .unwrap_err();
        assert!(matches!(err, RecordError::DuplicateTrial(_)), "{err}");
    }

    #[test]
    fn set_order_is_content_determined() {
        let a = SessionSet::new(
            vec![trial("u02", "t1", 1), trial("u01", "t1", 2)],
            100.0,
            100.0,
        )
        .unwrap();
        let b = SessionSet::new(
            vec![trial("u01", "t1", 2), trial("u02", "t1", 1)],
            100.0,
            100.0,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validate_flags_out_of_bounds_gaze() {
        let mut t = trial("u01", "t1", 1);
        t.gaze[0].x = 500.0;
        let set = SessionSet::new(vec![t], 100.0, 100.0).unwrap();
        let diags = validate(&set);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].rule, "bounds");
    }

    #[test]
    fn validate_clean_set_is_empty() {
        let set = SessionSet::new(vec![trial("u01", "t1", 1)], 100.0, 100.0).unwrap();
        assert!(validate(&set).is_empty());
    }

    #[test]
    fn validate_flags_bad_intrinsics_as_schema() {
        let mut t = trial("u01", "t1", 1);
        t.intrinsics.focal_mm = 0.0;
        let set = SessionSet {
            trials: vec![t],
            map_width_px: 100.0,
            map_height_px: 100.0,
        };
        let diags = validate(&set);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].rule, "schema");
    }

    #[test]
    fn validate_flags_overlapping_touches() {
        let mut t = trial("u01", "t1", 1);
        t.touches = vec![
            TouchEvent {
                t_start: 1.0,
                t_end: 3.0,
                x: 5.0,
                y: 5.0,
                hotspot_id: None,
            },
            TouchEvent {
                t_start: 2.0,
                t_end: 4.0,
                x: 6.0,
                y: 6.0,
                hotspot_id: None,
            },
        ];
        let set = SessionSet::new(vec![t], 100.0, 100.0).unwrap();
        assert!(validate(&set).iter().any(|d| d.rule == "touch_overlap"));
    }
}
