//! Per-unit behavioral features and trial-level gaze--head comparison.
//!
//! For every operational unit and period we measure, on gaze--hotspot and
//! hand--hotspot distance series: duration T, mean distance D, distance
//! changing speed V, its variance, and the sign-change frequency f. Head
//! motion is summarized per axis as angular velocity derived from the
//! egocentric global motion vector and the camera optics.

use serde::{Deserialize, Serialize};

use crate::records::{CameraIntrinsics, GazeSample, GlobalMotionSample, HandSample, TrialRecord};
use crate::segmentation::{Hotspot, HotspotRegistry, Interval, OperationalUnit};
use crate::stats;

/// Distances from a track to a hotspot centroid over time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DistanceSeries {
    pub t: Vec<f64>,
    pub d: Vec<f64>,
}

impl DistanceSeries {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }
}

/// Scalar statistics of one distance series over one period.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PeriodStats {
    pub duration: f64,
    pub mean_distance: f64,
    /// Mean absolute rate of change of the distance, px/s.
    pub velocity: f64,
    /// Population variance of the distance, px^2.
    pub variance: f64,
    /// Sign changes of the distance differences per second.
    pub frequency: f64,
}

/// Per-axis head angular speed summary over one period, deg/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeadStats {
    pub mean_speed_x: f64,
    pub mean_speed_y: f64,
    pub variance_x: f64,
    pub variance_y: f64,
}

/// All per-period measurements of one operational unit period.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PeriodFeatures {
    pub gaze: PeriodStats,
    pub hand: PeriodStats,
    pub head: HeadStats,
}

/// The full feature vector of one operational unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub user_id: String,
    pub task_id: String,
    pub trial_index: u32,
    pub hotspot_id: u32,
    /// 1-based position of the unit within its trial.
    pub step: usize,
    pub g: PeriodFeatures,
    pub a: PeriodFeatures,
    pub o: PeriodFeatures,
    pub total_duration: f64,
}

/// Stable feature names used by CSV exports and correlation tables.
///
/// The `_G` / `_A` / `_O` suffix selects the period.
pub const FEATURE_NAMES: [&str; 40] = [
    "dur_G",
    "dur_A",
    "dur_O",
    "dur_total",
    "gazeD_G",
    "gazeV_G",
    "gazeVar_G",
    "gazeF_G",
    "handD_G",
    "handV_G",
    "handVar_G",
    "handF_G",
    "headVx_G",
    "headVy_G",
    "headVarX_G",
    "headVarY_G",
    "gazeD_A",
    "gazeV_A",
    "gazeVar_A",
    "gazeF_A",
    "handD_A",
    "handV_A",
    "handVar_A",
    "handF_A",
    "headVx_A",
    "headVy_A",
    "headVarX_A",
    "headVarY_A",
    "gazeD_O",
    "gazeV_O",
    "gazeVar_O",
    "gazeF_O",
    "handD_O",
    "handV_O",
    "handVar_O",
    "handF_O",
    "headVx_O",
    "headVy_O",
    "headVarX_O",
    "headVarY_O",
];

impl FeatureVector {
    /// Look up a feature by its stable name.
    pub fn value(&self, name: &str) -> Option<f64> {
        if name == "dur_total" {
            return Some(self.total_duration);
        }
        let (stem, period) = name.rsplit_once('_')?;
        let p = match period {
            "G" => &self.g,
            "A" => &self.a,
            "O" => &self.o,
            _ => return None,
        };
        let v = match stem {
            "dur" => p.gaze.duration,
            "gazeD" => p.gaze.mean_distance,
            "gazeV" => p.gaze.velocity,
            "gazeVar" => p.gaze.variance,
            "gazeF" => p.gaze.frequency,
            "handD" => p.hand.mean_distance,
            "handV" => p.hand.velocity,
            "handVar" => p.hand.variance,
            "handF" => p.hand.frequency,
            "headVx" => p.head.mean_speed_x,
            "headVy" => p.head.mean_speed_y,
            "headVarX" => p.head.variance_x,
            "headVarY" => p.head.variance_y,
            _ => return None,
        };
        Some(v)
    }

    /// An all-zero vector carrying only identity, handy for tests.
    pub fn zeroed(
        user_id: &str,
        task_id: &str,
        trial_index: u32,
        hotspot_id: u32,
        step: usize,
    ) -> Self {
        FeatureVector {
            user_id: user_id.into(),
            task_id: task_id.into(),
            trial_index,
            hotspot_id,
            step,
            g: PeriodFeatures::default(),
            a: PeriodFeatures::default(),
            o: PeriodFeatures::default(),
            total_duration: 0.0,
        }
    }
}

/// Per-axis Pearson correlation between gaze and head movement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisCorrelation {
    pub r_x: f64,
    pub r_y: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("period duration {0} is not positive for a nonempty series")]
    NonPositiveDuration(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// Distances from valid gaze samples inside the interval to the hotspot.
pub fn gaze_distance_series(
    samples: &[GazeSample],
    hotspot: &Hotspot,
    interval: Interval,
) -> DistanceSeries {
    collect_distances(
        samples.iter().filter(|s| s.valid).map(|s| (s.t, s.x, s.y)),
        hotspot,
        interval,
    )
}

/// Distances from visible hand samples inside the interval to the hotspot.
pub fn hand_distance_series(
    samples: &[HandSample],
    hotspot: &Hotspot,
    interval: Interval,
) -> DistanceSeries {
    collect_distances(
        samples
            .iter()
            .filter(|s| s.visible)
            .map(|s| (s.t, s.x, s.y)),
        hotspot,
        interval,
    )
}

fn collect_distances(
    points: impl Iterator<Item = (f64, f64, f64)>,
    hotspot: &Hotspot,
    interval: Interval,
) -> DistanceSeries {
    let mut out = DistanceSeries::default();
    for (t, x, y) in points {
        if interval.contains(t) {
            out.t.push(t);
            out.d
                .push(((x - hotspot.centroid_x).powi(2) + (y - hotspot.centroid_y).powi(2)).sqrt());
        }
    }
    out
}

/// Compute V, δ², f, and the mean distance over a period of duration `T`.
///
/// V is the mean of |Δd|/Δt over consecutive samples; the variance is the
/// population variance of d; f counts strict sign alternations of Δd
/// (zero differences skipped) divided by T. Empty and single-sample series
/// yield zero velocity, variance, and frequency.
pub fn series_stats(series: &DistanceSeries, duration: f64) -> Result<PeriodStats, FeatureError> {
    let n = series.len();
    if n == 0 {
        return Ok(PeriodStats {
            duration,
            ..PeriodStats::default()
        });
    }
    if duration <= 0.0 {
        return Err(FeatureError::NonPositiveDuration(duration));
    }
    let mean = series.d.iter().sum::<f64>() / n as f64;
    let variance = series.d.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;

    let mut rate_sum = 0.0;
    let mut rate_count = 0usize;
    let mut sign_changes = 0usize;
    let mut prev_sign = 0i8;
    for i in 1..n {
        let dd = series.d[i] - series.d[i - 1];
        let dt = series.t[i] - series.t[i - 1];
        if dt > 0.0 {
            rate_sum += dd.abs() / dt;
            rate_count += 1;
        }
        let sign = if dd > 0.0 {
            1i8
        } else if dd < 0.0 {
            -1i8
        } else {
            0i8
        };
        if sign != 0 {
            if prev_sign != 0 && sign != prev_sign {
                sign_changes += 1;
            }
            prev_sign = sign;
        }
    }
    Ok(PeriodStats {
        duration,
        mean_distance: mean,
        velocity: if rate_count > 0 {
            rate_sum / rate_count as f64
        } else {
            0.0
        },
        variance,
        frequency: sign_changes as f64 / duration,
    })
}

/// Per-frame head rotation angle, in degrees, for one axis.
///
/// angle = arctan(v / image_size * sensor_size / focal).
pub fn head_angle_deg(v_px: f64, image_size_px: f64, sensor_size_mm: f64, focal_mm: f64) -> f64 {
    (v_px / image_size_px * sensor_size_mm / focal_mm)
        .atan()
        .to_degrees()
}

/// Per-axis head angular velocity in deg/s for one motion sample spanning `dt` seconds.
pub fn head_angular_velocity(m: &GlobalMotionSample, k: &CameraIntrinsics, dt: f64) -> (f64, f64) {
    let ax = head_angle_deg(m.vx, k.image_width_px, k.sensor_width_mm, k.focal_mm);
    let ay = head_angle_deg(m.vy, k.image_height_px, k.sensor_height_mm, k.focal_mm);
    (ax / dt, ay / dt)
}

/// Signed per-axis head angular velocity points, one per consecutive sample
/// pair, timestamped at the pair midpoint.
fn head_velocity_points(trial: &TrialRecord) -> Vec<(f64, f64, f64)> {
    let samples = &trial.head_motion;
    let mut out = Vec::new();
    for i in 0..samples.len().saturating_sub(1) {
        let dt = samples[i + 1].t - samples[i].t;
        if dt <= 0.0 {
            continue;
        }
        let (vx, vy) = head_angular_velocity(&samples[i], &trial.intrinsics, dt);
        out.push((samples[i].t + dt / 2.0, vx, vy));
    }
    out
}

/// Signed per-axis gaze displacement rate points at sample-pair midpoints.
fn gaze_rate_points(trial: &TrialRecord) -> Vec<(f64, f64, f64)> {
    let valid: Vec<&GazeSample> = trial.gaze.iter().filter(|s| s.valid).collect();
    let mut out = Vec::new();
    for pair in valid.windows(2) {
        let dt = pair[1].t - pair[0].t;
        if dt <= 0.0 {
            continue;
        }
        out.push((
            pair[0].t + dt / 2.0,
            (pair[1].x - pair[0].x) / dt,
            (pair[1].y - pair[0].y) / dt,
        ));
    }
    out
}

fn head_stats(trial: &TrialRecord, interval: Interval) -> HeadStats {
    let magnitudes: Vec<(f64, f64)> = head_velocity_points(trial)
        .into_iter()
        .filter(|(t, _, _)| interval.contains(*t))
        .map(|(_, vx, vy)| (vx.abs(), vy.abs()))
        .collect();
    if magnitudes.is_empty() {
        return HeadStats::default();
    }
    let n = magnitudes.len() as f64;
    let mx = magnitudes.iter().map(|m| m.0).sum::<f64>() / n;
    let my = magnitudes.iter().map(|m| m.1).sum::<f64>() / n;
    HeadStats {
        mean_speed_x: mx,
        mean_speed_y: my,
        variance_x: magnitudes.iter().map(|m| (m.0 - mx).powi(2)).sum::<f64>() / n,
        variance_y: magnitudes.iter().map(|m| (m.1 - my).powi(2)).sum::<f64>() / n,
    }
}

/// Assemble the full feature vector of one operational unit.
pub fn extract_features(
    ou: &OperationalUnit,
    step: usize,
    trial: &TrialRecord,
    registry: &HotspotRegistry,
) -> Result<FeatureVector, FeatureError> {
    let hotspot = registry.get(ou.hotspot_id).ok_or_else(|| {
        FeatureError::InsufficientData(format!("unknown hotspot {}", ou.hotspot_id))
    })?;
    let period = |interval: Interval| -> Result<PeriodFeatures, FeatureError> {
        Ok(PeriodFeatures {
            gaze: series_stats(
                &gaze_distance_series(&trial.gaze, hotspot, interval),
                interval.duration(),
            )?,
            hand: series_stats(
                &hand_distance_series(&trial.hand, hotspot, interval),
                interval.duration(),
            )?,
            head: head_stats(trial, interval),
        })
    };
    Ok(FeatureVector {
        user_id: trial.user_id.clone(),
        task_id: trial.task_id.clone(),
        trial_index: trial.trial_index,
        hotspot_id: ou.hotspot_id,
        step,
        g: period(ou.g)?,
        a: period(ou.a)?,
        o: period(ou.o)?,
        total_duration: ou.total_duration(),
    })
}

/// Pearson correlation per axis between the gaze displacement rate and the
/// head angular velocity of a trial.
///
/// The finer-sampled stream is linearly resampled onto the coarser one's
/// grid over their overlap; at least 3 overlapping points are required.
pub fn gaze_head_correlation(trial: &TrialRecord) -> Result<AxisCorrelation, FeatureError> {
    gaze_head_correlation_in(trial, Interval::new(f64::NEG_INFINITY, f64::INFINITY))
}

/// [`gaze_head_correlation`] restricted to one time window, e.g. a single
/// operational-unit period.
pub fn gaze_head_correlation_in(
    trial: &TrialRecord,
    interval: Interval,
) -> Result<AxisCorrelation, FeatureError> {
    let clip = |points: Vec<(f64, f64, f64)>| -> Vec<(f64, f64, f64)> {
        points
            .into_iter()
            .filter(|(t, _, _)| interval.contains(*t))
            .collect()
    };
    let gaze = clip(gaze_rate_points(trial));
    let head = clip(head_velocity_points(trial));
    if gaze.len() < 2 || head.len() < 2 {
        return Err(FeatureError::InsufficientData(
            "need at least two gaze and two head velocity points".into(),
        ));
    }
    let spacing =
        |pts: &[(f64, f64, f64)]| (pts[pts.len() - 1].0 - pts[0].0) / (pts.len() - 1) as f64;
    // The coarser stream (larger mean spacing) keeps its grid.
    let (reference, finer) = if spacing(&head) > spacing(&gaze) {
        (&head, &gaze)
    } else {
        (&gaze, &head)
    };
    let lo = reference[0].0.max(finer[0].0);
    let hi = reference[reference.len() - 1]
        .0
        .min(finer[finer.len() - 1].0);

    let mut ax = Vec::new();
    let mut ay = Vec::new();
    let mut bx = Vec::new();
    let mut by = Vec::new();
    for &(t, vx, vy) in reference.iter().filter(|(t, _, _)| *t >= lo && *t <= hi) {
        let (ix, iy) = interpolate(finer, t);
        ax.push(vx);
        ay.push(vy);
        bx.push(ix);
        by.push(iy);
    }
    if ax.len() < 3 {
        return Err(FeatureError::InsufficientData(format!(
            "only {} overlapping samples after resampling",
            ax.len()
        )));
    }
    // A constant axis has no measurable linear relationship; report 0.
    let r = |a: &[f64], b: &[f64]| {
        stats::pearson(a, b)
            .map(|v| v.clamp(-1.0, 1.0))
            .unwrap_or(0.0)
    };
    Ok(AxisCorrelation {
        r_x: r(&ax, &bx),
        r_y: r(&ay, &by),
    })
}

/// Linear interpolation of a (t, vx, vy) series at time `t`; clamps to the
/// end values outside the series range.
fn interpolate(points: &[(f64, f64, f64)], t: f64) -> (f64, f64) {
    if t <= points[0].0 {
        return (points[0].1, points[0].2);
    }
    if t >= points[points.len() - 1].0 {
        let last = points[points.len() - 1];
        return (last.1, last.2);
    }
    let idx = points.partition_point(|p| p.0 <= t);
    let (prev, next) = (points[idx - 1], points[idx]);
    let w = (t - prev.0) / (next.0 - prev.0);
    (
        prev.1 + (next.1 - prev.1) * w,
        prev.2 + (next.2 - prev.2) * w,
    )
}

/// Counts of gaze samples per map cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatGrid {
    pub cols: usize,
    pub rows: usize,
    pub cell_px: f64,
    /// Row-major counts, rows top to bottom.
    pub cells: Vec<u64>,
}

impl HeatGrid {
    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    pub fn get(&self, col: usize, row: usize) -> u64 {
        self.cells[row * self.cols + col]
    }
}

/// Accumulate valid gaze samples passing `filter` into a map-covering grid.
pub fn gaze_heat_grid<'a, F>(
    trials: impl IntoIterator<Item = &'a TrialRecord>,
    map_width_px: f64,
    map_height_px: f64,
    cell_px: f64,
    mut filter: F,
) -> HeatGrid
where
    F: FnMut(&TrialRecord, &GazeSample) -> bool,
{
    assert!(cell_px > 0.0, "cell_px must be positive");
    let cols = ((map_width_px / cell_px).ceil() as usize).max(1);
    let rows = ((map_height_px / cell_px).ceil() as usize).max(1);
    let mut grid = HeatGrid {
        cols,
        rows,
        cell_px,
        cells: vec![0; cols * rows],
    };
    for trial in trials {
        for sample in trial.gaze.iter().filter(|s| s.valid) {
            if !filter(trial, sample) {
                continue;
            }
            let col = ((sample.x / cell_px).floor() as isize).clamp(0, cols as isize - 1) as usize;
            let row = ((sample.y / cell_px).floor() as isize).clamp(0, rows as isize - 1) as usize;
            grid.cells[row * cols + col] += 1;
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{CameraIntrinsics, TouchEvent};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hotspot(x: f64, y: f64) -> Hotspot {
        Hotspot {
            id: 1,
            centroid_x: x,
            centroid_y: y,
            radius: 1.0,
            occurrence_count: 1,
        }
    }

    fn series(t: &[f64], d: &[f64]) -> DistanceSeries {
        DistanceSeries {
            t: t.to_vec(),
            d: d.to_vec(),
        }
    }

    #[test]
    fn distance_is_euclidean() {
        let h = hotspot(10.0, 10.0);
        let samples = vec![
            GazeSample {
                t: 0.0,
                x: 10.0,
                y: 10.0,
                valid: true,
            },
            GazeSample {
                t: 1.0,
                x: 13.0,
                y: 14.0,
                valid: true,
            },
            GazeSample {
                t: 2.0,
                x: 0.0,
                y: 0.0,
                valid: false,
            },
        ];
        let s = gaze_distance_series(&samples, &h, Interval::new(0.0, 10.0));
        assert_eq!(s.d, vec![0.0, 5.0]); // invalid sample excluded
    }

    #[test]
    fn stats_of_constant_series() {
        let s = series(&[0.0, 1.0, 2.0], &[2.0, 2.0, 2.0]);
        let p = series_stats(&s, 2.0).unwrap();
        assert_eq!(p.variance, 0.0);
        assert_eq!(p.frequency, 0.0);
        assert_eq!(p.velocity, 0.0);
        assert_eq!(p.mean_distance, 2.0);
    }

    #[test]
    fn stats_of_two_point_series() {
        // d = [1, 3] over one second: V = 2, population variance = 1, f = 0.
        let p = series_stats(&series(&[0.0, 1.0], &[1.0, 3.0]), 1.0).unwrap();
        assert_eq!(p.velocity, 2.0);
        assert_eq!(p.variance, 1.0);
        assert_eq!(p.frequency, 0.0);
    }

    #[test]
    fn frequency_counts_sign_alternations() {
        // Differences +1, -1, +1: two alternations over T = 3.
        let p = series_stats(&series(&[0.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 1.0, 2.0]), 3.0).unwrap();
        assert!((p.frequency - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn plateaus_do_not_count_as_changes() {
        // Differences +1, 0, -1: one alternation, the zero is skipped.
        let p = series_stats(&series(&[0.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 1.0]), 1.0).unwrap();
        assert_eq!(p.frequency, 1.0);
    }

    #[test]
    fn nonpositive_duration_with_samples_is_an_error() {
        let err = series_stats(&series(&[0.0], &[1.0]), 0.0).unwrap_err();
        assert!(matches!(err, FeatureError::NonPositiveDuration(_)));
        // But an empty series with zero duration is fine.
        assert!(series_stats(&DistanceSeries::default(), 0.0).is_ok());
    }

    fn intrinsics() -> CameraIntrinsics {
        CameraIntrinsics {
            image_width_px: 1280.0,
            image_height_px: 720.0,
            sensor_width_mm: 5.12,
            sensor_height_mm: 2.88,
            focal_mm: 1.93,
        }
    }

    #[test]
    fn head_angle_forcing_cases() {
        let k = intrinsics();
        assert_eq!(
            head_angle_deg(0.0, k.image_width_px, k.sensor_width_mm, k.focal_mm),
            0.0
        );
        // v such that the arctan argument is exactly 1 gives 45 degrees.
        let v = k.image_width_px * k.focal_mm / k.sensor_width_mm;
        let a = head_angle_deg(v, k.image_width_px, k.sensor_width_mm, k.focal_mm);
        assert!((a - 45.0).abs() < 1e-12);
        let half = head_angle_deg(v / 2.0, k.image_width_px, k.sensor_width_mm, k.focal_mm);
        assert!((half - 26.56505117707799).abs() < 1e-10);
    }

    #[test]
    fn head_angle_is_odd() {
        let k = intrinsics();
        for v in [1.0, 10.0, 123.4, 5000.0] {
            let pos = head_angle_deg(v, k.image_width_px, k.sensor_width_mm, k.focal_mm);
            let neg = head_angle_deg(-v, k.image_width_px, k.sensor_width_mm, k.focal_mm);
            assert_eq!(pos, -neg);
        }
    }

    fn empty_trial() -> TrialRecord {
        TrialRecord {
            user_id: "u01".into(),
            task_id: "t1".into(),
            trial_index: 1,
            intrinsics: intrinsics(),
            gaze: vec![],
            hand: vec![],
            head_motion: vec![],
            touches: vec![],
            ratings: vec![],
        }
    }

    fn registry_one(h: Hotspot) -> HotspotRegistry {
        HotspotRegistry {
            hotspots: vec![h],
            total_experiences: 1,
        }
    }

    #[test]
    fn empty_g_period_is_all_zero() {
        let mut trial = empty_trial();
        trial.touches = vec![TouchEvent {
            t_start: 0.0,
            t_end: 1.0,
            x: 10.0,
            y: 10.0,
            hotspot_id: Some(1),
        }];
        let ou = OperationalUnit {
            hotspot_id: 1,
            g: Interval::new(0.0, 0.0),
            a: Interval::new(0.0, 0.0),
            o: Interval::new(0.0, 1.0),
        };
        let fv = extract_features(&ou, 1, &trial, &registry_one(hotspot(10.0, 10.0))).unwrap();
        assert_eq!(fv.g, PeriodFeatures::default());
        assert_eq!(fv.total_duration, 1.0);
    }

    #[test]
    fn gaze_parked_on_centroid_has_zero_mean_distance() {
        let mut trial = empty_trial();
        trial.gaze = (0..30)
            .map(|i| GazeSample {
                t: i as f64 / 30.0,
                x: 10.0,
                y: 10.0,
                valid: true,
            })
            .collect();
        let ou = OperationalUnit {
            hotspot_id: 1,
            g: Interval::new(0.0, 0.0),
            a: Interval::new(0.0, 0.0),
            o: Interval::new(0.0, 1.0),
        };
        let fv = extract_features(&ou, 1, &trial, &registry_one(hotspot(10.0, 10.0))).unwrap();
        assert_eq!(fv.o.gaze.mean_distance, 0.0);
    }

    /// Box-Muller standard normal draw.
    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    #[test]
    fn planted_radial_noise_recovers_sigma_squared() {
        // Gaze parked 300 px from the centroid with radial jitter sigma = 10:
        // the distance variance converges on sigma^2.
        let sigma = 10.0;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut trial = empty_trial();
        let n = 5000;
        trial.gaze = (0..n)
            .map(|i| GazeSample {
                t: i as f64 / 30.0,
                x: 310.0 + sigma * gauss(&mut rng),
                y: 10.0,
                valid: true,
            })
            .collect();
        let duration = n as f64 / 30.0;
        let ou = OperationalUnit {
            hotspot_id: 1,
            g: Interval::new(0.0, 0.0),
            a: Interval::new(0.0, 0.0),
            o: Interval::new(0.0, duration),
        };
        let fv = extract_features(&ou, 1, &trial, &registry_one(hotspot(10.0, 10.0))).unwrap();
        let planted = sigma * sigma;
        assert!(
            (fv.o.gaze.variance - planted).abs() < 0.1 * planted,
            "variance {} vs planted {}",
            fv.o.gaze.variance,
            planted
        );
    }

    /// Gaze track whose displacement rate reproduces `pattern` on the x axis,
    /// plus a head track whose angular velocity reproduces `head_pattern`.
    fn trial_with_rates(pattern: &[f64], head_pattern: &[f64]) -> TrialRecord {
        let mut trial = empty_trial();
        let dt = 1.0 / 30.0;
        let mut x = 0.0;
        trial.gaze.push(GazeSample {
            t: 0.0,
            x,
            y: 0.0,
            valid: true,
        });
        for (i, rate) in pattern.iter().enumerate() {
            x += rate * dt;
            trial.gaze.push(GazeSample {
                t: (i + 1) as f64 * dt,
                x,
                y: 0.0,
                valid: true,
            });
        }
        let k = trial.intrinsics;
        for (i, omega) in head_pattern.iter().enumerate() {
            // Invert the angle formula so that the sample spans dt with
            // angular velocity omega deg/s.
            let v =
                (omega * dt).to_radians().tan() * k.image_width_px * k.focal_mm / k.sensor_width_mm;
            trial.head_motion.push(GlobalMotionSample {
                t: i as f64 * dt,
                vx: v,
                vy: v,
            });
        }
        trial.head_motion.push(GlobalMotionSample {
            t: head_pattern.len() as f64 * dt,
            vx: 0.0,
            vy: 0.0,
        });
        trial
    }

    #[test]
    fn identical_series_correlate_perfectly() {
        let pattern: Vec<f64> = (0..50).map(|i| ((i * 7919) % 23) as f64 - 11.0).collect();
        let trial = trial_with_rates(&pattern, &pattern);
        let c = gaze_head_correlation(&trial).unwrap();
        assert!((c.r_x - 1.0).abs() < 1e-9, "r_x = {}", c.r_x);
    }

    #[test]
    fn negated_series_correlate_inversely() {
        let pattern: Vec<f64> = (0..50).map(|i| ((i * 7919) % 23) as f64 - 11.0).collect();
        let negated: Vec<f64> = pattern.iter().map(|v| -v).collect();
        let trial = trial_with_rates(&pattern, &negated);
        let c = gaze_head_correlation(&trial).unwrap();
        assert!((c.r_x + 1.0).abs() < 1e-9, "r_x = {}", c.r_x);
    }

    #[test]
    fn independent_noise_is_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..10_000).map(|_| gauss(&mut rng) * 20.0).collect();
        let b: Vec<f64> = (0..10_000).map(|_| gauss(&mut rng) * 20.0).collect();
        let trial = trial_with_rates(&a, &b);
        let c = gaze_head_correlation(&trial).unwrap();
        assert!(c.r_x.abs() < 0.05, "r_x = {}", c.r_x);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let trial = empty_trial();
        assert!(matches!(
            gaze_head_correlation(&trial),
            Err(FeatureError::InsufficientData(_))
        ));
    }

    #[test]
    fn heat_grid_counts_and_adds() {
        let mut a = empty_trial();
        a.gaze = vec![GazeSample {
            t: 0.0,
            x: 5.0,
            y: 5.0,
            valid: true,
        }];
        let mut b = empty_trial();
        b.gaze = vec![
            GazeSample {
                t: 0.0,
                x: 5.0,
                y: 5.0,
                valid: true,
            },
            GazeSample {
                t: 1.0,
                x: 95.0,
                y: 95.0,
                valid: true,
            },
            GazeSample {
                t: 2.0,
                x: 0.0,
                y: 0.0,
                valid: false,
            },
        ];
        let ga = gaze_heat_grid(std::iter::once(&a), 100.0, 100.0, 10.0, |_, _| true);
        assert_eq!(ga.total(), 1);
        let gb = gaze_heat_grid(std::iter::once(&b), 100.0, 100.0, 10.0, |_, _| true);
        assert_eq!(gb.total(), 2); // invalid sample excluded
        let both = gaze_heat_grid([&a, &b], 100.0, 100.0, 10.0, |_, _| true);
        assert_eq!(both.total(), ga.total() + gb.total());
        for i in 0..both.cells.len() {
            assert_eq!(both.cells[i], ga.cells[i] + gb.cells[i]);
        }
        assert_eq!(gb.get(0, 0), 1);
        assert_eq!(gb.get(9, 9), 1);
        // All samples in one spot occupy exactly one cell.
        assert_eq!(ga.cells.iter().filter(|&&c| c > 0).count(), 1);
    }

    #[test]
    fn windowed_correlation_uses_only_the_interval() {
        // Correlated in the first half, anti-correlated in the second.
        let pattern: Vec<f64> = (0..40).map(|i| ((i * 7919) % 23) as f64 - 11.0).collect();
        let mut head = pattern.clone();
        for v in head[20..].iter_mut() {
            *v = -*v;
        }
        let trial = trial_with_rates(&pattern, &head);
        let dt = 1.0 / 30.0;
        let first = gaze_head_correlation_in(&trial, Interval::new(0.0, 20.0 * dt)).unwrap();
        let second = gaze_head_correlation_in(&trial, Interval::new(20.0 * dt, 41.0 * dt)).unwrap();
        assert!(
            (first.r_x - 1.0).abs() < 1e-9,
            "first half r = {}",
            first.r_x
        );
        assert!(
            (second.r_x + 1.0).abs() < 1e-9,
            "second half r = {}",
            second.r_x
        );
    }
}
