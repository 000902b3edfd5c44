//! Hotspot detection and trial segmentation into operational units.
//!
//! Hotspots are found by clustering hand--machine touch locations on the
//! global map; each trial is then cut into operational units, one per
//! merged touch group, made of three consecutive periods: pure-gazing (G),
//! hand-approaching (A), and operating (O).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::records::{SessionSet, TouchEvent, TrialRecord};

/// A clustered interaction region on the machine surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    /// Dense ids starting at 1, assigned by ascending (centroid_x, centroid_y).
    pub id: u32,
    pub centroid_x: f64,
    pub centroid_y: f64,
    /// Max member distance to the centroid, floored at 1 px.
    pub radius: f64,
    /// Number of experiences (trials) containing at least one touch to it.
    pub occurrence_count: usize,
}

/// All hotspots of a dataset plus the experience count used as the
/// denominator for occurrence ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotspotRegistry {
    pub hotspots: Vec<Hotspot>,
    pub total_experiences: usize,
}

impl HotspotRegistry {
    pub fn get(&self, id: u32) -> Option<&Hotspot> {
        self.hotspots.iter().find(|h| h.id == id)
    }

    /// Occurrence fraction of a hotspot over all experiences.
    pub fn occurrence_ratio(&self, id: u32) -> Option<f64> {
        self.get(id)
            .map(|h| h.occurrence_count as f64 / self.total_experiences as f64)
    }
}

/// Half-open time interval [start, end) in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Interval { start, end }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// One operation step: G, A, and O intervals bound to a hotspot.
///
/// The intervals are contiguous: G ends where A starts and A ends where O
/// starts. G or A may be empty; O never is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperationalUnit {
    pub hotspot_id: u32,
    pub g: Interval,
    pub a: Interval,
    pub o: Interval,
}

impl OperationalUnit {
    pub fn total_duration(&self) -> f64 {
        self.o.end - self.g.start
    }
}

/// Tunable segmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationParams {
    /// Touches shorter than this are ignored as detection noise.
    pub min_touch_duration: f64,
    /// Single-linkage distance threshold for touch clustering, in pixels.
    pub cluster_radius: f64,
    /// Consecutive touches to the same hotspot closer than this merge into
    /// one operating period.
    pub merge_gap: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            min_touch_duration: 0.3,
            cluster_radius: 50.0,
            merge_gap: 0.5,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SegmentError {
    #[error("no touches remain after filtering; nothing to cluster")]
    EmptyInput,
}

/// Keep exactly the touches lasting at least `min_dur`, order preserved.
pub fn filter_short_touches(touches: &[TouchEvent], min_dur: f64) -> Vec<TouchEvent> {
    touches
        .iter()
        .filter(|t| t.duration() >= min_dur)
        .cloned()
        .collect()
}

/// Detect hotspots by single-linkage clustering of filtered touch locations.
///
/// Two touches join the same hotspot when a chain of touches at most
/// `cluster_radius` apart connects them. Deterministic and invariant under
/// permutation of the input trials.
pub fn cluster_touches(
    set: &SessionSet,
    params: &SegmentationParams,
) -> Result<HotspotRegistry, SegmentError> {
    let (registry, _) = label_touches(set, params)?;
    Ok(registry)
}

/// Cluster touches and return both the registry and a copy of the set in
/// which every trial's touch list is replaced by its filtered touches
/// labeled with hotspot ids.
pub fn label_touches(
    set: &SessionSet,
    params: &SegmentationParams,
) -> Result<(HotspotRegistry, SessionSet), SegmentError> {
    // (trial index, touch) for every filtered touch, in set order.
    let mut filtered: Vec<Vec<TouchEvent>> = Vec::with_capacity(set.trials.len());
    let mut points: Vec<(usize, f64, f64)> = Vec::new();
    for (ti, trial) in set.trials.iter().enumerate() {
        let kept = filter_short_touches(&trial.touches, params.min_touch_duration);
        for touch in &kept {
            points.push((ti, touch.x, touch.y));
        }
        filtered.push(kept);
    }
    if points.is_empty() {
        return Err(SegmentError::EmptyInput);
    }

    let mut uf = UnionFind::new(points.len());
    let r2 = params.cluster_radius * params.cluster_radius;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let dx = points[i].1 - points[j].1;
            let dy = points[i].2 - points[j].2;
            if dx * dx + dy * dy <= r2 {
                uf.union(i, j);
            }
        }
    }

    // Collect members per component root.
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..points.len() {
        components.entry(uf.find(i)).or_default().push(i);
    }

    struct Cluster {
        cx: f64,
        cy: f64,
        radius: f64,
        members: Vec<usize>,
        trials: Vec<usize>,
    }

    let mut clusters: Vec<Cluster> = Vec::with_capacity(components.len());
    for members in components.into_values() {
        // Canonical summation order keeps the centroid bit-stable no matter
        // how the components were discovered.
        let mut coords: Vec<(f64, f64)> = members
            .iter()
            .map(|&i| (points[i].1, points[i].2))
            .collect();
        coords.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        let n = coords.len() as f64;
        let cx = coords.iter().map(|c| c.0).sum::<f64>() / n;
        let cy = coords.iter().map(|c| c.1).sum::<f64>() / n;
        let radius = coords
            .iter()
            .map(|c| ((c.0 - cx).powi(2) + (c.1 - cy).powi(2)).sqrt())
            .fold(0.0f64, f64::max)
            .max(1.0);
        let mut trials: Vec<usize> = members.iter().map(|&i| points[i].0).collect();
        trials.sort_unstable();
        trials.dedup();
        clusters.push(Cluster {
            cx,
            cy,
            radius,
            members,
            trials,
        });
    }
    clusters.sort_by(|a, b| {
        (a.cx, a.cy)
            .partial_cmp(&(b.cx, b.cy))
            .expect("finite centroids")
    });

    let mut hotspots = Vec::with_capacity(clusters.len());
    let mut point_label = vec![0u32; points.len()];
    for (rank, c) in clusters.iter().enumerate() {
        let id = rank as u32 + 1;
        hotspots.push(Hotspot {
            id,
            centroid_x: c.cx,
            centroid_y: c.cy,
            radius: c.radius,
            occurrence_count: c.trials.len(),
        });
        for &m in &c.members {
            point_label[m] = id;
        }
    }
    let registry = HotspotRegistry {
        hotspots,
        total_experiences: set.trials.len(),
    };

    // Rebuild the set with filtered, labeled touches.
    let mut labeled = set.clone();
    let mut cursor = 0usize;
    for (ti, trial) in labeled.trials.iter_mut().enumerate() {
        let mut touches = std::mem::take(&mut filtered[ti]);
        for touch in touches.iter_mut() {
            debug_assert_eq!(points[cursor].0, ti);
            touch.hotspot_id = Some(point_label[cursor]);
            cursor += 1;
        }
        trial.touches = touches;
    }
    debug_assert_eq!(cursor, points.len());

    Ok((registry, labeled))
}

/// Segment one trial into operational units.
///
/// Touches must already be filtered and labeled (see [`label_touches`]).
/// Consecutive touches to the same hotspot separated by less than
/// `merge_gap` form one operating period O = [first start, last end).
/// A starts at the first time after the previous O at which the hand is
/// visible; G covers the remainder of the gap and is empty when the hand
/// stayed in view the whole time.
pub fn segment_units(
    trial: &TrialRecord,
    registry: &HotspotRegistry,
    params: &SegmentationParams,
) -> Vec<OperationalUnit> {
    let touches: Vec<&TouchEvent> = trial
        .touches
        .iter()
        .filter(|t| {
            t.hotspot_id
                .map(|id| registry.get(id).is_some())
                .unwrap_or(false)
        })
        .collect();
    if touches.is_empty() {
        return Vec::new();
    }

    // Merge consecutive same-hotspot touches.
    let mut groups: Vec<(u32, f64, f64)> = Vec::new(); // (hotspot, o_start, o_end)
    for touch in touches {
        let id = touch.hotspot_id.expect("filtered to labeled touches");
        match groups.last_mut() {
            Some((gid, _, gend)) if *gid == id && touch.t_start - *gend < params.merge_gap => {
                *gend = gend.max(touch.t_end);
            }
            _ => groups.push((id, touch.t_start, touch.t_end)),
        }
    }

    let mut units = Vec::with_capacity(groups.len());
    let mut prev_end = trial.start_time();
    for (hotspot_id, o_start, o_end) in groups {
        let (g_start, a_start) = if o_start < prev_end {
            // Overlapping touch streams violate the single-stream assumption;
            // G and A collapse to empty rather than running backwards.
            (o_start, o_start)
        } else {
            let a_start = trial
                .hand
                .iter()
                .filter(|s| s.visible && s.t >= prev_end && s.t <= o_start)
                .map(|s| s.t)
                .next()
                .unwrap_or(o_start);
            (prev_end, a_start)
        };
        units.push(OperationalUnit {
            hotspot_id,
            g: Interval::new(g_start, a_start),
            a: Interval::new(a_start, o_start),
            o: Interval::new(o_start, o_end),
        });
        prev_end = prev_end.max(o_end);
    }
    units
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins, keeping the structure input-order free.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
