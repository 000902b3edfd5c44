//! Learning-trend, deviation, and correlation analytics over features.
//!
//! Skill has no absolute score; it is treated as an ordinal that never
//! decreases over a user's trials, so the trial index doubles as the skill
//! rank. Features are related to skill by Spearman rank correlation and to
//! subjective step difficulty by Pearson correlation, both with population
//! moments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;
use crate::records::SessionSet;

/// One user's per-trial values of one feature, ordered by trial index.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendInput {
    pub user_id: String,
    pub values: Vec<f64>,
}

/// Inter- and intra-person relative standard deviations of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub intra_by_user: BTreeMap<String, f64>,
    pub inter: f64,
}

impl DeviationReport {
    pub fn mean_intra(&self) -> f64 {
        if self.intra_by_user.is_empty() {
            return 0.0;
        }
        self.intra_by_user.values().sum::<f64>() / self.intra_by_user.len() as f64
    }
}

/// The ordinal skill chain of one user on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillRank {
    pub user_id: String,
    pub task_id: String,
    /// Trial indices in recording order; strictly increasing.
    pub ranks: Vec<u32>,
}

/// Per-(user, task) skill rank chains of a dataset.
pub fn skill_ranks(set: &SessionSet) -> Vec<SkillRank> {
    let mut by_pair: BTreeMap<(String, String), Vec<u32>> = BTreeMap::new();
    for trial in &set.trials {
        by_pair
            .entry((trial.user_id.clone(), trial.task_id.clone()))
            .or_default()
            .push(trial.trial_index);
    }
    by_pair
        .into_iter()
        .map(|((user_id, task_id), ranks)| SkillRank {
            user_id,
            task_id,
            ranks,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    SpearmanToSkill,
    PearsonToDifficulty,
}

/// One feature's correlation coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub feature: String,
    pub coefficient: f64,
    pub kind: CorrelationKind,
}

/// Correlation results sorted by |R| descending, with degenerate features
/// surfaced separately instead of aborting the whole table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub results: Vec<CorrelationResult>,
    pub degenerate: Vec<(String, String)>,
}

impl CorrelationTable {
    pub fn coefficient(&self, feature: &str) -> Option<f64> {
        self.results
            .iter()
            .find(|r| r.feature == feature)
            .map(|r| r.coefficient)
    }

    /// The k most correlated feature names, strongest first.
    pub fn top_features(&self, k: usize) -> Vec<String> {
        self.results
            .iter()
            .take(k)
            .map(|r| r.feature.clone())
            .collect()
    }
}

/// How per-user coefficients are pooled into one table entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Correlate within each user, then average the coefficients.
    #[default]
    WithinUserAverage,
    /// Concatenate all users' (value, rank) pairs and correlate once.
    PooledRanks,
}

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no difficulty ratings present")]
    MissingRatings,
}

/// Learning trend of a feature as the accumulated relative change over a
/// user's trials, in percent. The numerator telescopes to last - first.
pub fn trend(input: &TrendInput) -> Result<f64, StatsError> {
    if input.values.len() < 2 {
        return Err(StatsError::Degenerate(format!(
            "trend needs at least 2 trials, got {}",
            input.values.len()
        )));
    }
    let mean = input.values.iter().sum::<f64>() / input.values.len() as f64;
    if mean == 0.0 {
        return Err(StatsError::Degenerate("zero mean feature value".into()));
    }
    let sum: f64 = input.values.windows(2).map(|w| w[1] - w[0]).sum();
    Ok(100.0 * sum / mean)
}

/// Intra-person and inter-person relative standard deviations of a feature.
///
/// Intra is each user's population std over their mean; inter is the
/// population std of per-user means over the grand mean of those means.
pub fn deviations(values: &BTreeMap<String, Vec<f64>>) -> Result<DeviationReport, StatsError> {
    if values.is_empty() || values.values().any(|v| v.is_empty()) {
        return Err(StatsError::Degenerate(
            "every user needs at least one value".into(),
        ));
    }
    let mut intra_by_user = BTreeMap::new();
    let mut user_means = Vec::with_capacity(values.len());
    for (user, vals) in values {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        if mean == 0.0 {
            return Err(StatsError::Degenerate(format!("zero mean for user {user}")));
        }
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        intra_by_user.insert(user.clone(), var.sqrt() / mean.abs());
        user_means.push(mean);
    }
    let grand = user_means.iter().sum::<f64>() / user_means.len() as f64;
    if grand == 0.0 {
        return Err(StatsError::Degenerate("zero grand mean".into()));
    }
    let var = user_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / user_means.len() as f64;
    Ok(DeviationReport {
        intra_by_user,
        inter: var.sqrt() / grand.abs(),
    })
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j hold equal values; all get the mean rank.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation with population moments.
pub fn pearson(f: &[f64], l: &[f64]) -> Result<f64, StatsError> {
    if f.len() != l.len() {
        return Err(StatsError::Degenerate(format!(
            "length mismatch: {} vs {}",
            f.len(),
            l.len()
        )));
    }
    let n = f.len();
    if n < 2 {
        return Err(StatsError::Degenerate(format!(
            "need at least 2 pairs, got {n}"
        )));
    }
    let nf = n as f64;
    let mf = f.iter().sum::<f64>() / nf;
    let ml = l.iter().sum::<f64>() / nf;
    let mut cov = 0.0;
    let mut vf = 0.0;
    let mut vl = 0.0;
    for i in 0..n {
        let df = f[i] - mf;
        let dl = l[i] - ml;
        cov += df * dl;
        vf += df * df;
        vl += dl * dl;
    }
    if vf == 0.0 || vl == 0.0 {
        return Err(StatsError::Degenerate("constant vector".into()));
    }
    Ok(cov / (vf * vl).sqrt())
}

/// Spearman rank correlation: Pearson over average ranks.
pub fn spearman(f: &[f64], l: &[f64]) -> Result<f64, StatsError> {
    if f.len() != l.len() {
        return Err(StatsError::Degenerate(format!(
            "length mismatch: {} vs {}",
            f.len(),
            l.len()
        )));
    }
    pearson(&average_ranks(f), &average_ranks(l))
}

/// Spearman correlation of every feature against the skill ordinal.
///
/// Per (user, task) chain the per-trial feature value is the mean over that
/// trial's units; chains with fewer than 3 trials or a constant feature are
/// skipped, and a feature with no usable chain at all lands in `degenerate`.
pub fn skill_correlation_table(features: &[FeatureVector], names: &[&str]) -> CorrelationTable {
    skill_correlation_table_with(features, names, Pooling::WithinUserAverage)
}

/// [`skill_correlation_table`] with an explicit pooling strategy.
pub fn skill_correlation_table_with(
    features: &[FeatureVector],
    names: &[&str],
    pooling: Pooling,
) -> CorrelationTable {
    // (user, task) -> trial_index -> unit features
    let mut chains: BTreeMap<(&str, &str), BTreeMap<u32, Vec<&FeatureVector>>> = BTreeMap::new();
    for fv in features {
        chains
            .entry((fv.user_id.as_str(), fv.task_id.as_str()))
            .or_default()
            .entry(fv.trial_index)
            .or_default()
            .push(fv);
    }

    let mut table = CorrelationTable::default();
    for &name in names {
        let mut per_user = Vec::new();
        let mut pooled_values = Vec::new();
        let mut pooled_ranks = Vec::new();
        for trials in chains.values() {
            if trials.len() < 3 {
                continue;
            }
            let mut values = Vec::with_capacity(trials.len());
            let mut ranks = Vec::with_capacity(trials.len());
            for (&trial_index, units) in trials {
                let mean =
                    units.iter().filter_map(|fv| fv.value(name)).sum::<f64>() / units.len() as f64;
                values.push(mean);
                ranks.push(trial_index as f64);
            }
            pooled_values.extend_from_slice(&values);
            pooled_ranks.extend_from_slice(&ranks);
            if let Ok(r) = spearman(&values, &ranks) {
                per_user.push(r);
            }
        }
        let coefficient = match pooling {
            Pooling::WithinUserAverage => {
                if per_user.is_empty() {
                    None
                } else {
                    Some(per_user.iter().sum::<f64>() / per_user.len() as f64)
                }
            }
            Pooling::PooledRanks => spearman(&pooled_values, &pooled_ranks).ok(),
        };
        match coefficient {
            Some(r) => table.results.push(CorrelationResult {
                feature: name.to_string(),
                coefficient: r,
                kind: CorrelationKind::SpearmanToSkill,
            }),
            None => table
                .degenerate
                .push((name.to_string(), "no usable per-user chain".into())),
        }
    }
    sort_by_strength(&mut table.results);
    table
}

/// Pearson correlation of every feature against subjective step difficulty.
///
/// One observation per (trial, step): the mean feature value over the
/// trial's units on that step paired with the user's rating of the step.
/// Steps are identified with hotspot ids.
pub fn difficulty_correlation_table(
    features: &[FeatureVector],
    set: &SessionSet,
    names: &[&str],
) -> Result<CorrelationTable, StatsError> {
    if set.trials.iter().all(|t| t.ratings.is_empty()) {
        return Err(StatsError::MissingRatings);
    }
    // (user, task, trial, hotspot) -> unit features
    let mut groups: BTreeMap<(&str, &str, u32, u32), Vec<&FeatureVector>> = BTreeMap::new();
    for fv in features {
        groups
            .entry((
                fv.user_id.as_str(),
                fv.task_id.as_str(),
                fv.trial_index,
                fv.hotspot_id,
            ))
            .or_default()
            .push(fv);
    }

    let mut observations: Vec<(&Vec<&FeatureVector>, f64)> = Vec::new();
    for (key, units) in &groups {
        let trial = set
            .trials
            .iter()
            .find(|t| t.user_id == key.0 && t.task_id == key.1 && t.trial_index == key.2);
        if let Some(score) = trial.and_then(|t| t.rating_for(key.3)) {
            observations.push((units, score as f64));
        }
    }

    let mut table = CorrelationTable::default();
    for &name in names {
        let mut xs = Vec::with_capacity(observations.len());
        let mut ys = Vec::with_capacity(observations.len());
        for (units, score) in &observations {
            let mean =
                units.iter().filter_map(|fv| fv.value(name)).sum::<f64>() / units.len() as f64;
            xs.push(mean);
            ys.push(*score);
        }
        match pearson(&xs, &ys) {
            Ok(r) => table.results.push(CorrelationResult {
                feature: name.to_string(),
                coefficient: r,
                kind: CorrelationKind::PearsonToDifficulty,
            }),
            Err(e) => table.degenerate.push((name.to_string(), e.to_string())),
        }
    }
    sort_by_strength(&mut table.results);
    Ok(table)
}

fn sort_by_strength(results: &mut [CorrelationResult]) {
    results.sort_by(|a, b| {
        b.coefficient
            .abs()
            .partial_cmp(&a.coefficient.abs())
            .expect("finite coefficients")
            .then_with(|| a.feature.cmp(&b.feature))
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{CameraIntrinsics, DifficultyRating, TrialRecord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trend_matches_hand_computation() {
        let t = trend(&TrendInput {
            user_id: "u".into(),
            values: vec![2.0, 1.0],
        })
        .unwrap();
        assert!((t - (-100.0 / 1.5)).abs() < 1e-12, "{t}"); // -66.7%
    }

    #[test]
    fn trend_of_constant_is_zero() {
        let t = trend(&TrendInput {
            user_id: "u".into(),
            values: vec![3.0, 3.0, 3.0],
        })
        .unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn trend_numerator_telescopes() {
        // [a, x, b] has the same numerator as [a, b] for any interior x.
        for x in [0.5, 2.0, 7.0] {
            let v = trend(&TrendInput {
                user_id: "u".into(),
                values: vec![1.0, x, 4.0],
            })
            .unwrap();
            let mean = (5.0 + x) / 3.0;
            assert!((v - 100.0 * 3.0 / mean).abs() < 1e-12);
        }
    }

    #[test]
    fn trend_rejects_short_or_zero_mean() {
        assert!(trend(&TrendInput {
            user_id: "u".into(),
            values: vec![1.0]
        })
        .is_err());
        assert!(trend(&TrendInput {
            user_id: "u".into(),
            values: vec![-1.0, 1.0]
        })
        .is_err());
    }

    #[test]
    fn deviations_match_hand_computation() {
        let mut values = BTreeMap::new();
        values.insert("a".to_string(), vec![1.0, 3.0]); // mean 2, std 1 -> intra 0.5
        values.insert("b".to_string(), vec![3.0, 3.0]); // mean 3, std 0 -> intra 0
        let report = deviations(&values).unwrap();
        assert!((report.intra_by_user["a"] - 0.5).abs() < 1e-12);
        assert_eq!(report.intra_by_user["b"], 0.0);
        // means 2 and 3: grand 2.5, std 0.5 -> inter 0.2
        assert!((report.inter - 0.2).abs() < 1e-12);
    }

    #[test]
    fn deviations_all_equal_is_zero() {
        let mut values = BTreeMap::new();
        values.insert("a".to_string(), vec![2.0, 2.0]);
        values.insert("b".to_string(), vec![2.0]);
        let report = deviations(&values).unwrap();
        assert_eq!(report.mean_intra(), 0.0);
        assert_eq!(report.inter, 0.0);
    }

    #[test]
    fn deviations_inter_hand_case() {
        let mut values = BTreeMap::new();
        values.insert("a".to_string(), vec![1.0]);
        values.insert("b".to_string(), vec![3.0]);
        let report = deviations(&values).unwrap();
        assert!((report.inter - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spearman_perfect_monotone() {
        assert_eq!(spearman(&[3.0, 2.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), -1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
    }

    #[test]
    fn spearman_averages_ties() {
        let r = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r - 0.9486832980505138).abs() < 1e-12, "{r}");
    }

    #[test]
    fn pearson_affine_and_hand_cases() {
        let f = [1.0, 2.0, 3.0];
        let affine: Vec<f64> = f.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&f, &affine).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        assert!((pearson(&f, &neg).unwrap() + 1.0).abs() < 1e-12);
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-12, "{r}");
    }

    #[test]
    fn pearson_rejects_constant() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::Degenerate(_))
        ));
    }

    fn unit_feature(user: &str, trial: u32, name: &str, value: f64) -> FeatureVector {
        let mut fv = FeatureVector::zeroed(user, "t1", trial, 1, 1);
        match name {
            "dur_total" => fv.total_duration = value,
            "gazeVar_G" => fv.g.gaze.variance = value,
            "gazeV_O" => fv.o.gaze.velocity = value,
            _ => panic!("unsupported test feature {name}"),
        }
        fv
    }

    #[test]
    fn skill_table_recovers_planted_trend() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut features = Vec::new();
        for u in 0..12 {
            for n in 1..=12u32 {
                let user = format!("u{u:02}");
                // Duration decays monotonically; the other feature is noise.
                let mut fv =
                    unit_feature(&user, n, "dur_total", 100.0 * 0.85f64.powi(n as i32 - 1));
                fv.g.gaze.variance = rng.gen_range(0.0..100.0);
                features.push(fv);
            }
        }
        let table = skill_correlation_table(&features, &["dur_total", "gazeVar_G"]);
        assert_eq!(table.results[0].feature, "dur_total");
        assert!(table.results[0].coefficient <= -0.9);
        let noise = table.coefficient("gazeVar_G").unwrap();
        assert!(noise.abs() < 0.3, "noise |R| = {}", noise.abs());
    }

    #[test]
    fn skill_table_single_feature() {
        let features: Vec<FeatureVector> = (1..=3)
            .map(|n| unit_feature("u01", n, "dur_total", 10.0 - n as f64))
            .collect();
        let table = skill_correlation_table(&features, &["dur_total"]);
        assert_eq!(table.results.len(), 1);
        assert_eq!(table.results[0].coefficient, -1.0);
    }

    fn rated_trial(user: &str, trial_index: u32, ratings: Vec<(u32, u8)>) -> TrialRecord {
        TrialRecord {
            user_id: user.into(),
            task_id: "t1".into(),
            trial_index,
            intrinsics: CameraIntrinsics {
                image_width_px: 1280.0,
                image_height_px: 720.0,
                sensor_width_mm: 5.12,
                sensor_height_mm: 2.88,
                focal_mm: 1.93,
            },
            gaze: vec![],
            hand: vec![],
            head_motion: vec![],
            touches: vec![],
            ratings: ratings
                .into_iter()
                .map(|(step_index, score)| DifficultyRating { step_index, score })
                .collect(),
        }
    }

    fn difficulty_fixture(slope: f64) -> (Vec<FeatureVector>, SessionSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut features = Vec::new();
        let mut trials = Vec::new();
        for u in 0..4 {
            let user = format!("u{u:02}");
            let ratings: Vec<(u32, u8)> = (1..=5).map(|s| (s, s as u8 - 1)).collect();
            trials.push(rated_trial(&user, 1, ratings));
            for step in 1..=5u32 {
                let mut fv = FeatureVector::zeroed(&user, "t1", 1, step, step as usize);
                let difficulty = (step - 1) as f64;
                fv.g.gaze.variance =
                    100.0 + slope * difficulty * 20.0 * (1.0 + rng.gen_range(-0.05..0.05));
                features.push(fv);
            }
        }
        let set = SessionSet::new(trials, 100.0, 100.0).unwrap();
        (features, set)
    }

    #[test]
    fn difficulty_table_recovers_planted_link() {
        let (features, set) = difficulty_fixture(1.0);
        let table = difficulty_correlation_table(&features, &set, &["gazeVar_G"]).unwrap();
        assert!(table.results[0].coefficient >= 0.9);

        let (features, set) = difficulty_fixture(-1.0);
        let table = difficulty_correlation_table(&features, &set, &["gazeVar_G"]).unwrap();
        assert!(table.results[0].coefficient <= -0.9);
    }

    #[test]
    fn difficulty_table_flags_constant_ratings_per_feature() {
        let trials = vec![rated_trial("u01", 1, vec![(1, 2), (2, 2), (3, 2)])];
        let set = SessionSet::new(trials, 100.0, 100.0).unwrap();
        let features: Vec<FeatureVector> = (1..=3)
            .map(|s| {
                let mut fv = FeatureVector::zeroed("u01", "t1", 1, s, s as usize);
                fv.g.gaze.variance = s as f64;
                fv
            })
            .collect();
        let table = difficulty_correlation_table(&features, &set, &["gazeVar_G"]).unwrap();
        assert!(table.results.is_empty());
        assert_eq!(table.degenerate.len(), 1);
        assert_eq!(table.degenerate[0].0, "gazeVar_G");
    }

    #[test]
    fn difficulty_table_requires_ratings() {
        let trials = vec![rated_trial("u01", 1, vec![])];
        let set = SessionSet::new(trials, 100.0, 100.0).unwrap();
        assert!(matches!(
            difficulty_correlation_table(&[], &set, &["gazeVar_G"]),
            Err(StatsError::MissingRatings)
        ));
    }

    #[test]
    fn skill_ranks_follow_trial_indices() {
        let trials = vec![
            rated_trial("u01", 1, vec![]),
            rated_trial("u01", 2, vec![]),
            rated_trial("u02", 1, vec![]),
        ];
        let set = SessionSet::new(trials, 100.0, 100.0).unwrap();
        let ranks = skill_ranks(&set);
        assert_eq!(ranks.len(), 2);
        assert_eq!(ranks[0].ranks, vec![1, 2]);
        assert!(ranks[0].ranks.windows(2).all(|w| w[1] > w[0]));
    }
}
