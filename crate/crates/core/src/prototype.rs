//! Skill-based experience ranking and prototype selection.
//!
//! Experiences are ranked per hotspot by skill-correlated features: each
//! feature votes with a weight derived from its correlation strength, each
//! hotspot contributes its top-ranked experiences to a candidate pool, and
//! the experiences occurring most often in the pool are the prototypes.
//! Two optional global voters join in: the unnecessary-interaction ratio
//! (minority-hotspot visits) and the bag-of-hotspots distance to the
//! dataset's cluster center.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;
use crate::records::{SessionSet, TrialKey};
use crate::segmentation::HotspotRegistry;
use crate::stats::average_ranks;

/// One trial viewed as an ordered sequence of hotspot interactions with
/// per-unit feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub key: TrialKey,
    pub hotspot_sequence: Vec<u32>,
    /// One vector per unit, parallel to `hotspot_sequence`.
    pub features: Vec<FeatureVector>,
}

impl Experience {
    pub fn contains(&self, hotspot: u32) -> bool {
        self.hotspot_sequence.contains(&hotspot)
    }

    /// Mean value of a feature over all visits to a hotspot.
    pub fn feature_at(&self, hotspot: u32, name: &str) -> Option<f64> {
        let values: Vec<f64> = self
            .features
            .iter()
            .filter(|fv| fv.hotspot_id == hotspot)
            .filter_map(|fv| fv.value(name))
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }

    /// Occurrence count per hotspot id, with indices 0..dim covering ids 1..=dim.
    pub fn bag_of_hotspots(&self, dim: usize) -> Vec<f64> {
        let mut bag = vec![0.0; dim];
        for &h in &self.hotspot_sequence {
            if h >= 1 && (h as usize) <= dim {
                bag[h as usize - 1] += 1.0;
            }
        }
        bag
    }
}

/// Which hotspots vote during selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HotspotMode {
    /// Every hotspot occurring in any experience.
    All,
    /// Only the listed (difficult) hotspots.
    Difficult(Vec<u32>),
}

/// Configuration of the selection algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeConfig {
    /// Names of the top skill-correlated features to rank with.
    pub feature_set: Vec<String>,
    /// Per-feature weights; when absent, |R| from the correlation table,
    /// normalized to sum 1.
    pub weights: Option<Vec<f64>>,
    /// Experiences each voter contributes to the pool.
    pub pool_size_n: usize,
    /// Prototypes to select.
    pub select_q: usize,
    pub hotspot_mode: HotspotMode,
    /// Adds the two global voters (accuracy and representativeness).
    pub use_global: bool,
    /// Occurrence fraction below which a hotspot counts as minority.
    pub majority_threshold: f64,
}

impl Default for PrototypeConfig {
    fn default() -> Self {
        PrototypeConfig {
            feature_set: Vec::new(),
            weights: None,
            pool_size_n: 5,
            select_q: 3,
            hotspot_mode: HotspotMode::All,
            use_global: false,
            majority_threshold: 0.30,
        }
    }
}

/// Ranks of one experience at one hotspot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub hotspot_id: u32,
    pub experience: TrialKey,
    /// Per-feature ranks, parallel to the configured feature set.
    pub feature_ranks: Vec<f64>,
    /// Weighted mean of the per-feature ranks.
    pub weighted_mean_rank: f64,
    /// Rank of the experience among all experiences containing the hotspot.
    pub hotspot_rank: f64,
}

/// All per-hotspot rankings produced during selection.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankTable {
    pub features: Vec<String>,
    pub entries: Vec<RankEntry>,
}

/// Outcome of prototype selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// The candidate pool as a multiset, in voter order.
    pub pool: Vec<TrialKey>,
    /// Pool occurrence count per experience.
    pub occurrence: BTreeMap<TrialKey, usize>,
    /// The q selected prototypes, best first.
    pub selected: Vec<TrialKey>,
    pub ranks: RankTable,
}

/// Whether larger or smaller feature values indicate higher skill.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Larger value = higher skill (positive correlation to skill).
    Positive,
    /// Smaller value = higher skill (negative correlation to skill).
    Negative,
}

impl Direction {
    pub fn from_coefficient(r: f64) -> Self {
        if r < 0.0 {
            Direction::Negative
        } else {
            Direction::Positive
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PrototypeError {
    #[error("no experience contains hotspot {0}")]
    NoOccurrence(u32),
    #[error("need at least {need} experiences, got {got}")]
    InsufficientExperiences { need: usize, got: usize },
    #[error("feature {0} is not in the correlation table")]
    UnknownFeature(String),
    #[error("no difficulty ratings present")]
    MissingRatings,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Rank the experiences containing `hotspot` by one feature.
///
/// Returns (experience index, rank) pairs; rank 1 is the most skilled and
/// ties share the average rank. With a negative skill correlation smaller
/// values rank better, and vice versa.
pub fn rank_by_feature(
    experiences: &[Experience],
    hotspot: u32,
    feature: &str,
    direction: Direction,
) -> Result<Vec<(usize, f64)>, PrototypeError> {
    let members: Vec<usize> = (0..experiences.len())
        .filter(|&i| experiences[i].contains(hotspot))
        .collect();
    if members.is_empty() {
        return Err(PrototypeError::NoOccurrence(hotspot));
    }
    let values: Vec<f64> = members
        .iter()
        .map(|&i| {
            let v = experiences[i].feature_at(hotspot, feature).unwrap_or(0.0);
            match direction {
                Direction::Negative => v,
                Direction::Positive => -v,
            }
        })
        .collect();
    let ranks = average_ranks(&values);
    Ok(members.into_iter().zip(ranks).collect())
}

/// The fraction of an experience's interactions that touch minority
/// hotspots, i.e. hotspots occurring in fewer than `threshold` of all
/// experiences per the registry counts.
pub fn unnecessary_ratio(e: &Experience, registry: &HotspotRegistry, threshold: f64) -> f64 {
    if e.hotspot_sequence.is_empty() {
        return 0.0;
    }
    let cutoff = threshold * registry.total_experiences as f64;
    let minority = e
        .hotspot_sequence
        .iter()
        .filter(|&&h| {
            registry
                .get(h)
                .map(|spot| (spot.occurrence_count as f64) < cutoff)
                .unwrap_or(true)
        })
        .count();
    minority as f64 / e.hotspot_sequence.len() as f64
}

/// Euclidean distance of each experience's bag-of-hotspots vector to the
/// componentwise mean bag; smaller means more representative.
pub fn representativeness(experiences: &[Experience]) -> Result<Vec<f64>, PrototypeError> {
    if experiences.len() < 2 {
        return Err(PrototypeError::InsufficientExperiences {
            need: 2,
            got: experiences.len(),
        });
    }
    let dim = experiences
        .iter()
        .flat_map(|e| e.hotspot_sequence.iter())
        .max()
        .copied()
        .unwrap_or(0) as usize;
    let bags: Vec<Vec<f64>> = experiences.iter().map(|e| e.bag_of_hotspots(dim)).collect();
    let mut center = vec![0.0; dim];
    for bag in &bags {
        for (c, b) in center.iter_mut().zip(bag) {
            *c += b;
        }
    }
    for c in center.iter_mut() {
        *c /= bags.len() as f64;
    }
    Ok(bags
        .iter()
        .map(|bag| {
            bag.iter()
                .zip(&center)
                .map(|(b, c)| (b - c) * (b - c))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Hotspots whose mean difficulty rating over all users and trials reaches
/// `threshold`, ascending by id. Steps are identified with hotspot ids.
pub fn difficult_hotspots(set: &SessionSet, threshold: f64) -> Result<Vec<u32>, PrototypeError> {
    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for trial in &set.trials {
        for rating in &trial.ratings {
            let entry = sums.entry(rating.step_index).or_insert((0.0, 0));
            entry.0 += rating.score as f64;
            entry.1 += 1;
        }
    }
    if sums.is_empty() {
        return Err(PrototypeError::MissingRatings);
    }
    Ok(sums
        .into_iter()
        .filter(|(_, (sum, count))| sum / *count as f64 >= threshold)
        .map(|(id, _)| id)
        .collect())
}

/// Select the q most skilled experiences.
///
/// Per voting hotspot, experiences are ranked by the weighted mean of their
/// per-feature ranks and the top n enter the pool (a multiset). With
/// `use_global`, the unnecessary-interaction ratio and the
/// representativeness distance act as two more voters, each contributing
/// its own ascending top n. The final order is pool occurrence count,
/// ties broken by better mean per-hotspot rank, then by experience id.
pub fn select_prototypes(
    experiences: &[Experience],
    config: &PrototypeConfig,
    correlations: &BTreeMap<String, f64>,
) -> Result<SelectionResult, PrototypeError> {
    if config.feature_set.is_empty() {
        return Err(PrototypeError::InvalidConfig(
            "feature_set must be nonempty".into(),
        ));
    }
    if config.pool_size_n < 1 || config.select_q < 1 {
        return Err(PrototypeError::InvalidConfig(
            "pool_size_n and select_q must be >= 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&config.majority_threshold) || config.majority_threshold <= 0.0 {
        return Err(PrototypeError::InvalidConfig(
            "majority_threshold must be in (0, 1)".into(),
        ));
    }
    if experiences.len() < config.select_q {
        return Err(PrototypeError::InsufficientExperiences {
            need: config.select_q,
            got: experiences.len(),
        });
    }

    let coefficients: Vec<f64> = config
        .feature_set
        .iter()
        .map(|name| {
            correlations
                .get(name)
                .copied()
                .ok_or_else(|| PrototypeError::UnknownFeature(name.clone()))
        })
        .collect::<Result<_, _>>()?;
    let directions: Vec<Direction> = coefficients
        .iter()
        .map(|&r| Direction::from_coefficient(r))
        .collect();
    let weights = resolve_weights(config, &coefficients)?;

    let voting_hotspots: Vec<u32> = {
        let mut present: Vec<u32> = experiences
            .iter()
            .flat_map(|e| e.hotspot_sequence.iter().copied())
            .collect();
        present.sort_unstable();
        present.dedup();
        match &config.hotspot_mode {
            HotspotMode::All => present,
            HotspotMode::Difficult(ids) => {
                let mut ids = ids.clone();
                ids.sort_unstable();
                ids.dedup();
                ids.retain(|id| present.contains(id));
                ids
            }
        }
    };

    let mut pool: Vec<usize> = Vec::new();
    let mut rank_table = RankTable {
        features: config.feature_set.clone(),
        entries: Vec::new(),
    };
    // Sum and count of per-hotspot ranks per experience, for tie-breaking.
    let mut rank_sums: Vec<(f64, usize)> = vec![(0.0, 0); experiences.len()];

    for &hotspot in &voting_hotspots {
        let mut per_feature: Vec<Vec<(usize, f64)>> = Vec::with_capacity(config.feature_set.len());
        for (k, name) in config.feature_set.iter().enumerate() {
            per_feature.push(rank_by_feature(experiences, hotspot, name, directions[k])?);
        }
        let members: Vec<usize> = per_feature[0].iter().map(|&(i, _)| i).collect();
        let weighted: Vec<f64> = (0..members.len())
            .map(|m| {
                per_feature
                    .iter()
                    .zip(&weights)
                    .map(|(ranks, w)| w * ranks[m].1)
                    .sum()
            })
            .collect();
        let hotspot_ranks = average_ranks(&weighted);
        for (m, &e) in members.iter().enumerate() {
            rank_sums[e].0 += hotspot_ranks[m];
            rank_sums[e].1 += 1;
            rank_table.entries.push(RankEntry {
                hotspot_id: hotspot,
                experience: experiences[e].key.clone(),
                feature_ranks: per_feature.iter().map(|ranks| ranks[m].1).collect(),
                weighted_mean_rank: weighted[m],
                hotspot_rank: hotspot_ranks[m],
            });
        }
        // Top n into the pool: best hotspot rank first, id breaking ties.
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.sort_by(|&a, &b| {
            hotspot_ranks[a]
                .partial_cmp(&hotspot_ranks[b])
                .expect("finite ranks")
                .then_with(|| {
                    experiences[members[a]]
                        .key
                        .cmp(&experiences[members[b]].key)
                })
        });
        pool.extend(order.iter().take(config.pool_size_n).map(|&m| members[m]));
    }

    if config.use_global {
        // Occurrence counts derived from the experiences themselves; this
        // matches a registry built over the same trials.
        let total = experiences.len();
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for e in experiences {
            let mut seen: Vec<u32> = e.hotspot_sequence.clone();
            seen.sort_unstable();
            seen.dedup();
            for h in seen {
                *counts.entry(h).or_insert(0) += 1;
            }
        }
        let cutoff = config.majority_threshold * total as f64;
        let ratios: Vec<f64> = experiences
            .iter()
            .map(|e| {
                if e.hotspot_sequence.is_empty() {
                    return 0.0;
                }
                let minority = e
                    .hotspot_sequence
                    .iter()
                    .filter(|h| (counts.get(h).copied().unwrap_or(0) as f64) < cutoff)
                    .count();
                minority as f64 / e.hotspot_sequence.len() as f64
            })
            .collect();
        push_global_voter(&mut pool, experiences, &ratios, config.pool_size_n);

        let distances = representativeness(experiences)?;
        push_global_voter(&mut pool, experiences, &distances, config.pool_size_n);
    }

    let mut occurrence_by_index: BTreeMap<usize, usize> = BTreeMap::new();
    for &e in &pool {
        *occurrence_by_index.entry(e).or_insert(0) += 1;
    }

    let mut support: Vec<usize> = occurrence_by_index.keys().copied().collect();
    support.sort_by(|&a, &b| {
        let count = occurrence_by_index[&b].cmp(&occurrence_by_index[&a]);
        let mean = |i: usize| {
            if rank_sums[i].1 == 0 {
                f64::INFINITY
            } else {
                rank_sums[i].0 / rank_sums[i].1 as f64
            }
        };
        count
            .then_with(|| mean(a).partial_cmp(&mean(b)).expect("finite mean ranks"))
            .then_with(|| experiences[a].key.cmp(&experiences[b].key))
    });

    Ok(SelectionResult {
        pool: pool.iter().map(|&i| experiences[i].key.clone()).collect(),
        occurrence: occurrence_by_index
            .iter()
            .map(|(&i, &c)| (experiences[i].key.clone(), c))
            .collect(),
        selected: support
            .into_iter()
            .take(config.select_q)
            .map(|i| experiences[i].key.clone())
            .collect(),
        ranks: rank_table,
    })
}

fn resolve_weights(
    config: &PrototypeConfig,
    coefficients: &[f64],
) -> Result<Vec<f64>, PrototypeError> {
    let raw: Vec<f64> = match &config.weights {
        Some(w) => {
            if w.len() != config.feature_set.len() {
                return Err(PrototypeError::InvalidConfig(format!(
                    "{} weights for {} features",
                    w.len(),
                    config.feature_set.len()
                )));
            }
            if w.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(PrototypeError::InvalidConfig(
                    "weights must be positive".into(),
                ));
            }
            w.clone()
        }
        None => coefficients.iter().map(|r| r.abs()).collect(),
    };
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        // All-zero correlations: fall back to uniform weights.
        let k = raw.len() as f64;
        return Ok(raw.iter().map(|_| 1.0 / k).collect());
    }
    Ok(raw.iter().map(|w| w / sum).collect())
}

/// Rank ascending by value (smaller is better) and push the top n.
fn push_global_voter(pool: &mut Vec<usize>, experiences: &[Experience], values: &[f64], n: usize) {
    let mut order: Vec<usize> = (0..experiences.len()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("finite global feature values")
            .then_with(|| experiences[a].key.cmp(&experiences[b].key))
    });
    pool.extend(order.into_iter().take(n));
}
