//! Property tests for the invariants the library promises.

use proptest::prelude::*;

use opskill::evaluation::{fscore, ManualSpec};
use opskill::features::{series_stats, DistanceSeries, FeatureVector};
use opskill::prototype::{select_prototypes, Experience, PrototypeConfig};
use opskill::records::{CameraIntrinsics, HandSample, TouchEvent, TrialKey, TrialRecord};
use opskill::segmentation::{segment_units, Hotspot, HotspotRegistry, SegmentationParams};
use opskill::stats::{deviations, pearson, spearman, trend, TrendInput};
use opskill::taskmodel::TaskModel;

fn series_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    // Sorted times with positive steps, grid-valued distances (ties likely).
    prop::collection::vec((0.01f64..0.5, 0u32..20), 2..60).prop_map(|steps| {
        let mut t = Vec::with_capacity(steps.len());
        let mut d = Vec::with_capacity(steps.len());
        let mut clock = 0.0;
        for (dt, grid) in steps {
            clock += dt;
            t.push(clock);
            d.push(grid as f64 / 2.0);
        }
        (t, d)
    })
}

proptest! {
    #[test]
    fn series_stats_scale_equivariance((t, d) in series_strategy(), c in 0.1f64..50.0) {
        let duration = t.last().unwrap() - t[0] + 1.0;
        let base = series_stats(&DistanceSeries { t: t.clone(), d: d.clone() }, duration).unwrap();
        let scaled_d: Vec<f64> = d.iter().map(|x| x * c).collect();
        let scaled = series_stats(&DistanceSeries { t, d: scaled_d }, duration).unwrap();
        prop_assert!((scaled.velocity - c * base.velocity).abs() <= 1e-9 * (1.0 + c * base.velocity.abs()));
        prop_assert!((scaled.variance - c * c * base.variance).abs() <= 1e-9 * (1.0 + c * c * base.variance));
        prop_assert_eq!(scaled.frequency, base.frequency);
        prop_assert!((scaled.mean_distance - c * base.mean_distance).abs() <= 1e-9 * (1.0 + c * base.mean_distance));
    }

    #[test]
    fn series_stats_time_shift_invariance((t, d) in series_strategy(), shift in -100.0f64..100.0) {
        let duration = t.last().unwrap() - t[0] + 1.0;
        let base = series_stats(&DistanceSeries { t: t.clone(), d: d.clone() }, duration).unwrap();
        let shifted_t: Vec<f64> = t.iter().map(|x| x + shift).collect();
        let shifted = series_stats(&DistanceSeries { t: shifted_t, d }, duration).unwrap();
        prop_assert!((shifted.velocity - base.velocity).abs() <= 1e-6 * (1.0 + base.velocity.abs()));
        prop_assert_eq!(shifted.variance, base.variance);
        prop_assert_eq!(shifted.frequency, base.frequency);
    }

    #[test]
    fn frequency_times_duration_is_integral((t, d) in series_strategy(), duration in 0.5f64..30.0) {
        let stats = series_stats(&DistanceSeries { t, d }, duration).unwrap();
        let count = stats.frequency * duration;
        prop_assert!((count - count.round()).abs() < 1e-6, "f*T = {count}");
    }

    #[test]
    fn spearman_is_monotone_invariant(values in prop::collection::vec(0u32..15, 3..30)) {
        let x: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = (0..x.len()).map(|i| ((i * 7) % 13) as f64).collect();
        prop_assume!(x.iter().any(|&v| v != x[0]));
        let base = spearman(&x, &y).unwrap();
        // exp is strictly increasing and keeps ties exact on a small grid.
        let transformed: Vec<f64> = x.iter().map(|&v| v.exp()).collect();
        let same = spearman(&transformed, &y).unwrap();
        prop_assert!((base - same).abs() < 1e-12);
    }

    #[test]
    fn pearson_affine_and_sign_rules(values in prop::collection::vec(-50.0f64..50.0, 3..30), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let y: Vec<f64> = (0..values.len()).map(|i| (i as f64).sin() * 10.0).collect();
        prop_assume!(values.iter().any(|&v| (v - values[0]).abs() > 1e-6));
        let base = pearson(&values, &y).unwrap();
        let affine: Vec<f64> = values.iter().map(|&v| a * v + b).collect();
        prop_assert!((pearson(&affine, &y).unwrap() - base).abs() < 1e-9);
        let negated: Vec<f64> = values.iter().map(|&v| -v).collect();
        prop_assert!((pearson(&negated, &y).unwrap() + base).abs() < 1e-9);
    }

    #[test]
    fn trend_of_reversed_sequence_negates(values in prop::collection::vec(1.0f64..100.0, 2..20)) {
        let forward = trend(&TrendInput { user_id: "u".into(), values: values.clone() }).unwrap();
        let mut reversed = values;
        reversed.reverse();
        let backward = trend(&TrendInput { user_id: "u".into(), values: reversed }).unwrap();
        prop_assert!((forward + backward).abs() < 1e-9 * (1.0 + forward.abs()));
    }

    #[test]
    fn intra_deviation_is_scale_free(values in prop::collection::vec(1.0f64..100.0, 1..15), c in 0.1f64..20.0) {
        let mut map = std::collections::BTreeMap::new();
        map.insert("a".to_string(), values.clone());
        let base = deviations(&map).unwrap().intra_by_user["a"];
        let mut scaled = std::collections::BTreeMap::new();
        scaled.insert("a".to_string(), values.iter().map(|v| v * c).collect::<Vec<_>>());
        let after = deviations(&scaled).unwrap().intra_by_user["a"];
        prop_assert!((base - after).abs() < 1e-9 * (1.0 + base));
    }

    #[test]
    fn fscore_is_permutation_invariant(mut selected in prop::collection::vec(1u32..8, 1..15), swaps in prop::collection::vec((0usize..15, 0usize..15), 0..10)) {
        let manual = ManualSpec::new("t", vec![vec![1, 2, 3, 2, 5], vec![2, 1, 3, 2, 5]]);
        let base = fscore(&selected, &manual).unwrap();
        for (i, j) in swaps {
            let (i, j) = (i % selected.len(), j % selected.len());
            selected.swap(i, j);
        }
        let shuffled = fscore(&selected, &manual).unwrap();
        prop_assert_eq!(base.recall, shuffled.recall);
        prop_assert_eq!(base.precision, shuffled.precision);
        prop_assert_eq!(base.fscore, shuffled.fscore);
    }

    #[test]
    fn alignment_cost_is_bounded(baseline in prop::collection::vec(1u32..6, 1..8), sequence in prop::collection::vec(1u32..9, 0..12)) {
        let model = TaskModel::build_baseline(std::slice::from_ref(&baseline)).unwrap();
        let alignment = model.align(&sequence);
        prop_assert!(alignment.cost <= 2 * sequence.len() as u32);
        // A model aligned against its own source sequence costs nothing.
        prop_assert_eq!(model.align(&baseline).cost, 0);
    }
}

fn touch(t_start: f64, t_end: f64, hotspot: u32) -> TouchEvent {
    TouchEvent {
        t_start,
        t_end,
        x: hotspot as f64 * 100.0,
        y: 50.0,
        hotspot_id: Some(hotspot),
    }
}

proptest! {
    #[test]
    fn units_partition_and_cover_touches(
        gaps in prop::collection::vec((0.1f64..4.0, 0.3f64..3.0, 1u32..4), 1..12),
        hand_seed in 0u64..1000,
    ) {
        // Random labeled touch stream with positive gaps.
        let mut touches = Vec::new();
        let mut clock = 0.0;
        for &(gap, duration, hotspot) in &gaps {
            clock += gap;
            touches.push(touch(clock, clock + duration, hotspot));
            clock += duration;
        }
        // Hand samples on a sparse grid with pseudo-random visibility.
        let hand: Vec<HandSample> = (0..(clock as usize * 4 + 4))
            .map(|i| HandSample {
                t: i as f64 * 0.25,
                x: 10.0,
                y: 10.0,
                visible: (i as u64).wrapping_mul(hand_seed.wrapping_add(7)) % 3 != 0,
            })
            .collect();
        let trial = TrialRecord {
            user_id: "u".into(),
            task_id: "t".into(),
            trial_index: 1,
            intrinsics: CameraIntrinsics {
                image_width_px: 1280.0,
                image_height_px: 720.0,
                sensor_width_mm: 5.12,
                sensor_height_mm: 2.88,
                focal_mm: 1.93,
            },
            gaze: vec![],
            hand,
            head_motion: vec![],
            touches: touches.clone(),
            ratings: vec![],
        };
        let registry = HotspotRegistry {
            hotspots: (1..4)
                .map(|id| Hotspot {
                    id,
                    centroid_x: id as f64 * 100.0,
                    centroid_y: 50.0,
                    radius: 1.0,
                    occurrence_count: 1,
                })
                .collect(),
            total_experiences: 1,
        };
        let units = segment_units(&trial, &registry, &SegmentationParams::default());

        // Periods tile the unit exactly and units never overlap.
        for u in &units {
            prop_assert_eq!(u.g.end, u.a.start);
            prop_assert_eq!(u.a.end, u.o.start);
            prop_assert!(u.o.end > u.o.start);
            let parts = u.g.duration() + u.a.duration() + u.o.duration();
            prop_assert!((parts - (u.o.end - u.g.start)).abs() < 1e-12);
        }
        for pair in units.windows(2) {
            prop_assert!(pair[0].o.end <= pair[1].g.start + 1e-12);
        }
        // Every touch lands in exactly one operating period.
        for t in &touches {
            let covering = units
                .iter()
                .filter(|u| u.o.start <= t.t_start && t.t_end <= u.o.end + 1e-12)
                .count();
            prop_assert_eq!(covering, 1);
        }
    }

    #[test]
    fn single_voter_selection_is_argmin(values in prop::collection::vec(0.0f64..100.0, 2..10)) {
        // One hotspot, one negative-correlated feature, n = all, q = 1:
        // the selected experience is the argmin with id tie-break.
        let experiences: Vec<Experience> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let user = format!("e{i:02}");
                let mut fv = FeatureVector::zeroed(&user, "t", 1, 1, 1);
                fv.total_duration = v;
                Experience {
                    key: TrialKey { user_id: user, task_id: "t".into(), trial_index: 1 },
                    hotspot_sequence: vec![1],
                    features: vec![fv],
                }
            })
            .collect();
        let config = PrototypeConfig {
            feature_set: vec!["dur_total".into()],
            pool_size_n: experiences.len(),
            select_q: 1,
            ..PrototypeConfig::default()
        };
        let mut correlations = std::collections::BTreeMap::new();
        correlations.insert("dur_total".to_string(), -1.0);
        let result = select_prototypes(&experiences, &config, &correlations).unwrap();
        let argmin = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(a.0.cmp(&b.0)))
            .unwrap()
            .0;
        prop_assert_eq!(&result.selected[0], &experiences[argmin].key);
    }
}
