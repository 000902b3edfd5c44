//! On-disk dataset round-trips: many files, path-order independence.

use std::path::PathBuf;

use opskill::records::{load_dataset, serialize_trial, RecordError};
use opskill::synth::{default_task_1, generate_dataset, SynthSpec};

fn scratch(name: &str) -> PathBuf {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn loads_144_files_in_any_path_order() {
    let spec = SynthSpec {
        users: 12,
        trials_per_user: 12,
        tasks: vec![default_task_1()],
        gaze_noise_px: 2.0,
        seed: 1212,
        ..SynthSpec::default()
    };
    let set = generate_dataset(&spec);
    assert_eq!(set.trials.len(), 144);

    let dir = scratch("dataset_io");
    let mut paths: Vec<PathBuf> = Vec::new();
    for (i, trial) in set.trials.iter().enumerate() {
        let path = dir.join(format!("{i:03}.json"));
        std::fs::write(&path, serialize_trial(trial)).unwrap();
        paths.push(path);
    }

    let loaded = load_dataset(&paths).unwrap();
    assert_eq!(loaded.trials.len(), 144);
    assert_eq!(loaded.trials, set.trials); // field-exact round-trip

    // Reversed path order produces the identical set.
    let mut reversed = paths.clone();
    reversed.reverse();
    let again = load_dataset(&reversed).unwrap();
    assert_eq!(again, loaded);
}

#[test]
fn manifest_files_resolve_relative_paths() {
    let spec = SynthSpec {
        users: 2,
        trials_per_user: 2,
        tasks: vec![default_task_1()],
        experts_per_task: 0,
        ..SynthSpec::default()
    };
    let set = generate_dataset(&spec);
    let dir = scratch("dataset_manifest");
    let mut lines = String::from("# sessions\n");
    for (i, trial) in set.trials.iter().enumerate() {
        let name = format!("{i}.json");
        std::fs::write(dir.join(&name), serialize_trial(trial)).unwrap();
        lines.push_str(&name);
        lines.push('\n');
    }
    let manifest = dir.join("manifest.txt");
    std::fs::write(&manifest, lines).unwrap();
    let paths = opskill::records::resolve_dataset_paths(&manifest).unwrap();
    assert_eq!(paths.len(), 4);
    let loaded = load_dataset(&paths).unwrap();
    assert_eq!(loaded.trials, set.trials);
}

#[test]
fn duplicate_trials_across_files_are_rejected() {
    let spec = SynthSpec {
        users: 1,
        trials_per_user: 1,
        tasks: vec![default_task_1()],
        experts_per_task: 0,
        ..SynthSpec::default()
    };
    let set = generate_dataset(&spec);
    let dir = scratch("dataset_dup");
    let a = dir.join("a.json");
    let b = dir.join("b.json");
    std::fs::write(&a, serialize_trial(&set.trials[0])).unwrap();
    std::fs::write(&b, serialize_trial(&set.trials[0])).unwrap();
    let err = load_dataset(&[a, b]).unwrap_err();
    assert!(matches!(err, RecordError::DuplicateTrial(_)), "{err}");
}

#[test]
fn parse_errors_carry_the_file_identity() {
    let dir = scratch("dataset_bad");
    let path = dir.join("broken.json");
    std::fs::write(&path, b"{\"user_id\": 3}").unwrap();
    let err = load_dataset(std::slice::from_ref(&path)).unwrap_err();
    match err {
        RecordError::File { path: p, .. } => assert_eq!(p, path),
        other => panic!("expected File error, got {other}"),
    }
}
