//! Synthetic multi-user datasets with planted skill dynamics.
//!
//! The generator plants exactly the structure the pipeline claims to
//! detect, so tests have analytic expectations: per-trial durations decay
//! multiplicatively (total OU duration is decay-exact, only the G/A/O
//! split jitters), gaze and head noise shrink with the same factor,
//! unnecessary minority-hotspot interactions are inserted at a
//! trial-decaying error rate, and the final trials of the first few users
//! are planted experts: error-free, jitter-free, and strictly fastest.
//! Know-how difficulty ratings fade over trials while skill-required
//! ratings persist.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evaluation::ManualSpec;
use crate::records::{
    CameraIntrinsics, DifficultyRating, GazeSample, GlobalMotionSample, HandSample, SessionSet,
    TouchEvent, TrialKey, TrialRecord,
};

/// One element of a task script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScriptItem {
    /// A fixed step.
    Step(u32),
    /// Order-changeable steps; any permutation is legal.
    Group(Vec<u32>),
}

/// Difficulty profile of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDifficulty {
    /// Initial rating, 0..=5.
    pub base: f64,
    /// Know-how difficulty fades once learned; skill-required persists.
    pub know_how: bool,
}

/// One task's script, difficulty profile, and minority step ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScript {
    pub task_id: String,
    pub script: Vec<ScriptItem>,
    /// (step id, difficulty) pairs for rated steps.
    pub difficulty: Vec<(u32, StepDifficulty)>,
    /// Hotspot ids used for inserted unnecessary interactions. Step ids
    /// must stay dense from 1 and minority ids follow them, so that touch
    /// clustering relabels hotspots back onto the planted ids.
    pub minority_steps: Vec<u32>,
}

impl TaskScript {
    /// All step ids of the base script, in order.
    pub fn base_sequence(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for item in &self.script {
            match item {
                ScriptItem::Step(id) => out.push(*id),
                ScriptItem::Group(ids) => out.extend(ids),
            }
        }
        out
    }

    /// Expand order-changeable groups into every legal variant.
    pub fn variants(&self) -> Vec<Vec<u32>> {
        let mut variants: Vec<Vec<u32>> = vec![Vec::new()];
        for item in &self.script {
            match item {
                ScriptItem::Step(id) => {
                    for v in variants.iter_mut() {
                        v.push(*id);
                    }
                }
                ScriptItem::Group(ids) => {
                    let perms = permutations(ids);
                    let mut next = Vec::with_capacity(variants.len() * perms.len());
                    for v in &variants {
                        for p in &perms {
                            let mut extended = v.clone();
                            extended.extend(p);
                            next.push(extended);
                        }
                    }
                    variants = next;
                }
            }
        }
        variants
    }
}

fn permutations(items: &[u32]) -> Vec<Vec<u32>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (i, &head) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for tail in permutations(&rest) {
            let mut p = vec![head];
            p.extend(tail);
            out.push(p);
        }
    }
    out
}

/// Generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub users: usize,
    /// Trials per user per task.
    pub trials_per_user: usize,
    pub tasks: Vec<TaskScript>,
    /// Per-trial multiplicative duration factor in (0, 1].
    pub duration_decay: f64,
    /// Total duration of every operational unit at trial 1, seconds.
    pub base_step_duration: f64,
    /// Gaze jitter sigma at trial 1, pixels.
    pub gaze_noise_px: f64,
    /// Head angular velocity sigma at trial 1, deg/s.
    pub head_noise_deg: f64,
    /// Probability of inserting a minority touch after a step at trial 1.
    pub error_rate_initial: f64,
    /// Per-trial multiplicative decay of the error rate.
    pub error_decay: f64,
    /// Relative jitter of the G/A/O split for non-expert trials.
    pub share_jitter: f64,
    /// Relative jitter of noise scales for non-expert trials.
    pub scale_jitter: f64,
    /// The final trials of this many users per task are planted experts.
    pub experts_per_task: usize,
    pub map_width_px: f64,
    pub map_height_px: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users: 12,
            trials_per_user: 6,
            tasks: vec![default_task_1(), default_task_2()],
            duration_decay: 0.85,
            base_step_duration: 6.0,
            gaze_noise_px: 6.0,
            head_noise_deg: 18.0,
            error_rate_initial: 0.35,
            error_decay: 0.6,
            share_jitter: 0.35,
            scale_jitter: 0.3,
            experts_per_task: 3,
            map_width_px: 800.0,
            map_height_px: 600.0,
            sample_rate_hz: 30.0,
            seed: 42,
        }
    }
}

/// An 11-step task with one order-changeable pair, ids 1..=5.
pub fn default_task_1() -> TaskScript {
    TaskScript {
        task_id: "t1".into(),
        script: vec![
            ScriptItem::Group(vec![1, 2]),
            ScriptItem::Step(4),
            ScriptItem::Step(3),
            ScriptItem::Step(4),
            ScriptItem::Step(5),
            ScriptItem::Step(3),
            ScriptItem::Step(5),
            ScriptItem::Step(4),
            ScriptItem::Step(3),
            ScriptItem::Step(4),
        ],
        difficulty: vec![
            (
                1,
                StepDifficulty {
                    base: 1.0,
                    know_how: true,
                },
            ),
            (
                2,
                StepDifficulty {
                    base: 2.0,
                    know_how: true,
                },
            ),
            (
                3,
                StepDifficulty {
                    base: 4.0,
                    know_how: false,
                },
            ),
            (
                4,
                StepDifficulty {
                    base: 2.0,
                    know_how: true,
                },
            ),
            (
                5,
                StepDifficulty {
                    base: 1.0,
                    know_how: false,
                },
            ),
        ],
        minority_steps: vec![6, 7, 8],
    }
}

/// A 5-step task with one order-changeable pair, ids 1..=5.
pub fn default_task_2() -> TaskScript {
    TaskScript {
        task_id: "t2".into(),
        script: vec![
            ScriptItem::Group(vec![2, 1]),
            ScriptItem::Step(3),
            ScriptItem::Step(4),
            ScriptItem::Step(5),
        ],
        difficulty: vec![
            (
                1,
                StepDifficulty {
                    base: 1.0,
                    know_how: true,
                },
            ),
            (
                2,
                StepDifficulty {
                    base: 1.0,
                    know_how: true,
                },
            ),
            (
                3,
                StepDifficulty {
                    base: 3.0,
                    know_how: false,
                },
            ),
            (
                4,
                StepDifficulty {
                    base: 2.0,
                    know_how: false,
                },
            ),
            (
                5,
                StepDifficulty {
                    base: 2.0,
                    know_how: true,
                },
            ),
        ],
        minority_steps: vec![6, 7],
    }
}

/// Planted ground truth emitted next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub manuals: Vec<ManualSpec>,
    /// Trials generated error-free with minimal durations.
    pub experts: Vec<TrialKey>,
}

/// Planted hotspot center for a step id: a strictly x-monotone row, so
/// clustering relabels hotspots back onto the planted ids.
pub fn hotspot_position(id: u32) -> (f64, f64) {
    (
        50.0 + 80.0 * (id as f64 - 1.0),
        300.0 + 40.0 * ((id as f64 - 1.0) % 2.0),
    )
}

/// Generate the full dataset; byte-identical for a fixed spec.
pub fn generate_dataset(spec: &SynthSpec) -> SessionSet {
    let mut trials = Vec::new();
    for (task_index, task) in spec.tasks.iter().enumerate() {
        for user in 1..=spec.users {
            for trial in 1..=spec.trials_per_user {
                trials.push(generate_trial(spec, task, task_index, user, trial));
            }
        }
    }
    SessionSet::new(trials, spec.map_width_px, spec.map_height_px).expect("generated set is valid")
}

/// The planted manuals and expert trial ids for a spec.
pub fn planted_truth(spec: &SynthSpec) -> Truth {
    let manuals = spec
        .tasks
        .iter()
        .map(|task| ManualSpec::new(&task.task_id, task.variants()))
        .collect();
    let mut experts = Vec::new();
    for task in &spec.tasks {
        for user in 1..=spec.experts_per_task.min(spec.users) {
            experts.push(TrialKey {
                user_id: user_id(user),
                task_id: task.task_id.clone(),
                trial_index: spec.trials_per_user as u32,
            });
        }
    }
    Truth { manuals, experts }
}

fn user_id(user: usize) -> String {
    format!("u{user:02}")
}

fn is_expert(spec: &SynthSpec, user: usize, trial: usize) -> bool {
    user <= spec.experts_per_task && trial == spec.trials_per_user
}

/// Distinct speed edge per expert so expert ranks never tie.
fn expert_edge(user: usize) -> f64 {
    0.86 + 0.02 * user as f64
}

fn trial_rng(spec: &SynthSpec, task_index: usize, user: usize, trial: usize) -> ChaCha8Rng {
    let mut h = spec.seed ^ 0x5851_f42d_4c95_7f2d;
    for part in [task_index as u64 + 1, user as u64, trial as u64] {
        h = h.wrapping_mul(0x100_0000_01b3).wrapping_add(part);
        h ^= h >> 31;
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Box-Muller standard normal draw.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn generate_trial(
    spec: &SynthSpec,
    task: &TaskScript,
    task_index: usize,
    user: usize,
    trial: usize,
) -> TrialRecord {
    let mut rng = trial_rng(spec, task_index, user, trial);
    let expert = is_expert(spec, user, trial);
    let decay = spec.duration_decay.powi(trial as i32 - 1);
    let speed = if expert {
        decay * expert_edge(user)
    } else {
        decay
    };
    let unit_duration = spec.base_step_duration * speed;
    let noise_scale = if expert {
        speed
    } else {
        decay * (1.0 + rng.gen_range(-spec.scale_jitter..=spec.scale_jitter))
    };
    let gaze_sigma = spec.gaze_noise_px * noise_scale;
    let head_sigma = spec.head_noise_deg * noise_scale;
    // Touch and hand scatter follow the gaze noise knob so a zero-noise
    // spec generates fully repeatable tracks.
    let touch_jitter = (spec.gaze_noise_px / 2.0).min(3.0);
    let hand_jitter = (spec.gaze_noise_px / 3.0).min(2.0);

    // Step sequence: permuted groups, plus inserted minority interactions.
    let mut sequence = Vec::new();
    let error_rate =
        (spec.error_rate_initial * spec.error_decay.powi(trial as i32 - 1)).clamp(0.0, 1.0);
    for item in &task.script {
        match item {
            ScriptItem::Step(id) => sequence.push(*id),
            ScriptItem::Group(ids) => {
                let mut ids = ids.clone();
                ids.shuffle(&mut rng);
                sequence.extend(ids);
            }
        }
        if !expert && !task.minority_steps.is_empty() && rng.gen_bool(error_rate) {
            sequence.push(task.minority_steps[rng.gen_range(0..task.minority_steps.len())]);
        }
    }

    let dt = 1.0 / spec.sample_rate_hz;
    let intrinsics = CameraIntrinsics {
        image_width_px: 1280.0,
        image_height_px: 720.0,
        sensor_width_mm: 5.12,
        sensor_height_mm: 2.88,
        focal_mm: 1.93,
    };

    let mut gaze = Vec::new();
    let mut hand = Vec::new();
    let mut head_motion = Vec::new();
    let mut touches = Vec::new();

    let clamp_x = |x: f64| x.clamp(0.5, spec.map_width_px - 0.5);
    let clamp_y = |y: f64| y.clamp(0.5, spec.map_height_px - 0.5);

    let mut t = 0.0;
    for &step in &sequence {
        let (cx, cy) = hotspot_position(step);
        // The unit's total duration is decay-exact; only the split jitters.
        let (g_share, a_share) = if expert {
            (0.35, 0.20)
        } else {
            (
                0.35 * (1.0 + rng.gen_range(-spec.share_jitter..=spec.share_jitter)),
                0.20 * (1.0 + rng.gen_range(-spec.share_jitter..=spec.share_jitter)),
            )
        };
        let g_dur = unit_duration * g_share;
        let a_dur = unit_duration * a_share;
        let g_start = t;
        let a_start = t + g_dur;
        let o_start = a_start + a_dur;
        let o_end = t + unit_duration;

        touches.push(TouchEvent {
            t_start: o_start,
            t_end: o_end,
            x: clamp_x(cx + touch_jitter * rng.gen_range(-1.0..=1.0)),
            y: clamp_y(cy + touch_jitter * rng.gen_range(-1.0..=1.0)),
            hotspot_id: None,
        });

        // Gaze: parked near the step's outcome region with planted jitter.
        let mut sample_t = g_start;
        while sample_t < o_end {
            let (ox, oy) = if sample_t < a_start {
                (55.0, -38.0)
            } else if sample_t < o_start {
                (30.0, -20.0)
            } else {
                (70.0, -45.0)
            };
            gaze.push(GazeSample {
                t: sample_t,
                x: clamp_x(cx + ox + gaze_sigma * gauss(&mut rng)),
                y: clamp_y(cy + oy + gaze_sigma * gauss(&mut rng)),
                valid: true,
            });
            sample_t += dt;
        }

        // Hand: hidden during G, approaching during A, on the hotspot in O.
        let rest = (clamp_x(cx - 80.0), clamp_y(cy + 60.0));
        let mut sample_t = g_start;
        while sample_t < o_end {
            let visible = sample_t >= a_start;
            let (hx, hy) = if !visible {
                (0.0, 0.0)
            } else if sample_t < o_start {
                let w = ((sample_t - a_start) / a_dur.max(dt)).min(1.0);
                (rest.0 + (cx - rest.0) * w, rest.1 + (cy - rest.1) * w)
            } else {
                (
                    clamp_x(cx + hand_jitter * rng.gen_range(-1.0..=1.0)),
                    clamp_y(cy + hand_jitter * rng.gen_range(-1.0..=1.0)),
                )
            };
            hand.push(HandSample {
                t: sample_t,
                x: hx,
                y: hy,
                visible,
            });
            sample_t += dt;
        }

        // Head: white angular-velocity noise with the planted sigma,
        // encoded so the extractor recovers it exactly.
        let mut sample_t = g_start;
        while sample_t < o_end {
            let to_pixels = |omega: f64, image: f64, sensor: f64| {
                (omega * dt).to_radians().tan() * image * intrinsics.focal_mm / sensor
            };
            head_motion.push(GlobalMotionSample {
                t: sample_t,
                vx: to_pixels(
                    head_sigma * gauss(&mut rng),
                    intrinsics.image_width_px,
                    intrinsics.sensor_width_mm,
                ),
                vy: to_pixels(
                    head_sigma * gauss(&mut rng),
                    intrinsics.image_height_px,
                    intrinsics.sensor_height_mm,
                ),
            });
            sample_t += dt;
        }

        t = o_end;
    }

    // Ratings: know-how difficulty fades with trials, skill-required stays.
    let ratings = task
        .difficulty
        .iter()
        .map(|&(step_index, d)| {
            let value = if d.know_how {
                d.base * 0.55f64.powi(trial as i32 - 1)
            } else {
                d.base
            };
            DifficultyRating {
                step_index,
                score: (value.round().clamp(0.0, 5.0)) as u8,
            }
        })
        .collect();

    TrialRecord {
        user_id: user_id(user),
        task_id: task.task_id.clone(),
        trial_index: trial as u32,
        intrinsics,
        gaze,
        hand,
        head_motion,
        touches,
        ratings,
    }
}
