//! Batch front end for the operation-record analytics pipeline.
//!
//! Every command reads session files plus an optional JSON config and
//! writes its artifacts under `--out`; outputs are deterministic for fixed
//! inputs, so runs are reproducible byte for byte.

mod config;
mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use opskill::evaluation::{full_method_grid, ManualSpec};
use opskill::features::{gaze_head_correlation, gaze_heat_grid, FEATURE_NAMES};
use opskill::pipeline::{
    analyze, build_models, evaluate, select_all_tasks, Analysis, TaskSelection,
};
use opskill::records::{
    load_dataset, resolve_dataset_paths, serialize_trial, validate, SessionSet,
};
use opskill::stats::{deviations, trend, TrendInput};
use opskill::synth::{generate_dataset, planted_truth, SynthSpec, Truth};

use config::PipelineConfig;
use output::{fmt_f64, write_atomic, Csv};

#[derive(Parser)]
#[command(
    name = "opskill",
    version,
    about = "Skill analytics and task modeling for machine-operation records"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelFormat {
    Json,
    Dot,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted skill dynamics.
    Synth {
        /// Generator spec JSON; defaults to the built-in two-task spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a dataset, reporting diagnostics.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect hotspots and export the registry and occurrence histogram.
    Hotspots {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment trials into operational units.
    Segment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract per-unit behavioral features and gaze exports.
    Features {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trend, deviation, and correlation tables.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-hotspot experience rank tables.
    Rank {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select prototype experiences per task.
    Prototype {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build and export the integrated task model.
    Model {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Export format; both JSON and DOT when omitted.
        #[arg(long)]
        format: Option<ModelFormat>,
    },
    /// Score the method grid against the ground-truth manual.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole pipeline: every command's artifacts in one directory.
    Report {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { spec, out, seed } => cmd_synth(spec.as_deref(), &out, seed),
        Command::Ingest { data, out } => cmd_ingest(&data, out.as_deref()),
        Command::Hotspots { data, config, out } => {
            let ctx = CommandContext::load(&data, config.as_deref())?;
            cmd_hotspots(&ctx, &out)
        }
        Command::Segment { data, config, out } => {
            let ctx = CommandContext::load(&data, config.as_deref())?;
            cmd_segment(&ctx, &out)
        }
        Command::Features { data, config, out } => {
            let ctx = CommandContext::load(&data, config.as_deref())?;
            cmd_features(&ctx, &out)
        }
        Command::Stats { data, config, out } => {
            let ctx = CommandContext::load(&data, config.as_deref())?;
            cmd_stats(&ctx, &out)
        }
        Command::Rank { data, config, out } => {
            let ctx = CommandContext::load(&data, config.as_deref())?;
            cmd_rank(&ctx, &out)
        }
        Command::Prototype { data, config, out } => {
            let ctx = CommandContext::load(&data, config.as_deref())?;
            cmd_prototype(&ctx, &out)
        }
        Command::Model {
            data,
            config,
            out,
            format,
        } => {
            let ctx = CommandContext::load(&data, config.as_deref())?;
            cmd_model(&ctx, &out, format)
        }
        Command::Eval { data, config, out } => {
            let ctx = CommandContext::load(&data, config.as_deref())?;
            cmd_eval(&ctx, &out)
        }
        Command::Report { data, config, out } => {
            let ctx = CommandContext::load(&data, config.as_deref())?;
            cmd_hotspots(&ctx, &out)?;
            cmd_segment(&ctx, &out)?;
            cmd_features(&ctx, &out)?;
            cmd_stats(&ctx, &out)?;
            cmd_rank(&ctx, &out)?;
            cmd_prototype(&ctx, &out)?;
            cmd_model(&ctx, &out, None)?;
            cmd_eval(&ctx, &out)?;
            Ok(())
        }
    }
}

/// Shared command context: loaded data, config, and the analysis.
struct CommandContext {
    data_path: PathBuf,
    config: PipelineConfig,
    set: SessionSet,
    analysis: Analysis,
}

impl CommandContext {
    fn load(data: &Path, config_path: Option<&Path>) -> Result<CommandContext> {
        let config = PipelineConfig::load(config_path)?;
        let paths = resolve_dataset_paths(data)
            .with_context(|| format!("resolving dataset {}", data.display()))?;
        if paths.is_empty() {
            bail!("no session files found under {}", data.display());
        }
        let set = load_dataset(&paths)?;
        let analysis = analyze(&set, &config.segmentation)?;
        Ok(CommandContext {
            data_path: data.to_path_buf(),
            config,
            set,
            analysis,
        })
    }

    fn selections(&self) -> Result<Vec<TaskSelection>> {
        Ok(select_all_tasks(
            &self.analysis,
            &self.set,
            &self.config.selection,
        )?)
    }

    fn manuals(&self) -> Result<Vec<ManualSpec>> {
        let path = match &self.config.manual_path {
            Some(p) => p.clone(),
            None => {
                let candidate = if self.data_path.is_dir() {
                    self.data_path.join("truth.json")
                } else {
                    self.data_path.with_file_name("truth.json")
                };
                if !candidate.exists() {
                    bail!(
                        "no manual found: set manual_path in the config or place truth.json next to the data"
                    );
                }
                candidate
            }
        };
        let bytes =
            std::fs::read(&path).with_context(|| format!("reading manual {}", path.display()))?;
        if let Ok(truth) = serde_json::from_slice::<Truth>(&bytes) {
            return Ok(truth.manuals);
        }
        let manuals: Vec<ManualSpec> = serde_json::from_slice(&bytes)
            .with_context(|| format!("parsing manual {}", path.display()))?;
        Ok(manuals)
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_synth(spec_path: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = match spec_path {
        Some(p) => {
            let bytes =
                std::fs::read(p).with_context(|| format!("reading spec {}", p.display()))?;
            serde_json::from_slice::<SynthSpec>(&bytes)
                .with_context(|| format!("parsing spec {}", p.display()))?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let set = generate_dataset(&spec);
    let truth = planted_truth(&spec);
    for trial in &set.trials {
        let name = format!(
            "{}_{}_{:03}.json",
            sanitize(&trial.user_id),
            sanitize(&trial.task_id),
            trial.trial_index
        );
        write_atomic(&out.join(name), &serialize_trial(trial))?;
    }
    let mut truth_bytes = serde_json::to_vec_pretty(&truth)?;
    truth_bytes.push(b'\n');
    write_atomic(&out.join("truth.json"), &truth_bytes)?;
    println!(
        "wrote {} session files and truth.json to {}",
        set.trials.len(),
        out.display()
    );
    Ok(())
}

fn cmd_ingest(data: &Path, out: Option<&Path>) -> Result<()> {
    let paths = resolve_dataset_paths(data)?;
    if paths.is_empty() {
        bail!("no session files found under {}", data.display());
    }
    let set = load_dataset(&paths)?;
    let diagnostics = validate(&set);
    println!(
        "loaded {} trials ({} users, {} tasks), map {}x{} px, {} diagnostics",
        set.trials.len(),
        set.trials
            .iter()
            .map(|t| t.user_id.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        set.task_ids().len(),
        set.map_width_px,
        set.map_height_px,
        diagnostics.len()
    );
    for d in &diagnostics {
        println!("  {}: [{}] {}", d.trial, d.rule, d.message);
    }
    if let Some(out) = out {
        let mut csv = Csv::new(&["user_id", "task_id", "trial_index", "rule", "message"]);
        for d in &diagnostics {
            csv.row([
                d.trial.user_id.clone(),
                d.trial.task_id.clone(),
                d.trial.trial_index.to_string(),
                d.rule.to_string(),
                d.message.clone(),
            ]);
        }
        write_atomic(&out.join("diagnostics.csv"), &csv.into_bytes())?;
    }
    Ok(())
}

fn cmd_hotspots(ctx: &CommandContext, out: &Path) -> Result<()> {
    for task in &ctx.analysis.tasks {
        let id = sanitize(&task.task_id);
        let mut json = serde_json::to_vec_pretty(&task.registry)?;
        json.push(b'\n');
        write_atomic(&out.join(format!("hotspots_{id}.json")), &json)?;

        let mut csv = Csv::new(&[
            "hotspot_id",
            "centroid_x",
            "centroid_y",
            "radius",
            "occurrence_count",
            "total_experiences",
            "occurrence_ratio",
        ]);
        for h in &task.registry.hotspots {
            csv.row([
                h.id.to_string(),
                fmt_f64(h.centroid_x),
                fmt_f64(h.centroid_y),
                fmt_f64(h.radius),
                h.occurrence_count.to_string(),
                task.registry.total_experiences.to_string(),
                fmt_f64(h.occurrence_count as f64 / task.registry.total_experiences as f64),
            ]);
        }
        write_atomic(
            &out.join(format!("hotspot_occurrence_{id}.csv")),
            &csv.into_bytes(),
        )?;
    }
    Ok(())
}

fn cmd_segment(ctx: &CommandContext, out: &Path) -> Result<()> {
    for task in &ctx.analysis.tasks {
        let mut csv = Csv::new(&[
            "user_id",
            "task_id",
            "trial_index",
            "step",
            "hotspot_id",
            "g_start",
            "g_end",
            "a_end",
            "o_end",
        ]);
        for (key, units) in &task.units {
            for (i, u) in units.iter().enumerate() {
                csv.row([
                    key.user_id.clone(),
                    key.task_id.clone(),
                    key.trial_index.to_string(),
                    (i + 1).to_string(),
                    u.hotspot_id.to_string(),
                    fmt_f64(u.g.start),
                    fmt_f64(u.g.end),
                    fmt_f64(u.a.end),
                    fmt_f64(u.o.end),
                ]);
            }
        }
        write_atomic(
            &out.join(format!("units_{}.csv", sanitize(&task.task_id))),
            &csv.into_bytes(),
        )?;
    }
    Ok(())
}

fn cmd_features(ctx: &CommandContext, out: &Path) -> Result<()> {
    for task in &ctx.analysis.tasks {
        let id = sanitize(&task.task_id);
        let mut header = vec!["user_id", "task_id", "trial_index", "step", "hotspot_id"];
        header.extend(FEATURE_NAMES);
        let mut csv = Csv::new(&header);
        for e in &task.experiences {
            for fv in &e.features {
                let mut row = vec![
                    fv.user_id.clone(),
                    fv.task_id.clone(),
                    fv.trial_index.to_string(),
                    fv.step.to_string(),
                    fv.hotspot_id.to_string(),
                ];
                row.extend(
                    FEATURE_NAMES
                        .iter()
                        .map(|name| fmt_f64(fv.value(name).unwrap())),
                );
                csv.row(row);
            }
        }
        write_atomic(&out.join(format!("features_{id}.csv")), &csv.into_bytes())?;

        // Trial-level gaze--head coordination.
        let mut csv = Csv::new(&["user_id", "task_id", "trial_index", "r_x", "r_y"]);
        for trial in &task.labeled.trials {
            if let Ok(c) = gaze_head_correlation(trial) {
                csv.row([
                    trial.user_id.clone(),
                    trial.task_id.clone(),
                    trial.trial_index.to_string(),
                    fmt_f64(c.r_x),
                    fmt_f64(c.r_y),
                ]);
            }
        }
        write_atomic(&out.join(format!("gaze_head_{id}.csv")), &csv.into_bytes())?;

        // Accumulated gaze heat grid over the whole task.
        let grid = gaze_heat_grid(
            task.labeled.trials.iter(),
            ctx.set.map_width_px,
            ctx.set.map_height_px,
            ctx.config.heat_cell_px,
            |_, _| true,
        );
        let mut text = String::new();
        for row in 0..grid.rows {
            let cells: Vec<String> = (0..grid.cols)
                .map(|col| grid.get(col, row).to_string())
                .collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        write_atomic(&out.join(format!("gaze_heat_{id}.csv")), text.as_bytes())?;
    }
    Ok(())
}

fn cmd_stats(ctx: &CommandContext, out: &Path) -> Result<()> {
    let table = ctx.analysis.skill_table();
    let mut csv = Csv::new(&["feature", "coefficient", "kind"]);
    for r in &table.results {
        csv.row([
            r.feature.clone(),
            fmt_f64(r.coefficient),
            "spearman_to_skill".into(),
        ]);
    }
    for (feature, reason) in &table.degenerate {
        csv.row([
            feature.clone(),
            String::new(),
            format!("degenerate: {reason}"),
        ]);
    }
    write_atomic(&out.join("skill_corr.csv"), &csv.into_bytes())?;

    let features: Vec<_> = ctx.analysis.all_features().into_iter().cloned().collect();
    match opskill::stats::difficulty_correlation_table(&features, &ctx.set, &FEATURE_NAMES) {
        Ok(table) => {
            let mut csv = Csv::new(&["feature", "coefficient", "kind"]);
            for r in &table.results {
                csv.row([
                    r.feature.clone(),
                    fmt_f64(r.coefficient),
                    "pearson_to_difficulty".into(),
                ]);
            }
            for (feature, reason) in &table.degenerate {
                csv.row([
                    feature.clone(),
                    String::new(),
                    format!("degenerate: {reason}"),
                ]);
            }
            write_atomic(&out.join("difficulty_corr.csv"), &csv.into_bytes())?;
        }
        Err(e) => println!("skipping difficulty correlations: {e}"),
    }

    // Per-trial feature means, grouped (task, user) -> trial -> name -> value.
    type TrialMeans<'a> = BTreeMap<u32, BTreeMap<&'a str, f64>>;
    let mut by_scope: BTreeMap<(String, String), TrialMeans> = BTreeMap::new();
    for task in &ctx.analysis.tasks {
        for e in &task.experiences {
            let trial_entry = by_scope
                .entry((task.task_id.clone(), e.key.user_id.clone()))
                .or_default()
                .entry(e.key.trial_index)
                .or_default();
            for name in FEATURE_NAMES {
                let mean = e
                    .features
                    .iter()
                    .filter_map(|fv| fv.value(name))
                    .sum::<f64>()
                    / e.features.len() as f64;
                trial_entry.insert(name, mean);
            }
        }
    }

    let mut task_scopes: Vec<String> = ctx
        .analysis
        .tasks
        .iter()
        .map(|t| t.task_id.clone())
        .collect();
    task_scopes.push("all".to_string());

    let mut trends_csv = Csv::new(&["feature", "task", "mean_trend_percent", "users"]);
    let mut dev_csv = Csv::new(&["feature", "task", "mean_intra", "inter"]);
    for scope in &task_scopes {
        for name in FEATURE_NAMES {
            let mut per_user_trends = Vec::new();
            let mut per_user_values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for ((task_id, user_id), trials) in &by_scope {
                if scope != "all" && task_id != scope {
                    continue;
                }
                let values: Vec<f64> = trials.values().map(|m| m[name]).collect();
                per_user_values
                    .entry(user_id.clone())
                    .or_default()
                    .extend(&values);
                if let Ok(t) = trend(&TrendInput {
                    user_id: user_id.clone(),
                    values,
                }) {
                    per_user_trends.push(t);
                }
            }
            if !per_user_trends.is_empty() {
                trends_csv.row([
                    name.to_string(),
                    scope.clone(),
                    fmt_f64(per_user_trends.iter().sum::<f64>() / per_user_trends.len() as f64),
                    per_user_trends.len().to_string(),
                ]);
            }
            if let Ok(report) = deviations(&per_user_values) {
                dev_csv.row([
                    name.to_string(),
                    scope.clone(),
                    fmt_f64(report.mean_intra()),
                    fmt_f64(report.inter),
                ]);
            }
        }
    }
    write_atomic(&out.join("trends.csv"), &trends_csv.into_bytes())?;
    write_atomic(&out.join("deviations.csv"), &dev_csv.into_bytes())?;
    Ok(())
}

fn cmd_rank(ctx: &CommandContext, out: &Path) -> Result<()> {
    for selection in ctx.selections()? {
        let mut header = vec![
            "hotspot_id".to_string(),
            "user_id".to_string(),
            "task_id".to_string(),
            "trial_index".to_string(),
        ];
        header.extend(selection.feature_set.iter().map(|f| format!("rank_{f}")));
        header.push("weighted_mean_rank".to_string());
        header.push("hotspot_rank".to_string());
        let mut csv = Csv::default();
        csv.row(header);
        for entry in &selection.result.ranks.entries {
            let mut row = vec![
                entry.hotspot_id.to_string(),
                entry.experience.user_id.clone(),
                entry.experience.task_id.clone(),
                entry.experience.trial_index.to_string(),
            ];
            row.extend(entry.feature_ranks.iter().map(|r| fmt_f64(*r)));
            row.push(fmt_f64(entry.weighted_mean_rank));
            row.push(fmt_f64(entry.hotspot_rank));
            csv.row(row);
        }
        write_atomic(
            &out.join(format!("rank_table_{}.csv", sanitize(&selection.task_id))),
            &csv.into_bytes(),
        )?;
    }
    Ok(())
}

fn cmd_prototype(ctx: &CommandContext, out: &Path) -> Result<()> {
    for selection in ctx.selections()? {
        let task = ctx.analysis.task(&selection.task_id).expect("task exists");
        let mut csv = Csv::new(&[
            "rank",
            "user_id",
            "task_id",
            "trial_index",
            "pool_occurrences",
            "hotspot_sequence",
        ]);
        for (i, key) in selection.result.selected.iter().enumerate() {
            let experience = task
                .experiences
                .iter()
                .find(|e| &e.key == key)
                .expect("selected experience exists");
            let sequence: Vec<String> = experience
                .hotspot_sequence
                .iter()
                .map(|h| h.to_string())
                .collect();
            csv.row([
                (i + 1).to_string(),
                key.user_id.clone(),
                key.task_id.clone(),
                key.trial_index.to_string(),
                selection.result.occurrence[key].to_string(),
                sequence.join(" "),
            ]);
        }
        write_atomic(
            &out.join(format!("selection_{}.csv", sanitize(&selection.task_id))),
            &csv.into_bytes(),
        )?;
        println!(
            "task {}: selected {}",
            selection.task_id,
            selection
                .result
                .selected
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    Ok(())
}

fn cmd_model(ctx: &CommandContext, out: &Path, format: Option<ModelFormat>) -> Result<()> {
    let selections = ctx.selections()?;
    let models = build_models(&ctx.analysis, &selections)?;
    for (task_id, model) in &models {
        let id = sanitize(task_id);
        let write_json = format.is_none() || format == Some(ModelFormat::Json);
        let write_dot = format.is_none() || format == Some(ModelFormat::Dot);
        if write_json {
            let mut json = serde_json::to_vec_pretty(&model.to_document())?;
            json.push(b'\n');
            write_atomic(&out.join(format!("model_{id}.json")), &json)?;
        }
        if write_dot {
            write_atomic(
                &out.join(format!("model_{id}.dot")),
                model.to_dot().as_bytes(),
            )?;
        }
        println!(
            "task {task_id}: {} states, {} experiences integrated",
            model.states().len(),
            model.integrated_count()
        );
    }
    Ok(())
}

fn cmd_eval(ctx: &CommandContext, out: &Path) -> Result<()> {
    let manuals = ctx.manuals()?;
    let rows = evaluate(
        &ctx.analysis,
        &ctx.set,
        &manuals,
        &ctx.config.selection,
        &full_method_grid(),
        ctx.config.match_mode,
    )?;
    let mut csv = Csv::new(&["method", "recall", "precision", "fscore"]);
    for row in &rows {
        csv.row([
            row.label.clone(),
            fmt_f64(row.recall),
            fmt_f64(row.precision),
            fmt_f64(row.fscore),
        ]);
    }
    write_atomic(&out.join("eval_report.csv"), &csv.into_bytes())?;

    let mut csv = Csv::new(&[
        "method",
        "task_id",
        "rank",
        "user_id",
        "trial_index",
        "hotspot_sequence",
    ]);
    for row in &rows {
        for (task_id, selected) in &row.selections {
            let task = ctx.analysis.task(task_id).expect("task exists");
            for (i, key) in selected.iter().enumerate() {
                let sequence = task
                    .experiences
                    .iter()
                    .find(|e| &e.key == key)
                    .map(|e| {
                        e.hotspot_sequence
                            .iter()
                            .map(|h| h.to_string())
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                    .unwrap_or_default();
                csv.row([
                    row.label.clone(),
                    task_id.clone(),
                    (i + 1).to_string(),
                    key.user_id.clone(),
                    key.trial_index.to_string(),
                    sequence,
                ]);
            }
        }
    }
    write_atomic(&out.join("eval_selections.csv"), &csv.into_bytes())?;

    for row in &rows {
        println!(
            "{:<10} R={:.3} P={:.3} F={:.3}",
            row.label, row.recall, row.precision, row.fscore
        );
    }
    Ok(())
}
