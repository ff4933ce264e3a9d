//! Subcommand implementations. Each writes its outputs and one run manifest
//! into the output directory and returns what it computed.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use anyhow::{anyhow, bail, Context as _, Result};
use serde::Serialize;
use serde_json::json;
use uipc_core::data::{apply_rating_threshold, k_core_filter, leave_one_out_split, RawInteraction, Stage};
use uipc_core::eval::{evaluate_checked, EvalConfig, MetricsReport};
use uipc_core::explain::{explain_pair, nearest_items, preference_distribution, render_rationale};
use uipc_core::losses::LossReport;
use uipc_core::synth::{generate, SynthConfig, SynthDataset};
use uipc_core::model::INIT_STD;
use uipc_core::train::{rank_trials, sample_trials, EpochRecord, Silent, TrainConfig, TrainMonitor, TrainOutcome, TrialResult};

use crate::checkpoint::{self, CheckpointMeta};
use crate::config::{load_search_space, load_train_config, train_config_to_toml};
use crate::io::{read_metadata, read_prepared, read_raw_interactions, write_prepared, Delimiter, PreparedData};
use crate::manifest::RunRecorder;
use crate::{EvaluateArgs, ExplainArgs, ModelName, PrepareArgs, SearchArgs, SynthArgs, TrainArgs};

pub const DEFAULT_TEMPLATE: &str = "Recommended {item} to {user} because of their interest in {items}.";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// Global flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub quiet: bool,
}

impl Context {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn create_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("cannot create {}", self.out_dir.display()))
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))
}

/// k-core filtering and the leave-one-out split, keyed for output.
pub fn split_rows(rows: &[RawInteraction], user_core: usize, item_core: usize, seed: u64) -> Result<PreparedData> {
    let dataset = k_core_filter(rows, user_core, item_core)?;
    let splits = leave_one_out_split(&dataset, seed)?;
    Ok(PreparedData {
        splits,
        user_keys: dataset.user_keys().to_vec(),
        item_keys: dataset.item_keys().to_vec(),
    })
}

fn summarize(ctx: &Context, data: &PreparedData) {
    let s = &data.splits;
    ctx.say(format!(
        "{} users, {} items, {} train interactions, {} validation and {} test cases",
        s.n_users,
        s.n_items,
        s.train.len(),
        s.validation.len(),
        s.test.len()
    ));
}

pub fn prepare(ctx: &Context, args: &PrepareArgs) -> Result<PreparedData> {
    if !args.input.is_file() {
        bail!("input file {} does not exist", args.input.display());
    }
    let delimiter: Delimiter = args.delimiter.parse().map_err(|e| anyhow!("--delimiter: {e}"))?;
    let mut run = RunRecorder::new("prepare", ctx.seed);
    run.input(&args.input)?;
    let mut rows = read_raw_interactions(&args.input, &delimiter)?;
    ctx.say(format!("read {} rows from {}", rows.len(), args.input.display()));
    if let Some(t) = args.threshold {
        rows = apply_rating_threshold(rows, t);
        ctx.say(format!("{} rows rated above {t}", rows.len()));
    }
    let data = split_rows(&rows, args.user_core, args.item_core, ctx.seed)?;
    summarize(ctx, &data);
    run.outputs(write_prepared(&ctx.out_dir, &data)?);
    run.finish(&ctx.out_dir, json!({ "args": args }))?;
    Ok(data)
}

struct CliMonitor<'a> {
    ctx: &'a Context,
    start: Instant,
    steps: Option<csv::Writer<File>>,
    step_error: Option<csv::Error>,
}

fn loss_header() -> Vec<&'static str> {
    LossReport::default().terms().iter().map(|t| t.0).collect()
}

fn loss_fields(report: &LossReport) -> Vec<String> {
    report.terms().iter().map(|t| t.1.to_string()).collect()
}

impl TrainMonitor for CliMonitor<'_> {
    fn elapsed_seconds(&mut self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_step(&mut self, epoch: usize, step: usize, report: &LossReport) {
        if let Some(w) = &mut self.steps {
            let mut row = vec![epoch.to_string(), step.to_string()];
            row.extend(loss_fields(report));
            if let Err(e) = w.write_record(&row) {
                self.step_error.get_or_insert(e);
            }
        }
    }

    fn on_epoch(&mut self, r: &EpochRecord) {
        self.ctx.say(format!(
            "epoch {:>3}  loss {:.5}  valid HR@10 {:.4}  NDCG@10 {:.4}  ({:.1}s)",
            r.epoch, r.loss.total, r.validation_hr, r.validation_ndcg, r.wall_seconds
        ));
    }
}

/// Hyperparameters for `model` from an optional file, with the seed flag
/// applied and `uipc-mf` held at `λ_L1 = 0`.
pub fn resolve_train_config(ctx: &Context, model: ModelName, path: Option<&Path>) -> Result<TrainConfig> {
    let mut config = match path {
        Some(p) => load_train_config(p, TrainConfig::default())?,
        None => TrainConfig::default(),
    };
    config.seed = ctx.seed;
    if model == ModelName::UipcMf {
        config.reg.l1_pref = 0.0;
    }
    Ok(config)
}

pub fn train(ctx: &Context, args: &TrainArgs) -> Result<TrainOutcome> {
    let config = resolve_train_config(ctx, args.model, args.config.as_deref())?;
    let mut run = RunRecorder::new("train", ctx.seed);
    run.input(&args.data)?;
    if let Some(c) = &args.config {
        run.input(c)?;
    }
    let data = read_prepared(&args.data)?;
    summarize(ctx, &data);
    ctx.create_out_dir()?;

    let steps_path = ctx.out("steps.csv");
    let steps = if args.log_steps {
        let mut w = csv_writer(&steps_path)?;
        let mut header = vec!["epoch", "step"];
        header.extend(loss_header());
        w.write_record(&header)?;
        Some(w)
    } else {
        None
    };
    let mut monitor = CliMonitor {
        ctx,
        start: Instant::now(),
        steps,
        step_error: None,
    };
    let shape = config.model_shape(data.splits.n_users, data.splits.n_items);
    ctx.say(format!(
        "training {} ({} parameters)",
        args.model.label(),
        uipc_core::model::parameter_count(&shape, args.model.kind())
    ));
    let outcome = uipc_core::train::train(&data.splits, args.model.kind(), &config, &mut monitor)?;
    if let Some(e) = monitor.step_error {
        return Err(e).context("cannot write steps.csv");
    }
    if let Some(mut w) = monitor.steps {
        w.flush()?;
        run.output(&steps_path);
    }

    let log_path = ctx.out("trainlog.csv");
    let mut w = csv_writer(&log_path)?;
    let mut header = vec!["epoch"];
    header.extend(loss_header());
    header.extend(["validation_hr10", "validation_ndcg10", "wall_seconds", "best"]);
    w.write_record(&header)?;
    for r in &outcome.log.epochs {
        let mut row = vec![r.epoch.to_string()];
        row.extend(loss_fields(&r.loss));
        row.extend([
            r.validation_hr.to_string(),
            r.validation_ndcg.to_string(),
            r.wall_seconds.to_string(),
            (r.epoch == outcome.log.best_epoch).to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    run.output(&log_path);

    let ckpt = ctx.out(CHECKPOINT_DIR);
    checkpoint::save(
        &ckpt,
        &outcome.model,
        &CheckpointMeta {
            label: args.model.label().to_owned(),
            fingerprint: data.splits.fingerprint,
            config: config.clone(),
            best_epoch: outcome.log.best_epoch,
            best_validation_hr: outcome.log.best_validation_hr,
        },
    )?;
    run.output(&ckpt);
    ctx.say(format!(
        "best epoch {} of {} (valid HR@10 {:.4}){}; checkpoint in {}",
        outcome.log.best_epoch,
        outcome.log.epochs.len(),
        outcome.log.best_validation_hr,
        if outcome.log.stopped_early { ", stopped early" } else { "" },
        ckpt.display()
    ));
    let init = format!("random normal: embeddings and prototypes std {INIT_STD}, other weights fan-in scaled");
    run.finish(&ctx.out_dir, json!({ "args": args, "train": config, "init": init }))?;
    Ok(outcome)
}

fn load_matching(ckpt: &Path, data: &PreparedData) -> Result<(uipc_core::Model, checkpoint::CheckpointManifest)> {
    let (model, manifest) = checkpoint::load(ckpt)?;
    let fp = manifest.fingerprint()?;
    if fp != data.splits.fingerprint {
        bail!(
            "checkpoint {} was trained on a different dataset (fingerprint {fp}, data {})",
            ckpt.display(),
            data.splits.fingerprint
        );
    }
    Ok((model, manifest))
}

pub fn evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<MetricsReport> {
    let stage: Stage = args.stage.parse().map_err(|e| anyhow!("--stage: {e}"))?;
    let mut run = RunRecorder::new("evaluate", ctx.seed);
    run.input(&args.model)?;
    run.input(&args.data)?;
    let data = read_prepared(&args.data)?;
    let (model, manifest) = load_matching(&args.model, &data)?;
    let eval = EvalConfig {
        cutoffs: args.k.clone(),
        stage,
    };
    let report = evaluate_checked(&model, &data.splits.fingerprint, &data.splits, &eval)?;
    ctx.create_out_dir()?;

    let metrics_path = ctx.out(&format!("metrics_{}.csv", stage.as_str()));
    let mut w = csv_writer(&metrics_path)?;
    w.write_record(["model", "seed", "stage", "k", "hr", "ndcg"])?;
    for m in &report.metrics {
        w.write_record([
            manifest.label.clone(),
            manifest.config.seed.to_string(),
            stage.as_str().to_owned(),
            m.k.to_string(),
            m.hr.to_string(),
            m.ndcg.to_string(),
        ])?;
    }
    w.flush()?;
    run.output(&metrics_path);

    let ranks_path = ctx.out(&format!("ranks_{}.tsv", stage.as_str()));
    let mut body = String::new();
    for (user, rank) in &report.ranks {
        body.push_str(&format!("{}\t{rank}\n", data.user_keys[*user]));
    }
    fs::write(&ranks_path, body)?;
    run.output(&ranks_path);

    if !ctx.quiet {
        println!("{:<12} {:<10} {:>4} {:>8} {:>8}", "model", "stage", "k", "HR", "NDCG");
        for m in &report.metrics {
            println!("{:<12} {:<10} {:>4} {:>8.4} {:>8.4}", manifest.label, stage.as_str(), m.k, m.hr, m.ndcg);
        }
    }
    run.finish(&ctx.out_dir, json!({ "args": args }))?;
    Ok(report)
}

#[derive(Debug, Serialize)]
struct SupportJson {
    item: String,
    name: String,
    similarity: f64,
}

#[derive(Debug, Serialize)]
struct ContributionJson {
    prototype: usize,
    score: f64,
    supporting_items: Vec<SupportJson>,
}

pub fn explain(ctx: &Context, args: &ExplainArgs) -> Result<()> {
    if args.user.is_none() && args.prototype.is_none() && !args.pref_dist {
        bail!("nothing to explain: pass --user and --item, --prototype, or --pref-dist");
    }
    let mut run = RunRecorder::new("explain", ctx.seed);
    run.input(&args.model)?;
    run.input(&args.data)?;
    let data = read_prepared(&args.data)?;
    let (model, _) = load_matching(&args.model, &data)?;
    let params = model
        .as_uipc()
        .ok_or_else(|| anyhow!("explanations need a uipc-mf checkpoint, {} is {}", args.model.display(), model.kind()))?;
    let metadata = match &args.metadata {
        Some(p) => {
            run.input(p)?;
            read_metadata(p)?
        }
        None => Default::default(),
    };
    let name_of = |t: usize| -> String {
        let key = &data.item_keys[t];
        metadata.get(key).cloned().unwrap_or_else(|| key.clone())
    };
    ctx.create_out_dir()?;

    if let (Some(user_key), Some(item_key)) = (&args.user, &args.item) {
        let user = data.user_index(user_key).ok_or_else(|| anyhow!("unknown user key {user_key:?}"))?;
        let item = data.item_index(item_key).ok_or_else(|| anyhow!("unknown item key {item_key:?}"))?;
        let train_items = &data.splits.train_items_by_user()[user];
        let record = explain_pair(params, user, item, args.top, train_items, args.support)?;
        let rationale = render_rationale(&record, &args.template, user_key, &name_of)?;
        let contributions: Vec<ContributionJson> = record
            .top_prototypes
            .iter()
            .map(|c| ContributionJson {
                prototype: c.prototype,
                score: c.score,
                supporting_items: c
                    .supporting_items
                    .iter()
                    .map(|s| SupportJson {
                        item: data.item_keys[s.item].clone(),
                        name: name_of(s.item),
                        similarity: s.similarity,
                    })
                    .collect(),
            })
            .collect();
        let doc = json!({
            "user": user_key,
            "item": item_key,
            "user_index": user,
            "item_index": item,
            "score": record.breakdown.total,
            "rationale": rationale,
            "top_prototypes": contributions,
            "breakdown": record.breakdown,
        });
        let path = ctx.out("explain.json");
        fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        run.output(&path);
        if !ctx.quiet {
            println!("{rationale}");
        }
    }

    if let Some(proto) = args.prototype {
        let counts = data.splits.train_item_counts();
        let profile = nearest_items(params, proto, args.top, &counts)?;
        let path = ctx.out("prototypes.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["prototype", "rank", "item", "similarity", "occurrences", "name"])?;
        for (rank, n) in profile.nearest_items.iter().enumerate() {
            w.write_record([
                proto.to_string(),
                (rank + 1).to_string(),
                data.item_keys[n.item].clone(),
                n.similarity.to_string(),
                n.occurrences.to_string(),
                name_of(n.item),
            ])?;
        }
        w.flush()?;
        run.output(&path);
    }

    if args.pref_dist {
        let dists = preference_distribution(params);
        let path = ctx.out("pref_dist.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["prototype", "min", "q1", "median", "q3", "max", "all_same_sign"])?;
        for d in &dists {
            w.write_record([
                d.prototype.to_string(),
                d.min.to_string(),
                d.q1.to_string(),
                d.median.to_string(),
                d.q3.to_string(),
                d.max.to_string(),
                d.all_same_sign.to_string(),
            ])?;
        }
        w.flush()?;
        run.output(&path);
        ctx.say(format!(
            "{} of {} item prototypes have same-sign preferences across users",
            uipc_core::explain::same_sign_count(&dists),
            dists.len()
        ));
    }
    run.finish(&ctx.out_dir, json!({ "args": args }))?;
    Ok(())
}

/// Trials ranked best first.
pub fn search(ctx: &Context, args: &SearchArgs) -> Result<Vec<TrialResult>> {
    let mut run = RunRecorder::new("search", ctx.seed);
    run.input(&args.data)?;
    run.input(&args.space)?;
    let data = read_prepared(&args.data)?;
    let space = load_search_space(&args.space, TrainConfig::default())?;
    let mut trials = sample_trials(&space, args.trials as usize, ctx.seed)?;
    if args.model == ModelName::UipcMf {
        for t in &mut trials {
            t.config.reg.l1_pref = 0.0;
        }
    }
    let kind = args.model.kind();
    let workers = (args.parallel as usize).min(trials.len());
    let slots: Vec<Mutex<Option<TrialResult>>> = trials.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(trial) = trials.get(i) else { break };
                let outcome = uipc_core::train::train(&data.splits, kind, &trial.config, &mut Silent);
                let result = TrialResult::from_outcome(trial.clone(), &outcome);
                match &result.outcome {
                    Ok((hr, _, epoch)) => ctx.say(format!("trial {i}: valid HR@10 {hr:.4} at epoch {epoch}")),
                    Err(e) => ctx.say(format!("trial {i} failed: {e}")),
                }
                *slots[i].lock().expect("trial slot") = Some(result);
            });
        }
    });
    let results: Vec<TrialResult> = slots
        .into_iter()
        .map(|m| m.into_inner().expect("trial slot").expect("every trial ran"))
        .collect();
    let ranked = rank_trials(results);
    ctx.create_out_dir()?;

    let names: Vec<&String> = space.ranges.keys().collect();
    let path = ctx.out("trials.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["rank", "trial", "seed", "validation_hr10", "validation_ndcg10", "best_epoch"];
    header.extend(names.iter().map(|n| n.as_str()));
    header.push("error");
    w.write_record(&header)?;
    for (rank, r) in ranked.iter().enumerate() {
        let mut row = vec![(rank + 1).to_string(), r.trial.index.to_string(), r.trial.config.seed.to_string()];
        match &r.outcome {
            Ok((hr, ndcg, epoch)) => row.extend([hr.to_string(), ndcg.to_string(), epoch.to_string()]),
            Err(_) => row.extend([String::new(), String::new(), String::new()]),
        }
        row.extend(r.trial.assignments.iter().map(|(_, v)| v.to_string()));
        row.push(r.outcome.as_ref().err().cloned().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    run.output(&path);

    let best = ranked
        .first()
        .filter(|r| r.outcome.is_ok())
        .ok_or_else(|| anyhow!("every trial failed; see {}", path.display()))?;
    let best_path = ctx.out("best.toml");
    let body = format!(
        "# trial {} (valid HR@10 {}); retrain with --seed {}\n{}",
        best.trial.index,
        best.validation_hr().unwrap_or(0.0),
        best.trial.config.seed,
        train_config_to_toml(&best.trial.config)
    );
    fs::write(&best_path, body)?;
    run.output(&best_path);
    ctx.say(format!("best trial {} written to {}", best.trial.index, best_path.display()));
    run.finish(&ctx.out_dir, json!({ "args": args }))?;
    Ok(ranked)
}

pub fn synth(ctx: &Context, args: &SynthArgs) -> Result<(SynthDataset, PreparedData)> {
    let config = SynthConfig {
        n_groups: args.groups,
        users_per_group: args.users_per_group,
        items_per_group: args.items_per_group,
        p_in: args.p_in,
        p_out: args.p_out,
        seed: ctx.seed,
    };
    let mut run = RunRecorder::new("synth", ctx.seed);
    let synth = generate(&config)?;
    if !synth.resampled_users.is_empty() {
        ctx.say(format!(
            "{} users drew no items and were resampled; {} were dropped",
            synth.resampled_users.len(),
            synth.dropped_users.len()
        ));
    }
    let rows = synth.raw_interactions();
    let data = split_rows(&rows, args.user_core, args.item_core, ctx.seed)?;
    summarize(ctx, &data);
    run.outputs(write_prepared(&ctx.out_dir, &data)?);

    let raw_path = ctx.out("interactions.tsv");
    let mut body = String::new();
    for r in &rows {
        body.push_str(&format!("{}\t{}\t{}\n", r.user_key, r.item_key, r.timestamp));
    }
    fs::write(&raw_path, body)?;
    run.output(&raw_path);

    let labels_path = ctx.out("labels.tsv");
    let mut body = String::new();
    for (i, key) in data.user_keys.iter().enumerate() {
        let g = synth.user_group_of_key(key).ok_or_else(|| anyhow!("unknown synthetic user {key}"))?;
        body.push_str(&format!("user\t{i}\t{g}\n"));
    }
    for (i, key) in data.item_keys.iter().enumerate() {
        let g = synth.item_group_of_key(key).ok_or_else(|| anyhow!("unknown synthetic item {key}"))?;
        body.push_str(&format!("item\t{i}\t{g}\n"));
    }
    fs::write(&labels_path, body)?;
    run.output(&labels_path);
    run.finish(
        &ctx.out_dir,
        json!({
            "args": args,
            "dropped_users": synth.dropped_users,
            "resampled_users": synth.resampled_users,
        }),
    )?;
    Ok((synth, data))
}
