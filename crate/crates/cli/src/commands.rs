//! Command implementations. Each returns the manifest it wrote.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use mqa_core::augment::{augment_one, AugmentationKind};
use mqa_core::harness::{
    ablation_csv, attach_labels, evaluate_mae, run_exercise, summarise, training_log_csv,
    EvalReport, LabeledSequence, TrainConfig,
};
use mqa_core::mqaformer::{
    attention_csv, default_body_parts, AttentionRecord, EmbedderConfig, EmbedderKind, ScorerConfig,
    ScorerModel, UPPER_BODY_PARTS,
};
use mqa_core::numcore::{Checkpoint, Tensor};
use mqa_core::scoregen::{
    fit_exercise, label_csv, read_label_file, separation_report, SeparationReport,
};
use mqa_core::seeding::derive_seed;
use mqa_core::skeldata::{
    by_exercise, load_dataset, write_sequence, DatasetItem, DatasetManifest, Label,
    SkeletalSequence, MANIFEST_FILE,
};
use mqa_core::synth::{scored_items, synth_exercise, synth_scored, SynthConfig};

use crate::config::{sha256_hex, MqaConfig, SignalJoints, SynthKind};
use crate::manifest::{now_unix, ArtifactWriter, DatasetReference, RunManifest};
use crate::svg::heatmap_svg;
use crate::{Cli, Command};

/// Everything a command needs besides its own arguments.
struct Ctx {
    cfg: MqaConfig,
    command: &'static str,
    out: ArtifactWriter,
    seeds: BTreeMap<String, u64>,
    dataset: Option<DatasetReference>,
    inputs: Vec<String>,
    timings: BTreeMap<String, f64>,
}

impl Ctx {
    fn finish(self) -> Result<RunManifest> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.into(),
            config_hash: self.cfg.hash(),
            seed: self.cfg.seed,
            config: self.cfg,
            seeds: self.seeds,
            dataset: self.dataset,
            inputs: self.inputs,
            artifacts: Vec::new(),
            timings: self.timings,
            created_unix: now_unix(),
        };
        self.out.finish(manifest)
    }
}

pub fn run(cli: Cli) -> Result<RunManifest> {
    let mut cfg = match &cli.config {
        Some(path) => MqaConfig::load(path)?,
        None => MqaConfig::default(),
    };
    let command = match &cli.command {
        Command::Synth { kind, signal } => {
            if let Some(k) = kind {
                cfg.synth.kind = *k;
            }
            if let Some(s) = signal {
                cfg.synth.signal = *s;
            }
            "synth"
        }
        Command::Augment { .. } => "augment",
        Command::GenScores { .. } => "gen-scores",
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
        Command::Ablate { .. } => "ablate",
        Command::Attention { .. } => "attention",
    };
    let cfg = cfg.resolve(cli.seed);
    let mut ctx = Ctx {
        cfg,
        command,
        out: ArtifactWriter::new(&cli.out)?,
        seeds: BTreeMap::new(),
        dataset: None,
        inputs: cli.config.iter().map(|p| p.display().to_string()).collect(),
        timings: BTreeMap::new(),
    };
    match cli.command {
        Command::Synth { .. } => synth(&mut ctx)?,
        Command::Augment { input } => augment(&mut ctx, &input)?,
        Command::GenScores { input } => gen_scores(&mut ctx, &input)?,
        Command::Train {
            input,
            labels,
            exercise,
        } => train(&mut ctx, &input, labels.as_deref(), exercise.as_deref())?,
        Command::Eval {
            input,
            model,
            labels,
            all,
        } => eval(&mut ctx, &input, &model, labels.as_deref(), all)?,
        Command::Ablate {
            input,
            labels,
            exercise,
        } => ablate(&mut ctx, &input, labels.as_deref(), exercise.as_deref())?,
        Command::Attention {
            input,
            model,
            sequence,
            svg,
        } => attention(&mut ctx, &input, &model, sequence.as_deref(), svg)?,
    }
    ctx.finish()
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact serialises") + "\n"
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

fn load_input(ctx: &mut Ctx, dir: &Path) -> Result<(DatasetManifest, Vec<DatasetItem>)> {
    let (manifest, items) =
        load_dataset(dir).with_context(|| format!("cannot load dataset {}", dir.display()))?;
    if items.is_empty() {
        bail!("dataset {} is empty", dir.display());
    }
    ctx.dataset = Some(DatasetReference {
        dir: dir.display().to_string(),
        manifest_sha256: sha256_hex(manifest.to_json().as_bytes()),
        sequences: items.len(),
    });
    Ok((manifest, items))
}

fn load_labels(ctx: &mut Ctx, path: Option<&Path>) -> Result<Option<Vec<(String, f64)>>> {
    let Some(path) = path else {
        return Ok(None);
    };
    ctx.inputs.push(path.display().to_string());
    Ok(Some(read_label_file(path).with_context(|| {
        format!("cannot read labels {}", path.display())
    })?))
}

fn label_hash(labels: Option<&[(String, f64)]>) -> Option<String> {
    labels.map(|l| {
        let mut text = String::new();
        for (id, v) in l {
            writeln!(text, "{id},{v:?}").expect("string write");
        }
        sha256_hex(text.as_bytes())
    })
}

fn synth(ctx: &mut Ctx) -> Result<()> {
    let s = ctx.cfg.synth.clone();
    if s.exercises == 0 {
        bail!("synth.exercises must be ≥ 1");
    }
    let signal: Option<Vec<usize>> = match s.signal {
        SignalJoints::All => None,
        SignalJoints::UpperBody => Some(
            default_body_parts(s.shape.joints)
                .into_iter()
                .filter(|p| UPPER_BODY_PARTS.contains(&p.name.as_str()))
                .flat_map(|p| p.joints)
                .collect(),
        ),
    };
    let mut items = Vec::new();
    for e in 0..s.exercises {
        let name = if s.exercises == 1 {
            s.shape.exercise.clone()
        } else {
            format!("e{:02}", e + 1)
        };
        let seed = derive_seed(ctx.cfg.seed, e as u64);
        ctx.seeds.insert(name.clone(), seed);
        match s.kind {
            SynthKind::Exercise => items.extend(synth_exercise(&SynthConfig {
                exercise: name,
                seed,
                ..s.shape.clone()
            })),
            SynthKind::Scored => {
                let scored = synth_scored(
                    s.count,
                    s.shape.joints,
                    s.shape.frames,
                    signal.as_deref(),
                    seed,
                );
                let mut batch = scored_items(&name, &scored);
                for it in &mut batch {
                    it.sequence.id = format!("{name}_{}", it.sequence.id);
                    it.entry.sequence_id = it.sequence.id.clone();
                    it.entry.file = format!("{}.txt", it.sequence.id);
                }
                items.extend(batch);
            }
        }
    }
    for it in &items {
        ctx.out
            .write(&it.entry.file, write_sequence(&it.sequence))?;
    }
    let manifest = DatasetManifest {
        format: mqa_core::skeldata::FileFormat::UiprmdAngles,
        entries: items.iter().map(|it| it.entry.clone()).collect(),
    };
    ctx.out.write(MANIFEST_FILE, manifest.to_json() + "\n")?;
    println!(
        "synth: {} sequences written to {}",
        items.len(),
        ctx.out.root().display()
    );
    Ok(())
}

fn channel_names(joints: usize) -> Vec<String> {
    (0..joints)
        .flat_map(|j| ["x", "y", "z"].map(|a| format!("j{j:02}_{a}")))
        .collect()
}

/// Original and augmented values side by side, one row per frame.
fn trace_csv(original: &SkeletalSequence, augmented: &SkeletalSequence) -> String {
    let names = channel_names(original.joint_count());
    let mut out = String::from("frame");
    for n in &names {
        write!(out, ",{n}_orig,{n}_aug").expect("string write");
    }
    out.push('\n');
    let d = names.len();
    let cell = |s: &SkeletalSequence, t: usize, c: usize| {
        if t < s.len() {
            format!("{}", s.frames().data()[t * d + c])
        } else {
            String::new()
        }
    };
    for t in 0..original.len().max(augmented.len()) {
        write!(out, "{t}").expect("string write");
        for c in 0..d {
            write!(out, ",{},{}", cell(original, t, c), cell(augmented, t, c))
                .expect("string write");
        }
        out.push('\n');
    }
    out
}

fn augment(ctx: &mut Ctx, input: &Path) -> Result<()> {
    let (manifest, items) = load_input(ctx, input)?;
    let policy = ctx.cfg.augment.policy.clone();
    if policy.is_empty() {
        bail!("augment.policy is empty");
    }
    for spec in &policy {
        spec.validate().context("invalid augmentation policy")?;
    }
    let mut log = String::from("sequence_id,operator,frames_in,frames_out\n");
    let mut entries = Vec::with_capacity(items.len());
    for (i, it) in items.iter().enumerate() {
        let seed = derive_seed(ctx.cfg.seed, i as u64);
        let (y, kind) = augment_one(&it.sequence, &policy, seed)
            .with_context(|| format!("augmenting {}", it.entry.sequence_id))?;
        let op = match kind {
            AugmentationKind::Pace => "pace",
            AugmentationKind::Occlusion => "occlusion",
            AugmentationKind::Masking => "masking",
        };
        writeln!(
            log,
            "{},{op},{},{}",
            it.entry.sequence_id,
            it.sequence.len(),
            y.len()
        )
        .expect("string write");
        ctx.out.write(&it.entry.file, write_sequence(&y))?;
        ctx.out.write(
            &format!("traces/{}.csv", it.entry.sequence_id),
            trace_csv(&it.sequence, &y),
        )?;
        let mut entry = it.entry.clone();
        entry.frames = y.len();
        entries.push(entry);
    }
    let out_manifest = DatasetManifest {
        format: manifest.format,
        entries,
    };
    ctx.out
        .write(MANIFEST_FILE, out_manifest.to_json() + "\n")?;
    ctx.out.write("augment_log.csv", log)?;
    println!("augment: {} sequences", items.len());
    Ok(())
}

#[derive(Serialize)]
struct SeparationSummary {
    exercises: Vec<SeparationReport>,
    mean_within_subject: Option<f64>,
    mean_between_subject: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn gen_scores(ctx: &mut Ctx, input: &Path) -> Result<()> {
    let (_, items) = load_input(ctx, input)?;
    let cfg = ctx.cfg.scoregen.clone();
    let mut labels = Vec::new();
    let mut reports = Vec::new();
    let mut metrics = String::from("sequence_id,exercise,subject,label,metric,score\n");
    for (exercise, group) in by_exercise(&items) {
        let correct: Vec<SkeletalSequence> = group
            .iter()
            .filter(|it| it.entry.label == Label::Correct)
            .map(|it| it.sequence.clone())
            .collect();
        if correct.is_empty() {
            bail!("exercise {exercise} has no correct-labelled repetitions to fit the score model");
        }
        ctx.seeds.insert(exercise.clone(), cfg.seed);
        let pipeline = fit_exercise(&exercise, &correct, &cfg)
            .with_context(|| format!("fitting exercise {exercise}"))?;
        let dir = format!("models/{exercise}");
        pipeline.save(&ctx.out.root().join(&dir))?;
        ctx.out
            .adopt(&format!("{dir}/{}", mqa_core::scoregen::AUTOENCODER_FILE))?;
        ctx.out
            .adopt(&format!("{dir}/{}", mqa_core::scoregen::SIDECAR_FILE))?;
        for it in &group {
            let m = pipeline.metric(&it.sequence)?;
            let s = mqa_core::scoregen::score_from_metric(&pipeline.calibration, m);
            let label = match it.entry.label {
                Label::Correct => "correct",
                Label::Incorrect => "incorrect",
                Label::Unlabeled => "unlabeled",
            };
            writeln!(
                metrics,
                "{},{exercise},{},{label},{m:.9},{:.6}",
                it.entry.sequence_id,
                it.entry.subject,
                s.value()
            )
            .expect("string write");
            labels.push((it.entry.sequence_id.clone(), s));
        }
        let report = separation_report(&pipeline, &group)?;
        println!(
            "gen-scores: {exercise}: within-subject SD {}, between-subject SD {:.4}, {} components",
            fmt_opt(report.within_subject),
            report.between_subject,
            report.components
        );
        reports.push(report);
    }
    let within: Vec<f64> = reports.iter().filter_map(|r| r.within_subject).collect();
    let between: Vec<f64> = reports.iter().map(|r| r.between_subject).collect();
    let summary = SeparationSummary {
        mean_within_subject: mean(&within),
        mean_between_subject: mean(&between),
        exercises: reports,
    };
    let mut csv =
        String::from("exercise,within_subject,between_subject,correct,incorrect,components\n");
    for r in &summary.exercises {
        writeln!(
            csv,
            "{},{},{:.6},{},{},{}",
            r.exercise,
            fmt_opt(r.within_subject),
            r.between_subject,
            r.correct,
            r.incorrect,
            r.components
        )
        .expect("string write");
    }
    writeln!(
        csv,
        "mean,{},{},,,",
        fmt_opt(summary.mean_within_subject),
        fmt_opt(summary.mean_between_subject)
    )
    .expect("string write");
    ctx.out.write("labels.csv", label_csv(&labels))?;
    ctx.out.write("metrics.csv", metrics)?;
    ctx.out.write("separation.json", json(&summary))?;
    ctx.out.write("separation.csv", csv)?;
    Ok(())
}

/// Matches the scorer's feature width to the data. A partition left at a
/// default follows the data's joint count.
fn fit_scorer_to_data(cfg: &mut ScorerConfig, feature_dim: usize) {
    let e = &mut cfg.embedder;
    let untouched = e.body_parts == default_body_parts(e.feature_dim / 3)
        || e.body_parts == EmbedderConfig::default().body_parts;
    if untouched {
        e.body_parts = default_body_parts(feature_dim / 3);
    }
    e.feature_dim = feature_dim;
}

fn labelled_exercises(
    items: &[DatasetItem],
    labels: Option<&[(String, f64)]>,
    canonical_t: usize,
    only: Option<&str>,
) -> Result<BTreeMap<String, Vec<LabeledSequence>>> {
    let mut out = BTreeMap::new();
    for (exercise, group) in by_exercise(items) {
        if only.is_some_and(|o| o != exercise) {
            continue;
        }
        let data = attach_labels(&group, labels, canonical_t).with_context(|| {
            format!("exercise {exercise}: run gen-scores first or pass --labels")
        })?;
        out.insert(exercise, data);
    }
    if out.is_empty() {
        bail!("no exercise matches {}", only.unwrap_or("the dataset"));
    }
    Ok(out)
}

fn feature_dim(items: &[DatasetItem]) -> Result<usize> {
    let d = items[0].sequence.feature_dim();
    if let Some(it) = items.iter().find(|it| it.sequence.feature_dim() != d) {
        bail!(
            "sequence {} has {} features, expected {d}",
            it.entry.sequence_id,
            it.sequence.feature_dim()
        );
    }
    Ok(d)
}

/// Runs every exercise for one configuration and writes checkpoints and logs
/// under `prefix`.
fn train_all(
    ctx: &mut Ctx,
    cfg: &TrainConfig,
    data: &BTreeMap<String, Vec<LabeledSequence>>,
    prefix: &str,
    labels_sha256: Option<&str>,
) -> Result<EvalReport> {
    let mut exercises = Vec::new();
    for (exercise, seqs) in data {
        let (report, runs) = run_exercise(cfg, exercise, seqs)?;
        for run in &runs {
            let r = &run.result;
            let tag = format!("{prefix}{exercise}.run{}", r.run);
            ctx.seeds.insert(tag.clone(), r.seed);
            let dir = format!("{prefix}runs/{exercise}/run{}", r.run);
            ctx.out
                .write(&format!("{dir}/train_log.csv"), training_log_csv(&run.log))?;
            if let Some(o) = &run.outcome {
                ctx.timings
                    .insert(format!("{tag}.ms_per_batch"), o.ms_per_batch);
                let extra = serde_json::json!({
                    "exercise": exercise,
                    "run": r.run,
                    "seed": r.seed,
                    "validation_ids": o.validation_ids,
                    "validation_mae": r.mae,
                    "labels_sha256": labels_sha256,
                });
                ctx.out.write(
                    &format!("{dir}/scorer.ckpt"),
                    o.model.to_checkpoint(extra).to_bytes(),
                )?;
            }
            if let Some(e) = &r.error {
                eprintln!("warning: {exercise} run {} failed: {e}", r.run);
            }
        }
        exercises.push(report);
    }
    Ok(summarise(cfg.scorer.embedder.kind, exercises))
}

fn train(ctx: &mut Ctx, input: &Path, labels: Option<&Path>, exercise: Option<&str>) -> Result<()> {
    let (_, items) = load_input(ctx, input)?;
    let labels = load_labels(ctx, labels)?;
    let mut cfg = ctx.cfg.train.clone();
    fit_scorer_to_data(&mut cfg.scorer, feature_dim(&items)?);
    cfg.validate()?;
    let data = labelled_exercises(&items, labels.as_deref(), cfg.scorer.canonical_t, exercise)?;
    let report = train_all(
        ctx,
        &cfg,
        &data,
        "",
        label_hash(labels.as_deref()).as_deref(),
    )?;
    if report.exercises.iter().all(|e| e.mean_mae.is_none()) {
        bail!("every training run failed");
    }
    println!(
        "train: {} mean MAE {}",
        report.embedder.name(),
        fmt_opt(report.mean_mae)
    );
    ctx.out.write("report.json", report.to_json())?;
    ctx.out.write("report.csv", report.to_csv())?;
    Ok(())
}

fn load_scorer(ctx: &mut Ctx, path: &Path) -> Result<(ScorerModel, serde_json::Value)> {
    ctx.inputs.push(path.display().to_string());
    let ck =
        Checkpoint::load(path).with_context(|| format!("cannot load model {}", path.display()))?;
    Ok(ScorerModel::from_checkpoint(&ck)?)
}

#[derive(Serialize)]
struct EvalSummary {
    exercise: String,
    set: &'static str,
    sequences: usize,
    mae: f64,
    training_mae: Option<f64>,
    /// True when the recomputed MAE equals the stored value bit for bit.
    reproduced: Option<bool>,
}

fn eval(ctx: &mut Ctx, input: &Path, model: &Path, labels: Option<&Path>, all: bool) -> Result<()> {
    let (_, items) = load_input(ctx, input)?;
    let (scorer, extra) = load_scorer(ctx, model)?;
    let labels = load_labels(ctx, labels)?;
    let recorded = extra
        .get("labels_sha256")
        .and_then(|v| v.as_str())
        .map(str::to_string);
    if !all && recorded != label_hash(labels.as_deref()) {
        bail!("labels differ from those used in training; pass the same --labels file");
    }
    let exercise = extra
        .get("exercise")
        .and_then(|v| v.as_str())
        .ok_or_else(|| anyhow!("model has no exercise metadata"))?
        .to_string();
    let group: Vec<DatasetItem> = items
        .into_iter()
        .filter(|it| it.entry.exercise == exercise)
        .collect();
    let selected: Vec<DatasetItem> = if all {
        group
    } else {
        let ids: Vec<String> =
            serde_json::from_value(extra.get("validation_ids").cloned().unwrap_or_default())
                .context("model has no validation ids; use --all")?;
        ids.iter()
            .map(|id| {
                group
                    .iter()
                    .find(|it| &it.entry.sequence_id == id)
                    .cloned()
                    .ok_or_else(|| anyhow!("validation sequence {id} is missing from the dataset"))
            })
            .collect::<Result<_>>()?
    };
    let data = attach_labels(&selected, labels.as_deref(), scorer.config().canonical_t)?;
    let mae = evaluate_mae(&scorer, &data)?;
    let mut predictions = String::from("sequence_id,label,prediction\n");
    for s in &data {
        let p = scorer.predict(&s.sequence)?.score.value();
        writeln!(predictions, "{},{:.6},{:.6}", s.sequence.id, s.label, p).expect("string write");
    }
    let training_mae = if all {
        None
    } else {
        extra.get("validation_mae").and_then(|v| v.as_f64())
    };
    let summary = EvalSummary {
        exercise,
        set: if all { "all" } else { "validation" },
        sequences: data.len(),
        mae,
        training_mae,
        reproduced: training_mae.map(|t| t.to_bits() == mae.to_bits()),
    };
    println!("eval: MAE {mae:.6} over {} sequences", data.len());
    ctx.out.write("eval.json", json(&summary))?;
    ctx.out.write("predictions.csv", predictions)?;
    Ok(())
}

fn ablate(
    ctx: &mut Ctx,
    input: &Path,
    labels: Option<&Path>,
    exercise: Option<&str>,
) -> Result<()> {
    let (_, items) = load_input(ctx, input)?;
    let labels = load_labels(ctx, labels)?;
    let dim = feature_dim(&items)?;
    let label_sha = label_hash(labels.as_deref());
    let mut reports = Vec::new();
    let mut timing = String::from("embedder,ms_per_batch\n");
    for kind in EmbedderKind::ALL {
        let mut cfg = ctx.cfg.train.clone();
        cfg.scorer.embedder.kind = kind;
        fit_scorer_to_data(&mut cfg.scorer, dim);
        cfg.validate()?;
        let data = labelled_exercises(&items, labels.as_deref(), cfg.scorer.canonical_t, exercise)?;
        let report = train_all(
            ctx,
            &cfg,
            &data,
            &format!("{}/", kind.name()),
            label_sha.as_deref(),
        )?;
        let ms: Vec<f64> = ctx
            .timings
            .iter()
            .filter(|(k, _)| k.starts_with(&format!("{}/", kind.name())))
            .map(|(_, v)| *v)
            .collect();
        let ms = mean(&ms);
        if let Some(m) = ms {
            ctx.timings
                .insert(format!("{}.mean_ms_per_batch", kind.name()), m);
        }
        writeln!(
            timing,
            "{},{}",
            kind.name(),
            ms.map_or_else(String::new, |m| format!("{m:.3}"))
        )
        .expect("string write");
        println!(
            "ablate: {:<5} mean MAE {:>8}  {:>8} ms/batch",
            kind.name(),
            fmt_opt(report.mean_mae),
            ms.map_or_else(|| "-".into(), |m| format!("{m:.3}"))
        );
        reports.push(report);
    }
    ctx.out.write("ablation.csv", ablation_csv(&reports))?;
    ctx.out.write("ablation.json", json(&reports))?;
    ctx.out.write_volatile("ablation_timing.csv", timing)?;
    Ok(())
}

/// Element-wise mean of equally shaped matrices.
fn mean_matrices(ms: &[Tensor]) -> Tensor {
    let mut acc = Tensor::zeros(ms[0].shape());
    for m in ms {
        acc.add_assign(m);
    }
    let n = ms.len() as f64;
    acc.map(|v| v / n)
}

fn attention(
    ctx: &mut Ctx,
    input: &Path,
    model: &Path,
    sequence: Option<&str>,
    svg: bool,
) -> Result<()> {
    let (_, items) = load_input(ctx, input)?;
    let (scorer, extra) = load_scorer(ctx, model)?;
    let selected: Vec<&DatasetItem> =
        match (sequence, extra.get("exercise").and_then(|v| v.as_str())) {
            (Some(id), _) => items
                .iter()
                .filter(|it| it.entry.sequence_id == id)
                .collect(),
            (None, Some(ex)) => items.iter().filter(|it| it.entry.exercise == ex).collect(),
            (None, None) => items.iter().collect(),
        };
    if selected.is_empty() {
        bail!("no sequences selected for attention export");
    }
    let t = scorer.config().canonical_t;
    let mut records: Vec<AttentionRecord> = Vec::new();
    let mut scores = String::from("sequence_id,score\n");
    for it in &selected {
        let x = if it.sequence.len() == t {
            it.sequence.clone()
        } else {
            mqa_core::skeldata::resample_sequence(&it.sequence, t)?
        };
        let p = scorer.predict(&x)?;
        writeln!(scores, "{},{:.6}", it.entry.sequence_id, p.score.value()).expect("string write");
        records.push(p.attention);
    }
    let windows: Vec<String> = (0..scorer.config().windows())
        .map(|i| format!("w{i}"))
        .collect();
    let layers = records[0].encoder.len();
    let heads = records[0].encoder.first().map_or(0, |l| l.len());
    let emit = |ctx: &mut Ctx, name: &str, m: &Tensor, labels: &[String]| -> Result<()> {
        ctx.out.write(
            &format!("attention/{name}.csv"),
            attention_csv(m, labels, labels),
        )?;
        if svg {
            ctx.out.write(
                &format!("attention/{name}.svg"),
                heatmap_svg(m, labels, labels, name),
            )?;
        }
        Ok(())
    };
    for l in 0..layers {
        for h in 0..heads {
            let ms: Vec<Tensor> = records.iter().map(|r| r.encoder[l][h].clone()).collect();
            emit(
                ctx,
                &format!("encoder_l{l}_h{h}"),
                &mean_matrices(&ms),
                &windows,
            )?;
        }
    }
    let parts = scorer.part_names();
    if !records[0].parts.is_empty() {
        let per_head: Vec<Vec<Tensor>> = records.iter().map(|r| r.mean_part_attention()).collect();
        for h in 0..per_head[0].len() {
            let ms: Vec<Tensor> = per_head.iter().map(|r| r[h].clone()).collect();
            emit(ctx, &format!("parts_h{h}"), &mean_matrices(&ms), &parts)?;
        }
        let mut mass = String::from("part,mass\n");
        for name in &parts {
            let m: Vec<f64> = records
                .iter()
                .filter_map(|r| r.part_mass(&[name.as_str()]))
                .collect();
            writeln!(mass, "{name},{}", fmt_opt(mean(&m))).expect("string write");
        }
        let upper: Vec<f64> = records
            .iter()
            .filter_map(|r| r.part_mass(&UPPER_BODY_PARTS))
            .collect();
        writeln!(mass, "upper_body,{}", fmt_opt(mean(&upper))).expect("string write");
        ctx.out.write("attention/part_mass.csv", mass)?;
    }
    ctx.out.write("attention/scores.csv", scores)?;
    println!(
        "attention: {} sequences, {layers} layers x {heads} heads",
        selected.len()
    );
    Ok(())
}
