//! Subcommand implementations. Each returns the text and JSON renderings of
//! its result; files are written under the run's output directory.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{require_exists, RunConfig};
use crate::data::{
    generate_synthetic, load_manifest, save_volume, write_manifest, CohortCounts, CohortSpec, Dataset, DiseaseLabel,
    Sample, Split, Volume, VolumeSource,
};
use crate::metrics::{render_per_class_table, render_summary_table, MetricsReport};
use crate::pipeline::store::{
    load_checkpoint, save_baseline, save_two_stage, write_json, Checkpoint, CheckpointKind, Metadata,
};
use crate::pipeline::{
    evaluate_features, sha256_hex, train_baseline_features, train_two_stage_features, Evaluated, FeatureSet, History,
    Stage, StepRecord, TrainConfig,
};
use crate::preprocess::featurize;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const COHORT_FILE: &str = "cohort.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const COMPARE_JSON: &str = "compare.json";
pub const COMPARE_TEXT: &str = "compare.txt";

/// What a command prints.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub text: String,
    pub json: Value,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(text: &str, path: &Path) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes each volume to `dir/<id>.lvol` and returns a manifest-ready copy.
fn store_volumes<F>(dataset: &Dataset, dir: &Path, volume_of: F) -> Result<Dataset>
where
    F: Fn(&Sample) -> Result<Volume> + Sync,
{
    create_dir(dir)?;
    let samples = dataset
        .samples()
        .par_iter()
        .map(|s| {
            let path = dir.join(format!("{}.lvol", s.id));
            save_volume(&volume_of(s)?, &path)?;
            Ok(Sample {
                volume: VolumeSource::File(path),
                ..s.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples)
}

pub fn synth(rc: &RunConfig, spec_path: Option<&Path>) -> Result<Output> {
    let spec = match spec_path {
        Some(path) => {
            require_exists(path, "cohort spec")?;
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut spec = CohortSpec::from_json_str(&text)?;
            if let Some(seed) = rc.seed {
                spec.seed = seed;
            }
            spec
        }
        None => rc.cohort()?,
    };
    let dataset = generate_synthetic(&spec)?;
    create_dir(&rc.out)?;
    let stored = store_volumes(&dataset, &rc.out.join("volumes"), |s| Ok(s.load_volume()?.into_owned()))?;
    let manifest = rc.out.join(MANIFEST_FILE);
    write_manifest(&stored, &manifest, &rc.out)?;
    write_json(&spec, &rc.out.join(COHORT_FILE))?;
    let manifest_hash = file_sha256(&manifest)?;

    let counts = CohortCounts::tally(stored.samples());
    let mut text = counts.render_table();
    let _ = writeln!(text, "manifest {} (sha256 {manifest_hash})", manifest.display());
    let json = json!({
        "manifest": manifest,
        "manifest_sha256": manifest_hash,
        "cohort": spec,
        "counts": counts.to_json(),
        "train_total": counts.split_total(Split::Train),
        "val_total": counts.split_total(Split::Val),
    });
    Ok(Output { text, json })
}

/// Writes each sample's preprocessed volume (f32) with a matching manifest.
pub fn preprocess(rc: &RunConfig, manifest: &Path) -> Result<Output> {
    require_exists(manifest, "manifest")?;
    let config = rc.preprocess()?;
    config.validate()?;
    let dataset = load_manifest(manifest)?;
    create_dir(&rc.out)?;
    let stored = store_volumes(&dataset, &rc.out.join("features"), |s| {
        let features = featurize(&*s.load_volume()?, &config)?;
        Volume::new(config.target_dims, features.iter().map(|&v| v as f32).collect())
    })?;
    let out_manifest = rc.out.join(MANIFEST_FILE);
    write_manifest(&stored, &out_manifest, &rc.out)?;
    write_json(&config, &rc.out.join(crate::pipeline::store::PREPROCESS_FILE))?;
    let text = format!(
        "preprocessed {} volumes to {:?} ({:?}); manifest {}\n",
        stored.len(),
        config.target_dims,
        config.normalization,
        out_manifest.display()
    );
    let json = json!({
        "samples": stored.len(),
        "preprocess": config,
        "manifest": out_manifest,
        "manifest_sha256": file_sha256(&out_manifest)?,
    });
    Ok(Output { text, json })
}

fn write_training_log<'a>(rows: impl Iterator<Item = (Stage, &'a StepRecord)>, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "stage,epoch,step,lr,loss").map_err(io)?;
    for (stage, r) in rows {
        writeln!(w, "{},{},{},{},{}", stage.name(), r.epoch, r.step, r.lr, r.loss).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn history_summary(histories: &[History]) -> (String, Value) {
    let mut text = String::new();
    let mut rows = Vec::new();
    for h in histories {
        let best = h.best();
        let _ = writeln!(
            text,
            "{:<8} best epoch {:>3}/{:<3} val accuracy {:.4} val macro-F1 {:.4} ({} train / {} val)",
            h.stage.name(),
            h.best_epoch,
            h.epochs.len(),
            best.val_accuracy,
            best.val_macro_f1,
            h.train_samples,
            h.val_samples
        );
        rows.push(json!({
            "stage": h.stage.name(),
            "best_epoch": h.best_epoch,
            "epochs": h.epochs.len(),
            "val_accuracy": best.val_accuracy,
            "val_macro_f1": best.val_macro_f1,
            "train_samples": h.train_samples,
            "val_samples": h.val_samples,
        }));
    }
    (text, Value::Array(rows))
}

/// Trains the two-stage model, or the pooled baseline, from a manifest.
pub fn train(rc: &RunConfig, manifest: &Path, kind: CheckpointKind) -> Result<Output> {
    let config = rc.train()?;
    require_exists(manifest, "manifest")?;
    let manifest_hash = file_sha256(manifest)?;
    let dataset = load_manifest(manifest)?;
    let features = FeatureSet::build(&dataset, &config.preprocess)?;
    let metadata = |histories: Vec<History>| Metadata {
        kind,
        seed: config.seed,
        config_hash: config.hash(),
        config: config.clone(),
        manifest_hash: Some(manifest_hash.clone()),
        histories,
    };
    let log = rc.out.join(TRAINING_LOG_FILE);
    let md = match kind {
        CheckpointKind::TwoStage => {
            let t = train_two_stage_features(&features, &config)?;
            let md = metadata(t.histories().into_iter().cloned().collect());
            save_two_stage(&t.model, &md, &rc.out)?;
            write_training_log(t.steps.iter().map(|(s, r)| (*s, r)), &log)?;
            md
        }
        CheckpointKind::Baseline => {
            let t = train_baseline_features(&features, &config)?;
            let md = metadata(vec![t.history.clone()]);
            save_baseline(&t.model, &md, &rc.out)?;
            write_training_log(t.steps.iter().map(|r| (Stage::Baseline, r)), &log)?;
            md
        }
    };
    let (mut text, stages) = history_summary(&md.histories);
    let _ = writeln!(text, "checkpoint {} (config sha256 {})", rc.out.display(), md.config_hash);
    let json = json!({
        "kind": md.kind,
        "checkpoint": rc.out,
        "config_hash": md.config_hash,
        "manifest_hash": md.manifest_hash,
        "stages": stages,
    });
    Ok(Output { text, json })
}

fn method_label(kind: CheckpointKind) -> &'static str {
    match kind {
        CheckpointKind::TwoStage => "Gender-aware (two-stage)",
        CheckpointKind::Baseline => "Baseline",
    }
}

/// Identifies the checkpoint a report was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub kind: CheckpointKind,
    pub seed: u64,
    pub config_hash: String,
    pub training_manifest_hash: Option<String>,
}

/// Schema-stable evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub split: Split,
    pub oracle_routing: bool,
    pub checkpoint: CheckpointInfo,
    pub config: TrainConfig,
    pub manifest_hash: String,
    pub metrics: MetricsReport,
}

struct Loaded {
    checkpoint: Checkpoint,
    metadata: Metadata,
}

fn load(dir: &Path) -> Result<Loaded> {
    require_exists(dir, "checkpoint directory")?;
    let (checkpoint, metadata) = load_checkpoint(dir)?;
    Ok(Loaded { checkpoint, metadata })
}

fn score(loaded: &Loaded, dataset: &Dataset, split: Split, oracle: bool, manifest_hash: &str) -> Result<EvalReport> {
    let evaluated = match (&loaded.checkpoint, oracle) {
        (Checkpoint::TwoStage(m), false) => Evaluated::TwoStage(m),
        (Checkpoint::TwoStage(m), true) => Evaluated::OracleRouted(m),
        (Checkpoint::Baseline(m), false) => Evaluated::Baseline(m),
        (Checkpoint::Baseline(_), true) => {
            return Err(Error::InvalidInput("oracle routing needs a two-stage checkpoint".into()))
        }
    };
    let subset = dataset.split(split);
    if subset.is_empty() {
        return Err(Error::InvalidInput(format!("{} split is empty", split.name())));
    }
    let features = FeatureSet::build(&subset, evaluated.preprocess())?;
    let metrics = evaluate_features(evaluated, &features, split)?;
    let md = &loaded.metadata;
    Ok(EvalReport {
        method: method_label(md.kind).to_string(),
        split,
        oracle_routing: oracle,
        checkpoint: CheckpointInfo {
            kind: md.kind,
            seed: md.seed,
            config_hash: md.config_hash.clone(),
            training_manifest_hash: md.manifest_hash.clone(),
        },
        config: md.config.clone(),
        manifest_hash: manifest_hash.to_string(),
        metrics,
    })
}

fn row_label(r: &EvalReport) -> String {
    if r.oracle_routing {
        format!("{} [oracle routing]", r.method)
    } else {
        r.method.clone()
    }
}

fn render_eval(r: &EvalReport) -> String {
    let label = row_label(r);
    let rows = [(label.as_str(), &r.metrics)];
    let mut text = render_summary_table(&rows);
    text.push('\n');
    text.push_str(&render_per_class_table(&rows, Some(DiseaseLabel::SquamousCellCarcinoma.name())));
    if let Some(g) = r.metrics.gender_accuracy {
        let _ = writeln!(text, "\ngender routing accuracy {g:.4}");
    }
    for note in &r.metrics.notes {
        let _ = writeln!(text, "note: {note}");
    }
    let _ = writeln!(
        text,
        "split {} | AUC {} | manifest sha256 {} | config sha256 {}",
        r.split.name(),
        r.metrics.auc_variant,
        r.manifest_hash,
        r.checkpoint.config_hash
    );
    text
}

pub fn eval(rc: &RunConfig, checkpoint: &Path, manifest: &Path, split: Split, oracle: bool) -> Result<Output> {
    let loaded = load(checkpoint)?;
    require_exists(manifest, "manifest")?;
    let manifest_hash = file_sha256(manifest)?;
    let dataset = load_manifest(manifest)?;
    let report = score(&loaded, &dataset, split, oracle, &manifest_hash)?;
    let text = render_eval(&report);
    create_dir(&rc.out)?;
    write_json(&report, &rc.out.join(REPORT_JSON))?;
    write_text(&text, &rc.out.join(REPORT_TEXT))?;
    Ok(Output {
        text,
        json: serde_json::to_value(&report)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub split: Split,
    pub manifest_hash: String,
    pub highlight_class: String,
    pub rows: Vec<EvalReport>,
}

pub fn compare(rc: &RunConfig, first: &Path, second: &Path, manifest: &Path, split: Split) -> Result<Output> {
    let loaded = [load(first)?, load(second)?];
    require_exists(manifest, "manifest")?;
    let manifest_hash = file_sha256(manifest)?;
    let dataset = load_manifest(manifest)?;
    let rows = loaded
        .iter()
        .map(|l| score(l, &dataset, split, false, &manifest_hash))
        .collect::<Result<Vec<_>>>()?;
    let highlight = DiseaseLabel::SquamousCellCarcinoma.name();
    let labels: Vec<String> = rows.iter().map(row_label).collect();
    let table: Vec<(&str, &MetricsReport)> = labels.iter().map(String::as_str).zip(rows.iter().map(|r| &r.metrics)).collect();
    let mut text = render_summary_table(&table);
    text.push('\n');
    text.push_str(&render_per_class_table(&table, Some(highlight)));
    let _ = writeln!(text, "split {} | manifest sha256 {manifest_hash}", split.name());
    let report = CompareReport {
        split,
        manifest_hash,
        highlight_class: highlight.to_string(),
        rows,
    };
    create_dir(&rc.out)?;
    write_json(&report, &rc.out.join(COMPARE_JSON))?;
    write_text(&text, &rc.out.join(COMPARE_TEXT))?;
    Ok(Output {
        text,
        json: serde_json::to_value(&report)?,
    })
}
