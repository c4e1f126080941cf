use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use osteo::data::{
    apply_normalization, compute_class_weights, decode_file, load_manifest, split_stratified, synth_generate, to_tensor, ClassLabel,
    DatasetManifest, PreparedData, Split, DEFAULT_FRACTIONS,
};
use osteo::eval::{emit_chart, emit_table, evaluate, Averaging, MetricsReport, TableFormat, TaskSpec};
use osteo::models::checkpoint::{self, Checkpoint};
use osteo::models::{ArchName, ModelGraph, RunInfo};
use osteo::train::{epoch_log, train, train_hybrid, EpochRecord, NumericMode};
use osteo::{gradcheck, Error, Real, Result};

use crate::config::{resolve, RunConfig, TrainArgs};

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io(path))
}

pub fn synth(out: &Path, per_class: usize, side: usize, seed: u64) -> Result<()> {
    let files = synth_generate(out, per_class, side, seed)?;
    println!("wrote {} images to {}", files.len(), out.display());
    Ok(())
}

/// A split manifest from a dataset root or a manifest JSON file.
fn dataset(data: &Path, split_seed: u64, fractions: [f64; 3]) -> Result<DatasetManifest> {
    let manifest = if data.is_file() { DatasetManifest::load(data)? } else { load_manifest(data, split_seed)? };
    if manifest.samples.iter().all(|s| s.split.is_some()) {
        Ok(manifest)
    } else {
        split_stratified(&manifest, fractions, split_seed)
    }
}

fn run_info(task: &TaskSpec, data: &PreparedData, cfg: &RunConfig) -> RunInfo {
    RunInfo {
        class_names: task.class_names(),
        task: Some(task.name().into()),
        normalization: Some(*data.stats()),
        split_seed: Some(cfg.split_seed),
        split_fractions: Some(cfg.fractions),
    }
}

fn fresh_log(path: &Path) -> Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(io(path)(e)),
        _ => Ok(()),
    }
}

fn load_as<T: Real>(path: &Path) -> Result<ModelGraph<T>> {
    Ok(checkpoint::load(path)?.model.cast())
}

fn fit<T: Real>(cfg: &RunConfig, task: &TaskSpec, data: &PreparedData, weights: &[f64]) -> Result<ModelGraph<f32>> {
    let info = run_info(task, data, cfg);
    let log_path = |name: &str| cfg.out.join(name);
    if cfg.arch == ArchName::Hybrid {
        let branches = match cfg.init_from.as_slice() {
            [] => None,
            [a, b] => {
                let (a, b) = (load_as::<T>(a)?, load_as::<T>(b)?);
                match (a.spec().name, b.spec().name) {
                    (ArchName::Cnn, ArchName::Vit) => Some((a, b)),
                    (ArchName::Vit, ArchName::Cnn) => Some((b, a)),
                    (x, y) => return Err(Error::Usage(format!("hybrid --init-from needs a cnn and a vit checkpoint, got {x} and {y}"))),
                }
            }
            _ => return Err(Error::Usage("hybrid --init-from takes exactly two checkpoints (cnn and vit)".into())),
        };
        let logs = [(ArchName::Cnn, "epochs_cnn.csv"), (ArchName::Vit, "epochs_vit.csv"), (ArchName::Hybrid, "epochs.csv")];
        for (_, name) in logs {
            fresh_log(&log_path(name))?;
        }
        let b = cfg.branch.as_ref().expect("hybrid config has branch recipes");
        let on_epoch = |stage: ArchName, r: &EpochRecord| {
            let name = logs.iter().find(|(a, _)| *a == stage).map(|(_, n)| *n).unwrap();
            epoch_log(std::slice::from_ref(r), &log_path(name))
        };
        let out = train_hybrid(&cfg.model, data, (&b.cnn, &b.vit), &cfg.train, weights, branches, on_epoch)?;
        if let Some((cnn, vit)) = &out.branches {
            checkpoint::save(&cnn.model.cast(), &info, &log_path("cnn.oshx"))?;
            checkpoint::save(&vit.model.cast(), &info, &log_path("vit.oshx"))?;
        }
        log::info!("best hybrid epoch {}", out.hybrid.best_epoch);
        return Ok(out.hybrid.model.cast());
    }
    let mut model = ModelGraph::<T>::build(&cfg.model, cfg.seed)?;
    match cfg.init_from.as_slice() {
        [] => {}
        [p] => {
            let skipped = model.import_matching(&load_as::<T>(p)?)?;
            if !skipped.is_empty() {
                log::warn!("kept fresh initialisation for {} tensors: {}", skipped.len(), skipped.join(", "));
            }
        }
        _ => return Err(Error::Usage(format!("{} takes at most one --init-from checkpoint", cfg.arch))),
    }
    let path = log_path("epochs.csv");
    fresh_log(&path)?;
    let out = train(model, data, &cfg.train, weights, |r| epoch_log(std::slice::from_ref(r), &path))?;
    log::info!("best epoch {}", out.best_epoch);
    Ok(out.model.cast())
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let task = cfg.task()?;
    fs::create_dir_all(&cfg.out).map_err(io(&cfg.out))?;
    write(&cfg.out.join("config.toml"), &cfg.to_toml()?)?;

    let manifest = dataset(&cfg.data, cfg.split_seed, cfg.fractions)?;
    manifest.save(&cfg.out.join("manifest.json"))?;
    let data = PreparedData::new(&manifest, &task.classes, cfg.model.input_side, None)?;
    let weights = match &cfg.train.class_weights {
        Some(w) if w.len() != task.num_classes() => {
            return Err(Error::Config(format!("{} class weights for a {}-class task", w.len(), task.num_classes())))
        }
        Some(w) => w.clone(),
        None => compute_class_weights(&manifest, &task.classes)?,
    };
    log::info!("class weights {weights:?}");

    let model = match cfg.train.numeric_mode {
        NumericMode::F32 => fit::<f32>(&cfg, &task, &data, &weights)?,
        NumericMode::F64 => fit::<f64>(&cfg, &task, &data, &weights)?,
    };
    checkpoint::save(&model, &run_info(&task, &data, &cfg), &cfg.out.join("model.oshx"))?;
    let report = evaluate(&model, &data, &task, Split::Val, Averaging::Macro, cfg.arch.display_name())?;
    write(&cfg.out.join("report_val.json"), &serde_json::to_string_pretty(&report)?)?;
    print!("{}", emit_table(&[report], TableFormat::Markdown)?);
    Ok(())
}

fn checkpoint_task(ck: &Checkpoint) -> Result<TaskSpec> {
    TaskSpec::from_class_names(&ck.info.class_names)
        .ok_or_else(|| Error::SpecMismatch(format!("checkpoint classes {:?} match no task", ck.info.class_names)))
}

fn averaging(name: &str, task: &TaskSpec) -> Result<Averaging> {
    match name {
        "macro" => Ok(Averaging::Macro),
        "positive" => task
            .positive_index()
            .map(Averaging::Positive)
            .ok_or_else(|| Error::Usage(format!("positive-class averaging needs the binary task, not {task}"))),
        _ => Err(Error::Usage(format!("unknown averaging {name:?} (expected macro or positive)"))),
    }
}

pub struct EvalArgs<'a> {
    pub data: &'a Path,
    pub split: Split,
    pub averaging: &'a str,
}

fn score(path: &Path, args: &EvalArgs<'_>, name: Option<&str>) -> Result<MetricsReport> {
    let ck = checkpoint::load(path)?;
    let task = checkpoint_task(&ck)?;
    if ck.model.num_classes() != task.num_classes() {
        return Err(Error::SpecMismatch(format!("head width {} but {} classes", ck.model.num_classes(), task.num_classes())));
    }
    let manifest = dataset(args.data, ck.info.split_seed.unwrap_or(0), ck.info.split_fractions.unwrap_or(DEFAULT_FRACTIONS))?;
    let present: Vec<ClassLabel> = task.classes.iter().copied().filter(|c| manifest.samples.iter().any(|s| s.label == *c)).collect();
    if present.is_empty() {
        return Err(Error::SpecMismatch(format!("{} holds none of the {task} task classes", args.data.display())));
    }
    let data = PreparedData::new(&manifest, &task.classes, ck.model.spec().input_side, ck.info.normalization)?;
    if data.split_len(args.split) == 0 {
        return Err(Error::Usage(format!("the {} split is empty", args.split)));
    }
    let name = name.unwrap_or(ck.model.spec().name.display_name());
    evaluate(&ck.model, &data, &task, args.split, averaging(args.averaging, &task)?, name)
}

fn emit(reports: &[MetricsReport], format: TableFormat, chart: Option<&Path>) -> Result<()> {
    print!("{}", emit_table(reports, format)?);
    if let Some(path) = chart {
        emit_chart(reports, path)?;
    }
    Ok(())
}

pub fn eval_cmd(checkpoint: &Path, args: &EvalArgs<'_>, name: Option<&str>, format: TableFormat, chart: Option<&Path>) -> Result<()> {
    emit(&[score(checkpoint, args, name)?], format, chart)
}

/// Tabulates saved JSON reports and checkpoints scored on `--data`.
pub fn report_cmd(inputs: &[PathBuf], args: Option<&EvalArgs<'_>>, format: TableFormat, chart: Option<&Path>) -> Result<()> {
    let mut reports = Vec::new();
    for path in inputs {
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(path).map_err(io(path))?;
            reports.push(serde_json::from_str(&text)?);
        } else {
            let args = args.ok_or_else(|| Error::Usage(format!("--data is required to score {}", path.display())))?;
            reports.push(score(path, args, None)?);
        }
    }
    if reports.is_empty() {
        return Err(Error::Usage("no reports given".into()));
    }
    emit(&reports, format, chart)
}

/// Class probabilities of one image, most likely first.
pub fn predict_probabilities(checkpoint: &Path, image: &Path) -> Result<Vec<(String, f64)>> {
    let ck = checkpoint::load(checkpoint)?;
    let side = ck.model.spec().input_side;
    let x = to_tensor(&decode_file(image)?, side)?;
    let x = apply_normalization(&x, &ck.info.normalization.unwrap_or_else(osteo::data::NormStats::identity))?;
    let probs = ck.model.predict(&x.reshape(&[1, 3, side, side])?)?.softmax()?;
    let mut rows: Vec<(String, f64)> = ck.info.class_names.iter().cloned().zip(probs.data().iter().map(|p| p.as_f64())).collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(rows)
}

pub fn predict_cmd(checkpoint: &Path, image: &Path) -> Result<()> {
    for (name, p) in predict_probabilities(checkpoint, image)? {
        println!("{name}\t{p:.6}");
    }
    Ok(())
}

pub fn gradcheck_cmd(seed: u64, inject_fault: bool) -> Result<ExitCode> {
    let report = gradcheck::run(seed, inject_fault)?;
    for op in &report.ops {
        println!("{:<24} {:.3e} {}", op.op, op.max_rel_error, if op.passed { "PASS" } else { "FAIL" });
    }
    if report.passed() {
        println!("all {} ops pass", report.ops.len());
        Ok(ExitCode::SUCCESS)
    } else {
        let names: Vec<&str> = report.failures().iter().map(|o| o.op.as_str()).collect();
        eprintln!("gradient check failed: {}", names.join(", "));
        Ok(ExitCode::from(1))
    }
}
