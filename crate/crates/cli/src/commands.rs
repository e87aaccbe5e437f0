use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use speechprint::audio_io::{read_manifest, read_wav, to_mono, ClassLabel};
use speechprint::bispectral::bicoherence;
use speechprint::classical_ml::{
    cross_validate, train_classifier, ClassifierFile, ConfusionMatrix, Scenario,
};
use speechprint::crnn::{build_crnn32, clip_image, train, Network, NETWORK_MAGIC};
use speechprint::features::{extract_feature_vector, FeatureConfig, FeatureTable};
use speechprint::spectral::{mel_spectrogram, minmax_scale};
use speechprint::synth::{write_corpus, SynthConfig};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::pipeline::{balance_indices, extract_rows, load_for_prediction, load_manifest_segments, worker_pool};
use crate::report::{Evaluation, RunReport};

/// Whether every input succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    Partial,
}

fn write_table(table: &FeatureTable, hash: &str, out: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(out)?);
    table.write_csv(&mut w, Some(hash))?;
    w.flush()?;
    Ok(())
}

/// Reads a feature CSV and refuses it unless it was produced under
/// `expected_hash`.
fn read_table(path: &Path, expected_hash: &str) -> Result<FeatureTable> {
    let (table, hash) = FeatureTable::read_csv(BufReader::new(File::open(path)?))?;
    match hash {
        Some(h) if h == expected_hash => Ok(table),
        Some(h) => Err(CliError::Config(format!(
            "{} was extracted with config hash {h}, expected {expected_hash}",
            path.display()
        ))),
        None => Err(CliError::Config(format!("{} carries no config hash", path.display()))),
    }
}

pub fn extract(manifest: &Path, out: &Path, cfg: &PipelineConfig) -> Result<Outcome> {
    let entries = read_manifest(manifest)?;
    let pool = worker_pool()?;
    let (rows, skipped) = extract_rows(&pool, &entries, cfg.trim, &cfg.features);
    if rows.is_empty() {
        return Err(CliError::Failed(format!("no rows extracted: all {} clips were rejected", entries.len())));
    }
    write_table(&FeatureTable::new(rows), &cfg.features.fingerprint(), out)?;
    info!("wrote {} ({} clips, {skipped} skipped)", out.display(), entries.len());
    Ok(Outcome::Complete)
}

/// Source of training or evaluation data.
pub enum Input<'a> {
    Features(&'a Path),
    Manifest(&'a Path),
}

impl Input<'_> {
    fn describe(&self) -> String {
        match self {
            Input::Features(p) | Input::Manifest(p) => p.display().to_string(),
        }
    }

    fn table(&self, features: &FeatureConfig, cfg: &PipelineConfig) -> Result<FeatureTable> {
        match self {
            Input::Features(p) => read_table(p, &features.fingerprint()),
            Input::Manifest(p) => {
                let entries = read_manifest(p)?;
                let (rows, _) = extract_rows(&worker_pool()?, &entries, cfg.trim, features);
                if rows.is_empty() {
                    return Err(CliError::Failed("no clip could be featurised".into()));
                }
                Ok(FeatureTable::new(rows))
            }
        }
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn train_classical(input: Input, out: &Path, report_path: Option<&Path>, cfg: &PipelineConfig) -> Result<RunReport> {
    let start = Instant::now();
    let mut table = input.table(&cfg.features, cfg)?;
    if let Some(cap) = cfg.balance {
        let keep = balance_indices(&table.labels(), cfg.scenario, cap, cfg.seed)?;
        table = FeatureTable::new(keep.iter().map(|&i| table.rows[i]).collect());
    }
    let table = table.select_subset(cfg.subset);
    let model = train_classifier(&table, &cfg.classifier, cfg.scenario)?;
    let (evaluation, confusion) = if cfg.kfold >= 2 {
        let cv = cross_validate(&table, &cfg.classifier, cfg.scenario, cfg.kfold, cfg.seed)?;
        (Evaluation::CrossValidation { k: cfg.kfold }, cv.confusion)
    } else {
        let mut cm = ConfusionMatrix::new(cfg.scenario.class_names());
        for fv in &table.rows {
            cm.record(cfg.scenario.class_of(fv.label), model.predict_vector(fv)?.class_index);
        }
        (Evaluation::TrainingSet, cm)
    };
    ClassifierFile::new(model, cfg.features).save(out)?;
    let mut report = RunReport::new("train", cfg.classifier.kind().as_str(), cfg, table.len(), evaluation, confusion);
    finish_report(&mut report, start, vec![out.to_path_buf()], report_path.map(Path::to_path_buf).unwrap_or_else(|| sidecar(out, ".report.json")))?;
    Ok(report)
}

fn clip_images(
    pool: &rayon::ThreadPool,
    clips: &[(speechprint::audio_io::AudioClip, ClassLabel)],
    frontend: &FeatureConfig,
    h: usize,
    w: usize,
) -> Result<Vec<Vec<f64>>> {
    pool.install(|| {
        clips
            .par_iter()
            .map(|(c, _)| clip_image(frontend, c, h, w).map_err(CliError::from))
            .collect()
    })
}

pub fn train_crnn(manifest: &Path, out: &Path, report_path: Option<&Path>, cfg: &PipelineConfig) -> Result<RunReport> {
    let start = Instant::now();
    let pool = worker_pool()?;
    let mut clips = load_manifest_segments(&pool, &read_manifest(manifest)?, cfg.trim);
    if let Some(cap) = cfg.balance {
        let labels: Vec<ClassLabel> = clips.iter().map(|(_, l)| *l).collect();
        let keep = balance_indices(&labels, cfg.scenario, cap, cfg.seed)?;
        clips = keep.iter().map(|&i| clips[i].clone()).collect();
    }
    let images = clip_images(&pool, &clips, &cfg.features, cfg.crnn.input_height, cfg.crnn.input_width)?;
    let labels: Vec<usize> = clips.iter().map(|(_, l)| cfg.scenario.class_of(*l)).collect();
    let mut net = build_crnn32(cfg.scenario.class_names(), &cfg.crnn)?;
    net.frontend = cfg.features;
    let result = train(&mut net, &images, &labels, &cfg.training)?;
    net.save(out)?;
    let history = sidecar(out, ".history.csv");
    let mut w = BufWriter::new(File::create(&history)?);
    result.history.write_csv(&mut w)?;
    w.flush()?;
    let rows = result.test_indices.len();
    let mut report = RunReport::new(
        "train",
        "crnn32",
        cfg,
        images.len(),
        Evaluation::HeldOutTest { rows },
        result.test_confusion,
    );
    finish_report(
        &mut report,
        start,
        vec![out.to_path_buf(), history],
        report_path.map(Path::to_path_buf).unwrap_or_else(|| sidecar(out, ".report.json")),
    )?;
    Ok(report)
}

fn finish_report(report: &mut RunReport, start: Instant, mut artifacts: Vec<PathBuf>, path: PathBuf) -> Result<()> {
    artifacts.push(path.clone());
    report.artifacts = artifacts.iter().map(|p| p.display().to_string()).collect();
    report.elapsed_secs = start.elapsed().as_secs_f64();
    report.save(&path)?;
    RunReport::load(&path)?;
    info!(
        "accuracy {:.4} over {} rows, report {}",
        report.metrics.accuracy,
        report.confusion.total(),
        path.display()
    );
    Ok(())
}

/// A model file of either family.
pub enum LoadedModel {
    Classical(Box<ClassifierFile>),
    Network(Box<Network>),
}

impl LoadedModel {
    pub fn load(path: &Path) -> Result<LoadedModel> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(NETWORK_MAGIC) {
            return Ok(LoadedModel::Network(Box::new(Network::from_bytes(&bytes)?)));
        }
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::Failed(format!("{} is not a model file", path.display())))?;
        Ok(LoadedModel::Classical(Box::new(ClassifierFile::from_json(&text)?)))
    }

    pub fn feature_config(&self) -> FeatureConfig {
        match self {
            LoadedModel::Classical(f) => f.feature_config,
            LoadedModel::Network(n) => n.frontend,
        }
    }

    pub fn classes(&self) -> Vec<String> {
        match self {
            LoadedModel::Classical(f) => f.model.classes.clone(),
            LoadedModel::Network(n) => n.classes.clone(),
        }
    }

    fn scenario(&self) -> Scenario {
        match self {
            LoadedModel::Classical(f) => f.model.scenario,
            LoadedModel::Network(n) if n.num_classes() == 2 => Scenario::Binary,
            LoadedModel::Network(_) => Scenario::Multi,
        }
    }

    /// Class scores for one clip.
    fn scores(&self, clip: &speechprint::audio_io::AudioClip) -> Result<Vec<f64>> {
        match self {
            LoadedModel::Classical(f) => {
                let fv = extract_feature_vector(clip, ClassLabel::Human, &f.feature_config)?;
                Ok(f.model.predict_vector(&fv)?.scores)
            }
            LoadedModel::Network(n) => Ok(speechprint::crnn::classify(n, clip)?.scores),
        }
    }
}

/// Refuses a model whose feature geometry differs from an explicitly
/// supplied config.
fn check_model_config(model: &LoadedModel, explicit: Option<&PipelineConfig>) -> Result<()> {
    if let Some(cfg) = explicit {
        let (have, want) = (model.feature_config().fingerprint(), cfg.features.fingerprint());
        if have != want {
            return Err(CliError::Config(format!(
                "model was trained with config hash {have}, but the supplied config has {want}"
            )));
        }
    }
    Ok(())
}

pub fn eval(
    model_path: &Path,
    input: Input,
    report_path: Option<&Path>,
    cfg: &PipelineConfig,
    explicit: bool,
) -> Result<RunReport> {
    let start = Instant::now();
    let source = input.describe();
    let model = LoadedModel::load(model_path)?;
    check_model_config(&model, explicit.then_some(cfg))?;
    let features = model.feature_config();
    let scenario = model.scenario();
    let mut confusion = ConfusionMatrix::new(model.classes());
    let (kind, rows) = match &model {
        LoadedModel::Classical(f) => {
            let table = input.table(&features, cfg)?;
            for fv in &table.rows {
                confusion.record(scenario.class_of(fv.label), f.model.predict_vector(fv)?.class_index);
            }
            (f.model.spec.kind().as_str(), table.len())
        }
        LoadedModel::Network(net) => {
            let Input::Manifest(manifest) = input else {
                return Err(CliError::Config("network models are evaluated on a manifest".into()));
            };
            let pool = worker_pool()?;
            let clips = load_manifest_segments(&pool, &read_manifest(manifest)?, cfg.trim);
            let [h, w, _] = net.input_shape()[..] else {
                return Err(CliError::Failed("network input is not an image".into()));
            };
            let images = clip_images(&pool, &clips, &features, h, w)?;
            let batch = speechprint::crnn::Tensor::stack(&images, net.input_shape())?;
            let probs = net.predict_proba(&batch)?;
            for (i, (_, label)) in clips.iter().enumerate() {
                confusion.record(scenario.class_of(*label), argmax(probs.sample(i)));
            }
            ("crnn32", clips.len())
        }
    };
    let mut run_cfg = cfg.clone();
    run_cfg.features = features;
    run_cfg.scenario = scenario;
    let mut report = RunReport::new(
        "eval",
        kind,
        &run_cfg,
        rows,
        Evaluation::External { source },
        confusion,
    );
    report.elapsed_secs = start.elapsed().as_secs_f64();
    report.artifacts = vec![model_path.display().to_string()];
    if let Some(p) = report_path {
        report.artifacts.push(p.display().to_string());
        report.save(p)?;
    }
    Ok(report)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    path: String,
    label: &'a str,
    classes: &'a [String],
    scores: Vec<f64>,
    segments: usize,
}

#[derive(Serialize)]
struct ErrorRecord {
    path: String,
    error: String,
}

/// One JSON line per file on `out`. Scores are averaged over a file's
/// segments.
pub fn predict<W: Write>(model_path: &Path, files: &[PathBuf], cfg: &PipelineConfig, explicit: bool, mut out: W) -> Result<Outcome> {
    let model = LoadedModel::load(model_path)?;
    check_model_config(&model, explicit.then_some(cfg))?;
    let classes = model.classes();
    let mut failed = 0;
    for path in files {
        let result = load_for_prediction(path, cfg.trim).and_then(|segments| {
            let mut mean = vec![0.0; classes.len()];
            for seg in &segments {
                for (m, s) in mean.iter_mut().zip(model.scores(seg)?) {
                    *m += s / segments.len() as f64;
                }
            }
            Ok((mean, segments.len()))
        });
        let line = match result {
            Ok((scores, segments)) => serde_json::to_string(&PredictionRecord {
                path: path.display().to_string(),
                label: &classes[argmax(&scores)],
                classes: &classes,
                scores,
                segments,
            })?,
            Err(e) => {
                failed += 1;
                warn!("{}: {e}", path.display());
                serde_json::to_string(&ErrorRecord {
                    path: path.display().to_string(),
                    error: e.to_string(),
                })?
            }
        };
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(if failed == 0 { Outcome::Complete } else { Outcome::Partial })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RelicKind {
    Bicoherence,
    Melspec,
}

/// Writes `<prefix>.pgm` (8-bit greyscale) and `<prefix>.csv` for a grid of
/// values in `[0, 1]`. Returns the two paths.
pub fn relics(audio: &Path, kind: RelicKind, prefix: &Path, cfg: &PipelineConfig) -> Result<(PathBuf, PathBuf)> {
    let clip = to_mono(read_wav(audio)?)?;
    let (height, width, grid) = match kind {
        RelicKind::Bicoherence => {
            let g = bicoherence(clip.samples(), &cfg.features.bispectral)?;
            (g.grid_size, g.grid_size, g.magnitude)
        }
        RelicKind::Melspec => {
            let spec = mel_spectrogram(&clip, &cfg.features.mel_config(clip.sample_rate()))?;
            // frequency on the vertical axis, low bins at the bottom
            let mut rows = Vec::with_capacity(spec.data.len());
            for b in (0..spec.n_bins).rev() {
                rows.extend((0..spec.n_frames).map(|t| spec.data[t * spec.n_bins + b]));
            }
            (spec.n_bins, spec.n_frames, minmax_scale(&rows))
        }
    };
    let pgm = sidecar(prefix, ".pgm");
    let csv = sidecar(prefix, ".csv");
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(grid.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(&pgm, bytes)?;
    let mut text = String::new();
    for row in grid.chunks(width) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(&csv, text)?;
    Ok((pgm, csv))
}

pub fn synth(dir: &Path, cfg: &SynthConfig) -> Result<PathBuf> {
    if cfg.classes != 2 && cfg.classes != 4 {
        return Err(CliError::Config(format!("classes must be 2 or 4, got {}", cfg.classes)));
    }
    if cfg.n_clips == 0 || !(cfg.duration_secs > 0.0) || cfg.sample_rate == 0 {
        return Err(CliError::Config("clip count, duration and sample rate must be positive".into()));
    }
    let manifest = write_corpus(dir, cfg)?;
    info!("wrote {} clips and {}", cfg.n_clips, manifest.display());
    Ok(manifest)
}
