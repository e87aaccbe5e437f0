//! Clip loading, parallel extraction and row balancing shared by the
//! subcommands.

use std::env;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use speechprint::audio_io::{read_wav, to_mono, trim_segments, AudioClip, ClassLabel, ManifestEntry};
use speechprint::classical_ml::Scenario;
use speechprint::features::{extract_feature_vector, FeatureConfig, FeatureVector};

use crate::config::TrimPolicy;
use crate::error::{CliError, Result};

pub const WORKERS_ENV: &str = "SPEECHPRINT_WORKERS";

/// Worker pool sized by `SPEECHPRINT_WORKERS`, or by rayon's default when
/// unset.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = match env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("{WORKERS_ENV} must be a non-negative integer, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))
}

/// Decodes one file, downmixes it and cuts it into segments. Clips too
/// short for the trim window are rejected.
pub fn load_segments(path: &std::path::Path, trim: Option<TrimPolicy>) -> Result<Vec<AudioClip>> {
    let clip = to_mono(read_wav(path)?)?;
    match trim {
        Some(t) => Ok(trim_segments(&clip, t.min_secs, t.max_secs)?),
        None => Ok(vec![clip]),
    }
}

/// Like [`load_segments`] but keeps a short clip whole instead of failing.
pub fn load_for_prediction(path: &std::path::Path, trim: Option<TrimPolicy>) -> Result<Vec<AudioClip>> {
    let clip = to_mono(read_wav(path)?)?;
    match trim {
        Some(t) if clip.duration_secs() >= t.min_secs => Ok(trim_segments(&clip, t.min_secs, t.max_secs)?),
        _ => Ok(vec![clip]),
    }
}

/// Labeled segments of every manifest entry, in manifest order. Entries
/// that fail to load are logged and skipped.
pub fn load_manifest_segments(
    pool: &rayon::ThreadPool,
    entries: &[ManifestEntry],
    trim: Option<TrimPolicy>,
) -> Vec<(AudioClip, ClassLabel)> {
    let loaded: Vec<Result<Vec<AudioClip>>> =
        pool.install(|| entries.par_iter().map(|e| load_segments(&e.path, trim)).collect());
    let mut out = Vec::new();
    for (entry, result) in entries.iter().zip(loaded) {
        match result {
            Ok(segments) => out.extend(segments.into_iter().map(|c| (c, entry.label))),
            Err(e) => warn!("skipping {}: {e}", entry.path.display()),
        }
    }
    out
}

/// Feature rows for every admitted segment, in manifest order.
pub fn extract_rows(
    pool: &rayon::ThreadPool,
    entries: &[ManifestEntry],
    trim: Option<TrimPolicy>,
    cfg: &FeatureConfig,
) -> (Vec<FeatureVector>, usize) {
    let per_entry: Vec<Result<Vec<FeatureVector>>> = pool.install(|| {
        entries
            .par_iter()
            .map(|e| {
                load_segments(&e.path, trim)?
                    .iter()
                    .map(|c| extract_feature_vector(c, e.label, cfg).map_err(CliError::from))
                    .collect()
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (entry, result) in entries.iter().zip(per_entry) {
        match result {
            Ok(r) => rows.extend(r),
            Err(e) => {
                skipped += 1;
                warn!("skipping {}: {e}", entry.path.display());
            }
        }
    }
    (rows, skipped)
}

/// Picks exactly `cap` rows of every scenario class, seeded, preserving
/// the original order. Fails when any class has fewer than `cap` rows.
pub fn balance_indices(labels: &[ClassLabel], scenario: Scenario, cap: usize, seed: u64) -> Result<Vec<usize>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); scenario.n_classes()];
    for (i, l) in labels.iter().enumerate() {
        by_class[scenario.class_of(*l)].push(i);
    }
    let names = scenario.class_names();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(cap * by_class.len());
    for (c, rows) in by_class.iter_mut().enumerate() {
        if rows.len() < cap {
            return Err(CliError::Config(format!(
                "cannot balance to {cap} rows per class: `{}` has {}",
                names[c],
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        keep.extend_from_slice(&rows[..cap]);
    }
    keep.sort_unstable();
    Ok(keep)
}
