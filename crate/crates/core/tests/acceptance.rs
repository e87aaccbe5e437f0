//! Acceptance suite. Each test prints one PASS/FAIL line to stderr and then
//! asserts. Run with `cargo test -p speechprint-core --test acceptance`.

mod common;

use std::f64::consts::PI;
use std::io::BufReader;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use tempfile::TempDir;

use common::{max_param_error, moments_oracle, naive_dct_ii, naive_dft, normalized_bicoherence, report};
use speechprint::audio_io::{read_manifest, read_wav, AudioClip, ClassLabel};
use speechprint::bispectral::{bicoherence, bispectrum_segment, segment_signal, BispectralConfig};
use speechprint::cepstral::dct_ii;
use speechprint::classical_ml::{
    cross_validate, f1_score, metrics, precision, recall, stratified_folds, train_classifier, AlgoKind, AlgoSpec,
    ClassifierFile, ConfusionMatrix, Scenario,
};
use speechprint::crnn::{build_crnn32, classify, fit, CrnnConfig, Mode, Network, Tensor, TrainConfig};
use speechprint::features::{extract_feature_vector, FeatureConfig, FeatureSubset, FeatureTable, FeatureVector, N_FEATURES};
use speechprint::spectral::dft;
use speechprint::synth::{write_corpus, SynthConfig};

struct Corpus {
    _dir: TempDir,
    clips: Vec<(AudioClip, ClassLabel)>,
    table: FeatureTable,
    /// Seconds spent writing, reading and featurising the corpus.
    build_secs: f64,
}

/// The default synthetic corpus, written to disk, read back and featurised
/// once for every test that needs it.
fn corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let start = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(dir.path(), &SynthConfig::default()).unwrap();
        let clips: Vec<(AudioClip, ClassLabel)> = read_manifest(&manifest)
            .unwrap()
            .into_iter()
            .map(|e| (read_wav(&e.path).unwrap(), e.label))
            .collect();
        let cfg = FeatureConfig::default();
        let rows = clips
            .iter()
            .map(|(c, l)| extract_feature_vector(c, *l, &cfg).unwrap())
            .collect();
        Corpus {
            _dir: dir,
            clips,
            table: FeatureTable::new(rows),
            build_secs: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn c01_transforms_match_naive_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(4..=1024);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = dft(&x).unwrap();
        for (a, b) in fast.bins.iter().zip(naive_dft(&x)) {
            worst = worst.max((a - b).norm());
        }
        for (a, b) in dct_ii(&x).iter().zip(naive_dct_ii(&x)) {
            worst = worst.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-9 && secs < 30.0;
    report(1, "DFT/DCT oracle equivalence", pass, &format!("max abs err {worst:.2e}, {secs:.1}s"));
    assert!(pass);
}

/// Three cosines per segment at bins `k1`, `k2`, `k1 + k2`. Coupled signals
/// set the third phase to the sum of the first two; otherwise all three
/// are independent.
fn triad_signal(rng: &mut ChaCha8Rng, coupled: bool, seg_len: usize, k: usize, bins: (usize, usize)) -> Vec<f64> {
    let (k1, k2) = bins;
    let mut out = Vec::with_capacity(seg_len * k);
    for _ in 0..k {
        let p1 = rng.random_range(-PI..PI);
        let p2 = rng.random_range(-PI..PI);
        let p3 = if coupled { p1 + p2 } else { rng.random_range(-PI..PI) };
        for t in 0..seg_len {
            let w = 2.0 * PI * t as f64 / seg_len as f64;
            out.push((w * k1 as f64 + p1).cos() + (w * k2 as f64 + p2).cos() + (w * (k1 + k2) as f64 + p3).cos());
        }
    }
    out
}

fn cell_bicoherence(signal: &[f64], k: usize, grid: usize, k1: usize, k2: usize) -> f64 {
    let cell: Vec<Complex64> = segment_signal(signal, k)
        .unwrap()
        .iter()
        .map(|s| bispectrum_segment(s, grid).unwrap()[k1 * grid + k2])
        .collect();
    normalized_bicoherence(&cell)
}

#[test]
fn c02_bicoherence_separates_coupled_from_random_phases() {
    let start = Instant::now();
    let (k, seg_len, grid, k1, k2) = (100, 128, 64, 10, 17);
    let mut coupled_min = f64::INFINITY;
    let mut random_max: f64 = 0.0;
    for trial in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let coupled = triad_signal(&mut rng, true, seg_len, k, (k1, k2));
        let random = triad_signal(&mut rng, false, seg_len, k, (k1, k2));
        coupled_min = coupled_min.min(cell_bicoherence(&coupled, k, grid, k1, k2));
        random_max = random_max.max(cell_bicoherence(&random, k, grid, k1, k2));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = coupled_min >= 0.9 && random_max < 0.3 && secs < 60.0;
    report(
        2,
        "bicoherence discrimination",
        pass,
        &format!("coupled min {coupled_min:.4}, random max {random_max:.4}, {secs:.1}s"),
    );
    assert!(pass);
}

#[test]
fn c03_normalized_grid_invariants() {
    let cfg = BispectralConfig { k_segments: 20, grid: 32 };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut scale_err, mut asym, mut out_of_range): (f64, f64, usize) = (0.0, 0.0, 0);
    for _ in 0..100 {
        let n = cfg.min_samples() + rng.random_range(0..500);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = bicoherence(&x, &cfg).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let b = bicoherence(&scaled, &cfg).unwrap();
        for (p, q) in a.magnitude.iter().zip(&b.magnitude) {
            scale_err = scale_err.max((p - q).abs());
        }
        for i in 0..cfg.grid {
            for j in 0..cfg.grid {
                asym = asym.max((a.magnitude_at(i, j) - a.magnitude_at(j, i)).abs());
            }
        }
        out_of_range += a
            .magnitude
            .iter()
            .chain(&a.phase)
            .filter(|v| !(0.0..=1.0).contains(*v))
            .count();
    }
    let pass = scale_err <= 1e-9 && asym == 0.0 && out_of_range == 0;
    report(
        3,
        "normalized grid invariants",
        pass,
        &format!("scale err {scale_err:.2e}, asymmetry {asym:.2e}, {out_of_range} values outside [0,1]"),
    );
    assert!(pass);
}

#[test]
fn c04_moments_match_oracle_and_are_affine_invariant() {
    use speechprint::features::Moments;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    let (mut oracle_err, mut affine_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let n = rng.random_range(50..2000);
        // skewed data with a mean well away from zero, so every moment is
        // well conditioned for a relative comparison
        let scale = rng.random_range(0.1..10.0);
        let x: Vec<f64> = (0..n).map(|_| 1.0 - scale * rng.random_range(1e-6..1.0f64).ln()).collect();
        let m = Moments::of(&x);
        let (mean, var, skew, kurt) = moments_oracle(&x);
        for (a, b) in [(m.mean, mean), (m.variance, var), (m.skewness, skew), (m.kurtosis, kurt)] {
            oracle_err = oracle_err.max(rel(a, b));
        }
        let a = rng.random_range(0.5..4.0);
        let b = rng.random_range(-10.0..10.0);
        let m2 = Moments::of(&x.iter().map(|v| a * v + b).collect::<Vec<_>>());
        affine_err = affine_err.max((m.skewness - m2.skewness).abs()).max((m.kurtosis - m2.kurtosis).abs());
    }
    let flat = Moments::of(&[2.5; 64]);
    let degenerate_ok = flat.variance == 0.0 && flat.skewness == 0.0 && flat.kurtosis == 0.0 && flat.mean == 2.5;
    let pass = oracle_err <= 1e-12 && affine_err <= 1e-9 && degenerate_ok;
    report(
        4,
        "moments",
        pass,
        &format!("oracle rel err {oracle_err:.2e}, affine err {affine_err:.2e}, sigma=0 rule {degenerate_ok}"),
    );
    assert!(pass);
}

#[test]
fn c05_every_clip_yields_fourteen_values() {
    let c = corpus();
    let bad = c
        .table
        .rows
        .iter()
        .zip(&c.clips)
        .filter(|(fv, (_, label))| fv.values().len() != N_FEATURES || fv.values().iter().any(|v| !v.is_finite()) || fv.label != *label)
        .count();
    let pass = N_FEATURES == 14 && bad == 0 && c.table.len() == 400;
    report(
        5,
        "feature dimensionality",
        pass,
        &format!("{} clips, {N_FEATURES} values each, {bad} malformed", c.table.len()),
    );
    assert!(pass);
}

#[test]
fn c06_synthetic_corpus_cross_validation() {
    let c = corpus();
    let start = Instant::now();
    let spec = AlgoSpec::default_for(AlgoKind::RusBoostedTrees, 0);
    let cv = cross_validate(&c.table, &spec, Scenario::Binary, 5, 0).unwrap();
    let secs = c.build_secs + start.elapsed().as_secs_f64();
    let acc = cv.metrics.accuracy;
    let pass = acc >= 0.95 && secs < 300.0;
    report(
        6,
        "synthetic-corpus 5-fold CV (rus_boosted_trees)",
        pass,
        &format!("accuracy {acc:.4}, {secs:.1}s end to end (corpus build {:.1}s)", c.build_secs),
    );
    assert!(pass);
}

#[test]
fn c07_metrics_arithmetic() {
    let f1 = f1_score(0.9, 0.95);
    let exact = 171.0 / 185.0;
    let mut ok = (f1 - exact).abs() <= 1e-9 && format!("{f1:.5}") == "0.92432";
    ok &= precision(0, 0) == 0.0 && recall(0, 0) == 0.0 && f1_score(0.0, 0.0) == 0.0;
    ok &= precision(3, 1) == 0.75 && recall(3, 3) == 0.5 && f1_score(1.0, 1.0) == 1.0;
    let mut cm = ConfusionMatrix::new(vec!["a".into(), "b".into(), "c".into()]);
    for (t, p, n) in [(0, 0, 8), (0, 1, 2), (1, 1, 5), (2, 0, 1)] {
        for _ in 0..n {
            cm.record(t, p);
        }
    }
    let m = metrics(&cm);
    ok &= (m.accuracy - 13.0 / 16.0).abs() < 1e-15;
    ok &= (m.per_class[0].precision - 8.0 / 9.0).abs() < 1e-15 && (m.per_class[0].recall - 0.8).abs() < 1e-15;
    // class c is never predicted correctly: every ratio falls back to zero
    ok &= m.per_class[2].precision == 0.0 && m.per_class[2].recall == 0.0 && m.per_class[2].f1 == 0.0;
    report(7, "metrics arithmetic", ok, &format!("F1(0.9, 0.95) = {f1:.12}"));
    assert!(ok);
}

#[test]
fn c08_fold_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ok = true;
    for trial in 0..50 {
        let n = rng.random_range(20..400);
        let classes = rng.random_range(2..5);
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let folds = stratified_folds(&y, 5, trial);
        ok &= folds == stratified_folds(&y, 5, trial);
        let mut seen: Vec<usize> = folds.iter().flatten().copied().collect();
        seen.sort_unstable();
        ok &= seen == (0..n).collect::<Vec<_>>();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        ok &= sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1;
        for c in 0..classes {
            let total = y.iter().filter(|&&v| v == c).count() as f64;
            for f in &folds {
                let got = f.iter().filter(|&&i| y[i] == c).count() as f64;
                ok &= (got - total / 5.0).abs() <= 1.0;
            }
        }
    }
    report(8, "5-fold CV contract", ok, "50 random label vectors, partition/size/stratification/determinism");
    assert!(ok);
}

fn random_batch(shape: &[usize], n: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per: usize = shape.iter().product();
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..per).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    Tensor::stack(&samples, shape).unwrap()
}

fn class_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("class{i}")).collect()
}

#[test]
fn c09_gradient_check() {
    let start = Instant::now();
    let mode = Mode::Train { dropout_seed: 5 };
    let mut worst: f64 = 0.0;

    // every parameter of a channel-reduced stack with the same layer sequence
    let reduced = CrnnConfig {
        input_height: 16,
        input_width: 16,
        conv1_filters: 2,
        conv2_filters: 3,
        conv3_filters: 2,
        lstm1_hidden: 3,
        lstm2_hidden: 2,
        dense_units: 4,
        ..CrnnConfig::default()
    };
    for classes in [2, 4] {
        let mut net = Network::new(vec![16, 16, 1], reduced.layers(classes), class_names(classes), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(70 + classes as u64);
        for v in net.params.iter_mut().flatten().flatten() {
            *v = rng.random_range(-0.5..0.5);
        }
        let batch = random_batch(&[16, 16, 1], 2, 71);
        let all: Vec<usize> = (0..net.param_count()).collect();
        worst = worst.max(max_param_error(&mut net, &batch, &[0, classes - 1], mode, &all, 1e-4));
    }

    // full-size network: a random sample from every parameter block
    let mut net = build_crnn32(class_names(4), &CrnnConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for v in net.params.iter_mut().flatten().flatten() {
        *v += rng.random_range(-0.05..0.05);
    }
    let mut idx = Vec::new();
    let mut offset = 0;
    for block in net.params.iter().flatten() {
        for _ in 0..6 {
            idx.push(offset + rng.random_range(0..block.len()));
        }
        offset += block.len();
    }
    // a smaller step keeps the probe from crossing ReLU and max-pool switch
    // points, which are dense in the 30x30x32 maps
    let batch = random_batch(&[32, 32, 1], 2, 10);
    worst = worst.max(max_param_error(&mut net, &batch, &[1, 3], mode, &idx, 1e-5));

    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-4 && secs < 120.0;
    report(
        9,
        "CRNN gradient check",
        pass,
        &format!("max rel err {worst:.2e} ({} sampled full-size params), {secs:.1}s", idx.len()),
    );
    assert!(pass);
}

/// 16 flat images and 16 checkerboards with 4-pixel cells, each at a
/// random grey level.
fn toy_set() -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..32 {
        let level: f64 = rng.random_range(0.0..1.0);
        let img: Vec<f64> = (0..32 * 32)
            .map(|p| {
                let cell = (p / 32 / 4 + p % 32 / 4) % 2;
                match (i % 2, cell) {
                    (0, _) => level,
                    (_, 0) => 0.5 + level / 2.0,
                    _ => level / 2.0,
                }
            })
            .collect();
        images.push(img);
        labels.push(i % 2);
    }
    (images, labels)
}

#[test]
fn c10_capacity_and_shape_chain() {
    let start = Instant::now();
    let mut chain_ok = true;
    for classes in [2, 4] {
        let net = build_crnn32(class_names(classes), &CrnnConfig::default()).unwrap();
        let shapes: Vec<&[usize]> = (0..=net.specs().len()).map(|i| net.shape_at(i)).collect();
        for want in [
            &[32usize, 32, 1][..],
            &[30, 30, 32],
            &[28, 28, 64],
            &[14, 14, 64],
            &[12, 12, 1],
            &[12, 12],
            &[12, 128],
            &[1536],
            &[classes],
        ] {
            chain_ok &= shapes.contains(&want);
        }
        chain_ok &= net.shape_at(net.specs().len()) == [classes];
    }

    let (images, labels) = toy_set();
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 8,
        seed: 3,
        stop_at_train_accuracy: Some(1.0),
        ..TrainConfig::default()
    };
    let run = || {
        let mut net = build_crnn32(class_names(2), &CrnnConfig::default()).unwrap();
        let history = fit(&mut net, &images, &labels, None, &cfg).unwrap();
        (net.params, history)
    };
    let (pa, ha) = run();
    let (pb, hb) = run();
    let deterministic = pa == pb && ha == hb;
    let final_acc = ha.last().map_or(0.0, |e| e.train_accuracy);
    let secs = start.elapsed().as_secs_f64();
    let pass = chain_ok && deterministic && final_acc == 1.0 && ha.len() <= 200 && secs < 180.0;
    report(
        10,
        "CRNN capacity and shape chain",
        pass,
        &format!(
            "train acc {final_acc} after {} epochs, deterministic {deterministic}, shape chain {chain_ok}, {secs:.1}s for two runs",
            ha.len()
        ),
    );
    assert!(pass);
}

#[test]
fn c11_persistence_round_trips() {
    let c = corpus();
    let dir = tempfile::tempdir().unwrap();
    let cfg = FeatureConfig::default();
    let probe: Vec<usize> = (0..20).map(|i| i * 20 + 3).collect();
    let train_rows: Vec<FeatureVector> = (0..c.table.len())
        .filter(|i| !probe.contains(i))
        .map(|i| c.table.rows[i])
        .collect();
    let train_table = FeatureTable::new(train_rows);

    // feature CSV
    let mut buf = Vec::new();
    c.table.write_csv(&mut buf, Some(&cfg.fingerprint())).unwrap();
    let (back, hash) = FeatureTable::read_csv(BufReader::new(&buf[..])).unwrap();
    let bits = |t: &FeatureTable| -> Vec<u64> { t.rows.iter().flat_map(|r| r.values()).map(f64::to_bits).collect() };
    let csv_ok = hash.as_deref() == Some(cfg.fingerprint().as_str()) && bits(&back) == bits(&c.table) && back.labels() == c.table.labels();

    // classical model files, one per algorithm
    let mut models_ok = true;
    for kind in AlgoKind::ALL {
        let table = train_table.select_subset(FeatureSubset::All);
        let model = train_classifier(&table, &AlgoSpec::default_for(kind, 1), Scenario::Binary).unwrap();
        let path = dir.path().join(format!("{}.json", kind.as_str()));
        ClassifierFile::new(model.clone(), cfg).save(&path).unwrap();
        let loaded = ClassifierFile::load(&path).unwrap();
        loaded.check_config(&cfg).unwrap();
        for &i in &probe {
            let a = model.predict_vector(&c.table.rows[i]).unwrap();
            let b = loaded.model.predict_vector(&back.rows[i]).unwrap();
            models_ok &= a.class_index == b.class_index
                && a.scores.iter().map(|v| v.to_bits()).eq(b.scores.iter().map(|v| v.to_bits()));
        }
    }

    // network files
    let mut net = build_crnn32(class_names(2), &CrnnConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for v in net.params.iter_mut().flatten().flatten() {
        *v += rng.random_range(-0.01..0.01);
    }
    let path = dir.path().join("net.bin");
    net.save(&path).unwrap();
    let loaded = Network::load(&path).unwrap();
    let mut net_ok = loaded.config_hash() == net.config_hash();
    for &i in &probe {
        let a = classify(&net, &c.clips[i].0).unwrap();
        let b = classify(&loaded, &c.clips[i].0).unwrap();
        net_ok &= a.class_index == b.class_index && a.scores.iter().map(|v| v.to_bits()).eq(b.scores.iter().map(|v| v.to_bits()));
    }

    let pass = csv_ok && models_ok && net_ok;
    report(
        11,
        "persistence round trips",
        pass,
        &format!("20 probes: feature CSV {csv_ok}, classifier files {models_ok}, network file {net_ok}"),
    );
    assert!(pass);
}
