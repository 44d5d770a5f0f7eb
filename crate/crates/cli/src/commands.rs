use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use tanbn_core::baselines::{chow_liu_from_cmi, naive_bayes_structure, random_tan, CmiMatrix};
use tanbn_core::data::{load_csv, quantile_discretize, random_bank, random_ordering, sample_from_model, write_csv};
use tanbn_core::io::{to_dot, write_json, ModelFile, StructureCheckpoint};
use tanbn_core::train::{random_search, train, SearchSetting, SearchSpace, TrainMode};
use tanbn_core::{BankLayout, Schema, TanClassifier};

use crate::config::{ConfigError, ExperimentConfig};

pub const MANIFEST: &str = "manifest.json";
/// Wall-clock timings; kept out of the manifest so reruns hash identically.
pub const TIMING: &str = "timing.json";

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
}

/// Hashes every file in `dir` except the manifest and timing files.
pub fn write_manifest(dir: &Path) -> anyhow::Result<()> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_ok_and(|t| t.is_file()))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST && n != TIMING)
        .collect();
    names.sort();
    let entries = names
        .into_iter()
        .map(|name| {
            let bytes = fs::read(dir.join(&name))?;
            Ok(ManifestEntry {
                sha256: hex::encode(Sha256::digest(&bytes)),
                path: name,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut files = BTreeMap::new();
    files.insert("files", entries);
    write_json(&files, dir.join(MANIFEST))?;
    Ok(())
}

fn prepare(config: &Path, seed: Option<u64>, out: Option<&Path>) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = cfg.output_dir(out);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let echo = toml::to_string(&cfg).map_err(|e| ConfigError(e.to_string()))?;
    fs::write(dir.join("config.toml"), echo)?;
    Ok((cfg, dir))
}

pub fn cmd_train(config: &Path, seed: Option<u64>, out: Option<&Path>) -> anyhow::Result<()> {
    let (cfg, dir) = prepare(config, seed, out)?;
    let (train_ds, test_ds) = cfg.load_data()?;
    let mode = cfg.train_mode(&train_ds)?;
    let tc = cfg.train_config(mode);
    let outcome = train(&tc, &train_ds, &test_ds)?;
    let report = &outcome.report;

    fs::write(dir.join("report.json"), report.to_json()? + "\n")?;
    fs::write(dir.join("metrics.csv"), report.metrics_csv())?;
    ModelFile::from_classifier(&outcome.model).save(dir.join("model.json"))?;
    fs::write(dir.join("graph.dot"), to_dot(&report.final_structure, train_ds.feature_names()))?;
    if let TrainMode::LearnStructure(c) = &tc.mode {
        StructureCheckpoint::new(c, &outcome.logits).save(dir.join("structure.json"))?;
    }
    let mut timing = BTreeMap::new();
    timing.insert("wall_clock_secs", report.wall_clock_secs);
    write_json(&timing, dir.join(TIMING))?;
    write_manifest(&dir)?;

    println!(
        "train error {:.4}, test error {:.4}{} -> {}",
        report.final_train_error,
        report.final_test_error,
        if report.pseudo { " (pseudo-TAN)" } else { "" },
        dir.display()
    );
    Ok(())
}

pub fn cmd_search(
    config: &Path,
    setting: SearchSetting,
    draws: usize,
    jobs: usize,
    seed: Option<u64>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    if draws == 0 {
        return Err(ConfigError("--draws must be at least 1".into()).into());
    }
    let (cfg, dir) = prepare(config, seed, out)?;
    let (train_ds, val_ds) = cfg.load_data()?;
    let base = cfg.train_config(cfg.train_mode(&train_ds)?);
    let results = random_search(&SearchSpace::new(setting, draws), &base, &train_ds, &val_ds, cfg.seed, jobs)?;

    let mut w = csv::Writer::from_path(dir.join("search.csv"))?;
    w.write_record(["rank", "lambda", "gamma", "eta", "lr", "error"])?;
    for (rank, r) in results.iter().enumerate() {
        w.write_record(&[
            (rank + 1).to_string(),
            r.lambda.to_string(),
            r.gamma.to_string(),
            r.eta.to_string(),
            r.lr_theta.to_string(),
            r.error.to_string(),
        ])?;
    }
    w.flush()?;
    write_manifest(&dir)?;
    let best = &results[0];
    println!(
        "best error {:.4} (lambda {:.3}, gamma {:.3}, eta {:.3}, lr {}) -> {}",
        best.error,
        best.lambda,
        best.gamma,
        best.eta,
        best.lr_theta,
        dir.display()
    );
    Ok(())
}

fn load_schema(path: Option<&Path>) -> anyhow::Result<Schema> {
    Ok(match path {
        Some(p) => Schema::load(p)?,
        None => Schema::default(),
    })
}

pub fn cmd_evaluate(model: &Path, data: &Path, schema: Option<&Path>) -> anyhow::Result<()> {
    let clf = ModelFile::load(model)?.to_classifier()?;
    let ds = load_csv(data, &load_schema(schema)?)?;
    let err = clf.error_rate(&ds)?;
    println!("samples {}, error {:.6}, mean nll {:.6}", ds.len(), err, clf.mean_nll(&ds)?);
    Ok(())
}

pub fn cmd_export_dot(model: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let clf = ModelFile::load(model)?.to_classifier()?;
    let dot = to_dot(clf.structure(), None);
    match out {
        Some(p) => fs::write(p, dot)?,
        None => print!("{dot}"),
    }
    Ok(())
}

pub struct GenerateArgs<'a> {
    pub out: &'a Path,
    pub features: usize,
    pub samples: usize,
    pub classes: usize,
    pub max_arity: usize,
    pub naive: bool,
    pub spread: f64,
    pub seed: u64,
    pub model_out: Option<&'a Path>,
}

/// Samples a dataset from a random TAN (or naive Bayes) model.
pub fn cmd_generate(a: GenerateArgs<'_>) -> anyhow::Result<()> {
    if a.features == 0 || a.samples == 0 || a.classes < 2 || a.max_arity < 2 {
        return Err(ConfigError("need features >= 1, samples >= 1, classes >= 2, max-arity >= 2".into()).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let arities: Vec<usize> = (0..a.features).map(|_| rng.gen_range(2..=a.max_arity)).collect();
    let structure = if a.naive {
        naive_bayes_structure(a.features)
    } else {
        random_tan(&random_ordering(a.features, a.seed), a.seed)
    };
    let layout = Arc::new(BankLayout::for_structure(&structure, &arities, a.classes)?);
    let bank = random_bank(layout, a.spread, a.seed).log_normalize();
    let ds = sample_from_model(&structure, &bank, a.samples, a.seed)?;
    write_csv(&ds, a.out)?;
    if let Some(p) = a.model_out {
        ModelFile::from_classifier(&TanClassifier::new(structure, bank)?).save(p)?;
    }
    Ok(())
}

/// Reads a CSV of real-valued features and writes quantile-binned integers.
/// Labels may be integers or arbitrary strings (mapped in sorted order).
pub fn cmd_discretize(
    input: &Path,
    out: &Path,
    bins: usize,
    label_column: Option<usize>,
    edges_out: Option<&Path>,
) -> anyhow::Result<()> {
    if bins == 0 {
        return Err(ConfigError("--bins must be at least 1".into()).into());
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(input)
        .with_context(|| format!("opening {}", input.display()))?;
    let mut records: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>()?;
    if records.is_empty() {
        bail!("{} is empty", input.display());
    }
    let width = records[0].len();
    let label_col = label_column.unwrap_or(width.saturating_sub(1));
    if label_col >= width || width < 2 {
        return Err(ConfigError(format!("label column {label_col} out of range for {width} columns")).into());
    }
    if records[0].iter().enumerate().any(|(c, v)| c != label_col && v.parse::<f64>().is_err()) {
        records.remove(0);
    }
    let raw_labels: Vec<String> = records.iter().map(|r| r[label_col].to_string()).collect();
    let (labels, num_classes) = encode_labels(&raw_labels);
    let rows = records
        .iter()
        .enumerate()
        .map(|(n, r)| {
            r.iter()
                .enumerate()
                .filter(|&(c, _)| c != label_col)
                .map(|(c, v)| v.parse::<f64>().with_context(|| format!("row {}, column {c}: {v:?}", n + 1)))
                .collect::<anyhow::Result<Vec<f64>>>()
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let d = width - 1;
    let (ds, report) = quantile_discretize(&rows, labels, num_classes, &vec![bins; d])?;
    write_csv(&ds, out)?;
    if let Some(p) = edges_out {
        write_json(&report.edges, p)?;
    }
    if !report.constant_features.is_empty() {
        eprintln!("constant features: {:?}", report.constant_features);
    }
    Ok(())
}

fn encode_labels(raw: &[String]) -> (Vec<usize>, usize) {
    if let Ok(ints) = raw.iter().map(|s| s.parse::<usize>()).collect::<Result<Vec<_>, _>>() {
        let c = ints.iter().max().map_or(1, |m| m + 1);
        return (ints, c);
    }
    let mut names: Vec<&String> = raw.iter().collect();
    names.sort();
    names.dedup();
    let labels = raw.iter().map(|s| names.binary_search(&s).unwrap()).collect();
    (labels, names.len())
}

pub fn cmd_cmi(data: &Path, out: &Path, schema: Option<&Path>, tree_dot: Option<&Path>) -> anyhow::Result<()> {
    let ds = load_csv(data, &load_schema(schema)?)?;
    let cmi = CmiMatrix::compute(&ds)?;
    cmi.write_csv(out)?;
    if let Some(p) = tree_dot {
        fs::write(p, to_dot(&chow_liu_from_cmi(&cmi)?, ds.feature_names()))?;
    }
    Ok(())
}
