//! `sickle`: corpus generation, training, segmentation, classification,
//! screening and evaluation from the command line.
//!
//! Settings resolve as defaults, then `--config file.json`, then dotted flags
//! such as `--svm.gamma=2` or `--segmenter.trees 30`. Every JSON report
//! carries the resolved config.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 internal failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sickle_core::classifier::{
    evaluate_features, feature_from_mask, fuse_decisions, train_classifier, ClassifierModel,
    FeatureConfig, SampleLabel, ScreeningReport,
};
use sickle_core::config::RunConfig;
use sickle_core::error::Error;
use sickle_core::geometry::{measure_cells, write_descriptor_csv};
use sickle_core::imaging::{read_pgm, Split};
use sickle_core::pipeline::{
    corpus_features, grid_search, load_corpus, readable, segment_corpus, train_segmenter_on_corpus,
    training_accuracy, CorpusSample, GridCell, DEFAULT_GRID_C, DEFAULT_GRID_GAMMA,
};
use sickle_core::segmenter::{segment_image, SegmenterModel};
use sickle_core::synthgen::{synth_corpus, CorpusCounts, MANIFEST_NAME};

const SEGMENTER_FILE: &str = "segmenter.json";
const CLASSIFIER_FILE: &str = "classifier.json";

#[derive(Parser, Debug)]
#[command(
    name = "sickle",
    version,
    about = "Sickle-cell screening from blood smear images"
)]
struct Cli {
    /// JSON config file. Dotted flags (e.g. --svm.gamma=2) override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for corpus generation and training (sets `seed` and `synth.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write the JSON report to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic corpus: images, truth masks and manifest.
    Synth {
        /// Output directory [default: paths.data_dir]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the pixel segmenter on the train split of a corpus.
    TrainSeg {
        /// Manifest file or corpus directory [default: paths.data_dir]
        #[arg(long)]
        data: Option<PathBuf>,
        /// Model file [default: paths.model_dir/segmenter.json]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segment one image into a 3-class mask.
    Segment {
        #[arg(long)]
        image: PathBuf,
        /// Output mask (PGM with 0/128/255).
        #[arg(long)]
        out: PathBuf,
        /// Segmenter model [default: paths.model_dir/segmenter.json]
        #[arg(long)]
        seg: Option<PathBuf>,
        /// Also write per-cell descriptors as CSV.
        #[arg(long)]
        cells: Option<PathBuf>,
    },
    /// Train the sample classifier on the train split of a corpus.
    TrainCls {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seg: Option<PathBuf>,
        /// Model file [default: paths.model_dir/classifier.json]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify one sample image.
    Classify {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        seg: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Classify a subject's 0.1 and 0.3 samples and fuse the two labels.
    Screen {
        /// Sample treated at concentration 0.1.
        #[arg(long)]
        p1: PathBuf,
        /// Sample treated at concentration 0.3.
        #[arg(long)]
        p2: PathBuf,
        #[arg(long)]
        subject: Option<String>,
        #[arg(long)]
        seg: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Score the classifier on one split of a corpus.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seg: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Sweep SVM (C, gamma) over {1,10,100,250,1000} x {0.1,0.5,1,2}, training
    /// on the train split and scoring on the val split.
    GridSearch {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seg: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Unreadable(PathBuf),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Unreadable(_) => 2,
            Failure::Core(e) => match e {
                Error::Config(_) | Error::InvalidArgument(_) => 1,
                Error::InconsistentPartition | Error::NonFinite { .. } => 3,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Unreadable(p) => {
                write!(f, "unreadable sample {}: no measurable cells", p.display())
            }
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

/// Pulls `--a.b=value` and `--a.b value` out of the argument list.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), Failure> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg
            .strip_prefix("--")
            .filter(|b| b.split('=').next().is_some_and(|k| k.contains('.')))
        else {
            rest.push(arg);
            continue;
        };
        match body.split_once('=') {
            Some((k, v)) => overrides.push((k.to_owned(), v.to_owned())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Failure::Usage(format!("--{body} needs a value")))?;
                overrides.push((body.to_owned(), v));
            }
        }
    }
    Ok((rest, overrides))
}

fn manifest_path(data: Option<PathBuf>, config: &RunConfig) -> PathBuf {
    let p = data.unwrap_or_else(|| config.paths.data_dir.clone());
    if p.is_dir() {
        p.join(MANIFEST_NAME)
    } else {
        p
    }
}

fn model_path(given: Option<PathBuf>, config: &RunConfig, file: &str) -> PathBuf {
    given.unwrap_or_else(|| config.paths.model_dir.join(file))
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| {
            Failure::Core(Error::Io {
                path: dir.to_owned(),
                source,
            })
        })?;
    }
    Ok(())
}

fn with_config(mut report: Value, config: &RunConfig) -> Value {
    report["config"] = config.to_json_value();
    report
}

fn emit(report: &Value, path: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    if let Some(p) = path {
        ensure_parent(p)?;
        std::fs::write(p, &text).map_err(|source| {
            Failure::Core(Error::Io {
                path: p.to_owned(),
                source,
            })
        })?;
    }
    // a closed pipe (e.g. `| head`) is not an error
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Core(Error::Io {
            path: "<stdout>".into(),
            source: e,
        })),
        _ => Ok(()),
    }
}

fn split_of(samples: &[CorpusSample], split: Split) -> Vec<CorpusSample> {
    samples
        .iter()
        .filter(|s| s.row.split == split)
        .cloned()
        .collect()
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn run(cli: Cli, config: RunConfig) -> Result<Value, Failure> {
    let report = match cli.command {
        Command::Synth { out } => {
            let out = out.unwrap_or_else(|| config.paths.data_dir.clone());
            let counts = CorpusCounts::standard();
            let manifest = synth_corpus(&config.synth, &counts, &out)?;
            json!({ "manifest": path_str(&manifest), "samples": counts.total() })
        }
        Command::TrainSeg { data, out } => {
            let samples = load_corpus(&manifest_path(data, &config), true)?;
            let training = train_segmenter_on_corpus(&samples, &config)?;
            let out = model_path(out, &config, SEGMENTER_FILE);
            ensure_parent(&out)?;
            training.model.save(&out)?;
            json!({
                "model": path_str(&out),
                "train_accuracy": training.train_accuracy,
                "val_accuracy": training.val_accuracy,
                "train_patches": training.train_patches,
                "val_patches": training.val_patches,
                "majority_baseline": training.majority_baseline,
            })
        }
        Command::Segment {
            image,
            out,
            seg,
            cells,
        } => {
            let model = SegmenterModel::load(model_path(seg, &config, SEGMENTER_FILE))?;
            let mask = segment_image(&model, &read_pgm(&image)?)?;
            ensure_parent(&out)?;
            mask.write(&out)?;
            let records = measure_cells(&mask, config.min_region_area);
            if let Some(csv) = &cells {
                ensure_parent(csv)?;
                write_descriptor_csv(&records, config.solidity_threshold, csv)?;
            }
            let kept = records
                .iter()
                .filter(|c| c.descriptors.solidity >= config.solidity_threshold)
                .count();
            json!({ "image": path_str(&image), "mask": path_str(&out), "regions": records.len(), "kept": kept })
        }
        Command::TrainCls { data, seg, out } => {
            let seg = SegmenterModel::load(model_path(seg, &config, SEGMENTER_FILE))?;
            let samples = split_of(
                &load_corpus(&manifest_path(data, &config), false)?,
                Split::Train,
            );
            let masks = segment_corpus(&seg, &samples)?;
            let feature = config.feature_config();
            let features = corpus_features(&samples, &masks, &feature);
            let train = readable(&features);
            let model = train_classifier(&train, &feature, &config.classifier_config())?;
            let out = model_path(out, &config, CLASSIFIER_FILE);
            ensure_parent(&out)?;
            model.save(&out)?;
            json!({
                "model": path_str(&out),
                "train_samples": train.len(),
                "rejected_count": features.len() - train.len(),
                "train_accuracy": training_accuracy(&model, &train)?,
            })
        }
        Command::Classify { image, seg, model } => {
            let seg = SegmenterModel::load(model_path(seg, &config, SEGMENTER_FILE))?;
            let model = ClassifierModel::load(model_path(model, &config, CLASSIFIER_FILE))?;
            let label = classify(&model, &seg, &image)?;
            json!({ "path": path_str(&image), "predicted": label })
        }
        Command::Screen {
            p1,
            p2,
            subject,
            seg,
            model,
        } => {
            let seg = SegmenterModel::load(model_path(seg, &config, SEGMENTER_FILE))?;
            let model = ClassifierModel::load(model_path(model, &config, CLASSIFIER_FILE))?;
            let l1 = classify(&model, &seg, &p1)?;
            let l2 = classify(&model, &seg, &p2)?;
            let report = ScreeningReport {
                subject_id: subject.unwrap_or_else(|| {
                    p1.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default()
                }),
                p1: l1,
                p2: l2,
                decision: fuse_decisions(l1, l2),
            };
            serde_json::to_value(&report).expect("report serializes")
        }
        Command::Eval {
            data,
            seg,
            model,
            split,
        } => {
            let seg = SegmenterModel::load(model_path(seg, &config, SEGMENTER_FILE))?;
            let model = ClassifierModel::load(model_path(model, &config, CLASSIFIER_FILE))?;
            let samples = split_of(
                &load_corpus(&manifest_path(data, &config), false)?,
                split.into(),
            );
            let masks = segment_corpus(&seg, &samples)?;
            let features = corpus_features(&samples, &masks, &model.feature);
            serde_json::to_value(evaluate_features(&model, &features)?).expect("report serializes")
        }
        Command::GridSearch { data, seg } => {
            let seg = SegmenterModel::load(model_path(seg, &config, SEGMENTER_FILE))?;
            let all = load_corpus(&manifest_path(data, &config), false)?;
            let feature: FeatureConfig = config.feature_config();
            let features_of = |split| -> Result<_, Failure> {
                let samples = split_of(&all, split);
                let masks = segment_corpus(&seg, &samples)?;
                Ok(readable(&corpus_features(&samples, &masks, &feature)))
            };
            let train = features_of(Split::Train)?;
            let val = features_of(Split::Val)?;
            let cells = grid_search(
                &train,
                &val,
                &feature,
                &config.svm_config(),
                &DEFAULT_GRID_C,
                &DEFAULT_GRID_GAMMA,
            )?;
            // first cell in grid order wins ties
            let best = cells.iter().fold(None::<&GridCell>, |b, c| match b {
                Some(b) if b.val_accuracy >= c.val_accuracy => Some(b),
                _ => Some(c),
            });
            json!({ "cells": cells, "best": best, "train_samples": train.len(), "val_samples": val.len() })
        }
    };
    Ok(with_config(report, &config))
}

fn classify(
    model: &ClassifierModel,
    seg: &SegmenterModel,
    image: &Path,
) -> Result<SampleLabel, Failure> {
    let mask = segment_image(seg, &read_pgm(image)?)?;
    let feature = feature_from_mask(&mask, &model.feature).map_err(|e| match e {
        Error::NoMeasurableCells => Failure::Unreadable(image.to_owned()),
        other => Failure::Core(other),
    })?;
    Ok(model.predict(&feature)?)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let outcome = split_overrides(args).and_then(|(args, mut overrides)| {
        let cli = match Cli::try_parse_from(args) {
            Ok(c) => c,
            Err(e) => {
                let _ = e.print();
                // --help and --version are not errors
                return if e.use_stderr() {
                    Err(Failure::Usage(String::new()))
                } else {
                    Ok(())
                };
            }
        };
        if let Some(seed) = cli.seed {
            overrides.insert(0, ("synth.seed".into(), seed.to_string()));
            overrides.insert(0, ("seed".into(), seed.to_string()));
        }
        let config = RunConfig::resolve(cli.config.as_deref(), &overrides)?;
        let report_path = cli.report.clone();
        let report = run(cli, config)?;
        emit(&report, report_path.as_deref())?;
        Ok(())
    });
    match outcome {
        Ok(_) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = f.to_string();
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(f.code())
        }
    }
}
