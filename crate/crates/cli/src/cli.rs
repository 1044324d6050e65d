use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use smearscope_core::analysis::{analyze_image, render_overlay, AnalysisResult, PipelineConfig};
use smearscope_core::classification::{
    load_model_json, train_model, Architecture, CropConfig, HyperParams, StageModel,
};
use smearscope_core::dataset::{generate_corpus, load_manifest, SynthConfig};
use smearscope_core::evaluation::{
    collect_features, evaluate_classification, evaluate_localization, split_dataset,
    ClassificationOptions, CropSource, DEFAULT_IOU_THRESHOLD, DEFAULT_SPLIT,
};
use smearscope_core::imaging::io;
use smearscope_core::preprocess::preprocess_field;
use smearscope_core::segmentation::{localize_cells, SegmentationConfig};

use crate::service::{self, AppState};

pub const MODEL_ENV: &str = "SMEARSCOPE_MODEL";

#[derive(Debug, Parser)]
#[command(
    name = "smearscope",
    version,
    about = "Thin blood-smear cell counting and stage classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Remove the eyepiece vignette and write the cropped field.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON report of the crop rectangles.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Pipeline config JSON (only the preprocess section is used).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Localize cells and write their boxes.
    Segment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_json: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a stage classifier on a manifest's training split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = ArchArg::Tsc)]
        arch: ArchArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Train on every image instead of the 70% training split.
        #[arg(long)]
        all_images: bool,
        #[command(flatten)]
        hp: HpArgs,
    },
    /// Analyze one image.
    Infer {
        #[arg(long, env = MODEL_ENV)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        out_json: Option<PathBuf>,
        #[arg(long)]
        out_overlay: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score localization or classification against a manifest.
    Evaluate {
        #[arg(value_enum)]
        task: EvalTask,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ArchArg::Tsc)]
        arch: ArchArg,
        /// Crop test cells from localized boxes instead of annotations.
        #[arg(long)]
        end_to_end: bool,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        hp: HpArgs,
    },
    /// Generate a synthetic annotated corpus.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the HTTP inference service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, env = MODEL_ENV)]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ArchArg {
    Ssc,
    Tsc,
}

impl From<ArchArg> for Architecture {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Ssc => Architecture::Ssc,
            ArchArg::Tsc => Architecture::Tsc,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EvalTask {
    Localization,
    Classification,
}

#[derive(Debug, Clone, Args)]
pub struct HpArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
}

impl HpArgs {
    fn resolve(&self, seed: u64) -> HyperParams {
        let d = HyperParams::default();
        HyperParams {
            epochs: self.epochs.unwrap_or(d.epochs),
            lr: self.lr.unwrap_or(d.lr),
            l2: self.l2.unwrap_or(d.l2),
            seed,
            ..d
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn load_model(path: &Path) -> Result<StageModel> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    load_model_json(&text).with_context(|| format!("loading model {}", path.display()))
}

fn read_image(path: &Path) -> Result<smearscope_core::imaging::RgbImage> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    io::decode(&bytes).with_context(|| format!("decoding {}", path.display()))
}

/// Same computation as `POST /analyze`.
pub fn infer_file(path: &Path, model: &StageModel, cfg: &PipelineConfig) -> Result<AnalysisResult> {
    Ok(analyze_image(&read_image(path)?, cfg, model)?)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess {
            input,
            out,
            report,
            config,
        } => {
            let cfg: PipelineConfig = read_json(config.as_deref())?;
            let (field, crop) = preprocess_field(&read_image(&input)?, &cfg.preprocess)?;
            io::write_png(&field, &out)?;
            if let Some(r) = report {
                write_json(&crop, Some(&r))?;
            }
        }
        Command::Segment {
            input,
            out_json,
            config,
        } => {
            let cfg: PipelineConfig = read_json(config.as_deref())?;
            let cells = localize_cells(&read_image(&input)?, &cfg.segmentation)?;
            write_json(
                &serde_json::json!({ "total_cells": cells.len(), "cells": cells }),
                out_json.as_deref(),
            )?;
        }
        Command::Train {
            manifest,
            arch,
            seed,
            out,
            all_images,
            hp,
        } => {
            let manifest = load_manifest(&manifest)?;
            let ids: Vec<String> = manifest.images.iter().map(|e| e.image_id.clone()).collect();
            let train_ids = if all_images {
                ids
            } else {
                split_dataset(&ids, DEFAULT_SPLIT, seed)?.train
            };
            let data = collect_features(
                &manifest,
                &train_ids,
                &CropSource::default(),
                &SegmentationConfig::default(),
                &CropConfig::default(),
            )?;
            let model = train_model(arch.into(), &data, &hp.resolve(seed))?;
            fs::write(&out, model.to_json() + "\n")
                .with_context(|| format!("writing {}", out.display()))?;
            eprintln!(
                "trained {} on {} cells from {} images",
                model.arch(),
                data.len(),
                train_ids.len()
            );
        }
        Command::Infer {
            model,
            input,
            out_json,
            out_overlay,
            config,
        } => {
            let cfg: PipelineConfig = read_json(config.as_deref())?;
            let model = load_model(&model)?;
            let img = read_image(&input)?;
            let result = analyze_image(&img, &cfg, &model)?;
            if let Some(p) = out_overlay {
                io::write_png(&render_overlay(&img, &result), &p)?;
            }
            write_json(&result, out_json.as_deref())?;
        }
        Command::Evaluate {
            task,
            manifest,
            seed,
            out,
            arch,
            end_to_end,
            iou,
            config,
            hp,
        } => {
            if !(iou > 0.0 && iou < 1.0) {
                bail!("--iou must lie in (0, 1)");
            }
            let cfg: PipelineConfig = read_json(config.as_deref())?;
            let manifest = load_manifest(&manifest)?;
            match task {
                EvalTask::Localization => {
                    let report = evaluate_localization(&manifest, &cfg.segmentation, iou)?;
                    write_json(&report, out.as_deref())?;
                }
                EvalTask::Classification => {
                    let ids: Vec<String> =
                        manifest.images.iter().map(|e| e.image_id.clone()).collect();
                    let split = split_dataset(&ids, DEFAULT_SPLIT, seed)?;
                    let opts = ClassificationOptions {
                        arch: arch.into(),
                        hyper_params: hp.resolve(seed),
                        crop_source: CropSource {
                            end_to_end,
                            iou_threshold: iou,
                        },
                        segmentation: cfg.segmentation.clone(),
                        crop: cfg.crop,
                    };
                    let (report, _) = evaluate_classification(&manifest, &split, &opts)?;
                    write_json(&report, out.as_deref())?;
                }
            }
        }
        Command::Synth {
            config,
            n,
            out,
            seed,
        } => {
            let mut cfg: SynthConfig = read_json(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let manifest = generate_corpus(&cfg, n, &out)?;
            eprintln!(
                "wrote {} images, {} cells to {}",
                n,
                manifest.cell_count(),
                out.display()
            );
        }
        Command::Serve {
            bind,
            model,
            config,
        } => {
            let cfg: PipelineConfig = read_json(config.as_deref())?;
            cfg.validate()?;
            let state = AppState::new(load_model(&model)?, cfg);
            tokio::runtime::Runtime::new()?.block_on(service::serve(&bind, state))?;
        }
    }
    Ok(())
}
