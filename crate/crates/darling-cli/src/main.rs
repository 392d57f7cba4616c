//! `darling`: synthesize paired scene-text datasets, pre-train the
//! decoupled model, fine-tune, run recognition/editing/removal, and
//! evaluate.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

mod config;
mod eval;
mod runs;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use darling_core::model::checkpoint;
use darling_core::synth::{self, dataset, AssetCatalog, SynthProfile};
use darling_core::tasks;

use config::{require_dir, require_file, usage_error, TrainOverrides};

#[derive(Parser)]
#[command(name = "darling", version, about = "Scene-text synthesis, decoupled pre-training, and the recognition/editing/removal tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a style-paired synthetic dataset.
    Synth {
        /// Master seed; the dataset is byte-reproducible from it.
        #[arg(long, env = "DARLING_SEED", default_value_t = 0)]
        seed: u64,
        /// Number of pairs.
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Directory of JSON bitmap fonts (default: built-in faces).
        #[arg(long)]
        fonts: Option<PathBuf>,
        /// Directory of background PNGs larger than 128x32 (default:
        /// procedural textures).
        #[arg(long)]
        backgrounds: Option<PathBuf>,
        /// Word list file, one word per line (default: built-in lexicon).
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Cap on distinct lexicon words used.
        #[arg(long)]
        lexicon_size: Option<usize>,
        /// Degradation profile: "default" or "clean".
        #[arg(long, default_value = "default")]
        profile: String,
    },
    /// Disentangled pre-training on a pair dataset.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        /// JSON run config; flags override individual fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Resume from a checkpoint with optimizer state.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Recognition-only fine-tuning.
    FinetuneStr {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Keep GEB, the image heads, and the prompt table frozen.
        #[arg(long, default_value_t = true)]
        freeze_generative: bool,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Removal fine-tuning (background head under the removal prompt).
    FinetuneStrm {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Read the text in an image.
    Recognize {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Replace the text in an image, keeping its style.
    Edit {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Erase the text, reconstructing the background.
    Remove {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Image-quality metrics between matching PNGs of two directories.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Recognizer checkpoint for SeqAcc (requires --labels).
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Target texts: JSONL {"file","text"} or CSV "file,text".
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Seeds for the ClassAcc probe (0 disables it).
        #[arg(long, default_value_t = 3)]
        classacc_seeds: usize,
        #[arg(long, default_value_t = 50)]
        classacc_epochs: usize,
        #[arg(long, env = "DARLING_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Export style/content features and their 2-D PCA projections to CSV.
    ExportFeatures {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
    },
}

fn build_catalog(
    fonts: Option<&PathBuf>,
    backgrounds: Option<&PathBuf>,
    profile: &str,
) -> Result<AssetCatalog> {
    let mut catalog = AssetCatalog::builtin();
    if let Some(dir) = fonts {
        require_dir(dir, "fonts")?;
        catalog.fonts = synth::font::load_font_dir(dir).map_err(usage_error)?;
    }
    if let Some(dir) = backgrounds {
        require_dir(dir, "backgrounds")?;
        catalog.backgrounds = synth::background::load_background_dir(dir).map_err(usage_error)?;
    }
    catalog.profile = match profile {
        "default" => SynthProfile::default(),
        "clean" => SynthProfile::clean(),
        other => {
            anyhow::bail!(usage_error(format!(
                "unknown profile {other:?} (expected \"default\" or \"clean\")"
            )))
        }
    };
    Ok(catalog)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            seed,
            count,
            out,
            fonts,
            backgrounds,
            lexicon,
            lexicon_size,
            profile,
        } => {
            if count == 0 {
                anyhow::bail!(usage_error("--count must be positive"));
            }
            let catalog = build_catalog(fonts.as_ref(), backgrounds.as_ref(), &profile)?;
            let mut words = match lexicon {
                Some(path) => {
                    require_file(&path, "lexicon")?;
                    synth::lexicon::load_lexicon_file(&path, synth::MAX_TEXT_CHARS)
                        .map_err(usage_error)?
                }
                None => synth::lexicon::builtin_lexicon(),
            };
            if let Some(n) = lexicon_size {
                if n < 2 {
                    anyhow::bail!(usage_error("--lexicon-size must be at least 2"));
                }
                words.truncate(n);
            }
            let pairs = synth::generate_pairs(seed, count, &words, &catalog)?;
            let manifest = dataset::write_dataset(&pairs, &out)?;
            eprintln!(
                "wrote {} pairs to {} (manifest.jsonl + images/)",
                manifest.len(),
                out.display()
            );
        }
        Command::Pretrain {
            data,
            config: config_path,
            out,
            resume,
            overrides,
        } => {
            let data = require_dir(&data, "data")?;
            let cfg = config::resolve(config_path.as_deref(), &overrides, &out)?;
            runs::pretrain(&cfg, &data, &out, resume.as_deref())?;
        }
        Command::FinetuneStr {
            data,
            ckpt,
            config: config_path,
            out,
            freeze_generative,
            overrides,
        } => {
            let data = require_dir(&data, "data")?;
            let ckpt = require_file(&ckpt, "checkpoint")?;
            let cfg = config::resolve(config_path.as_deref(), &overrides, &out)?;
            runs::finetune_str(&cfg, &data, &ckpt, &out, freeze_generative)?;
        }
        Command::FinetuneStrm {
            data,
            ckpt,
            config: config_path,
            out,
            overrides,
        } => {
            let data = require_dir(&data, "data")?;
            let ckpt = require_file(&ckpt, "checkpoint")?;
            let cfg = config::resolve(config_path.as_deref(), &overrides, &out)?;
            runs::finetune_strm(&cfg, &data, &ckpt, &out)?;
        }
        Command::Recognize { image, ckpt } => {
            let img = runs::load_image(&image)?;
            require_file(&ckpt, "checkpoint")?;
            let model = checkpoint::load::<f32>(&ckpt)?.model;
            let (text, confidence) = tasks::recognize(&img, &model)?;
            println!("{}", serde_json::json!({ "text": text, "confidence": confidence }));
        }
        Command::Edit {
            image,
            text,
            out,
            ckpt,
        } => {
            let img = runs::load_image(&image)?;
            require_file(&ckpt, "checkpoint")?;
            let model = checkpoint::load::<f32>(&ckpt)?.model;
            let edited = tasks::edit(&img, &text, &model)?;
            edited.save_png(&out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Remove { image, out, ckpt } => {
            let img = runs::load_image(&image)?;
            require_file(&ckpt, "checkpoint")?;
            let model = checkpoint::load::<f32>(&ckpt)?.model;
            let cleaned = tasks::remove(&img, &model)?;
            cleaned.save_png(&out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Evaluate {
            pred,
            reference,
            report,
            ckpt,
            labels,
            classacc_seeds,
            classacc_epochs,
            seed,
        } => {
            eval::evaluate(&eval::EvalArgs {
                pred: &pred,
                reference: &reference,
                report: &report,
                ckpt: ckpt.as_deref(),
                labels: labels.as_deref(),
                classacc_seeds,
                classacc_epochs,
                seed,
            })?;
        }
        Command::ExportFeatures {
            data,
            ckpt,
            out,
            limit,
        } => {
            eval::export_features(&data, &ckpt, &out, limit)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let usage = err.chain().any(|c| c.downcast_ref::<config::UsageError>().is_some())
                || err
                    .chain()
                    .any(|c| matches!(c.downcast_ref::<darling_core::Error>(), Some(darling_core::Error::Config(_))));
            if usage {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
