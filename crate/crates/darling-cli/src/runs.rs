//! Training drivers: pre-training and the two fine-tuning regimes, with
//! JSONL loss logs, periodic checkpoints, and resume.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use darling_core::image::Image;
use darling_core::model::{checkpoint, Model};
use darling_core::synth::dataset;
use darling_core::train::{
    self, Adam, PreparedLabeled, PreparedPair, PreparedRemoval, ReconKind, TrainConfig,
};

use crate::config::{require_file, RunConfig};

type F = f32;

pub struct LoadedModel {
    pub model: Model<F>,
    pub opt: Option<Adam<F>>,
    pub step: u64,
}

pub fn load_checkpoint(path: &Path, train: &TrainConfig) -> Result<LoadedModel> {
    let contents = checkpoint::load::<F>(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))?;
    let opt = match (contents.opt_m, contents.opt_v) {
        (Some(m), Some(v)) => Some(Adam {
            m,
            v,
            step: contents.step,
            beta1: train.beta1,
            beta2: train.beta2,
            eps: train.eps,
        }),
        _ => None,
    };
    Ok(LoadedModel {
        model: contents.model,
        opt,
        step: contents.step,
    })
}

fn open_log(out_dir: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let path = out_dir.join("train_log.jsonl");
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    Ok(std::io::BufWriter::new(file))
}

fn save(
    out_dir: &Path,
    name: &str,
    model: &Model<F>,
    opt: &Adam<F>,
    step: u64,
) -> Result<std::path::PathBuf> {
    let path = out_dir.join(name);
    checkpoint::save(&path, model, step, Some((&opt.m, &opt.v)))
        .with_context(|| format!("saving checkpoint {}", path.display()))?;
    Ok(path)
}

pub fn load_pairs(data_dir: &Path) -> Result<Vec<darling_core::synth::PairSample>> {
    let manifest = require_file(&data_dir.join("manifest.jsonl"), "dataset manifest")?;
    let pairs = dataset::read_dataset(&manifest)?;
    if pairs.is_empty() {
        anyhow::bail!(crate::config::usage_error("dataset is empty"));
    }
    Ok(pairs)
}

/// Disentangled pre-training over a pair dataset.
pub fn pretrain(cfg: &RunConfig, data_dir: &Path, out_dir: &Path, resume: Option<&Path>) -> Result<()> {
    let pairs = load_pairs(data_dir)?;
    let (mut model, mut opt, start_step) = match resume {
        Some(p) => {
            let loaded = load_checkpoint(p, &cfg.train)?;
            if loaded.model.cfg != cfg.model {
                anyhow::bail!(crate::config::usage_error(
                    "checkpoint model config differs from the resolved config",
                ));
            }
            let opt = loaded
                .opt
                .ok_or_else(|| anyhow::anyhow!("checkpoint has no optimizer state to resume"))?;
            (loaded.model, opt, loaded.step)
        }
        None => {
            let model = Model::new(cfg.model.clone(), cfg.train.seed)?;
            let opt = Adam::new(&model, cfg.train.beta1, cfg.train.beta2, cfg.train.eps);
            (model, opt, 0)
        }
    };

    eprintln!(
        "pretrain: {} pairs, {} parameters, steps {}..{}",
        pairs.len(),
        model.param_count(),
        start_step + 1,
        cfg.train.max_steps
    );
    let prepared: Vec<PreparedPair<F>> = pairs
        .iter()
        .map(|p| train::prepare_pair(&model, p))
        .collect::<darling_core::Result<_>>()?;

    let steps_per_epoch = (prepared.len() as u64 / cfg.train.batch_size as u64).max(1);
    let mut log = open_log(out_dir)?;
    for step in (start_step + 1)..=cfg.train.max_steps {
        let idx = train::batch_indices(cfg.train.seed, step, prepared.len(), cfg.train.batch_size);
        let batch: Vec<&PreparedPair<F>> = idx.iter().map(|&i| &prepared[i]).collect();
        let lr = cfg.train.lr_at(step, Some(steps_per_epoch));
        let report = train::pretrain_step(&mut model, &mut opt, &batch, &cfg.train, step, lr)?;
        writeln!(log, "{}", serde_json::to_string(&report)?)?;
        if step % 50 == 0 || step == cfg.train.max_steps {
            log.flush()?;
            eprintln!(
                "step {step}: total {:.4} (L_R {:.4}, L_C {:.4}, L_A {:.5}) lr {lr:.1e}",
                report.total, report.l_r, report.l_c, report.l_a
            );
        }
        if let Some(every) = cfg.train.checkpoint_every {
            if every > 0 && step % every == 0 && step != cfg.train.max_steps {
                save(out_dir, &format!("ckpt_step{step:07}.ckpt"), &model, &opt, step)?;
            }
        }
    }
    let final_path = save(out_dir, "checkpoint_final.ckpt", &model, &opt, cfg.train.max_steps)?;
    eprintln!("saved {}", final_path.display());
    Ok(())
}

/// Recognition fine-tune. Both members of every pair serve as labeled
/// samples; a checkpoint is emitted at each epoch boundary.
pub fn finetune_str(
    cfg: &RunConfig,
    data_dir: &Path,
    ckpt: &Path,
    out_dir: &Path,
    freeze_generative: bool,
) -> Result<()> {
    let pairs = load_pairs(data_dir)?;
    let loaded = load_checkpoint(ckpt, &cfg.train)?;
    let mut model = loaded.model;
    let mut opt = Adam::new(&model, cfg.train.beta1, cfg.train.beta2, cfg.train.eps);

    let mut samples: Vec<PreparedLabeled<F>> = Vec::with_capacity(pairs.len() * 2);
    for p in &pairs {
        samples.push(train::prepare_labeled(&model, &p.image_a, &p.text_a)?);
        samples.push(train::prepare_labeled(&model, &p.image_b, &p.text_b)?);
    }
    let steps_per_epoch = (samples.len() as u64 / cfg.train.batch_size as u64).max(1);
    let mut log = open_log(out_dir)?;
    for step in 1..=cfg.train.max_steps {
        let idx = train::batch_indices(cfg.train.seed, step, samples.len(), cfg.train.batch_size);
        let batch: Vec<&PreparedLabeled<F>> = idx.iter().map(|&i| &samples[i]).collect();
        let lr = cfg.train.lr_at(step, Some(steps_per_epoch));
        let loss = train::finetune_str_step(&mut model, &mut opt, &batch, lr, freeze_generative)?;
        writeln!(log, "{{\"step\":{step},\"l_c\":{loss}}}")?;
        if step % 50 == 0 || step == cfg.train.max_steps {
            log.flush()?;
            eprintln!("finetune-str step {step}: L_C {loss:.4} lr {lr:.1e}");
        }
        if step % steps_per_epoch == 0 {
            let epoch = step / steps_per_epoch;
            save(out_dir, &format!("ckpt_epoch{epoch:04}.ckpt"), &model, &opt, step)?;
        }
    }
    save(out_dir, "checkpoint_final.ckpt", &model, &opt, cfg.train.max_steps)?;
    Ok(())
}

/// Removal fine-tune: background-head reconstruction under the removal
/// prompt.
pub fn finetune_strm(cfg: &RunConfig, data_dir: &Path, ckpt: &Path, out_dir: &Path) -> Result<()> {
    let pairs = load_pairs(data_dir)?;
    let loaded = load_checkpoint(ckpt, &cfg.train)?;
    let mut model = loaded.model;
    let mut opt = Adam::new(&model, cfg.train.beta1, cfg.train.beta2, cfg.train.eps);

    let mut samples: Vec<PreparedRemoval<F>> = Vec::with_capacity(pairs.len() * 2);
    for p in &pairs {
        let bg = model.image_to_patches(&p.background)?;
        samples.push(PreparedRemoval {
            patches: model.image_to_patches(&p.image_a)?,
            patches_bg: bg.clone(),
        });
        samples.push(PreparedRemoval {
            patches: model.image_to_patches(&p.image_b)?,
            patches_bg: bg,
        });
    }
    let steps_per_epoch = (samples.len() as u64 / cfg.train.batch_size as u64).max(1);
    let mut log = open_log(out_dir)?;
    for step in 1..=cfg.train.max_steps {
        let idx = train::batch_indices(cfg.train.seed, step, samples.len(), cfg.train.batch_size);
        let batch: Vec<&PreparedRemoval<F>> = idx.iter().map(|&i| &samples[i]).collect();
        let lr = cfg.train.lr_at(step, Some(steps_per_epoch));
        let loss = train::finetune_strm_step(&mut model, &mut opt, &batch, lr, ReconKind::Mse)?;
        writeln!(log, "{{\"step\":{step},\"l_bg\":{loss}}}")?;
        if step % 50 == 0 || step == cfg.train.max_steps {
            log.flush()?;
            eprintln!("finetune-strm step {step}: L_bg {loss:.5} lr {lr:.1e}");
        }
    }
    save(out_dir, "checkpoint_final.ckpt", &model, &opt, cfg.train.max_steps)?;
    Ok(())
}

pub fn load_image(path: &Path) -> Result<Image> {
    require_file(path, "image")?;
    Ok(Image::load_png(path)?)
}
