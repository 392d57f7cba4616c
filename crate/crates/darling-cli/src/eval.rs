//! The `evaluate` command: paired image-quality metrics, optional SeqAcc via
//! a checkpointed recognizer, and the ClassAcc realism probe.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use darling_core::image::Image;
use darling_core::metrics::classacc::{classacc_multi_seed, ClassAccConfig};
use darling_core::metrics::{mean_metric, mse, psnr, ssim, MetricReport};
use darling_core::rng::derive_seed;
use darling_core::tasks;

use crate::config::{require_dir, require_file, usage_error};

fn png_map(dir: &Path) -> Result<BTreeMap<String, std::path::PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "png") {
            out.insert(
                p.file_name().unwrap().to_string_lossy().into_owned(),
                p.clone(),
            );
        }
    }
    Ok(out)
}

/// Labels file: JSONL `{"file": "...", "text": "..."}` or CSV `file,text`.
fn load_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    #[derive(serde::Deserialize)]
    struct Row {
        file: String,
        text: String,
    }
    let text = std::fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        if let Ok(row) = serde_json::from_str::<Row>(line) {
            out.insert(row.file, row.text);
        } else if let Some((file, label)) = line.split_once(',') {
            out.insert(file.trim().to_string(), label.trim().to_string());
        } else {
            anyhow::bail!(usage_error(format!("unparseable label line: {line:?}")));
        }
    }
    Ok(out)
}

pub struct EvalArgs<'a> {
    pub pred: &'a Path,
    pub reference: &'a Path,
    pub report: &'a Path,
    pub ckpt: Option<&'a Path>,
    pub labels: Option<&'a Path>,
    pub classacc_seeds: usize,
    pub classacc_epochs: usize,
    pub seed: u64,
}

pub fn evaluate(args: &EvalArgs) -> Result<()> {
    require_dir(args.pred, "prediction")?;
    require_dir(args.reference, "reference")?;
    let pred_map = png_map(args.pred)?;
    let ref_map = png_map(args.reference)?;
    let shared: Vec<&String> = pred_map.keys().filter(|k| ref_map.contains_key(*k)).collect();
    if shared.is_empty() {
        anyhow::bail!(usage_error(
            "prediction and reference directories share no PNG filenames",
        ));
    }

    let mut pairs: Vec<(Image, Image)> = Vec::with_capacity(shared.len());
    let mut pred_images = Vec::with_capacity(shared.len());
    let mut names = Vec::with_capacity(shared.len());
    for name in &shared {
        let p = Image::load_png(&pred_map[*name])?;
        let r = Image::load_png(&ref_map[*name])?;
        pred_images.push(p.clone());
        pairs.push((p, r));
        names.push((*name).clone());
    }

    let mse_mean = mean_metric(&pairs, mse)?;
    let psnr_mean = if mse_mean == 0.0 {
        None
    } else {
        Some(mean_metric(&pairs, |a, b| {
            let p = psnr(a, b)?;
            // An identical pair inside a non-identical set would make the
            // mean infinite; report it as the per-pair cap instead.
            Ok(if p.is_finite() { p } else { 99.0 })
        })?)
    };
    let ssim_mean = mean_metric(&pairs, ssim)?;

    let seqacc_pct = match (args.ckpt, args.labels) {
        (Some(ckpt), Some(labels_path)) => {
            let labels = load_labels(labels_path)?;
            let model = darling_core::model::checkpoint::load::<f32>(ckpt)
                .with_context(|| format!("loading checkpoint {}", ckpt.display()))?
                .model;
            let mut images = Vec::new();
            let mut texts = Vec::new();
            for (name, img) in names.iter().zip(&pred_images) {
                if let Some(t) = labels.get(name) {
                    images.push(img.clone());
                    texts.push(t.clone());
                }
            }
            if images.is_empty() {
                anyhow::bail!(usage_error("labels file matches no evaluated images"));
            }
            let model_ref = &model;
            Some(darling_core::metrics::seqacc(
                move |img| {
                    tasks::recognize(img, model_ref)
                        .map(|(t, _)| t)
                        .unwrap_or_default()
                },
                &images,
                &texts,
            )?)
        }
        (None, None) => None,
        _ => anyhow::bail!(usage_error("--ckpt and --labels must be given together")),
    };

    let (classacc_pct, classacc_std, warning) = if args.classacc_seeds > 0 {
        let refs: Vec<Image> = pairs.iter().map(|(_, r)| r.clone()).collect();
        let seeds: Vec<u64> = (0..args.classacc_seeds)
            .map(|i| derive_seed(args.seed, i as u64))
            .collect();
        let cfg = ClassAccConfig {
            epochs: args.classacc_epochs,
            ..Default::default()
        };
        let (mean, std, warn) = classacc_multi_seed::<f32>(&refs, &pred_images, &seeds, &cfg)?;
        (Some(mean), Some(std), warn)
    } else {
        (None, None, None)
    };

    let report = MetricReport {
        mse: mse_mean,
        psnr_db: psnr_mean,
        ssim: ssim_mean,
        seqacc_pct,
        classacc_pct,
        classacc_std,
        warning,
        n_samples: pairs.len(),
    };
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(args.report, &json)
        .with_context(|| format!("cannot write report {}", args.report.display()))?;
    println!("{json}");
    Ok(())
}

pub fn export_features(
    data_dir: &Path,
    ckpt: &Path,
    out_csv: &Path,
    limit: Option<usize>,
) -> Result<()> {
    require_dir(data_dir, "data")?;
    require_file(ckpt, "checkpoint")?;
    let model = darling_core::model::checkpoint::load::<f32>(ckpt)?.model;

    // Accept either a dataset directory (manifest.jsonl) or a directory of
    // PNGs.
    let manifest = data_dir.join("manifest.jsonl");
    let (mut images, mut ids): (Vec<Image>, Vec<String>) = if manifest.is_file() {
        let m = darling_core::synth::dataset::read_manifest(&manifest)?;
        let mut images = Vec::new();
        let mut ids = Vec::new();
        for (i, pair) in m.iter_pairs().enumerate() {
            let pair = pair?;
            images.push(pair.image_a);
            ids.push(format!("{i:06}_a"));
            images.push(pair.image_b);
            ids.push(format!("{i:06}_b"));
        }
        (images, ids)
    } else {
        let map = png_map(data_dir)?;
        if map.is_empty() {
            anyhow::bail!(usage_error(format!(
                "{} contains neither manifest.jsonl nor PNGs",
                data_dir.display()
            )));
        }
        let mut images = Vec::new();
        let mut ids = Vec::new();
        for (name, path) in &map {
            images.push(Image::load_png(path)?);
            ids.push(name.clone());
        }
        (images, ids)
    };
    if let Some(n) = limit {
        images.truncate(n);
        ids.truncate(n);
    }

    let export = tasks::export_features(&images, &model)?;
    std::fs::write(out_csv, export.to_csv(&ids))
        .with_context(|| format!("cannot write {}", out_csv.display()))?;
    eprintln!(
        "exported {} rows; style variance ratio {:.3}, content {:.3}",
        ids.len(),
        export.style_variances[0].max(1e-12) / export.style_variances[1].max(1e-12),
        export.content_variances[0].max(1e-12) / export.content_variances[1].max(1e-12),
    );
    Ok(())
}
