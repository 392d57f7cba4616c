//! Disentangled pre-training (content-swap reconstruction + style alignment
//! + recognition) and the two fine-tuning regimes.
//!
//! One pre-training step over a pair batch:
//! * both images are encoded; the alignment loss pulls their style halves
//!   together;
//! * each image's content tokens run through DIB and the recognition loss
//!   supervises its own text;
//! * each image's GEB receives its own features but the counterpart's text
//!   as prompt, and the text-rendering head reconstructs the counterpart
//!   image (both directions, averaged); the background head is supervised
//!   against the shared text-free background;
//! * the total is `L_R + lambda_C * L_C + lambda_A * L_A`.

pub mod adam;

pub use adam::Adam;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{patchify, Image};
use crate::model::mtd::TextPrompt;
use crate::model::Model;
use crate::par;
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::synth::PairSample;
use crate::vocab;

/// How the alignment loss reduces over elements. The paper's formula is a
/// sum; the mean keeps `lambda_A` comparable across model sizes and is the
/// default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignReduction {
    Mean,
    Sum,
}

/// Pixel reconstruction penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconKind {
    Mse,
    L1,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_after: f64,
    /// Epoch-based drop point (paper schedule), used when the caller knows
    /// the epoch length.
    pub lr_drop_epoch: usize,
    /// Step-based override; when unset and no epoch length is known, the
    /// drop lands at 70% of `max_steps`.
    pub lr_drop_step: Option<u64>,
    pub max_steps: u64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub align_reduction: AlignReduction,
    pub recon_kind: ReconKind,
    /// Supervise the background head against the text-free background.
    pub background_supervision: bool,
    pub checkpoint_every: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            lr_initial: 1e-4,
            lr_after: 1e-5,
            lr_drop_epoch: 7,
            lr_drop_step: None,
            max_steps: 200_000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            align_reduction: AlignReduction::Mean,
            recon_kind: ReconKind::Mse,
            background_supervision: true,
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_initial <= 0.0 || self.lr_after <= 0.0 {
            return Err(Error::config("learning rates must be positive"));
        }
        if self.lr_after >= self.lr_initial {
            return Err(Error::config("lr_after must be below lr_initial"));
        }
        if self.batch_size == 0 || self.max_steps == 0 {
            return Err(Error::config("batch_size and max_steps must be positive"));
        }
        Ok(())
    }

    /// Step index at which the learning rate drops.
    pub fn drop_step(&self, steps_per_epoch: Option<u64>) -> u64 {
        if let Some(s) = self.lr_drop_step {
            return s;
        }
        if let Some(spe) = steps_per_epoch {
            let by_epoch = spe.saturating_mul(self.lr_drop_epoch as u64);
            if by_epoch < self.max_steps {
                return by_epoch;
            }
        }
        ((self.max_steps as f64) * 0.7) as u64
    }

    pub fn lr_at(&self, step: u64, steps_per_epoch: Option<u64>) -> f64 {
        if step >= self.drop_step(steps_per_epoch) {
            self.lr_after
        } else {
            self.lr_initial
        }
    }
}

/// Per-step loss decomposition: `total = L_R + lambda_C L_C + lambda_A L_A`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossReport {
    pub l_r: f64,
    pub l_c: f64,
    pub l_a: f64,
    pub total: f64,
    pub step: u64,
}

impl LossReport {
    pub fn check(&self, lambda_c: f64, lambda_a: f64) -> Result<()> {
        for (name, v) in [
            ("L_R", self.l_r),
            ("L_C", self.l_c),
            ("L_A", self.l_a),
            ("total", self.total),
        ] {
            if !v.is_finite() {
                return Err(Error::numeric(format!(
                    "step {}: loss term {name} is not finite ({v})",
                    self.step
                )));
            }
            if v < 0.0 {
                return Err(Error::numeric(format!(
                    "step {}: loss term {name} is negative ({v})",
                    self.step
                )));
            }
        }
        let recomposed = self.l_r + lambda_c * self.l_c + lambda_a * self.l_a;
        if (recomposed - self.total).abs() > 1e-6 {
            return Err(Error::numeric(format!(
                "step {}: total {} does not recompose from parts ({recomposed})",
                self.step, self.total
            )));
        }
        Ok(())
    }
}

/// Alignment loss over two style-feature arrays: `1/2 (F_S1 - F_S2)^2`,
/// reduced per `reduction`. Returns the loss only.
pub fn alignment_loss<F: Scalar>(
    f_s1: &Array2<F>,
    f_s2: &Array2<F>,
    reduction: AlignReduction,
) -> Result<f64> {
    Ok(alignment_loss_grad(f_s1, f_s2, reduction)?.0)
}

/// Alignment loss plus gradients `(loss, d1, d2)`.
pub fn alignment_loss_grad<F: Scalar>(
    f_s1: &Array2<F>,
    f_s2: &Array2<F>,
    reduction: AlignReduction,
) -> Result<(f64, Array2<F>, Array2<F>)> {
    if f_s1.dim() != f_s2.dim() {
        return Err(Error::validation(format!(
            "alignment loss shape mismatch: {:?} vs {:?}",
            f_s1.dim(),
            f_s2.dim()
        )));
    }
    let diff = f_s1 - f_s2;
    let half = F::from_f64(0.5);
    let sum: F = diff.iter().map(|&d| half * d * d).fold(F::zero(), |a, b| a + b);
    let scale = match reduction {
        AlignReduction::Mean => F::from_f64(1.0 / diff.len() as f64),
        AlignReduction::Sum => F::one(),
    };
    let loss = (sum * scale).into_f64();
    let d1 = diff.mapv(|d| d * scale);
    let d2 = d1.mapv(|d| -d);
    Ok((loss, d1, d2))
}

/// Recognition loss: mean over the `T` positions of the negative
/// log-softmax probability of the target class. Returns `(loss, dlogits)`.
pub fn recognition_loss_grad<F: Scalar>(
    logits: &Array2<F>,
    target_ids: &[usize],
) -> Result<(f64, Array2<F>)> {
    let (t_len, classes) = logits.dim();
    if target_ids.len() != t_len {
        return Err(Error::validation(format!(
            "target has {} ids, logits have {t_len} rows",
            target_ids.len()
        )));
    }
    if let Some(&bad) = target_ids.iter().find(|&&id| id >= classes) {
        return Err(Error::validation(format!(
            "target id {bad} outside the {classes}-class vocabulary"
        )));
    }
    let probs = crate::nn::ops::softmax_rows(logits);
    let mut loss = 0.0;
    for (t, &id) in target_ids.iter().enumerate() {
        loss -= probs[[t, id]].into_f64().max(f64::MIN_POSITIVE).ln();
    }
    loss /= t_len as f64;
    let inv_t = F::from_f64(1.0 / t_len as f64);
    let mut dlogits = probs;
    for (t, &id) in target_ids.iter().enumerate() {
        dlogits[[t, id]] = dlogits[[t, id]] - F::one();
    }
    dlogits.mapv_inplace(|v| v * inv_t);
    Ok((loss, dlogits))
}

pub fn recognition_loss<F: Scalar>(logits: &Array2<F>, target_ids: &[usize]) -> Result<f64> {
    Ok(recognition_loss_grad(logits, target_ids)?.0)
}

/// Reconstruction penalty over flattened patch rows. Returns `(loss, dpred)`.
pub fn reconstruction_loss_grad<F: Scalar>(
    pred: &Array2<F>,
    target: &Array2<F>,
    kind: ReconKind,
) -> Result<(f64, Array2<F>)> {
    if pred.dim() != target.dim() {
        return Err(Error::validation(format!(
            "reconstruction shape mismatch: {:?} vs {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let n = F::from_f64(pred.len() as f64);
    let diff = pred - target;
    match kind {
        ReconKind::Mse => {
            let loss = diff.iter().map(|&d| (d * d).into_f64()).sum::<f64>() / pred.len() as f64;
            let two = F::from_f64(2.0);
            Ok((loss, diff.mapv(|d| two * d / n)))
        }
        ReconKind::L1 => {
            let loss = diff.iter().map(|&d| d.abs().into_f64()).sum::<f64>() / pred.len() as f64;
            Ok((loss, diff.mapv(|d| d.signum() / n)))
        }
    }
}

/// Pixel-space reconstruction loss between images (mean squared error by
/// default).
pub fn reconstruction_loss(pred: &Image, target: &Image, kind: ReconKind) -> Result<f64> {
    let p: Array2<f64> = patchify(pred, 4);
    let t: Array2<f64> = patchify(target, 4);
    Ok(reconstruction_loss_grad(&p, &t, kind)?.0)
}

/// A pair converted to model inputs.
pub struct PreparedPair<F: Scalar> {
    pub patches_a: Array2<F>,
    pub patches_b: Array2<F>,
    pub patches_bg: Array2<F>,
    pub target_a: Vec<usize>,
    pub target_b: Vec<usize>,
    pub prompt_a: TextPrompt,
    pub prompt_b: TextPrompt,
}

/// Validate and tensorize a pair for a given model geometry.
pub fn prepare_pair<F: Scalar>(model: &Model<F>, pair: &PairSample) -> Result<PreparedPair<F>> {
    if pair.text_a == pair.text_b {
        return Err(Error::validation(
            "pair has identical texts; content-swap training needs distinct words",
        ));
    }
    let t = model.cfg.max_text_len;
    Ok(PreparedPair {
        patches_a: model.image_to_patches(&pair.image_a)?,
        patches_b: model.image_to_patches(&pair.image_b)?,
        patches_bg: model.image_to_patches(&pair.background)?,
        target_a: vocab::encode_target(&pair.text_a, t)?,
        target_b: vocab::encode_target(&pair.text_b, t)?,
        prompt_a: TextPrompt::for_text(&pair.text_a, t)?,
        prompt_b: TextPrompt::for_text(&pair.text_b, t)?,
    })
}

/// Per-pair loss decomposition before weighting.
#[derive(Debug, Clone, Copy)]
pub struct PairLosses {
    pub l_r: f64,
    pub l_c: f64,
    pub l_a: f64,
}

impl PairLosses {
    /// `L_R + lambda_C L_C + lambda_A L_A`.
    pub fn total(&self, lambda_c: f64, lambda_a: f64) -> f64 {
        self.l_r + lambda_c * self.l_c + lambda_a * self.l_a
    }
}

/// Forward + backward for one pair; gradients of the full objective are
/// accumulated into a fresh container.
pub fn pair_grads<F: Scalar>(
    model: &Model<F>,
    pair: &PreparedPair<F>,
    cfg: &TrainConfig,
) -> Result<(Model<F>, PairLosses)> {
    let lambda_c = model.cfg.lambda_content;
    let lambda_a = model.cfg.lambda_align;
    let mut grads = model.zeroed_like();

    // Encode both members.
    let (ft1, enc1) = model.encode(&pair.patches_a)?;
    let (ft2, enc2) = model.encode(&pair.patches_b)?;

    // Alignment over style halves.
    let (l_a, d_fs1_align, d_fs2_align) =
        alignment_loss_grad(&ft1.f_s, &ft2.f_s, cfg.align_reduction)?;

    // Recognition on both members' own texts.
    let (layers1, logits1, dib_cache1) = model.dib_forward(&ft1.f_c);
    let (layers2, logits2, dib_cache2) = model.dib_forward(&ft2.f_c);
    let (ce1, mut dlogits1) = recognition_loss_grad(&logits1, &pair.target_a)?;
    let (ce2, mut dlogits2) = recognition_loss_grad(&logits2, &pair.target_b)?;
    let l_c = 0.5 * (ce1 + ce2);
    // Chain weight: lambda_C and the 1/2 from averaging the two members.
    let w_ce = F::from_f64(lambda_c * 0.5);
    dlogits1.mapv_inplace(|v| v * w_ce);
    dlogits2.mapv_inplace(|v| v * w_ce);

    // Content swap: each member's GEB gets the counterpart's text prompt and
    // is asked to render the counterpart image.
    let mut l_r = 0.0;
    let run_direction = |own_ft: &crate::model::FeatureTokens<F>,
                             own_patches: &Array2<F>,
                             own_layers: &[Array2<F>],
                             counterpart_patches: &Array2<F>,
                             prompt: &TextPrompt,
                             grads: &mut Model<F>|
     -> Result<(f64, Array2<F>, Array2<F>, Vec<Array2<F>>)> {
        let (tokens, geb_cache) = model.geb_forward(prompt, &own_ft.f_s, &own_ft.f_c, own_layers)?;
        let (render_rows, render_cache) = model.render_head.forward(&tokens, None);
        let (l_render, mut d_render) =
            reconstruction_loss_grad(&render_rows, counterpart_patches, cfg.recon_kind)?;
        let mut dir_loss = l_render;
        // Both swap directions are averaged: weight 1/2 on this direction.
        let half = F::from_f64(0.5);
        d_render.mapv_inplace(|v| v * half);
        let (mut d_tokens, render_grads) = model.render_head.backward(&render_cache, &d_render);
        accumulate_head(&mut grads.render_head, &render_grads);

        if cfg.background_supervision {
            let (bg_rows, bg_cache) = model.bg_head.forward(&tokens, Some(own_patches));
            let (l_bg, mut d_bg) =
                reconstruction_loss_grad(&bg_rows, &pair.patches_bg, cfg.recon_kind)?;
            dir_loss += l_bg;
            d_bg.mapv_inplace(|v| v * half);
            let (d_tokens_bg, bg_grads) = model.bg_head.backward(&bg_cache, &d_bg);
            accumulate_head(&mut grads.bg_head, &bg_grads);
            d_tokens = d_tokens + d_tokens_bg;
        }

        let (d_fs, d_fc, d_dib_layers) = model.geb_backward(&geb_cache, &d_tokens, grads);
        Ok((dir_loss, d_fs, d_fc, d_dib_layers))
    };

    let (lr1, d_fs1_geb, d_fc1_geb, d_layers1) = run_direction(
        &ft1,
        &pair.patches_a,
        &layers1,
        &pair.patches_b,
        &pair.prompt_b,
        &mut grads,
    )?;
    let (lr2, d_fs2_geb, d_fc2_geb, d_layers2) = run_direction(
        &ft2,
        &pair.patches_b,
        &layers2,
        &pair.patches_a,
        &pair.prompt_a,
        &mut grads,
    )?;
    l_r += 0.5 * (lr1 + lr2);

    // DIB backward: recognition gradient plus the per-layer gate consumers.
    let d_fc1_dib = model.dib_backward(
        &dib_cache1,
        &dlogits1,
        d_layers1.into_iter().map(Some).collect(),
        &mut grads,
    );
    let d_fc2_dib = model.dib_backward(
        &dib_cache2,
        &dlogits2,
        d_layers2.into_iter().map(Some).collect(),
        &mut grads,
    );

    // Join the gradients at the decoupling split and run the encoders back.
    let w_align = F::from_f64(lambda_a);
    let d_fs1 = d_fs1_geb + &d_fs1_align.mapv(|v| v * w_align);
    let d_fs2 = d_fs2_geb + &d_fs2_align.mapv(|v| v * w_align);
    let d_fc1 = d_fc1_geb + &d_fc1_dib;
    let d_fc2 = d_fc2_geb + &d_fc2_dib;
    model.encode_backward(&enc1, &d_fs1, &d_fc1, &mut grads);
    model.encode_backward(&enc2, &d_fs2, &d_fc2, &mut grads);

    Ok((grads, PairLosses { l_r, l_c, l_a }))
}

fn accumulate_head<F: Scalar>(
    acc: &mut crate::model::mtd::ImageHead<F>,
    g: &crate::model::mtd::ImageHead<F>,
) {
    let mut a = Vec::new();
    acc.params_mut("h", &mut a);
    let mut b = Vec::new();
    g.params("h", &mut b);
    for ((_, p), (_, q)) in a.into_iter().zip(b) {
        *p = &*p + q;
    }
}

/// One pre-training step over a batch of prepared pairs: averaged gradients,
/// one optimizer update, and a checked loss report.
pub fn pretrain_step<F: Scalar>(
    model: &mut Model<F>,
    opt: &mut Adam<F>,
    batch: &[&PreparedPair<F>],
    cfg: &TrainConfig,
    step: u64,
    lr: f64,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    let results: Vec<Result<(Model<F>, PairLosses)>> =
        par::map_slice(batch, |pair| pair_grads(model, pair, cfg));

    let mut total_grads = model.zeroed_like();
    let mut l_r = 0.0;
    let mut l_c = 0.0;
    let mut l_a = 0.0;
    for r in results {
        let (g, losses) = r?;
        total_grads.accumulate(&g);
        l_r += losses.l_r;
        l_c += losses.l_c;
        l_a += losses.l_a;
    }
    let n = batch.len() as f64;
    total_grads.scale(F::from_f64(1.0 / n));
    l_r /= n;
    l_c /= n;
    l_a /= n;

    let report = LossReport {
        l_r,
        l_c,
        l_a,
        total: l_r + model.cfg.lambda_content * l_c + model.cfg.lambda_align * l_a,
        step,
    };
    report.check(model.cfg.lambda_content, model.cfg.lambda_align)?;
    opt.update(model, &total_grads, lr, None);
    Ok(report)
}

/// Deterministic batch selection: a stateless shuffle keyed by
/// `(seed, step)`, so training can resume mid-run bit-for-bit.
pub fn batch_indices(seed: u64, step: u64, n: usize, batch_size: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut rng = crate::rng::rng_from(derive_seed(seed, step));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.truncate(batch_size.min(n));
    idx
}

/// A labeled image prepared for recognition fine-tuning.
pub struct PreparedLabeled<F: Scalar> {
    pub patches: Array2<F>,
    pub target: Vec<usize>,
}

pub fn prepare_labeled<F: Scalar>(
    model: &Model<F>,
    image: &Image,
    text: &str,
) -> Result<PreparedLabeled<F>> {
    Ok(PreparedLabeled {
        patches: model.image_to_patches(image)?,
        target: vocab::encode_target(text, model.cfg.max_text_len)?,
    })
}

/// Parameters the STR fine-tune leaves untouched when the generative side is
/// frozen.
pub fn generative_param(name: &str) -> bool {
    name.starts_with("mtd.geb.")
        || name.starts_with("heads.bg.")
        || name.starts_with("heads.render.")
        || name.starts_with("prompt.embed")
}

/// One recognition-only fine-tuning step (`L_C` alone).
pub fn finetune_str_step<F: Scalar>(
    model: &mut Model<F>,
    opt: &mut Adam<F>,
    batch: &[&PreparedLabeled<F>],
    lr: f64,
    freeze_generative: bool,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    let results: Vec<Result<(Model<F>, f64)>> = par::map_slice(batch, |item| {
        let mut grads = model.zeroed_like();
        let (ft, enc) = model.encode(&item.patches)?;
        let (_, logits, dib_cache) = model.dib_forward(&ft.f_c);
        let (loss, dlogits) = recognition_loss_grad(&logits, &item.target)?;
        let d_fc = model.dib_backward(&dib_cache, &dlogits, Vec::new(), &mut grads);
        let d_fs = Array2::zeros(ft.f_s.dim());
        model.encode_backward(&enc, &d_fs, &d_fc, &mut grads);
        Ok((grads, loss))
    });
    let mut total = model.zeroed_like();
    let mut loss = 0.0;
    for r in results {
        let (g, l) = r?;
        total.accumulate(&g);
        loss += l;
    }
    let n = batch.len() as f64;
    total.scale(F::from_f64(1.0 / n));
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::numeric(format!("finetune-str loss is not finite ({loss})")));
    }
    let frozen = |name: &str| generative_param(name);
    opt.update(model, &total, lr, freeze_generative.then_some(&frozen as _));
    Ok(loss)
}

/// An (image, background) example prepared for removal fine-tuning.
pub struct PreparedRemoval<F: Scalar> {
    pub patches: Array2<F>,
    pub patches_bg: Array2<F>,
}

/// One removal fine-tuning step: background-head reconstruction with the
/// removal prompt `[B][E][P][P]...`.
pub fn finetune_strm_step<F: Scalar>(
    model: &mut Model<F>,
    opt: &mut Adam<F>,
    batch: &[&PreparedRemoval<F>],
    lr: f64,
    recon: ReconKind,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    let prompt = TextPrompt::removal(model.cfg.max_text_len);
    let results: Vec<Result<(Model<F>, f64)>> = par::map_slice(batch, |item| {
        let mut grads = model.zeroed_like();
        let (ft, enc) = model.encode(&item.patches)?;
        let (layers, _, dib_cache) = model.dib_forward(&ft.f_c);
        let (tokens, geb_cache) = model.geb_forward(&prompt, &ft.f_s, &ft.f_c, &layers)?;
        let (bg_rows, bg_cache) = model.bg_head.forward(&tokens, Some(&item.patches));
        let (loss, d_bg) = reconstruction_loss_grad(&bg_rows, &item.patches_bg, recon)?;
        let (d_tokens, bg_grads) = model.bg_head.backward(&bg_cache, &d_bg);
        accumulate_head(&mut grads.bg_head, &bg_grads);
        let (d_fs, d_fc_geb, d_layers) = model.geb_backward(&geb_cache, &d_tokens, &mut grads);
        let zero_logits = Array2::zeros((model.cfg.max_text_len, model.cfg.num_classes()));
        let d_fc_dib = model.dib_backward(
            &dib_cache,
            &zero_logits,
            d_layers.into_iter().map(Some).collect(),
            &mut grads,
        );
        model.encode_backward(&enc, &d_fs, &(d_fc_geb + &d_fc_dib), &mut grads);
        Ok((grads, loss))
    });
    let mut total = model.zeroed_like();
    let mut loss = 0.0;
    for r in results {
        let (g, l) = r?;
        total.accumulate(&g);
        loss += l;
    }
    let n = batch.len() as f64;
    total.scale(F::from_f64(1.0 / n));
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::numeric(format!("finetune-strm loss is not finite ({loss})")));
    }
    opt.update(model, &total, lr, None);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::random_array;
    use crate::model::ModelConfig;
    use crate::rng::rng_from;

    #[test]
    fn alignment_loss_trivials_and_symmetry() {
        let a = Array2::from_elem((2, 3), 1.0f64);
        let z = Array2::zeros((2, 3));
        assert_eq!(alignment_loss(&a, &a, AlignReduction::Mean).unwrap(), 0.0);
        let half = alignment_loss(&a, &z, AlignReduction::Mean).unwrap();
        assert!((half - 0.5).abs() < 1e-15);
        // Sum mode: 6 elements, each 1/2.
        let s = alignment_loss(&a, &z, AlignReduction::Sum).unwrap();
        assert!((s - 3.0).abs() < 1e-15);

        let mut rng = rng_from(3);
        let x = random_array(&mut rng, 2, 3);
        let y = random_array(&mut rng, 2, 3);
        let xy = alignment_loss(&x, &y, AlignReduction::Mean).unwrap();
        let yx = alignment_loss(&y, &x, AlignReduction::Mean).unwrap();
        assert_eq!(xy, yx);
        // Direct elementwise evaluation.
        let mut hand = 0.0;
        for i in 0..2 {
            for j in 0..3 {
                let d: f64 = x[[i, j]] - y[[i, j]];
                hand += 0.5 * d * d;
            }
        }
        assert!((xy - hand / 6.0).abs() < 1e-9);
        assert!(alignment_loss(&x, &random_array(&mut rng, 3, 2), AlignReduction::Mean).is_err());
    }

    #[test]
    fn recognition_loss_uniform_and_confident() {
        let logits: Array2<f64> = Array2::zeros((5, 98));
        let targets = vec![3usize, 4, 5, 2, 0];
        let l = recognition_loss(&logits, &targets).unwrap();
        assert!((l - (98f64).ln()).abs() < 1e-9, "uniform CE {l}");

        let mut confident: Array2<f64> = Array2::zeros((4, 98));
        let targets = vec![7usize, 8, 9, 2];
        for (t, &id) in targets.iter().enumerate() {
            confident[[t, id]] = 30.0;
        }
        let l = recognition_loss(&confident, &targets).unwrap();
        assert!(l < 1e-9, "confident CE {l}");
    }

    #[test]
    fn recognition_loss_matches_hand_computation() {
        // T=2, C=3 case evaluated directly.
        let logits =
            Array2::from_shape_vec((2, 3), vec![0.2f64, -0.4, 1.1, 0.9, 0.0, -0.3]).unwrap();
        let targets = vec![2usize, 0];
        let mut hand = 0.0;
        for (t, &id) in targets.iter().enumerate() {
            let row: Vec<f64> = logits.row(t).iter().cloned().collect();
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            hand -= ((logits[[t, id]] - m).exp() / z).ln();
        }
        hand /= 2.0;
        let l = recognition_loss(&logits, &targets).unwrap();
        assert!((l - hand).abs() < 1e-7);
        assert!(recognition_loss(&logits, &[0, 3]).is_err(), "id >= C accepted");
    }

    #[test]
    fn reconstruction_loss_trivials() {
        let a = Image::zeros(32, 128);
        let mut b = Image::zeros(32, 128);
        assert_eq!(reconstruction_loss(&a, &a, ReconKind::Mse).unwrap(), 0.0);
        b.data_mut().fill(1.0);
        assert!((reconstruction_loss(&a, &b, ReconKind::Mse).unwrap() - 1.0).abs() < 1e-12);
        let mut rng = rng_from(5);
        let x = random_array(&mut rng, 4, 6);
        let y = random_array(&mut rng, 4, 6);
        let (l, _) = reconstruction_loss_grad(&x, &y, ReconKind::Mse).unwrap();
        let hand: f64 =
            x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 24.0;
        assert!((l - hand).abs() < 1e-9);
    }

    #[test]
    fn lr_schedule_drops_where_expected() {
        let cfg = TrainConfig {
            max_steps: 1000,
            ..Default::default()
        };
        assert_eq!(cfg.lr_at(0, None), 1e-4);
        assert_eq!(cfg.lr_at(699, None), 1e-4);
        assert_eq!(cfg.lr_at(700, None), 1e-5);
        // Epoch-based drop when the epoch length is known.
        assert_eq!(cfg.drop_step(Some(50)), 350);
        let cfg = TrainConfig {
            lr_drop_step: Some(10),
            ..cfg
        };
        assert_eq!(cfg.lr_at(10, Some(50)), 1e-5);
    }

    #[test]
    fn loss_report_composition_is_checked() {
        let good = LossReport {
            l_r: 0.5,
            l_c: 2.0,
            l_a: 0.1,
            total: 0.5 + 0.5 * 2.0 + 0.5 * 0.1,
            step: 1,
        };
        good.check(0.5, 0.5).unwrap();
        let bad = LossReport {
            total: 99.0,
            ..good.clone()
        };
        assert!(bad.check(0.5, 0.5).is_err());
        let nan = LossReport {
            l_r: f64::NAN,
            ..good
        };
        let err = nan.check(0.5, 0.5).unwrap_err();
        assert!(err.to_string().contains("L_R"), "{err}");
    }

    #[test]
    fn batch_indices_are_deterministic_and_disjoint_across_steps() {
        let a = batch_indices(1, 5, 100, 8);
        let b = batch_indices(1, 5, 100, 8);
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        let c = batch_indices(1, 6, 100, 8);
        assert_ne!(a, c);
        let mut dedup = a.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 8, "indices within a batch must be unique");
    }

    fn toy_model(lambda_a: f64, lambda_c: f64) -> Model<f64> {
        let cfg = ModelConfig {
            dim: 8,
            heads: 2,
            backbone_depth: 1,
            decouple_depth: 1,
            decoder_depth: 1,
            max_text_len: 4,
            img_h: 4,
            img_w: 16,
            patch: 4,
            ffn_expansion: 2,
            lambda_align: lambda_a,
            lambda_content: lambda_c,
            ..Default::default()
        };
        Model::new(cfg, 31).unwrap()
    }

    fn toy_pair(model: &Model<f64>, seed: u64) -> PreparedPair<f64> {
        let mut rng = rng_from(seed);
        let mut img = |variant: f64| {
            let data = ndarray::Array3::from_shape_fn((4, 16, 3), |_| {
                (rand::Rng::random::<f64>(&mut rng) * 0.8 + 0.1) * variant
            });
            Image::from_array(data).unwrap()
        };
        let pair = PairSample {
            image_a: img(1.0),
            image_b: img(0.9),
            background: img(0.8),
            text_a: "ab".into(),
            text_b: "cd".into(),
            style: crate::synth::sample_style(1, &test_catalog()).unwrap(),
            seed,
        };
        prepare_pair(model, &pair).unwrap()
    }

    fn test_catalog() -> crate::synth::AssetCatalog {
        let mut c = crate::synth::AssetCatalog::builtin();
        c.backgrounds.truncate(2);
        c
    }

    #[test]
    fn degenerate_lambdas_reduce_total_to_l_r() {
        let mut model = toy_model(0.0, 0.0);
        let mut opt = Adam::new(&model, 0.9, 0.999, 1e-8);
        let pair = toy_pair(&model, 1);
        let cfg = TrainConfig::default();
        let report = pretrain_step(&mut model, &mut opt, &[&pair], &cfg, 1, 1e-4).unwrap();
        assert!((report.total - report.l_r).abs() < 1e-12);
    }

    #[test]
    fn every_parameter_receives_gradient() {
        let model = toy_model(0.5, 0.5);
        let pair = toy_pair(&model, 2);
        let cfg = TrainConfig::default();
        let (grads, _) = pair_grads(&model, &pair, &cfg).unwrap();
        for (name, g) in grads.named_params() {
            let max = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(max > 0.0, "parameter {name} received no gradient");
        }
    }

    #[test]
    fn identical_texts_are_rejected_upstream() {
        let model = toy_model(0.5, 0.5);
        let pair = PairSample {
            image_a: Image::zeros(4, 16),
            image_b: Image::zeros(4, 16),
            background: Image::zeros(4, 16),
            text_a: "aa".into(),
            text_b: "aa".into(),
            style: crate::synth::sample_style(1, &test_catalog()).unwrap(),
            seed: 0,
        };
        assert!(prepare_pair(&model, &pair).is_err());
    }

    #[test]
    fn short_training_reduces_loss_on_toy_set() {
        let mut model = toy_model(0.5, 0.5);
        let mut opt = Adam::new(&model, 0.9, 0.999, 1e-8);
        let pairs: Vec<PreparedPair<f64>> = (0..8).map(|i| toy_pair(&model, 100 + i)).collect();
        let cfg = TrainConfig {
            batch_size: 4,
            lr_initial: 3e-4,
            lr_after: 3e-5,
            max_steps: 60,
            seed: 9,
            ..Default::default()
        };
        let mut first = None;
        let mut last = None;
        for step in 1..=cfg.max_steps {
            let idx = batch_indices(cfg.seed, step, pairs.len(), cfg.batch_size);
            let batch: Vec<&PreparedPair<f64>> = idx.iter().map(|&i| &pairs[i]).collect();
            let lr = cfg.lr_at(step, None);
            let report = pretrain_step(&mut model, &mut opt, &batch, &cfg, step, lr).unwrap();
            if first.is_none() {
                first = Some(report.total);
            }
            last = Some(report.total);
        }
        let (first, last) = (first.unwrap(), last.unwrap());
        assert!(
            last < first,
            "loss did not decrease: first {first}, last {last}"
        );
    }
}
