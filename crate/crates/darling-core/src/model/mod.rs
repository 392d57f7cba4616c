//! Model assembly: patch-embedding backbone, decoupling block with the
//! style/content row split, and the multi-task decoder (see [`mtd`]).

pub mod checkpoint;
pub mod mtd;

use ndarray::{concatenate, s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{patchify, Image};
use crate::nn::block::{backward_stack, run_stack, Block, BlockCache};
use crate::nn::{Embedding, Linear};
use crate::rng::rng_from;
use crate::scalar::Scalar;
use crate::vocab;
use mtd::{Geb, ImageHead, StrHead};

/// Architecture hyperparameters. The desk-scale defaults keep the paper's
/// fixed quantities (image 128x32, 3 decoupling layers, T = 26, C = 98,
/// lambdas at 0.5) while the width/depths are configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Channel width D.
    pub dim: usize,
    pub heads: usize,
    pub backbone_depth: usize,
    pub decouple_depth: usize,
    /// Decoder depth N (both DIB and GEB).
    pub decoder_depth: usize,
    /// Maximum text length T (including begin/end symbols).
    pub max_text_len: usize,
    pub img_h: usize,
    pub img_w: usize,
    pub patch: usize,
    pub ffn_expansion: usize,
    /// Scaled softmax cross-attention in the STR head; `false` keeps the
    /// literal unnormalized product for ablation.
    pub str_head_softmax: bool,
    /// Gated injection from DIB layers into GEB; `false` forces the gates
    /// closed and ignores DIB features ("w/o GI").
    pub gated_injection: bool,
    pub lambda_align: f64,
    pub lambda_content: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 128,
            heads: 4,
            backbone_depth: 6,
            decouple_depth: 3,
            decoder_depth: 6,
            max_text_len: 26,
            img_h: 32,
            img_w: 128,
            patch: 4,
            ffn_expansion: 4,
            str_head_softmax: true,
            gated_injection: true,
            lambda_align: 0.5,
            lambda_content: 0.5,
        }
    }
}

impl ModelConfig {
    /// Paper-scale preset (unvalidated at desk scale).
    pub fn paper_scale() -> Self {
        ModelConfig {
            dim: 384,
            ..Default::default()
        }
    }

    /// Token count `L = (img_h / patch) * (img_w / patch)`.
    pub fn token_count(&self) -> usize {
        (self.img_h / self.patch) * (self.img_w / self.patch)
    }

    /// Flattened patch dimensionality (`patch * patch * 3`).
    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * 3
    }

    pub fn num_classes(&self) -> usize {
        vocab::NUM_CLASSES
    }

    pub fn prompt_vocab(&self) -> usize {
        vocab::PROMPT_VOCAB
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 {
            return Err(Error::config("dim and heads must be positive"));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::config(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if self.img_h % self.patch != 0 || self.img_w % self.patch != 0 {
            return Err(Error::config(format!(
                "image {}x{} not divisible by patch {}",
                self.img_h, self.img_w, self.patch
            )));
        }
        if self.token_count() % 2 != 0 {
            return Err(Error::config(format!(
                "token count {} must be even for the style/content split",
                self.token_count()
            )));
        }
        if self.max_text_len < 3 {
            return Err(Error::config("max_text_len must be at least 3"));
        }
        if self.backbone_depth == 0 || self.decouple_depth == 0 || self.decoder_depth == 0 {
            return Err(Error::config("all depths must be at least 1"));
        }
        if !(self.lambda_align.is_finite() && self.lambda_content.is_finite()) {
            return Err(Error::config("loss weights must be finite"));
        }
        Ok(())
    }
}

/// Backbone output `F` and its style/content split: `F_S` is the first half
/// of the decoupling-block output rows, `F_C` the second half.
#[derive(Debug, Clone)]
pub struct FeatureTokens<F: Scalar> {
    pub f: Array2<F>,
    pub f_s: Array2<F>,
    pub f_c: Array2<F>,
}

/// Activations kept by [`Model::encode`] for the backward pass.
pub struct EncodeCache<F: Scalar> {
    pub patches: Array2<F>,
    backbone_caches: Vec<BlockCache<F>>,
    decouple_caches: Vec<BlockCache<F>>,
}

pub struct Model<F: Scalar> {
    pub cfg: ModelConfig,
    pub patch_proj: Linear<F>,
    pub pos: Array2<F>,
    pub backbone: Vec<Block<F>>,
    pub decouple: Vec<Block<F>>,
    pub dib: Vec<Block<F>>,
    pub str_head: StrHead<F>,
    pub geb: Geb<F>,
    pub bg_head: ImageHead<F>,
    pub render_head: ImageHead<F>,
    pub prompt_embed: Embedding<F>,
}

impl<F: Scalar> Clone for Model<F> {
    fn clone(&self) -> Self {
        Model {
            cfg: self.cfg.clone(),
            patch_proj: self.patch_proj.clone(),
            pos: self.pos.clone(),
            backbone: self.backbone.clone(),
            decouple: self.decouple.clone(),
            dib: self.dib.clone(),
            str_head: self.str_head.clone(),
            geb: self.geb.clone(),
            bg_head: self.bg_head.clone(),
            render_head: self.render_head.clone(),
            prompt_embed: self.prompt_embed.clone(),
        }
    }
}

impl<F: Scalar> Model<F> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_from(seed);
        let d = cfg.dim;
        let l = cfg.token_count();
        let t = cfg.max_text_len;
        let blocks = |rng: &mut rand_chacha::ChaCha12Rng, n: usize| -> Vec<Block<F>> {
            (0..n)
                .map(|_| Block::new(rng, d, cfg.heads, cfg.ffn_expansion))
                .collect()
        };
        Ok(Model {
            patch_proj: Linear::new(&mut rng, cfg.patch_dim(), d, true),
            pos: crate::nn::init::normal(&mut rng, l, d, 0.02),
            backbone: blocks(&mut rng, cfg.backbone_depth),
            decouple: blocks(&mut rng, cfg.decouple_depth),
            dib: blocks(&mut rng, cfg.decoder_depth),
            str_head: StrHead::new(&mut rng, t, d, cfg.num_classes(), cfg.str_head_softmax),
            geb: Geb::new(&mut rng, d, cfg.heads, cfg.ffn_expansion, cfg.decoder_depth),
            bg_head: ImageHead::new(&mut rng, l, d, cfg.patch_dim(), mtd::HeadMode::Residual),
            render_head: ImageHead::new(&mut rng, l, d, cfg.patch_dim(), mtd::HeadMode::Sigmoid),
            prompt_embed: Embedding::new(&mut rng, cfg.prompt_vocab(), d),
            cfg,
        })
    }

    /// A same-shaped container with every parameter zeroed (used for
    /// gradients and optimizer moments).
    pub fn zeroed_like(&self) -> Self {
        let mut copy = self.clone();
        for (_, p) in copy.named_params_mut() {
            p.fill(F::zero());
        }
        copy
    }

    /// Elementwise `self += other` over all parameters.
    pub fn accumulate(&mut self, other: &Self) {
        let theirs = other.named_params();
        for ((n, p), (n2, q)) in self.named_params_mut().into_iter().zip(theirs) {
            debug_assert_eq!(n, n2);
            *p = &*p + q;
        }
    }

    /// Multiply every parameter by `s`.
    pub fn scale(&mut self, s: F) {
        for (_, p) in self.named_params_mut() {
            p.mapv_inplace(|v| v * s);
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Array2<F>)> {
        let mut out = Vec::new();
        self.patch_proj.params("backbone.patch", &mut out);
        out.push(("backbone.pos".to_string(), &self.pos));
        for (i, b) in self.backbone.iter().enumerate() {
            b.params(&format!("backbone.{i}"), &mut out);
        }
        for (i, b) in self.decouple.iter().enumerate() {
            b.params(&format!("decouple.{i}"), &mut out);
        }
        for (i, b) in self.dib.iter().enumerate() {
            b.params(&format!("mtd.dib.{i}"), &mut out);
        }
        self.str_head.params("heads.str", &mut out);
        self.geb.params("mtd.geb", &mut out);
        self.bg_head.params("heads.bg", &mut out);
        self.render_head.params("heads.render", &mut out);
        self.prompt_embed.params("prompt.embed", &mut out);
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Array2<F>)> {
        let mut out = Vec::new();
        self.patch_proj.params_mut("backbone.patch", &mut out);
        out.push(("backbone.pos".to_string(), &mut self.pos));
        for (i, b) in self.backbone.iter_mut().enumerate() {
            b.params_mut(&format!("backbone.{i}"), &mut out);
        }
        for (i, b) in self.decouple.iter_mut().enumerate() {
            b.params_mut(&format!("decouple.{i}"), &mut out);
        }
        for (i, b) in self.dib.iter_mut().enumerate() {
            b.params_mut(&format!("mtd.dib.{i}"), &mut out);
        }
        self.str_head.params_mut("heads.str", &mut out);
        self.geb.params_mut("mtd.geb", &mut out);
        self.bg_head.params_mut("heads.bg", &mut out);
        self.render_head.params_mut("heads.render", &mut out);
        self.prompt_embed.params_mut("prompt.embed", &mut out);
        out
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    /// Validate and patchify an image for this config.
    pub fn image_to_patches(&self, image: &Image) -> Result<Array2<F>> {
        image.validate_shape(self.cfg.img_h, self.cfg.img_w)?;
        Ok(patchify(image, self.cfg.patch))
    }

    /// Patch embedding: linear projection of flattened patches plus the
    /// learned positional term.
    pub fn patch_embed(&self, patches: &Array2<F>) -> Result<Array2<F>> {
        let expect = (self.cfg.token_count(), self.cfg.patch_dim());
        if patches.dim() != expect {
            return Err(Error::validation(format!(
                "patch matrix has shape {:?}, expected {:?}",
                patches.dim(),
                expect
            )));
        }
        Ok(self.patch_proj.forward(patches) + &self.pos)
    }

    /// Full encoder: patch embed, backbone stack, decoupling stack, and the
    /// row split into style (first half) and content (second half) tokens.
    pub fn encode(&self, patches: &Array2<F>) -> Result<(FeatureTokens<F>, EncodeCache<F>)> {
        let embedded = self.patch_embed(patches)?;
        if embedded.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite values entering the backbone"));
        }
        let (backbone_outs, backbone_caches) = run_stack(&self.backbone, &embedded);
        let f = backbone_outs.last().expect("depth >= 1").clone();
        let (dec_outs, decouple_caches) = run_stack(&self.decouple, &f);
        let f_d = dec_outs.last().expect("depth >= 1");
        let half = self.cfg.token_count() / 2;
        let f_s = f_d.slice(s![..half, ..]).to_owned();
        let f_c = f_d.slice(s![half.., ..]).to_owned();
        Ok((
            FeatureTokens { f, f_s, f_c },
            EncodeCache {
                patches: patches.clone(),
                backbone_caches,
                decouple_caches,
            },
        ))
    }

    /// Backward through the encoder given gradients on the style and content
    /// halves. Accumulates parameter gradients into `grads`.
    pub fn encode_backward(
        &self,
        cache: &EncodeCache<F>,
        d_f_s: &Array2<F>,
        d_f_c: &Array2<F>,
        grads: &mut Model<F>,
    ) {
        let d_f_d = concatenate(Axis(0), &[d_f_s.view(), d_f_c.view()]).expect("stack halves");
        let (d_f, dec_grads) =
            backward_stack(&self.decouple, &cache.decouple_caches, d_f_d, Vec::new());
        let (d_embedded, bb_grads) =
            backward_stack(&self.backbone, &cache.backbone_caches, d_f, Vec::new());
        for (g, acc) in dec_grads.iter().zip(grads.decouple.iter_mut()) {
            accumulate_block(acc, g);
        }
        for (g, acc) in bb_grads.iter().zip(grads.backbone.iter_mut()) {
            accumulate_block(acc, g);
        }
        grads.pos = &grads.pos + &d_embedded;
        let (_, dproj) = self.patch_proj.backward(&cache.patches, &d_embedded);
        grads.patch_proj.w = &grads.patch_proj.w + &dproj.w;
        if let (Some(b), Some(db)) = (grads.patch_proj.b.as_mut(), dproj.b.as_ref()) {
            *b = &*b + db;
        }
    }
}

pub(crate) fn accumulate_block<F: Scalar>(acc: &mut Block<F>, g: &Block<F>) {
    let mut a = Vec::new();
    acc.params_mut("b", &mut a);
    let mut b = Vec::new();
    g.params("b", &mut b);
    for ((_, p), (_, q)) in a.into_iter().zip(b) {
        *p = &*p + q;
    }
}
