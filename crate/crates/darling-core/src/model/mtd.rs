//! Multi-task decoder: the discriminative branch (DIB) with its STR head,
//! the generative branch (GEB) with gated injection of DIB features, and the
//! two patch-query image heads.

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;

use super::{accumulate_block, Model};
use crate::error::{Error, Result};
use crate::nn::attention::{CrossAttention, CrossAttentionCache};
use crate::nn::block::{backward_stack, run_stack, Block, BlockCache};
use crate::nn::ops::sigmoid;
use crate::nn::Linear;
use crate::scalar::Scalar;
use crate::vocab;

/// Target-text token sequence for the generative branch.
#[derive(Debug, Clone, PartialEq)]
pub struct TextPrompt {
    pub token_ids: Vec<usize>,
}

impl TextPrompt {
    /// `[B] c_1 .. c_k [E] ...` over `t_len` positions.
    pub fn for_text(text: &str, t_len: usize) -> Result<Self> {
        Ok(TextPrompt {
            token_ids: vocab::encode_prompt(text, t_len)?,
        })
    }

    /// The removal prompt `[B][E][E]...`.
    pub fn removal(t_len: usize) -> Self {
        TextPrompt {
            token_ids: vocab::removal_prompt(t_len),
        }
    }

    pub fn text(&self) -> Result<String> {
        vocab::decode_prompt(&self.token_ids)
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Sigmoid-gated convex fusion of the GEB content slice with a DIB layer
/// feature: `G = sigmoid((F_hat + F_c) W_g)` broadcast over channels,
/// `F_g = F_hat (1 - G) + F_c G`. Returns `(F_g, G)`.
pub fn gated_inject<F: Scalar>(
    f_hat: &Array2<F>,
    f_c: &Array2<F>,
    w_g: &Array2<F>,
) -> Result<(Array2<F>, Array2<F>)> {
    if f_hat.dim() != f_c.dim() {
        return Err(Error::validation(format!(
            "gated_inject shape mismatch: {:?} vs {:?}",
            f_hat.dim(),
            f_c.dim()
        )));
    }
    if w_g.dim() != (f_hat.dim().1, 1) {
        return Err(Error::validation(format!(
            "gate weight must be {}x1, got {:?}",
            f_hat.dim().1,
            w_g.dim()
        )));
    }
    let z = (f_hat + f_c).dot(w_g);
    let g = z.mapv(sigmoid);
    let one = F::one();
    let f_g = f_hat * &g.mapv(|v| one - v) + f_c * &g;
    Ok((f_g, g))
}

/// Backward of [`gated_inject`]: returns `(dF_hat, dF_c, dW_g)`.
pub fn gated_inject_backward<F: Scalar>(
    f_hat: &Array2<F>,
    f_c: &Array2<F>,
    w_g: &Array2<F>,
    g: &Array2<F>,
    d_fg: &Array2<F>,
) -> (Array2<F>, Array2<F>, Array2<F>) {
    let one = F::one();
    let one_minus_g = g.mapv(|v| one - v);
    // bracket_i = sum_k dFG[i,k] (F_c[i,k] - F_hat[i,k])
    let bracket = (d_fg * &(f_c - f_hat))
        .sum_axis(Axis(1))
        .insert_axis(Axis(1));
    let dz = &bracket * &(g * &one_minus_g);
    let spread = dz.dot(&w_g.t());
    let d_f_hat = d_fg * &one_minus_g + &spread;
    let d_f_c = d_fg * g + &spread;
    let d_w_g = (f_hat + f_c).t().dot(&dz);
    (d_f_hat, d_f_c, d_w_g)
}

/// STR head: scaled softmax cross-attention from a learnable query bank onto
/// the final DIB features, then a bias-free projection to class scores.
#[derive(Debug, Clone)]
pub struct StrHead<F: Scalar> {
    pub cross: CrossAttention<F>,
    pub w_r: Linear<F>,
}

pub struct StrHeadCache<F: Scalar> {
    cross: CrossAttentionCache<F>,
    cross_out: Array2<F>,
}

impl<F: Scalar> StrHead<F> {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        t_len: usize,
        dim: usize,
        classes: usize,
        softmax: bool,
    ) -> Self {
        StrHead {
            cross: CrossAttention::new(rng, t_len, dim, softmax),
            w_r: Linear::new(rng, dim, classes, false),
        }
    }

    pub fn forward(&self, f_c_last: &Array2<F>) -> (Array2<F>, StrHeadCache<F>) {
        let (cross_out, cross) = self.cross.forward(f_c_last);
        let logits = self.w_r.forward(&cross_out);
        (logits, StrHeadCache { cross, cross_out })
    }

    pub fn backward(&self, cache: &StrHeadCache<F>, dlogits: &Array2<F>) -> (Array2<F>, StrHead<F>) {
        let (d_cross_out, d_w_r) = self.w_r.backward(&cache.cross_out, dlogits);
        let (d_ctx, d_cross) = self.cross.backward(&cache.cross, &d_cross_out);
        (
            d_ctx,
            StrHead {
                cross: d_cross,
                w_r: d_w_r,
            },
        )
    }

    pub fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<F>)>) {
        self.cross.params(prefix, out);
        self.w_r.params(&format!("{prefix}.w_r"), out);
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array2<F>)>) {
        self.cross.params_mut(prefix, out);
        self.w_r.params_mut(&format!("{prefix}.w_r"), out);
    }
}

/// Generative branch: a block stack over `[C_T | F_S | F_C]` with per-layer
/// gated injection on the content slice. One gate projection is shared
/// across layers.
#[derive(Debug, Clone)]
pub struct Geb<F: Scalar> {
    pub blocks: Vec<Block<F>>,
    pub gate_w: Array2<F>,
}

pub struct GebLayerCache<F: Scalar> {
    /// Content slice entering the gate (`F_hat` of this layer).
    content_in: Array2<F>,
    /// Matching DIB feature (empty when gating is disabled).
    dib_feat: Option<Array2<F>>,
    gate: Option<Array2<F>>,
    block: BlockCache<F>,
}

pub struct GebCache<F: Scalar> {
    pub prompt_ids: Vec<usize>,
    layers: Vec<GebLayerCache<F>>,
    t_len: usize,
    half: usize,
}

impl<F: Scalar> Geb<F> {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        dim: usize,
        heads: usize,
        expansion: usize,
        depth: usize,
    ) -> Self {
        Geb {
            blocks: (0..depth).map(|_| Block::new(rng, dim, heads, expansion)).collect(),
            gate_w: crate::nn::init::normal(rng, dim, 1, 0.02),
        }
    }

    pub fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<F>)>) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.params(&format!("{prefix}.{i}"), out);
        }
        out.push((format!("{prefix}.gate.w_g"), &self.gate_w));
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array2<F>)>) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.params_mut(&format!("{prefix}.{i}"), out);
        }
        out.push((format!("{prefix}.gate.w_g"), &mut self.gate_w));
    }
}

/// Image head: a learnable grid of patch queries cross-attends onto the
/// decoder tokens and each query is projected to one flattened patch.
/// `Residual` adds the raw patches to the input image and clips to `[0, 1]`
/// (background head); `Sigmoid` squashes them directly (text rendering head).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMode {
    Residual,
    Sigmoid,
}

#[derive(Debug, Clone)]
pub struct ImageHead<F: Scalar> {
    pub cross: CrossAttention<F>,
    pub out: Linear<F>,
    pub mode: HeadMode,
}

pub struct ImageHeadCache<F: Scalar> {
    cross: CrossAttentionCache<F>,
    cross_out: Array2<F>,
    /// Residual mode: pre-clip sum; Sigmoid mode: the activated output.
    act: Array2<F>,
}

impl<F: Scalar> ImageHead<F> {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        n_patches: usize,
        dim: usize,
        patch_dim: usize,
        mode: HeadMode,
    ) -> Self {
        ImageHead {
            cross: CrossAttention::new(rng, n_patches, dim, true),
            out: Linear::new(rng, dim, patch_dim, true),
            mode,
        }
    }

    /// `base` is the patchified input image, required in residual mode.
    pub fn forward(
        &self,
        tokens: &Array2<F>,
        base: Option<&Array2<F>>,
    ) -> (Array2<F>, ImageHeadCache<F>) {
        let (cross_out, cross) = self.cross.forward(tokens);
        let raw = self.out.forward(&cross_out);
        let (rows, act) = match self.mode {
            HeadMode::Residual => {
                let base = base.expect("residual head needs the input image");
                let sum = base + &raw;
                let one = F::one();
                let clipped = sum.mapv(|v| v.max(F::zero()).min(one));
                (clipped, sum)
            }
            HeadMode::Sigmoid => {
                let y = raw.mapv(sigmoid);
                (y.clone(), y)
            }
        };
        (
            rows,
            ImageHeadCache {
                cross,
                cross_out,
                act,
            },
        )
    }

    /// Returns `(d_tokens, grads)`.
    pub fn backward(&self, cache: &ImageHeadCache<F>, d_rows: &Array2<F>) -> (Array2<F>, ImageHead<F>) {
        let one = F::one();
        let d_raw = match self.mode {
            HeadMode::Residual => {
                // Zero gradient where the clip saturates.
                let mut d = d_rows.clone();
                ndarray::Zip::from(&mut d).and(&cache.act).for_each(|dv, &s| {
                    if s <= F::zero() || s >= one {
                        *dv = F::zero();
                    }
                });
                d
            }
            HeadMode::Sigmoid => d_rows * &cache.act.mapv(|y| y * (one - y)),
        };
        let (d_cross_out, d_out) = self.out.backward(&cache.cross_out, &d_raw);
        let (d_tokens, d_cross) = self.cross.backward(&cache.cross, &d_cross_out);
        (
            d_tokens,
            ImageHead {
                cross: d_cross,
                out: d_out,
                mode: self.mode,
            },
        )
    }

    pub fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<F>)>) {
        self.cross.params(&format!("{prefix}.patch_queries"), out);
        self.out.params(&format!("{prefix}.out"), out);
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array2<F>)>) {
        self.cross.params_mut(&format!("{prefix}.patch_queries"), out);
        self.out.params_mut(&format!("{prefix}.out"), out);
    }
}

impl<F: Scalar> Model<F> {
    /// Discriminative branch: the DIB block stack over the content tokens and
    /// the STR head. Returns per-layer features, `T x C` logits, and caches.
    pub fn dib_forward(
        &self,
        f_c: &Array2<F>,
    ) -> (Vec<Array2<F>>, Array2<F>, (Vec<BlockCache<F>>, StrHeadCache<F>)) {
        let (layer_outs, block_caches) = run_stack(&self.dib, f_c);
        let (logits, head_cache) = self.str_head.forward(layer_outs.last().expect("depth >= 1"));
        (layer_outs, logits, (block_caches, head_cache))
    }

    /// Backward through DIB. `d_layers[i]` carries the gradient a side
    /// consumer (GEB gating) contributed to layer `i`'s output. Returns the
    /// gradient on `F_C` and accumulates parameter gradients into `grads`.
    pub fn dib_backward(
        &self,
        cache: &(Vec<BlockCache<F>>, StrHeadCache<F>),
        dlogits: &Array2<F>,
        d_layers: Vec<Option<Array2<F>>>,
        grads: &mut Model<F>,
    ) -> Array2<F> {
        let (block_caches, head_cache) = cache;
        let (d_last, d_head) = self.str_head.backward(head_cache, dlogits);
        let side = if d_layers.is_empty() {
            Vec::new()
        } else {
            d_layers
        };
        let (d_f_c, block_grads) = backward_stack(&self.dib, block_caches, d_last, side);
        for (g, acc) in block_grads.iter().zip(grads.dib.iter_mut()) {
            accumulate_block(acc, g);
        }
        let mut acc = Vec::new();
        grads.str_head.params_mut("h", &mut acc);
        let mut newg = Vec::new();
        d_head.params("h", &mut newg);
        for ((_, p), (_, q)) in acc.into_iter().zip(newg) {
            *p = &*p + q;
        }
        d_f_c
    }

    /// Generative branch over `concat(C_T, F_S, F_C)`. At each layer the
    /// content slice is fused with the matching DIB layer feature through the
    /// gate before the block's self-attention.
    pub fn geb_forward(
        &self,
        prompt: &TextPrompt,
        f_s: &Array2<F>,
        f_c: &Array2<F>,
        dib_layers: &[Array2<F>],
    ) -> Result<(Array2<F>, GebCache<F>)> {
        let t_len = self.cfg.max_text_len;
        if prompt.len() != t_len {
            return Err(Error::validation(format!(
                "prompt length {} does not match max_text_len {t_len}",
                prompt.len()
            )));
        }
        if dib_layers.len() < self.geb.blocks.len() {
            return Err(Error::validation(format!(
                "need {} DIB layer features, got {}",
                self.geb.blocks.len(),
                dib_layers.len()
            )));
        }
        let half = self.cfg.token_count() / 2;
        let prompt_emb = self.prompt_embed.forward(&prompt.token_ids);
        let mut cur = concatenate(Axis(0), &[prompt_emb.view(), f_s.view(), f_c.view()])
            .expect("concat prompt/style/content");

        let mut layers = Vec::with_capacity(self.geb.blocks.len());
        for (i, block) in self.geb.blocks.iter().enumerate() {
            let content_in = cur.slice(s![t_len + half.., ..]).to_owned();
            let (dib_feat, gate) = if self.cfg.gated_injection {
                let (fused, g) = gated_inject(&content_in, &dib_layers[i], &self.geb.gate_w)?;
                cur.slice_mut(s![t_len + half.., ..]).assign(&fused);
                (Some(dib_layers[i].clone()), Some(g))
            } else {
                (None, None)
            };
            let (next, block_cache) = block.forward(&cur);
            layers.push(GebLayerCache {
                content_in,
                dib_feat,
                gate,
                block: block_cache,
            });
            cur = next;
        }
        Ok((
            cur,
            GebCache {
                prompt_ids: prompt.token_ids.clone(),
                layers,
                t_len,
                half,
            },
        ))
    }

    /// Backward through GEB. Returns `(d_f_s, d_f_c, d_dib_layers)` and
    /// accumulates parameter gradients (blocks, gate, prompt embedding) into
    /// `grads`.
    pub fn geb_backward(
        &self,
        cache: &GebCache<F>,
        d_tokens: &Array2<F>,
        grads: &mut Model<F>,
    ) -> (Array2<F>, Array2<F>, Vec<Array2<F>>) {
        let t_len = cache.t_len;
        let half = cache.half;
        let n = self.geb.blocks.len();
        let mut d_dib: Vec<Array2<F>> = Vec::with_capacity(n);
        for _ in 0..n {
            d_dib.push(Array2::zeros((half, self.cfg.dim)));
        }
        let mut d = d_tokens.clone();
        for i in (0..n).rev() {
            let layer = &cache.layers[i];
            let (d_in, block_grads) = self.geb.blocks[i].backward(&layer.block, &d);
            accumulate_block(&mut grads.geb.blocks[i], &block_grads);
            if let (Some(dib_feat), Some(g)) = (&layer.dib_feat, &layer.gate) {
                let d_fused = d_in.slice(s![t_len + half.., ..]).to_owned();
                let (d_content, d_dib_i, d_w_g) = gated_inject_backward(
                    &layer.content_in,
                    dib_feat,
                    &self.geb.gate_w,
                    g,
                    &d_fused,
                );
                grads.geb.gate_w = &grads.geb.gate_w + &d_w_g;
                d_dib[i] = d_dib_i;
                let mut next = d_in;
                next.slice_mut(s![t_len + half.., ..]).assign(&d_content);
                d = next;
            } else {
                d = d_in;
            }
        }
        let d_prompt = d.slice(s![..t_len, ..]).to_owned();
        let d_f_s = d.slice(s![t_len..t_len + half, ..]).to_owned();
        let d_f_c = d.slice(s![t_len + half.., ..]).to_owned();
        let d_embed = self.prompt_embed.backward(&cache.prompt_ids, &d_prompt);
        grads.prompt_embed.table = &grads.prompt_embed.table + &d_embed.table;
        (d_f_s, d_f_c, d_dib)
    }
}
