//! Pre-norm transformer block: `x + attn(ln1(x))` then `h + ffn(ln2(h))`
//! with a GELU feed-forward at 4x expansion.

use ndarray::Array2;
use rand::Rng;

use super::attention::{AttentionCache, MultiHeadAttention};
use super::linear::{LayerNorm, LayerNormCache, Linear};
use super::ops::{gelu, gelu_prime};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Block<F: Scalar> {
    pub ln1: LayerNorm<F>,
    pub attn: MultiHeadAttention<F>,
    pub ln2: LayerNorm<F>,
    pub ffn1: Linear<F>,
    pub ffn2: Linear<F>,
}

#[derive(Debug)]
pub struct BlockCache<F: Scalar> {
    ln1: LayerNormCache<F>,
    attn: AttentionCache<F>,
    ln2: LayerNormCache<F>,
    ln2_out: Array2<F>,
    ffn_pre: Array2<F>,
    ffn_mid: Array2<F>,
}

impl<F: Scalar> Block<F> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, dim: usize, heads: usize, expansion: usize) -> Self {
        Block {
            ln1: LayerNorm::new(dim),
            attn: MultiHeadAttention::new(rng, dim, heads),
            ln2: LayerNorm::new(dim),
            ffn1: Linear::new(rng, dim, dim * expansion, true),
            ffn2: Linear::new(rng, dim * expansion, dim, true),
        }
    }

    pub fn forward(&self, x: &Array2<F>) -> (Array2<F>, BlockCache<F>) {
        let (a_in, ln1_cache) = self.ln1.forward(x);
        let (a_out, attn_cache) = self.attn.forward(&a_in);
        let h = x + &a_out;

        let (f_in, ln2_cache) = self.ln2.forward(&h);
        let ffn_pre = self.ffn1.forward(&f_in);
        let ffn_mid = ffn_pre.mapv(gelu);
        let f_out = self.ffn2.forward(&ffn_mid);
        let y = h + &f_out;
        (
            y,
            BlockCache {
                ln1: ln1_cache,
                attn: attn_cache,
                ln2: ln2_cache,
                ln2_out: f_in,
                ffn_pre,
                ffn_mid,
            },
        )
    }

    pub fn backward(&self, cache: &BlockCache<F>, dy: &Array2<F>) -> (Array2<F>, Block<F>) {
        // Feed-forward branch.
        let (dmid, dffn2) = self.ffn2.backward(&cache.ffn_mid, dy);
        let dpre = &dmid * &cache.ffn_pre.mapv(gelu_prime);
        let (df_in, dffn1) = self.ffn1.backward(&cache.ln2_out, &dpre);
        let (dh_ffn, dln2) = self.ln2.backward(&cache.ln2, &df_in);
        let dh = dy + &dh_ffn;

        // Attention branch.
        let (da_in, dattn) = self.attn.backward(&cache.attn, &dh);
        let (dx_attn, dln1) = self.ln1.backward(&cache.ln1, &da_in);
        let dx = &dh + &dx_attn;
        (
            dx,
            Block {
                ln1: dln1,
                attn: dattn,
                ln2: dln2,
                ffn1: dffn1,
                ffn2: dffn2,
            },
        )
    }

    pub fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<F>)>) {
        self.ln1.params(&format!("{prefix}.ln1"), out);
        self.attn.params(&format!("{prefix}.attn"), out);
        self.ln2.params(&format!("{prefix}.ln2"), out);
        self.ffn1.params(&format!("{prefix}.ffn1"), out);
        self.ffn2.params(&format!("{prefix}.ffn2"), out);
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array2<F>)>) {
        self.ln1.params_mut(&format!("{prefix}.ln1"), out);
        self.attn.params_mut(&format!("{prefix}.attn"), out);
        self.ln2.params_mut(&format!("{prefix}.ln2"), out);
        self.ffn1.params_mut(&format!("{prefix}.ffn1"), out);
        self.ffn2.params_mut(&format!("{prefix}.ffn2"), out);
    }
}

/// Run a stack of blocks, collecting per-layer outputs and caches.
pub fn run_stack<F: Scalar>(
    blocks: &[Block<F>],
    x: &Array2<F>,
) -> (Vec<Array2<F>>, Vec<BlockCache<F>>) {
    let mut outs = Vec::with_capacity(blocks.len());
    let mut caches = Vec::with_capacity(blocks.len());
    let mut cur = x.clone();
    for b in blocks {
        let (y, c) = b.forward(&cur);
        outs.push(y.clone());
        caches.push(c);
        cur = y;
    }
    (outs, caches)
}

/// Backward through a stack. `d_outs[i]` is the gradient reaching the output
/// of block `i` from outside the chain (e.g. a side consumer of that layer's
/// features); the chain gradient is threaded automatically. `d_last` is the
/// gradient at the final output. Returns `(dx, per-block grads)`.
pub fn backward_stack<F: Scalar>(
    blocks: &[Block<F>],
    caches: &[BlockCache<F>],
    d_last: Array2<F>,
    mut d_outs: Vec<Option<Array2<F>>>,
) -> (Array2<F>, Vec<Block<F>>) {
    assert_eq!(blocks.len(), caches.len());
    if d_outs.is_empty() {
        d_outs = (0..blocks.len()).map(|_| None).collect();
    }
    assert_eq!(d_outs.len(), blocks.len());
    let mut grads: Vec<Option<Block<F>>> = (0..blocks.len()).map(|_| None).collect();
    let mut d = d_last;
    for i in (0..blocks.len()).rev() {
        if let Some(side) = d_outs[i].take() {
            d = d + side;
        }
        let (dx, g) = blocks[i].backward(&caches[i], &d);
        grads[i] = Some(g);
        d = dx;
    }
    (d, grads.into_iter().map(Option::unwrap).collect())
}
