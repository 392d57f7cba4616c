//! Multi-head self-attention and single-head cross-attention.

use ndarray::{s, Array2};
use rand::Rng;

use super::linear::Linear;
use super::ops::{softmax_rows, softmax_rows_backward};
use crate::scalar::Scalar;

/// Standard multi-head self-attention with input/output projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention<F: Scalar> {
    pub wq: Linear<F>,
    pub wk: Linear<F>,
    pub wv: Linear<F>,
    pub wo: Linear<F>,
    pub heads: usize,
}

#[derive(Debug)]
pub struct AttentionCache<F: Scalar> {
    x: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    /// Softmax probabilities per head, each `n x n`.
    probs: Vec<Array2<F>>,
    /// Concatenated head outputs before the output projection.
    merged: Array2<F>,
}

impl<F: Scalar> MultiHeadAttention<F> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, dim: usize, heads: usize) -> Self {
        assert!(dim % heads == 0, "dim must be divisible by head count");
        MultiHeadAttention {
            wq: Linear::new(rng, dim, dim, true),
            wk: Linear::new(rng, dim, dim, true),
            wv: Linear::new(rng, dim, dim, true),
            wo: Linear::new(rng, dim, dim, true),
            heads,
        }
    }

    pub fn forward(&self, x: &Array2<F>) -> (Array2<F>, AttentionCache<F>) {
        let (n, d) = x.dim();
        let dh = d / self.heads;
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);

        let mut merged = Array2::zeros((n, d));
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let scores = qh.dot(&kh.t()).mapv(|s| s * scale);
            let p = softmax_rows(&scores);
            let oh = p.dot(&vh);
            merged.slice_mut(cols).assign(&oh);
            probs.push(p);
        }
        let y = self.wo.forward(&merged);
        (
            y,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                probs,
                merged,
            },
        )
    }

    pub fn backward(&self, cache: &AttentionCache<F>, dy: &Array2<F>) -> (Array2<F>, MultiHeadAttention<F>) {
        let (n, d) = cache.x.dim();
        let dh = d / self.heads;
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());

        let (dmerged, dwo) = self.wo.backward(&cache.merged, dy);

        let mut dq = Array2::zeros((n, d));
        let mut dk = Array2::zeros((n, d));
        let mut dv = Array2::zeros((n, d));
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let p = &cache.probs[h];
            let doh = dmerged.slice(cols);
            let vh = cache.v.slice(cols);
            let qh = cache.q.slice(cols);
            let kh = cache.k.slice(cols);

            let dp = doh.dot(&vh.t());
            let dvh = p.t().dot(&doh);
            let dscores = softmax_rows_backward(p, &dp).mapv(|g| g * scale);
            let dqh = dscores.dot(&kh);
            let dkh = dscores.t().dot(&qh);

            dq.slice_mut(cols).assign(&dqh);
            dk.slice_mut(cols).assign(&dkh);
            dv.slice_mut(cols).assign(&dvh);
        }

        let (dx_q, dwq) = self.wq.backward(&cache.x, &dq);
        let (dx_k, dwk) = self.wk.backward(&cache.x, &dk);
        let (dx_v, dwv) = self.wv.backward(&cache.x, &dv);
        let dx = dx_q + dx_k + dx_v;
        (
            dx,
            MultiHeadAttention {
                wq: dwq,
                wk: dwk,
                wv: dwv,
                wo: dwo,
                heads: self.heads,
            },
        )
    }

    pub fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<F>)>) {
        self.wq.params(&format!("{prefix}.wq"), out);
        self.wk.params(&format!("{prefix}.wk"), out);
        self.wv.params(&format!("{prefix}.wv"), out);
        self.wo.params(&format!("{prefix}.wo"), out);
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array2<F>)>) {
        self.wq.params_mut(&format!("{prefix}.wq"), out);
        self.wk.params_mut(&format!("{prefix}.wk"), out);
        self.wv.params_mut(&format!("{prefix}.wv"), out);
        self.wo.params_mut(&format!("{prefix}.wo"), out);
    }
}

/// Single-head cross-attention from a learnable query bank onto a context:
/// `softmax(Q (ctx Wk)^T / sqrt(D)) (ctx Wv)`. With `softmax` disabled the
/// raw unnormalized product `Q (ctx Wk)^T (ctx Wv)` is used instead.
#[derive(Debug, Clone)]
pub struct CrossAttention<F: Scalar> {
    /// Learnable queries, `n_q x D`.
    pub query: Array2<F>,
    pub wk: Linear<F>,
    pub wv: Linear<F>,
    pub softmax: bool,
}

#[derive(Debug)]
pub struct CrossAttentionCache<F: Scalar> {
    ctx: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    /// Attention weights (softmax probabilities, or raw scores in literal mode).
    attn: Array2<F>,
}

impl<F: Scalar> CrossAttention<F> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, n_queries: usize, dim: usize, softmax: bool) -> Self {
        CrossAttention {
            query: super::init::normal(rng, n_queries, dim, 0.02),
            wk: Linear::new(rng, dim, dim, false),
            wv: Linear::new(rng, dim, dim, false),
            softmax,
        }
    }

    pub fn forward(&self, ctx: &Array2<F>) -> (Array2<F>, CrossAttentionCache<F>) {
        let d = ctx.dim().1;
        let k = self.wk.forward(ctx);
        let v = self.wv.forward(ctx);
        let attn = if self.softmax {
            let scale = F::from_f64(1.0 / (d as f64).sqrt());
            softmax_rows(&self.query.dot(&k.t()).mapv(|s| s * scale))
        } else {
            self.query.dot(&k.t())
        };
        let out = attn.dot(&v);
        (
            out,
            CrossAttentionCache {
                ctx: ctx.clone(),
                k,
                v,
                attn,
            },
        )
    }

    /// Returns `(dctx, grads)`.
    pub fn backward(
        &self,
        cache: &CrossAttentionCache<F>,
        dout: &Array2<F>,
    ) -> (Array2<F>, CrossAttention<F>) {
        let d = cache.ctx.dim().1;
        let dattn = dout.dot(&cache.v.t());
        let dv = cache.attn.t().dot(dout);
        let dscores = if self.softmax {
            let scale = F::from_f64(1.0 / (d as f64).sqrt());
            softmax_rows_backward(&cache.attn, &dattn).mapv(|g| g * scale)
        } else {
            dattn
        };
        let dquery = dscores.dot(&cache.k);
        let dk = dscores.t().dot(&self.query);
        let (dctx_k, dwk) = self.wk.backward(&cache.ctx, &dk);
        let (dctx_v, dwv) = self.wv.backward(&cache.ctx, &dv);
        (
            dctx_k + dctx_v,
            CrossAttention {
                query: dquery,
                wk: dwk,
                wv: dwv,
                softmax: self.softmax,
            },
        )
    }

    pub fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<F>)>) {
        out.push((format!("{prefix}.query"), &self.query));
        self.wk.params(&format!("{prefix}.wk"), out);
        self.wv.params(&format!("{prefix}.wv"), out);
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array2<F>)>) {
        out.push((format!("{prefix}.query"), &mut self.query));
        self.wk.params_mut(&format!("{prefix}.wk"), out);
        self.wv.params_mut(&format!("{prefix}.wv"), out);
    }
}
