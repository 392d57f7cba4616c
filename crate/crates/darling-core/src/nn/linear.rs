//! Dense layer, layer normalization, and embedding lookup with exact
//! backward passes.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::init;
use crate::scalar::Scalar;

/// `y = x W (+ b)`, weights `in x out`, bias `1 x out`.
#[derive(Debug, Clone)]
pub struct Linear<F: Scalar> {
    pub w: Array2<F>,
    pub b: Option<Array2<F>>,
}

impl<F: Scalar> Linear<F> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, d_in: usize, d_out: usize, bias: bool) -> Self {
        Linear {
            w: init::xavier_uniform(rng, d_in, d_out),
            b: bias.then(|| init::zeros(1, d_out)),
        }
    }

    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let mut y = x.dot(&self.w);
        if let Some(b) = &self.b {
            y = y + b;
        }
        y
    }

    /// Returns `(dx, grads)`.
    pub fn backward(&self, x: &Array2<F>, dy: &Array2<F>) -> (Array2<F>, Linear<F>) {
        let dx = dy.dot(&self.w.t());
        let dw = x.t().dot(dy);
        let db = self
            .b
            .as_ref()
            .map(|_| dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
        (dx, Linear { w: dw, b: db })
    }

    pub fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<F>)>) {
        out.push((format!("{prefix}.w"), &self.w));
        if let Some(b) = &self.b {
            out.push((format!("{prefix}.b"), b));
        }
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array2<F>)>) {
        out.push((format!("{prefix}.w"), &mut self.w));
        if let Some(b) = &mut self.b {
            out.push((format!("{prefix}.b"), b));
        }
    }
}

/// Per-row layer normalization with learnable scale and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm<F: Scalar> {
    pub gamma: Array2<F>,
    pub beta: Array2<F>,
}

#[derive(Debug)]
pub struct LayerNormCache<F: Scalar> {
    pub xhat: Array2<F>,
    pub inv_std: Array1<F>,
}

const LN_EPS: f64 = 1e-5;

impl<F: Scalar> LayerNorm<F> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: init::ones(1, dim),
            beta: init::zeros(1, dim),
        }
    }

    pub fn forward(&self, x: &Array2<F>) -> (Array2<F>, LayerNormCache<F>) {
        let (n, d) = x.dim();
        let df = F::from_f64(d as f64);
        let eps = F::from_f64(LN_EPS);
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(n);
        for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / df;
            let mut var = F::zero();
            for v in row.iter() {
                let c = *v - mean;
                var = var + c * c;
            }
            var = var / df;
            let is = F::one() / (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
            *s = is;
        }
        let mut y = xhat.clone();
        for mut row in y.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.gamma[[0, j]] + self.beta[[0, j]];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache<F>, dy: &Array2<F>) -> (Array2<F>, LayerNorm<F>) {
        let (n, d) = dy.dim();
        let df = F::from_f64(d as f64);
        let mut dgamma = init::zeros(1, d);
        let mut dbeta = init::zeros(1, d);
        let mut dx = Array2::zeros((n, d));
        for i in 0..n {
            let mut mean_g = F::zero();
            let mut mean_gx = F::zero();
            for j in 0..d {
                let g = dy[[i, j]] * self.gamma[[0, j]];
                mean_g = mean_g + g;
                mean_gx = mean_gx + g * cache.xhat[[i, j]];
                dgamma[[0, j]] = dgamma[[0, j]] + dy[[i, j]] * cache.xhat[[i, j]];
                dbeta[[0, j]] = dbeta[[0, j]] + dy[[i, j]];
            }
            mean_g = mean_g / df;
            mean_gx = mean_gx / df;
            for j in 0..d {
                let g = dy[[i, j]] * self.gamma[[0, j]];
                dx[[i, j]] = (g - mean_g - cache.xhat[[i, j]] * mean_gx) * cache.inv_std[i];
            }
        }
        (
            dx,
            LayerNorm {
                gamma: dgamma,
                beta: dbeta,
            },
        )
    }

    pub fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<F>)>) {
        out.push((format!("{prefix}.gamma"), &self.gamma));
        out.push((format!("{prefix}.beta"), &self.beta));
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array2<F>)>) {
        out.push((format!("{prefix}.gamma"), &mut self.gamma));
        out.push((format!("{prefix}.beta"), &mut self.beta));
    }
}

/// Token-id embedding table.
#[derive(Debug, Clone)]
pub struct Embedding<F: Scalar> {
    pub table: Array2<F>,
}

impl<F: Scalar> Embedding<F> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, vocab: usize, dim: usize) -> Self {
        Embedding {
            table: init::normal(rng, vocab, dim, 0.02),
        }
    }

    pub fn forward(&self, ids: &[usize]) -> Array2<F> {
        let d = self.table.dim().1;
        Array2::from_shape_fn((ids.len(), d), |(t, j)| self.table[[ids[t], j]])
    }

    pub fn backward(&self, ids: &[usize], dy: &Array2<F>) -> Embedding<F> {
        let mut dtable = Array2::zeros(self.table.dim());
        for (t, &id) in ids.iter().enumerate() {
            for j in 0..dtable.dim().1 {
                dtable[[id, j]] = dtable[[id, j]] + dy[[t, j]];
            }
        }
        Embedding { table: dtable }
    }

    pub fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<F>)>) {
        out.push((prefix.to_string(), &self.table));
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array2<F>)>) {
        out.push((prefix.to_string(), &mut self.table));
    }
}
