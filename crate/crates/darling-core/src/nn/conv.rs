//! Strided 2-D convolution via im2col, used by the realism probe network.

use ndarray::{Array2, Array3, Axis};
use rand::Rng;

use super::init;
use crate::scalar::Scalar;

/// Convolution with square kernel, `(cin*k*k) x cout` weight layout.
#[derive(Debug, Clone)]
pub struct Conv2d<F: Scalar> {
    pub w: Array2<F>,
    pub b: Array2<F>,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug)]
pub struct Conv2dCache<F: Scalar> {
    cols: Array2<F>,
    in_dim: (usize, usize, usize),
}

impl<F: Scalar> Conv2d<F> {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        // Kaiming-style fan-in scaling.
        let std = (2.0 / (cin * k * k) as f64).sqrt();
        Conv2d {
            w: init::normal(rng, cin * k * k, cout, std),
            b: init::zeros(1, cout),
            cin,
            cout,
            k,
            stride,
            pad,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    fn im2col(&self, x: &Array3<F>) -> Array2<F> {
        let (cin, h, w) = x.dim();
        let (ho, wo) = self.out_hw(h, w);
        let mut cols = Array2::zeros((ho * wo, cin * self.k * self.k));
        for oy in 0..ho {
            for ox in 0..wo {
                let row = oy * wo + ox;
                let mut col = 0;
                for c in 0..cin {
                    for ky in 0..self.k {
                        for kx in 0..self.k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                cols[[row, col]] = x[[c, iy as usize, ix as usize]];
                            }
                            col += 1;
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, x: &Array3<F>) -> (Array3<F>, Conv2dCache<F>) {
        let (_, h, w) = x.dim();
        let (ho, wo) = self.out_hw(h, w);
        let cols = self.im2col(x);
        let out_mat = cols.dot(&self.w) + &self.b;
        let out = Array3::from_shape_fn((self.cout, ho, wo), |(c, y, xo)| out_mat[[y * wo + xo, c]]);
        (
            out,
            Conv2dCache {
                cols,
                in_dim: x.dim(),
            },
        )
    }

    pub fn backward(&self, cache: &Conv2dCache<F>, dy: &Array3<F>) -> (Array3<F>, Conv2d<F>) {
        let (cin, h, w) = cache.in_dim;
        let (_, ho, wo) = dy.dim();
        let dy_mat = Array2::from_shape_fn((ho * wo, self.cout), |(r, c)| dy[[c, r / wo, r % wo]]);
        let dw = cache.cols.t().dot(&dy_mat);
        let db = dy_mat.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dcols = dy_mat.dot(&self.w.t());

        // col2im: scatter-add column gradients back into the input plane.
        let mut dx = Array3::zeros((cin, h, w));
        for oy in 0..ho {
            for ox in 0..wo {
                let row = oy * wo + ox;
                let mut col = 0;
                for c in 0..cin {
                    for ky in 0..self.k {
                        for kx in 0..self.k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                dx[[c, iy as usize, ix as usize]] =
                                    dx[[c, iy as usize, ix as usize]] + dcols[[row, col]];
                            }
                            col += 1;
                        }
                    }
                }
            }
        }
        (
            dx,
            Conv2d {
                w: dw,
                b: db,
                cin: self.cin,
                cout: self.cout,
                k: self.k,
                stride: self.stride,
                pad: self.pad,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn conv_shapes_match_stride_two_pad_one() {
        let mut rng = crate::rng::rng_from(5);
        let conv: Conv2d<f64> = Conv2d::new(&mut rng, 3, 32, 3, 2, 1);
        let x = Array3::from_shape_fn((3, 32, 128), |_| rng.random::<f64>());
        let (y, _) = conv.forward(&x);
        assert_eq!(y.dim(), (32, 16, 64));
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = crate::rng::rng_from(9);
        let mut conv: Conv2d<f64> = Conv2d::new(&mut rng, 2, 3, 3, 2, 1);
        let x = Array3::from_shape_fn((2, 6, 8), |_| rng.random::<f64>() - 0.5);
        // Scalar objective: weighted sum of outputs.
        let wsum = Array3::from_shape_fn(conv.forward(&x).0.dim(), |_| rng.random::<f64>() - 0.5);
        let eval = |c: &Conv2d<f64>, x: &Array3<f64>| -> f64 {
            c.forward(x).0.iter().zip(wsum.iter()).map(|(a, b)| a * b).sum()
        };
        let (y, cache) = conv.forward(&x);
        assert_eq!(y.dim(), wsum.dim());
        let (dx, grads) = conv.backward(&cache, &wsum);

        let h = 1e-6;
        // Input gradient.
        for idx in [(0usize, 0usize, 0usize), (1, 3, 5), (0, 5, 7), (1, 2, 2)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let num = (eval(&conv, &xp) - eval(&conv, &xm)) / (2.0 * h);
            assert!((num - dx[idx]).abs() < 1e-7, "dx mismatch at {idx:?}");
        }
        // Weight and bias gradients.
        for idx in [(0usize, 0usize), (5, 2), (17, 1)] {
            let orig = conv.w[idx];
            conv.w[idx] = orig + h;
            let fp = eval(&conv, &x);
            conv.w[idx] = orig - h;
            let fm = eval(&conv, &x);
            conv.w[idx] = orig;
            let num = (fp - fm) / (2.0 * h);
            assert!((num - grads.w[idx]).abs() < 1e-7, "dw mismatch at {idx:?}");
        }
        let orig = conv.b[[0, 1]];
        conv.b[[0, 1]] = orig + h;
        let fp = eval(&conv, &x);
        conv.b[[0, 1]] = orig - h;
        let fm = eval(&conv, &x);
        conv.b[[0, 1]] = orig;
        assert!(((fp - fm) / (2.0 * h) - grads.b[[0, 1]]).abs() < 1e-7);
    }
}
