//! Elementwise activations and row-wise softmax with their exact derivatives.

use ndarray::Array2;

use crate::scalar::Scalar;

/// Row-wise softmax with max-subtraction for stability.
pub fn softmax_rows<F: Scalar>(scores: &Array2<F>) -> Array2<F> {
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Backward of row-wise softmax: `dS = P . (dP - rowsum(dP . P))`.
pub fn softmax_rows_backward<F: Scalar>(probs: &Array2<F>, dprobs: &Array2<F>) -> Array2<F> {
    let mut out = dprobs.clone();
    for (mut drow, prow) in out.rows_mut().into_iter().zip(probs.rows()) {
        let mut dot = F::zero();
        for (d, p) in drow.iter().zip(prow.iter()) {
            dot = dot + *d * *p;
        }
        for (d, p) in drow.iter_mut().zip(prow.iter()) {
            *d = *p * (*d - dot);
        }
    }
    out
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// tanh-approximated GELU.
pub fn gelu<F: Scalar>(x: F) -> F {
    let xf = x.into_f64();
    let inner = GELU_C * (xf + GELU_A * xf * xf * xf);
    F::from_f64(0.5 * xf * (1.0 + inner.tanh()))
}

/// Derivative of the tanh-approximated GELU.
pub fn gelu_prime<F: Scalar>(x: F) -> F {
    let xf = x.into_f64();
    let u = GELU_C * (xf + GELU_A * xf * xf * xf);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * GELU_A * xf * xf);
    F::from_f64(0.5 * (1.0 + t) + 0.5 * xf * (1.0 - t * t) * du)
}

pub fn sigmoid<F: Scalar>(x: F) -> F {
    let one = F::one();
    if x >= F::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_rows_are_stochastic() {
        let s = array![[1.0f64, 2.0, 3.0], [-5.0, 0.0, 5.0]];
        let p = softmax_rows(&s);
        for row in p.rows() {
            let sum: f64 = row.sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
        // Invariance to a constant shift per row.
        let shifted = softmax_rows(&(&s + 100.0));
        assert!(p
            .iter()
            .zip(shifted.iter())
            .all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn softmax_backward_matches_finite_difference() {
        let s = array![[0.3f64, -1.2, 0.7, 0.1]];
        let dprobs = array![[0.11f64, -0.4, 0.25, 0.9]];
        let analytic = softmax_rows_backward(&softmax_rows(&s), &dprobs);
        let h = 1e-6;
        for j in 0..4 {
            let mut sp = s.clone();
            sp[[0, j]] += h;
            let mut sm = s.clone();
            sm[[0, j]] -= h;
            let f = |m: &ndarray::Array2<f64>| -> f64 {
                softmax_rows(m).iter().zip(dprobs.iter()).map(|(p, d)| p * d).sum()
            };
            let num = (f(&sp) - f(&sm)) / (2.0 * h);
            assert!((num - analytic[[0, j]]).abs() < 1e-8);
        }
    }

    #[test]
    fn gelu_prime_matches_finite_difference() {
        for &x in &[-3.0f64, -0.5, 0.0, 0.3, 2.7] {
            let h = 1e-6;
            let num = (gelu::<f64>(x + h) - gelu::<f64>(x - h)) / (2.0 * h);
            assert!((num - gelu_prime::<f64>(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert!(sigmoid(800.0f64) <= 1.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }
}
