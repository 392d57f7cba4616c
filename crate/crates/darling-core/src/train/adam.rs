//! Adam optimizer over the model's named parameter set.

use crate::model::Model;
use crate::scalar::Scalar;

pub struct Adam<F: Scalar> {
    pub m: Model<F>,
    pub v: Model<F>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<F: Scalar> Adam<F> {
    pub fn new(model: &Model<F>, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            m: model.zeroed_like(),
            v: model.zeroed_like(),
            step: 0,
            beta1,
            beta2,
            eps,
        }
    }

    /// One update. `frozen` filters parameters by name: frozen parameters
    /// keep their weights and moments untouched.
    pub fn update(
        &mut self,
        model: &mut Model<F>,
        grads: &Model<F>,
        lr: f64,
        frozen: Option<&dyn Fn(&str) -> bool>,
    ) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let one = F::one();
        let lr = F::from_f64(lr);
        let eps = F::from_f64(self.eps);
        let fbc1 = F::from_f64(bc1);
        let fbc2 = F::from_f64(bc2);

        let gs = grads.named_params();
        let ms = self.m.named_params_mut();
        let vs = self.v.named_params_mut();
        for ((((name, p), (gn, g)), (mn, m)), (vn, v)) in model
            .named_params_mut()
            .into_iter()
            .zip(gs)
            .zip(ms)
            .zip(vs)
        {
            debug_assert!(name == gn && name == mn && name == vn);
            if frozen.is_some_and(|f| f(&name)) {
                continue;
            }
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let mhat = *m / fbc1;
                let vhat = *v / fbc2;
                *p = *p - lr * mhat / (vhat.sqrt() + eps);
            });
        }
    }
}
