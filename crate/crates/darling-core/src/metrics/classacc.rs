//! Realism probe: a small convolutional classifier trained to separate real
//! from generated images. Its held-out accuracy is the metric — 50% means
//! the two sets are indistinguishable, higher means the generations are easy
//! to spot.
//!
//! Architecture: conv(3->32, k3, s2, p1) -> ReLU -> conv(32->32, k3, s2,
//! p1) -> ReLU -> global spatial mean -> linear(32->2), trained for 50
//! epochs with Adam(1e-3) at batch 64 on an 80/20 split.

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::conv::{Conv2d, Conv2dCache};
use crate::nn::Linear;
use crate::par;
use crate::rng::rng_from;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct ClassAccConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub train_fraction: f64,
}

impl Default for ClassAccConfig {
    fn default() -> Self {
        ClassAccConfig {
            epochs: 50,
            lr: 1e-3,
            batch_size: 64,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassAccResult {
    /// Held-out classification accuracy in percent; lower = more realistic
    /// generations.
    pub accuracy_pct: f64,
    pub warning: Option<String>,
    pub n_train: usize,
    pub n_test: usize,
}

struct Probe<F: Scalar> {
    conv1: Conv2d<F>,
    conv2: Conv2d<F>,
    fc: Linear<F>,
}

struct ProbeCache<F: Scalar> {
    x: Array3<F>,
    c1: Conv2dCache<F>,
    a1: Array3<F>,
    c2: Conv2dCache<F>,
    a2: Array3<F>,
    pooled: Array2<F>,
}

impl<F: Scalar> Probe<F> {
    fn new(seed: u64) -> Self {
        let mut rng = rng_from(seed);
        Probe {
            conv1: Conv2d::new(&mut rng, 3, 32, 3, 2, 1),
            conv2: Conv2d::new(&mut rng, 32, 32, 3, 2, 1),
            fc: Linear::new(&mut rng, 32, 2, true),
        }
    }

    fn forward(&self, x: &Array3<F>) -> (Array2<F>, ProbeCache<F>) {
        let (y1, c1) = self.conv1.forward(x);
        let a1 = y1.mapv(|v| v.max(F::zero()));
        let (y2, c2) = self.conv2.forward(&a1);
        let a2 = y2.mapv(|v| v.max(F::zero()));
        let (ch, ho, wo) = a2.dim();
        let denom = F::from_f64((ho * wo) as f64);
        let pooled = Array2::from_shape_fn((1, ch), |(_, c)| {
            let mut s = F::zero();
            for y in 0..ho {
                for xx in 0..wo {
                    s = s + a2[[c, y, xx]];
                }
            }
            s / denom
        });
        let logits = self.fc.forward(&pooled);
        (
            logits,
            ProbeCache {
                x: x.clone(),
                c1,
                a1,
                c2,
                a2,
                pooled,
            },
        )
    }

    fn backward(&self, cache: &ProbeCache<F>, dlogits: &Array2<F>) -> Probe<F> {
        let (_, dfc) = self.fc.backward(&cache.pooled, dlogits);
        let dpooled = dlogits.dot(&self.fc.w.t());
        let (ch, ho, wo) = cache.a2.dim();
        let denom = F::from_f64((ho * wo) as f64);
        let mut da2 = Array3::from_shape_fn((ch, ho, wo), |(c, _, _)| dpooled[[0, c]] / denom);
        ndarray::Zip::from(&mut da2).and(&cache.a2).for_each(|d, &a| {
            if a <= F::zero() {
                *d = F::zero();
            }
        });
        let (da1, dconv2) = self.conv2.backward(&cache.c2, &da2);
        let mut da1 = da1;
        ndarray::Zip::from(&mut da1).and(&cache.a1).for_each(|d, &a| {
            if a <= F::zero() {
                *d = F::zero();
            }
        });
        let (_, dconv1) = self.conv1.backward(&cache.c1, &da1);
        let _ = &cache.x;
        Probe {
            conv1: dconv1,
            conv2: dconv2,
            fc: dfc,
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<F>> {
        let mut v: Vec<&mut Array2<F>> = vec![&mut self.conv1.w, &mut self.conv1.b];
        v.push(&mut self.conv2.w);
        v.push(&mut self.conv2.b);
        v.push(&mut self.fc.w);
        v.push(self.fc.b.as_mut().expect("fc has bias"));
        v
    }

    fn tensors(&self) -> Vec<&Array2<F>> {
        vec![
            &self.conv1.w,
            &self.conv1.b,
            &self.conv2.w,
            &self.conv2.b,
            &self.fc.w,
            self.fc.b.as_ref().expect("fc has bias"),
        ]
    }

    fn zeroed(&self) -> Probe<F> {
        let mut p = Probe {
            conv1: self.conv1.clone(),
            conv2: self.conv2.clone(),
            fc: self.fc.clone(),
        };
        for t in p.tensors_mut() {
            t.fill(F::zero());
        }
        p
    }
}

fn image_to_chw<F: Scalar>(img: &Image) -> Array3<F> {
    let (h, w, _) = img.data().dim();
    Array3::from_shape_fn((3, h, w), |(c, y, x)| F::from_f64(img.data()[[y, x, c]]))
}

/// Softmax cross-entropy for a single 1x2 logit row; returns (loss, dlogits).
fn binary_ce<F: Scalar>(logits: &Array2<F>, label: usize) -> (f64, Array2<F>) {
    let l0 = logits[[0, 0]].into_f64();
    let l1 = logits[[0, 1]].into_f64();
    let max = l0.max(l1);
    let e0 = (l0 - max).exp();
    let e1 = (l1 - max).exp();
    let z = e0 + e1;
    let p = [e0 / z, e1 / z];
    let loss = -p[label].max(f64::MIN_POSITIVE).ln();
    let mut d = Array2::zeros((1, 2));
    d[[0, 0]] = F::from_f64(p[0] - if label == 0 { 1.0 } else { 0.0 });
    d[[0, 1]] = F::from_f64(p[1] - if label == 1 { 1.0 } else { 0.0 });
    (loss, d)
}

/// Train the probe on `real` (label 0) vs `generated` (label 1) and return
/// the held-out accuracy. Deterministic in `seed`.
pub fn classacc<F: Scalar>(
    real: &[Image],
    generated: &[Image],
    seed: u64,
    cfg: &ClassAccConfig,
) -> Result<ClassAccResult> {
    if real.is_empty() || generated.is_empty() {
        return Err(Error::validation("classacc needs non-empty image sets"));
    }
    let ratio = real.len().max(generated.len()) as f64 / real.len().min(generated.len()) as f64;
    let warning = (ratio > 10.0).then(|| {
        format!(
            "class imbalance {}:{} exceeds 10:1; accuracy may be dominated by the majority class",
            real.len(),
            generated.len()
        )
    });

    let mut data: Vec<(Array3<F>, usize)> = Vec::with_capacity(real.len() + generated.len());
    for img in real {
        img.validate_shape(img.height(), img.width())?;
        data.push((image_to_chw(img), 0));
    }
    for img in generated {
        data.push((image_to_chw(img), 1));
    }

    let mut rng = rng_from(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_train = ((data.len() as f64) * cfg.train_fraction).round() as usize;
    let n_train = n_train.clamp(1, data.len() - 1);
    let (train_idx, test_idx) = order.split_at(n_train);

    let mut probe: Probe<F> = Probe::new(crate::rng::derive_seed(seed, 1));
    let mut m = probe.zeroed();
    let mut v = probe.zeroed();
    let mut adam_t = 0u64;
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);

    let mut train_order: Vec<usize> = train_idx.to_vec();
    for _epoch in 0..cfg.epochs {
        train_order.shuffle(&mut rng);
        for chunk in train_order.chunks(cfg.batch_size) {
            let grads: Vec<Probe<F>> = par::map_slice(chunk, |&i| {
                let (x, label) = &data[i];
                let (logits, cache) = probe.forward(x);
                let (_, dlogits) = binary_ce(&logits, *label);
                probe.backward(&cache, &dlogits)
            });
            let scale = F::from_f64(1.0 / chunk.len() as f64);
            let mut total = probe.zeroed();
            for g in &grads {
                for (acc, src) in total.tensors_mut().into_iter().zip(g.tensors()) {
                    *acc = &*acc + src;
                }
            }
            for t in total.tensors_mut() {
                t.mapv_inplace(|x| x * scale);
            }
            adam_t += 1;
            let bc1 = 1.0 - b1.powi(adam_t as i32);
            let bc2 = 1.0 - b2.powi(adam_t as i32);
            let lr = F::from_f64(cfg.lr);
            let fb1 = F::from_f64(b1);
            let fb2 = F::from_f64(b2);
            let feps = F::from_f64(eps);
            let fbc1 = F::from_f64(bc1);
            let fbc2 = F::from_f64(bc2);
            let one = F::one();
            for (((p, g), mm), vv) in probe
                .tensors_mut()
                .into_iter()
                .zip(total.tensors())
                .zip(m.tensors_mut())
                .zip(v.tensors_mut())
            {
                ndarray::Zip::from(p)
                    .and(g)
                    .and(mm)
                    .and(vv)
                    .for_each(|p, &g, mm, vv| {
                        *mm = fb1 * *mm + (one - fb1) * g;
                        *vv = fb2 * *vv + (one - fb2) * g * g;
                        let mhat = *mm / fbc1;
                        let vhat = *vv / fbc2;
                        *p = *p - lr * mhat / (vhat.sqrt() + feps);
                    });
            }
        }
    }

    let hits: usize = par::map_slice(test_idx, |&i| {
        let (x, label) = &data[i];
        let (logits, _) = probe.forward(x);
        let pred = if logits[[0, 1]] > logits[[0, 0]] { 1 } else { 0 };
        (pred == *label) as usize
    })
    .into_iter()
    .sum();

    Ok(ClassAccResult {
        accuracy_pct: 100.0 * hits as f64 / test_idx.len() as f64,
        warning,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
    })
}

/// Mean and standard deviation of [`classacc`] over several seeds.
pub fn classacc_multi_seed<F: Scalar>(
    real: &[Image],
    generated: &[Image],
    seeds: &[u64],
    cfg: &ClassAccConfig,
) -> Result<(f64, f64, Option<String>)> {
    if seeds.is_empty() {
        return Err(Error::validation("classacc needs at least one seed"));
    }
    let mut vals = Vec::with_capacity(seeds.len());
    let mut warning = None;
    for &s in seeds {
        let r = classacc::<F>(real, generated, s, cfg)?;
        if warning.is_none() {
            warning = r.warning;
        }
        vals.push(r.accuracy_pct);
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
    Ok((mean, var.sqrt(), warning))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3 as A3;

    fn noise_images(n: usize, seed: u64) -> Vec<Image> {
        (0..n)
            .map(|i| {
                let mut rng = rng_from(crate::rng::derive_seed(seed, i as u64));
                Image::from_array(A3::from_shape_fn((32, 128, 3), |_| {
                    rand::Rng::random::<f64>(&mut rng)
                }))
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn separable_sets_score_high() {
        let real = noise_images(24, 1);
        let black: Vec<Image> = (0..24).map(|_| Image::zeros(32, 128)).collect();
        let cfg = ClassAccConfig {
            epochs: 12,
            ..Default::default()
        };
        let r = classacc::<f32>(&real, &black, 3, &cfg).unwrap();
        assert!(r.accuracy_pct >= 95.0, "got {}", r.accuracy_pct);
        assert!(r.warning.is_none());
    }

    #[test]
    fn imbalance_warning_fires() {
        let real = noise_images(33, 5);
        let generated = noise_images(3, 6);
        let cfg = ClassAccConfig {
            epochs: 1,
            ..Default::default()
        };
        let r = classacc::<f32>(&real, &generated, 1, &cfg).unwrap();
        assert!(r.warning.is_some());
        assert!((0.0..=100.0).contains(&r.accuracy_pct));
    }

    #[test]
    fn deterministic_in_seed() {
        let real = noise_images(10, 7);
        let generated = noise_images(10, 8);
        let cfg = ClassAccConfig {
            epochs: 2,
            ..Default::default()
        };
        let a = classacc::<f32>(&real, &generated, 9, &cfg).unwrap();
        let b = classacc::<f32>(&real, &generated, 9, &cfg).unwrap();
        assert_eq!(a.accuracy_pct, b.accuracy_pct);
    }

    #[test]
    fn empty_sets_rejected() {
        let imgs = noise_images(2, 9);
        assert!(classacc::<f32>(&[], &imgs, 1, &Default::default()).is_err());
        assert!(classacc::<f32>(&imgs, &[], 1, &Default::default()).is_err());
    }
}
