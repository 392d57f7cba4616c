//! Image-fidelity and recognition metrics.
//!
//! * `mse` / `psnr`: pixel MSE over all channels and `10*log10(1/mse)` dB.
//! * `ssim`: structural similarity on the luminance plane with the standard
//!   Wang et al. parameters (11x11 Gaussian window, sigma 1.5, K1 = 0.01,
//!   K2 = 0.03, dynamic range 1), averaged over window positions where the
//!   full window fits.
//! * `seqacc`: case-sensitive exact-match word accuracy of a recognizer.
//! * `classacc` (see [`classacc`]): held-out accuracy of a small real-vs-
//!   generated probe network; lower means more realistic generations.

pub mod classacc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::par;

/// Aggregate evaluation report. Fields that a given run cannot compute
/// (e.g. `seqacc_pct` without labels) are left `None`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    /// `None` encodes +inf (identical image sets).
    pub psnr_db: Option<f64>,
    pub ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seqacc_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classacc_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classacc_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub n_samples: usize,
}

fn check_same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.data().dim() != b.data().dim() {
        return Err(Error::validation(format!(
            "image shape mismatch: {:?} vs {:?}",
            a.data().dim(),
            b.data().dim()
        )));
    }
    Ok(())
}

/// Mean squared error over all pixels and channels.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_same_shape(a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio in dB for unit dynamic range. Identical inputs
/// give `+inf`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / m).log10())
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> Array2<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut w = Array2::zeros((SSIM_WINDOW, SSIM_WINDOW));
    let mut sum = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let v = (-((dy * dy + dx * dx) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[[(dy + r) as usize, (dx + r) as usize]] = v;
            sum += v;
        }
    }
    w.mapv_inplace(|v| v / sum);
    w
}

/// Mean SSIM over all positions where the 11x11 window fits entirely inside
/// the luminance plane.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_same_shape(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::validation(format!(
            "image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} ssim window"
        )));
    }
    let la = a.luminance();
    let lb = b.luminance();
    let win = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;

    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=(h - SSIM_WINDOW) {
        for x0 in 0..=(w - SSIM_WINDOW) {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            for dy in 0..SSIM_WINDOW {
                for dx in 0..SSIM_WINDOW {
                    let g = win[[dy, dx]];
                    let va = la[[y0 + dy, x0 + dx]];
                    let vb = lb[[y0 + dy, x0 + dx]];
                    mu_a += g * va;
                    mu_b += g * vb;
                    aa += g * va * va;
                    bb += g * vb * vb;
                    ab += g * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let s = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean of a metric over paired image sets (parallel over pairs).
pub fn mean_metric(
    pairs: &[(Image, Image)],
    metric: impl Fn(&Image, &Image) -> Result<f64> + Sync + Send,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::validation("metric over an empty image set"));
    }
    let vals = par::map_slice(pairs, |(a, b)| metric(a, b));
    let mut sum = 0.0;
    for v in vals {
        sum += v?;
    }
    Ok(sum / pairs.len() as f64)
}

/// Case-sensitive exact-match word accuracy of `recognize` over an image set.
pub fn seqacc(
    recognize: impl Fn(&Image) -> String + Sync + Send,
    images: &[Image],
    target_texts: &[String],
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::validation("seqacc over an empty image set"));
    }
    if images.len() != target_texts.len() {
        return Err(Error::validation(format!(
            "seqacc: {} images but {} target texts",
            images.len(),
            target_texts.len()
        )));
    }
    let hits: usize = par::map_slice(images, &recognize)
        .iter()
        .zip(target_texts)
        .filter(|(got, want)| got == want)
        .count();
    Ok(100.0 * hits as f64 / images.len() as f64)
}
