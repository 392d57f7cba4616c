//! RGB image buffer with PNG I/O and patch <-> token layout helpers.
//!
//! Pixels are `f64` in `[0, 1]`, stored `(height, width, 3)`. The synthesis
//! pipeline quantizes its final output to the 8-bit grid (`k/255`), which
//! makes PNG round trips bit-exact.

use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Canvas height used by the scene-text pipeline.
pub const HEIGHT: usize = 32;
/// Canvas width used by the scene-text pipeline.
pub const WIDTH: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    data: Array3<f64>,
}

impl Image {
    pub fn zeros(h: usize, w: usize) -> Self {
        Image {
            data: Array3::zeros((h, w, 3)),
        }
    }

    /// Wrap an `(h, w, 3)` array. Values are the caller's responsibility.
    pub fn from_array(data: Array3<f64>) -> Result<Self> {
        if data.dim().2 != 3 {
            return Err(Error::validation(format!(
                "image must have 3 channels, got {}",
                data.dim().2
            )));
        }
        Ok(Image { data })
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f64> {
        &mut self.data
    }

    pub fn into_array(self) -> Array3<f64> {
        self.data
    }

    /// Ensure the image is exactly `h` x `w` with values in `[0, 1]`.
    pub fn validate_shape(&self, h: usize, w: usize) -> Result<()> {
        let dim = self.data.dim();
        if dim.0 != h || dim.1 != w {
            return Err(Error::validation(format!(
                "expected {h}x{w} image, got {}x{}",
                dim.0, dim.1
            )));
        }
        for &v in self.data.iter() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!(
                    "pixel value {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Clamp all pixels into `[0, 1]`.
    pub fn clip(&mut self) {
        self.data.mapv_inplace(|v| v.clamp(0.0, 1.0));
    }

    /// Snap every pixel to the 8-bit grid `round(v * 255) / 255`.
    pub fn quantize_u8(&mut self) {
        self.data
            .mapv_inplace(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_u8(h: usize, w: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != h * w * 3 {
            return Err(Error::validation(format!(
                "expected {} bytes for {h}x{w} rgb image, got {}",
                h * w * 3,
                bytes.len()
            )));
        }
        let data = Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
            f64::from(bytes[(y * w + x) * 3 + c]) / 255.0
        });
        Ok(Image { data })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let (h, w, _) = self.data.dim();
        let buf = self.to_u8();
        image::save_buffer(
            path,
            &buf,
            w as u32,
            h as u32,
            image::ExtendedColorType::Rgb8,
        )?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::integrity(format!("cannot read image {}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Image::from_u8(h as usize, w as usize, img.as_raw())
    }

    /// Rec. 601 luminance, `(h, w)`.
    pub fn luminance(&self) -> Array2<f64> {
        let (h, w, _) = self.data.dim();
        Array2::from_shape_fn((h, w), |(y, x)| {
            0.299 * self.data[[y, x, 0]]
                + 0.587 * self.data[[y, x, 1]]
                + 0.114 * self.data[[y, x, 2]]
        })
    }

    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(self.data.dim(), other.data.dim());
        let n = self.data.len() as f64;
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / n
    }
}

/// Flatten an image into `L x (p*p*3)` patch rows (row-major patch grid,
/// `(dy, dx, c)` order within a patch).
pub fn patchify<F: Scalar>(img: &Image, patch: usize) -> Array2<F> {
    let (h, w, _) = img.data().dim();
    assert!(h % patch == 0 && w % patch == 0);
    let (gh, gw) = (h / patch, w / patch);
    let cols = patch * patch * 3;
    Array2::from_shape_fn((gh * gw, cols), |(l, k)| {
        let (py, px) = (l / gw, l % gw);
        let dy = k / (patch * 3);
        let dx = (k / 3) % patch;
        let c = k % 3;
        F::from_f64(img.data()[[py * patch + dy, px * patch + dx, c]])
    })
}

/// Inverse of [`patchify`]: assemble `L x (p*p*3)` patch rows into an image.
pub fn unpatchify<F: Scalar>(rows: &ndarray::ArrayView2<F>, h: usize, w: usize, patch: usize) -> Image {
    assert!(h % patch == 0 && w % patch == 0);
    let (gh, gw) = (h / patch, w / patch);
    assert_eq!(rows.dim(), (gh * gw, patch * patch * 3));
    let data = Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
        let (py, px) = (y / patch, x / patch);
        let (dy, dx) = (y % patch, x % patch);
        let l = py * gw + px;
        let k = (dy * patch + dx) * 3 + c;
        rows[[l, k]].into_f64()
    });
    Image { data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_image(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = crate::rng::rng_from(seed);
        let data = Array3::from_shape_fn((h, w, 3), |_| rng.random::<f64>());
        Image::from_array(data).unwrap()
    }

    #[test]
    fn patchify_unpatchify_roundtrip() {
        let img = random_image(3, 32, 128);
        let rows = patchify::<f64>(&img, 4);
        assert_eq!(rows.dim(), (256, 48));
        let back = unpatchify::<f64>(&rows.view(), 32, 128, 4);
        assert_eq!(img, back);
    }

    #[test]
    fn u8_roundtrip_after_quantize() {
        let mut img = random_image(11, 8, 16);
        img.quantize_u8();
        let back = Image::from_u8(8, 16, &img.to_u8()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn validate_shape_rejects_wrong_size() {
        let img = random_image(1, 16, 64);
        let err = img.validate_shape(32, 128).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("32x128") && msg.contains("16x64"), "{msg}");
    }
}
