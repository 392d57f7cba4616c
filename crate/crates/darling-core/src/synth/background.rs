//! Background assets: procedural textures (solids, gradients, smooth value
//! noise) plus an optional user-supplied image directory.

use std::path::Path;

use ndarray::Array3;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{Image, HEIGHT, WIDTH};
use crate::rng::{derive_seed, rng_from};

/// Generated textures are comfortably larger than the canvas so crops have
/// freedom to move and zoom.
const TEX_H: usize = 64;
const TEX_W: usize = 192;

#[derive(Debug, Clone)]
pub struct BackgroundAsset {
    pub name: String,
    data: Array3<f64>,
}

impl BackgroundAsset {
    pub fn size(&self) -> (usize, usize) {
        (self.data.dim().0, self.data.dim().1)
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// Crop `(x, y, w, h)` and bilinearly resize to the canvas size.
    pub fn crop_to_canvas(&self, crop: (u32, u32, u32, u32)) -> Result<Array3<f64>> {
        let (x, y, w, h) = (crop.0 as usize, crop.1 as usize, crop.2 as usize, crop.3 as usize);
        let (bh, bw) = self.size();
        if w == 0 || h == 0 || x + w > bw || y + h > bh {
            return Err(Error::validation(format!(
                "background crop ({x},{y},{w},{h}) outside {bw}x{bh} asset {}",
                self.name
            )));
        }
        let out = Array3::from_shape_fn((HEIGHT, WIDTH, 3), |(oy, ox, c)| {
            // Map output pixel center into crop coordinates.
            let sy = (oy as f64 + 0.5) * h as f64 / HEIGHT as f64 - 0.5 + y as f64;
            let sx = (ox as f64 + 0.5) * w as f64 / WIDTH as f64 - 0.5 + x as f64;
            bilinear(&self.data, sy, sx, c)
        });
        Ok(out)
    }
}

fn bilinear(data: &Array3<f64>, y: f64, x: f64, c: usize) -> f64 {
    let (h, w, _) = data.dim();
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    data[[y0, x0, c]] * (1.0 - fy) * (1.0 - fx)
        + data[[y0, x1, c]] * (1.0 - fy) * fx
        + data[[y1, x0, c]] * fy * (1.0 - fx)
        + data[[y1, x1, c]] * fy * fx
}

fn random_color(rng: &mut impl Rng) -> [f64; 3] {
    [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]
}

/// Smooth value noise: a coarse random lattice, bilinearly interpolated,
/// two octaves.
fn value_noise(rng: &mut impl Rng, h: usize, w: usize, cell: usize) -> ndarray::Array2<f64> {
    let gh = h / cell + 2;
    let gw = w / cell + 2;
    let lattice = ndarray::Array2::from_shape_fn((gh, gw), |_| rng.random::<f64>());
    ndarray::Array2::from_shape_fn((h, w), |(y, x)| {
        let fy = y as f64 / cell as f64;
        let fx = x as f64 / cell as f64;
        let y0 = fy.floor() as usize;
        let x0 = fx.floor() as usize;
        let ty = fy - y0 as f64;
        let tx = fx - x0 as f64;
        // Smoothstep interpolation weights.
        let sy = ty * ty * (3.0 - 2.0 * ty);
        let sx = tx * tx * (3.0 - 2.0 * tx);
        lattice[[y0, x0]] * (1.0 - sy) * (1.0 - sx)
            + lattice[[y0, x0 + 1]] * (1.0 - sy) * sx
            + lattice[[y0 + 1, x0]] * sy * (1.0 - sx)
            + lattice[[y0 + 1, x0 + 1]] * sy * sx
    })
}

fn procedural_texture(seed: u64, index: usize) -> BackgroundAsset {
    let mut rng = rng_from(seed);
    let kind = index % 4;
    let c0 = random_color(&mut rng);
    let c1 = random_color(&mut rng);
    let data = match kind {
        0 => Array3::from_shape_fn((TEX_H, TEX_W, 3), |(_, _, c)| c0[c]),
        1 => {
            // Linear gradient along a random direction.
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let (dy, dx) = (angle.sin(), angle.cos());
            let norm = (TEX_H as f64 * dy.abs() + TEX_W as f64 * dx.abs()).max(1.0);
            Array3::from_shape_fn((TEX_H, TEX_W, 3), |(y, x, c)| {
                let t = ((y as f64 * dy + x as f64 * dx) / norm + 1.0) / 2.0;
                c0[c] * (1.0 - t) + c1[c] * t
            })
        }
        2 => {
            let cell = rng.random_range(8..20usize);
            let coarse = value_noise(&mut rng, TEX_H, TEX_W, cell);
            let fine = value_noise(&mut rng, TEX_H, TEX_W, (cell / 2).max(3));
            Array3::from_shape_fn((TEX_H, TEX_W, 3), |(y, x, c)| {
                let t = 0.7 * coarse[[y, x]] + 0.3 * fine[[y, x]];
                c0[c] * (1.0 - t) + c1[c] * t
            })
        }
        _ => {
            // Gradient with a noise overlay.
            let cell = rng.random_range(6..14usize);
            let noise = value_noise(&mut rng, TEX_H, TEX_W, cell);
            Array3::from_shape_fn((TEX_H, TEX_W, 3), |(y, x, c)| {
                let t = x as f64 / TEX_W as f64;
                let base = c0[c] * (1.0 - t) + c1[c] * t;
                (base * 0.8 + 0.2 * noise[[y, x]]).clamp(0.0, 1.0)
            })
        }
    };
    BackgroundAsset {
        name: format!("procedural-{index}"),
        data,
    }
}

/// Deterministic catalog of `count` procedural textures.
pub fn procedural_backgrounds(catalog_seed: u64, count: usize) -> Vec<BackgroundAsset> {
    (0..count)
        .map(|i| procedural_texture(derive_seed(catalog_seed, i as u64), i))
        .collect()
}

/// Load every PNG in a directory (sorted); each must be strictly larger than
/// the 128x32 canvas.
pub fn load_background_dir(dir: &Path) -> Result<Vec<BackgroundAsset>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::config(format!("cannot read background dir {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::config(format!(
            "background dir {} contains no .png images",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            let img = Image::load_png(p)?;
            let (h, w) = (img.height(), img.width());
            if h <= HEIGHT || w <= WIDTH {
                return Err(Error::config(format!(
                    "background {} is {w}x{h}; must exceed {WIDTH}x{HEIGHT}",
                    p.display()
                )));
            }
            Ok(BackgroundAsset {
                name: p.file_name().unwrap().to_string_lossy().into_owned(),
                data: img.into_array(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn procedural_catalog_is_deterministic() {
        let a = procedural_backgrounds(5, 8);
        let b = procedural_backgrounds(5, 8);
        assert_eq!(a.len(), 8);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.data, y.data);
        }
        let c = procedural_backgrounds(6, 8);
        assert_ne!(a[0].data, c[0].data);
    }

    #[test]
    fn textures_are_in_range_and_large_enough() {
        for asset in procedural_backgrounds(1, 8) {
            let (h, w) = asset.size();
            assert!(h > HEIGHT && w > WIDTH);
            assert!(asset.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn crop_bounds_are_enforced() {
        let asset = &procedural_backgrounds(2, 1)[0];
        assert!(asset.crop_to_canvas((0, 0, 128, 32)).is_ok());
        assert!(asset.crop_to_canvas((100, 0, 128, 32)).is_err());
        assert!(asset.crop_to_canvas((0, 0, 0, 32)).is_err());
    }
}
