//! Procedural synthesis of style-identical / content-different scene-text
//! image pairs with text-free background ground truth.
//!
//! A [`StyleSpec`] plus a text string and a degradation seed fully determine
//! a render: layout and glyph scaling are deterministic, the rotation +
//! perspective warp is resampled analytically, and the blur/noise
//! degradations are driven by the shared seed so both members of a pair (and
//! their text-free background) receive bit-identical treatment. Final pixels
//! are quantized to the 8-bit grid, making PNG round trips exact.

pub mod background;
pub mod dataset;
pub mod font;
pub mod lexicon;

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, HEIGHT, WIDTH};
use crate::rng::{derive_seed, rng_from};
use background::BackgroundAsset;
use font::BitmapFont;

/// Maximum characters per rendered text, leaving room for the begin/end
/// symbols in the default decoder budget (T = 26).
pub const MAX_TEXT_CHARS: usize = 24;

/// Complete set of rendering parameters shared by an image pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleSpec {
    pub font_id: usize,
    pub font_size_px: u32,
    pub fill_color: [u8; 3],
    pub stroke_color: Option<[u8; 3]>,
    /// Text tilt in degrees, within [-15, 15].
    pub rotation_deg: f64,
    /// Gaussian blur sigma in pixels, >= 0.
    pub blur_sigma: f64,
    /// Additive Gaussian noise sigma on the [0, 1] pixel scale, >= 0.
    pub noise_std: f64,
    pub background_id: usize,
    /// `(x, y, w, h)` crop of the background asset, resized to the canvas.
    pub background_crop: (u32, u32, u32, u32),
    /// Per-corner pixel offsets applied to the rotated text box
    /// (top-left, top-right, bottom-right, bottom-left).
    pub perspective_jitter: [[f64; 2]; 4],
}

impl StyleSpec {
    pub fn validate(&self, catalog: &AssetCatalog) -> Result<()> {
        if self.font_id >= catalog.fonts.len() {
            return Err(Error::validation(format!(
                "font_id {} out of range ({} fonts)",
                self.font_id,
                catalog.fonts.len()
            )));
        }
        if self.background_id >= catalog.backgrounds.len() {
            return Err(Error::validation(format!(
                "background_id {} out of range ({} backgrounds)",
                self.background_id,
                catalog.backgrounds.len()
            )));
        }
        if !(-15.0..=15.0).contains(&self.rotation_deg) {
            return Err(Error::validation(format!(
                "rotation {} outside [-15, 15]",
                self.rotation_deg
            )));
        }
        if self.blur_sigma < 0.0 || !self.blur_sigma.is_finite() {
            return Err(Error::validation("blur_sigma must be finite and >= 0"));
        }
        if self.noise_std < 0.0 || !self.noise_std.is_finite() {
            return Err(Error::validation("noise_std must be finite and >= 0"));
        }
        if self.font_size_px == 0 {
            return Err(Error::validation("font_size_px must be positive"));
        }
        for corner in &self.perspective_jitter {
            if corner.iter().any(|v| !v.is_finite() || v.abs() > 8.0) {
                return Err(Error::validation("perspective jitter outside [-8, 8]"));
            }
        }
        // Crop bounds are checked against the actual asset.
        let (bh, bw) = catalog.backgrounds[self.background_id].size();
        let (x, y, w, h) = self.background_crop;
        if w == 0 || h == 0 || (x + w) as usize > bw || (y + h) as usize > bh {
            return Err(Error::validation(format!(
                "background crop ({x},{y},{w},{h}) outside {bw}x{bh} asset"
            )));
        }
        Ok(())
    }
}

/// Sampler distribution bounds. The `default` profile exercises the full
/// degradation ranges; `clean` keeps renders mild for small training runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthProfile {
    pub font_size: (u32, u32),
    pub rotation_max_deg: f64,
    pub blur_max: f64,
    pub noise_max: f64,
    pub stroke_prob: f64,
    pub jitter_max: f64,
}

impl Default for SynthProfile {
    fn default() -> Self {
        SynthProfile {
            font_size: (14, 26),
            rotation_max_deg: 15.0,
            blur_max: 1.5,
            noise_max: 0.08,
            stroke_prob: 0.35,
            jitter_max: 2.0,
        }
    }
}

impl SynthProfile {
    pub fn clean() -> Self {
        SynthProfile {
            font_size: (16, 24),
            rotation_max_deg: 6.0,
            blur_max: 0.5,
            noise_max: 0.02,
            stroke_prob: 0.2,
            jitter_max: 1.0,
        }
    }
}

/// Fonts, backgrounds, and the sampler profile.
#[derive(Debug, Clone)]
pub struct AssetCatalog {
    pub fonts: Vec<BitmapFont>,
    pub backgrounds: Vec<BackgroundAsset>,
    pub profile: SynthProfile,
}

/// Seed for the default procedural background catalog; fixed so that the
/// built-in catalog is stable across runs.
const CATALOG_BG_SEED: u64 = 0x5ce9_e7a1;
const CATALOG_BG_COUNT: usize = 48;

impl AssetCatalog {
    /// Built-in fonts and procedural backgrounds with the default profile.
    pub fn builtin() -> Self {
        AssetCatalog {
            fonts: font::builtin_fonts(),
            backgrounds: background::procedural_backgrounds(CATALOG_BG_SEED, CATALOG_BG_COUNT),
            profile: SynthProfile::default(),
        }
    }

    pub fn with_profile(mut self, profile: SynthProfile) -> Self {
        self.profile = profile;
        self
    }

    fn check_non_empty(&self) -> Result<()> {
        if self.fonts.is_empty() {
            return Err(Error::config("asset catalog has no fonts"));
        }
        if self.backgrounds.is_empty() {
            return Err(Error::config("asset catalog has no backgrounds"));
        }
        Ok(())
    }
}

/// Two renders of the same style plus the shared text-free background.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub image_a: Image,
    pub image_b: Image,
    pub text_a: String,
    pub text_b: String,
    pub background: Image,
    pub style: StyleSpec,
    /// Degradation seed shared by both renders.
    pub seed: u64,
}

/// Render output: the composited image, the text-free background under the
/// identical degradations, and the text coverage mask (pre-blur).
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: Image,
    pub background: Image,
    pub alpha: Array2<f64>,
}

impl RenderOutput {
    /// Tight bounding box of nonzero text coverage as `(y0, x0, y1, x1)`
    /// (exclusive upper bounds), or `None` for an empty mask.
    pub fn glyph_bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for ((y, x), &a) in self.alpha.indexed_iter() {
            if a > 0.0 {
                let b = bbox.get_or_insert((y, x, y + 1, x + 1));
                b.0 = b.0.min(y);
                b.1 = b.1.min(x);
                b.2 = b.2.max(y + 1);
                b.3 = b.3.max(x + 1);
            }
        }
        bbox
    }
}

fn luminance_of(rgb: [f64; 3]) -> f64 {
    0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
}

fn color_to_f64(c: [u8; 3]) -> [f64; 3] {
    [
        f64::from(c[0]) / 255.0,
        f64::from(c[1]) / 255.0,
        f64::from(c[2]) / 255.0,
    ]
}

/// Draw a style whose fields all lie inside their declared ranges.
/// Deterministic in `rng_seed` for a fixed catalog.
pub fn sample_style(rng_seed: u64, catalog: &AssetCatalog) -> Result<StyleSpec> {
    catalog.check_non_empty()?;
    let p = &catalog.profile;
    let mut rng = rng_from(rng_seed);

    let font_id = rng.random_range(0..catalog.fonts.len());
    let font_size_px = rng.random_range(p.font_size.0..=p.font_size.1);

    let background_id = rng.random_range(0..catalog.backgrounds.len());
    let asset = &catalog.backgrounds[background_id];
    let (bh, bw) = asset.size();
    let max_w = (bw as u32).min((WIDTH as f64 * 1.5) as u32);
    let max_h = (bh as u32).min((HEIGHT as f64 * 1.5) as u32);
    let w = rng.random_range(WIDTH as u32..=max_w);
    let h = rng.random_range(HEIGHT as u32..=max_h);
    let x = rng.random_range(0..=(bw as u32 - w));
    let y = rng.random_range(0..=(bh as u32 - h));
    let background_crop = (x, y, w, h);

    // Fill color must contrast with the cropped background region.
    let crop = asset.crop_to_canvas(background_crop)?;
    let bg_lum = crop.iter().sum::<f64>() / crop.len() as f64;
    let mut fill_color = [0u8; 3];
    let mut found = false;
    for _ in 0..16 {
        let c = [rng.random::<u8>(), rng.random::<u8>(), rng.random::<u8>()];
        if (luminance_of(color_to_f64(c)) - bg_lum).abs() >= 0.35 {
            fill_color = c;
            found = true;
            break;
        }
    }
    if !found {
        fill_color = if bg_lum > 0.5 { [8, 8, 16] } else { [250, 250, 240] };
    }

    let stroke_color = if rng.random::<f64>() < p.stroke_prob {
        let fill_lum = luminance_of(color_to_f64(fill_color));
        let mut c = [rng.random::<u8>(), rng.random::<u8>(), rng.random::<u8>()];
        if (luminance_of(color_to_f64(c)) - fill_lum).abs() < 0.2 {
            c = if fill_lum > 0.5 { [10, 10, 10] } else { [245, 245, 245] };
        }
        Some(c)
    } else {
        None
    };

    let rotation_deg = rng.random_range(-p.rotation_max_deg..=p.rotation_max_deg);
    let blur_sigma = rng.random_range(0.0..=p.blur_max);
    let noise_std = rng.random_range(0.0..=p.noise_max);
    let mut perspective_jitter = [[0.0; 2]; 4];
    for corner in perspective_jitter.iter_mut() {
        corner[0] = rng.random_range(-p.jitter_max..=p.jitter_max);
        corner[1] = rng.random_range(-p.jitter_max..=p.jitter_max);
    }

    let style = StyleSpec {
        font_id,
        font_size_px,
        fill_color,
        stroke_color,
        rotation_deg,
        blur_sigma,
        noise_std,
        background_id,
        background_crop,
        perspective_jitter,
    };
    style.validate(catalog)?;
    Ok(style)
}

/// Solve the homography mapping each `src[i]` to `dst[i]` (4 correspondences,
/// Gaussian elimination with partial pivoting). Returns row-major 3x3.
fn solve_homography(src: &[[f64; 2]; 4], dst: &[[f64; 2]; 4]) -> Result<[f64; 9]> {
    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let (x, y) = (src[i][0], src[i][1]);
        let (u, v) = (dst[i][0], dst[i][1]);
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
    }
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::numeric("degenerate text quad"));
        }
        a.swap(col, pivot);
        let diag = a[col][col];
        for k in col..9 {
            a[col][k] /= diag;
        }
        for row in 0..8 {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for k in col..9 {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    Ok([
        a[0][8], a[1][8], a[2][8], a[3][8], a[4][8], a[5][8], a[6][8], a[7][8], 1.0,
    ])
}

fn apply_homography(h: &[f64; 9], x: f64, y: f64) -> (f64, f64) {
    let w = h[6] * x + h[7] * y + h[8];
    ((h[0] * x + h[1] * y + h[2]) / w, (h[3] * x + h[4] * y + h[5]) / w)
}

fn bilinear_mask(mask: &Array2<f64>, y: f64, x: f64) -> f64 {
    let (h, w) = mask.dim();
    if y <= -1.0 || x <= -1.0 || y >= h as f64 || x >= w as f64 {
        return 0.0;
    }
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let get = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
            0.0
        } else {
            mask[[yy as usize, xx as usize]]
        }
    };
    get(y0, x0) * (1.0 - fy) * (1.0 - fx)
        + get(y0, x0 + 1.0) * (1.0 - fy) * fx
        + get(y0 + 1.0, x0) * fy * (1.0 - fx)
        + get(y0 + 1.0, x0 + 1.0) * fy * fx
}

/// Rasterize `text` into a base-resolution coverage mask.
fn layout_mask(font: &BitmapFont, text: &str) -> Result<Array2<f64>> {
    if let Some(c) = text.chars().find(|&c| !font.has_glyph(c)) {
        return Err(Error::validation(format!(
            "font {:?} is missing a glyph for character {c:?}",
            font.name
        )));
    }
    let n = text.chars().count();
    let gap = 1usize;
    let w = n * font.glyph_w + (n - 1) * gap;
    let mut mask = Array2::zeros((font.glyph_h, w));
    for (i, c) in text.chars().enumerate() {
        let glyph = font.glyph(c).expect("checked");
        let x0 = i * (font.glyph_w + gap);
        for y in 0..font.glyph_h {
            for x in 0..font.glyph_w {
                if glyph[y * font.glyph_w + x] {
                    mask[[y, x0 + x]] = 1.0;
                }
            }
        }
    }
    Ok(mask)
}

fn separable_gaussian_blur(data: &mut Array3<f64>, sigma: f64) {
    if sigma < 0.05 {
        return;
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * r + 1) as usize);
    let mut sum = 0.0;
    for d in -r..=r {
        let v = (-((d * d) as f64) / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in kernel.iter_mut() {
        *v /= sum;
    }
    let (h, w, _) = data.dim();
    let mut tmp = data.clone();
    // Horizontal pass (clamped edges).
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (ki, d) in (-r..=r).enumerate() {
                    let xs = (x as isize + d).clamp(0, w as isize - 1) as usize;
                    acc += kernel[ki] * data[[y, xs, c]];
                }
                tmp[[y, x, c]] = acc;
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (ki, d) in (-r..=r).enumerate() {
                    let ys = (y as isize + d).clamp(0, h as isize - 1) as usize;
                    acc += kernel[ki] * tmp[[ys, x, c]];
                }
                data[[y, x, c]] = acc;
            }
        }
    }
}

/// Render `text` with `style`, returning the composited image and the
/// identically-degraded text-free background. Deterministic: the same
/// `(style, text, seed)` produces bit-identical output.
pub fn render(
    style: &StyleSpec,
    text: &str,
    seed: u64,
    catalog: &AssetCatalog,
) -> Result<RenderOutput> {
    crate::vocab::validate_text(text, MAX_TEXT_CHARS)?;
    style.validate(catalog)?;
    let font = &catalog.fonts[style.font_id];
    let asset = &catalog.backgrounds[style.background_id];

    let bg = asset.crop_to_canvas(style.background_crop)?;
    let base_mask = layout_mask(font, text)?;

    // Scale so the rotated, jittered text box fits inside the canvas.
    let (mh, mw) = base_mask.dim();
    let theta = style.rotation_deg.to_radians();
    let (sin, cos) = (theta.sin().abs(), theta.cos().abs());
    let jmax = style
        .perspective_jitter
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let fit_w = (WIDTH as f64 - 4.0 - 2.0 * jmax) / (mw as f64 * cos + mh as f64 * sin);
    let fit_h = (HEIGHT as f64 - 2.0 - 2.0 * jmax) / (mw as f64 * sin + mh as f64 * cos);
    let scale = (style.font_size_px as f64 / font.glyph_h as f64)
        .min(fit_w)
        .min(fit_h)
        .max(0.25);

    // Scaled text box corners, rotated about the box center, moved to the
    // canvas center, plus per-corner jitter.
    let (w_m, h_m) = (mw as f64 * scale, mh as f64 * scale);
    let rect = [[0.0, 0.0], [w_m, 0.0], [w_m, h_m], [0.0, h_m]];
    let (cx, cy) = (w_m / 2.0, h_m / 2.0);
    let (canvas_cx, canvas_cy) = (WIDTH as f64 / 2.0, HEIGHT as f64 / 2.0);
    let mut quad = [[0.0f64; 2]; 4];
    for (i, corner) in rect.iter().enumerate() {
        let (dx, dy) = (corner[0] - cx, corner[1] - cy);
        let rx = dx * theta.cos() - dy * theta.sin();
        let ry = dx * theta.sin() + dy * theta.cos();
        quad[i] = [
            rx + canvas_cx + style.perspective_jitter[i][0],
            ry + canvas_cy + style.perspective_jitter[i][1],
        ];
    }
    // Canvas -> scaled-rect mapping for inverse sampling.
    let h_inv = solve_homography(&quad, &rect)?;

    let x_min = quad.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let x_max =
        (quad.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(WIDTH - 1);
    let y_min = quad.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let y_max =
        (quad.iter().map(|c| c[1]).fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(HEIGHT - 1);

    let mut alpha = Array2::zeros((HEIGHT, WIDTH));
    for y in y_min..=y_max {
        for x in x_min..=x_max {
            let (u, v) = apply_homography(&h_inv, x as f64 + 0.5, y as f64 + 0.5);
            if u >= -0.5 && u <= w_m + 0.5 && v >= -0.5 && v <= h_m + 0.5 {
                let a = bilinear_mask(&base_mask, v / scale - 0.5, u / scale - 0.5);
                if a > 0.0 {
                    alpha[[y, x]] = a.min(1.0);
                }
            }
        }
    }

    // Composite: optional stroke ring under the fill.
    let mut img = bg.clone();
    if let Some(stroke) = style.stroke_color {
        let sc = color_to_f64(stroke);
        let mut ring = Array2::zeros((HEIGHT, WIDTH));
        for y in 0..HEIGHT {
            for x in 0..WIDTH {
                let mut m: f64 = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let yy = y as i64 + dy;
                        let xx = x as i64 + dx;
                        if yy >= 0 && xx >= 0 && (yy as usize) < HEIGHT && (xx as usize) < WIDTH {
                            m = m.max(alpha[[yy as usize, xx as usize]]);
                        }
                    }
                }
                ring[[y, x]] = (m - alpha[[y, x]]).max(0.0);
            }
        }
        for y in 0..HEIGHT {
            for x in 0..WIDTH {
                let r = ring[[y, x]];
                if r > 0.0 {
                    for c in 0..3 {
                        img[[y, x, c]] = img[[y, x, c]] * (1.0 - r) + sc[c] * r;
                    }
                }
            }
        }
    }
    let fc = color_to_f64(style.fill_color);
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let a = alpha[[y, x]];
            if a > 0.0 {
                for c in 0..3 {
                    img[[y, x, c]] = img[[y, x, c]] * (1.0 - a) + fc[c] * a;
                }
            }
        }
    }

    // Degradations, identical for image and background: blur, then shared
    // noise, then clip and 8-bit quantization.
    let mut bg_out = bg;
    separable_gaussian_blur(&mut img, style.blur_sigma);
    separable_gaussian_blur(&mut bg_out, style.blur_sigma);
    if style.noise_std > 0.0 {
        let mut rng = rng_from(seed);
        let noise = Array3::from_shape_fn((HEIGHT, WIDTH, 3), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * style.noise_std
        });
        img += &noise;
        bg_out += &noise;
    }
    let mut image = Image::from_array(img)?;
    let mut background = Image::from_array(bg_out)?;
    image.quantize_u8();
    background.quantize_u8();
    Ok(RenderOutput {
        image,
        background,
        alpha,
    })
}

/// Sample a style, draw two distinct lexicon words, and render both with the
/// same style and degradation seed.
pub fn make_pair(rng_seed: u64, lexicon: &[String], catalog: &AssetCatalog) -> Result<PairSample> {
    catalog.check_non_empty()?;
    let mut distinct: Vec<&String> = Vec::new();
    {
        let mut seen = std::collections::HashSet::new();
        for w in lexicon {
            if seen.insert(w) {
                distinct.push(w);
            }
        }
    }
    if distinct.len() < 2 {
        return Err(Error::config(format!(
            "lexicon needs at least 2 distinct words, got {}",
            distinct.len()
        )));
    }
    let style = sample_style(derive_seed(rng_seed, 0), catalog)?;
    let mut rng = rng_from(derive_seed(rng_seed, 1));
    let ia = rng.random_range(0..distinct.len());
    let mut ib = rng.random_range(0..distinct.len() - 1);
    if ib >= ia {
        ib += 1;
    }
    let text_a = distinct[ia].clone();
    let text_b = distinct[ib].clone();
    let seed = derive_seed(rng_seed, 2);

    let out_a = render(&style, &text_a, seed, catalog)?;
    let out_b = render(&style, &text_b, seed, catalog)?;
    debug_assert_eq!(out_a.background, out_b.background);
    Ok(PairSample {
        image_a: out_a.image,
        image_b: out_b.image,
        text_a,
        text_b,
        background: out_a.background,
        style,
        seed,
    })
}

/// Generate `count` pairs in memory, one derived seed per pair id (parallel,
/// order-stable).
pub fn generate_pairs(
    master_seed: u64,
    count: usize,
    lexicon: &[String],
    catalog: &AssetCatalog,
) -> Result<Vec<PairSample>> {
    let results = crate::par::map_range(count, |i| {
        make_pair(derive_seed(master_seed, i as u64), lexicon, catalog)
    });
    results.into_iter().collect()
}
