//! Inference entry points: recognition, editing, removal, and feature export
//! for disentanglement visualization.

pub mod pca;

use ndarray::Array2;

use crate::error::Result;
use crate::image::{unpatchify, Image};
use crate::model::mtd::TextPrompt;
use crate::model::Model;
use crate::par;
use crate::scalar::Scalar;
use crate::vocab;

/// Greedy recognition: per-position argmax, stopping at the first `[E]`.
/// Confidence is the geometric mean of the chosen-class probabilities.
pub fn recognize<F: Scalar>(image: &Image, model: &Model<F>) -> Result<(String, f64)> {
    let patches = model.image_to_patches(image)?;
    let (ft, _) = model.encode(&patches)?;
    let (_, logits, _) = model.dib_forward(&ft.f_c);
    let logits_f64 = logits.mapv(|v| v.into_f64());
    Ok(vocab::decode_greedy(&logits_f64))
}

/// Recognize a batch, preserving order.
pub fn recognize_batch<F: Scalar>(images: &[Image], model: &Model<F>) -> Result<Vec<(String, f64)>> {
    par::map_slice(images, |img| recognize(img, model))
        .into_iter()
        .collect()
}

/// Render `target_text` in the style of `image`: the text-rendering head's
/// output for the image's own features under the new prompt.
pub fn edit<F: Scalar>(image: &Image, target_text: &str, model: &Model<F>) -> Result<Image> {
    vocab::validate_text(target_text, model.cfg.max_text_len - 2)?;
    let prompt = TextPrompt::for_text(target_text, model.cfg.max_text_len)?;
    generate(image, &prompt, model, Head::Render)
}

/// Reconstruct the text-free background: the background head's output under
/// the removal prompt `[B][E][P][P]...`.
pub fn remove<F: Scalar>(image: &Image, model: &Model<F>) -> Result<Image> {
    let prompt = TextPrompt::removal(model.cfg.max_text_len);
    generate(image, &prompt, model, Head::Background)
}

enum Head {
    Render,
    Background,
}

fn generate<F: Scalar>(
    image: &Image,
    prompt: &TextPrompt,
    model: &Model<F>,
    head: Head,
) -> Result<Image> {
    let patches = model.image_to_patches(image)?;
    let (ft, _) = model.encode(&patches)?;
    let (layers, _, _) = model.dib_forward(&ft.f_c);
    let (tokens, _) = model.geb_forward(prompt, &ft.f_s, &ft.f_c, &layers)?;
    let rows = match head {
        Head::Render => model.render_head.forward(&tokens, None).0,
        Head::Background => model.bg_head.forward(&tokens, Some(&patches)).0,
    };
    Ok(unpatchify(
        &rows.view(),
        model.cfg.img_h,
        model.cfg.img_w,
        model.cfg.patch,
    ))
}

/// Flattened style/content features for a set of images plus their 2-D PCA
/// projections (computed per feature type).
pub struct FeatureExport {
    /// `n x (L/2 * D)` flattened style features.
    pub style: Array2<f64>,
    /// `n x (L/2 * D)` flattened content features.
    pub content: Array2<f64>,
    pub style_proj: Array2<f64>,
    pub content_proj: Array2<f64>,
    pub style_variances: [f64; 2],
    pub content_variances: [f64; 2],
}

pub fn export_features<F: Scalar>(images: &[Image], model: &Model<F>) -> Result<FeatureExport> {
    if images.is_empty() {
        return Err(crate::error::Error::validation(
            "export_features needs at least one image",
        ));
    }
    let feats: Vec<Result<(Vec<f64>, Vec<f64>)>> = par::map_slice(images, |img| {
        let patches = model.image_to_patches(img)?;
        let (ft, _) = model.encode(&patches)?;
        let s: Vec<f64> = ft.f_s.iter().map(|v| v.into_f64()).collect();
        let c: Vec<f64> = ft.f_c.iter().map(|v| v.into_f64()).collect();
        Ok((s, c))
    });
    let n = images.len();
    let mut style = Array2::zeros((n, 0));
    let mut content = Array2::zeros((n, 0));
    for (i, r) in feats.into_iter().enumerate() {
        let (s, c) = r?;
        if i == 0 {
            style = Array2::zeros((n, s.len()));
            content = Array2::zeros((n, c.len()));
        }
        for (j, v) in s.into_iter().enumerate() {
            style[[i, j]] = v;
        }
        for (j, v) in c.into_iter().enumerate() {
            content[[i, j]] = v;
        }
    }
    let (style_proj, style_variances) = pca::pca_2d(&style)?;
    let (content_proj, content_variances) = pca::pca_2d(&content)?;
    Ok(FeatureExport {
        style,
        content,
        style_proj,
        content_proj,
        style_variances,
        content_variances,
    })
}

impl FeatureExport {
    /// CSV with one row per image: id and the first two components per
    /// feature type.
    pub fn to_csv(&self, ids: &[String]) -> String {
        let mut out = String::from("image_id,style_pc1,style_pc2,content_pc1,content_pc2\n");
        for (i, id) in ids.iter().enumerate() {
            out.push_str(&format!(
                "{id},{},{},{},{}\n",
                self.style_proj[[i, 0]],
                self.style_proj[[i, 1]],
                self.content_proj[[i, 0]],
                self.content_proj[[i, 1]],
            ));
        }
        out
    }
}
