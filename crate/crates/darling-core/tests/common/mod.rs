//! Shared helpers for the integration suites: toy models, gradient-check
//! runs over every hand-derived backward pass, and small dataset builders.

use darling_core::gradcheck::{check_input_grad, check_param_grads, random_array, GradCheckSummary};
use darling_core::image::Image;
use darling_core::model::mtd::{gated_inject, gated_inject_backward, StrHead, TextPrompt};
use darling_core::model::{Model, ModelConfig};
use darling_core::nn::block::Block;
use darling_core::rng::rng_from;
use darling_core::synth::{AssetCatalog, PairSample, SynthProfile};
use darling_core::train::{self, PreparedPair, TrainConfig};
use ndarray::Array2;

/// Step for single-component checks (the stated verification setting).
pub const GRAD_STEP: f64 = 1e-3;
/// Finer step for deep composite objectives, where the finite-difference
/// oracle's own h^2 truncation at 1e-3 would exceed the tolerance.
pub const GRAD_STEP_FINE: f64 = 1e-4;
pub const GRAD_REL_TOL: f64 = 1e-4;
pub const GRAD_ABS_TOL: f64 = 1e-7;

/// Toy geometry from the verification plan: D = 8, L = 4 tokens, T = 3.
pub fn toy_config() -> ModelConfig {
    ModelConfig {
        dim: 8,
        heads: 2,
        backbone_depth: 1,
        decouple_depth: 1,
        decoder_depth: 2,
        max_text_len: 3,
        img_h: 4,
        img_w: 16,
        patch: 4,
        ffn_expansion: 2,
        ..Default::default()
    }
}

pub fn toy_image(seed: u64, h: usize, w: usize) -> Image {
    let mut rng = rng_from(seed);
    // Pixels well inside (0, 1) keep the background head's clip inactive, so
    // central differences see a smooth objective.
    Image::from_array(ndarray::Array3::from_shape_fn((h, w, 3), |_| {
        rand::Rng::random::<f64>(&mut rng) * 0.4 + 0.3
    }))
    .unwrap()
}

fn weighted_sum(out: &Array2<f64>, weights: &Array2<f64>) -> f64 {
    out.iter().zip(weights.iter()).map(|(a, b)| a * b).sum()
}

fn block_params(b: &mut Block<f64>) -> Vec<(String, &mut Array2<f64>)> {
    let mut v = Vec::new();
    b.params_mut("block", &mut v);
    v
}

fn model_params(m: &mut Model<f64>) -> Vec<(String, &mut Array2<f64>)> {
    m.named_params_mut()
}

fn str_head_params(h: &mut StrHead<f64>) -> Vec<(String, &mut Array2<f64>)> {
    let mut v = Vec::new();
    h.params_mut("str", &mut v);
    v
}

/// Transformer block (the backbone/decoupling unit): parameters and input.
pub fn check_backbone_block(step: f64) -> GradCheckSummary {
    let mut rng = rng_from(41);
    let mut block: Block<f64> = Block::new(&mut rng, 8, 2, 2);
    let x = random_array(&mut rng, 4, 8);
    let weights = random_array(&mut rng, 4, 8);

    let (_, cache) = block.forward(&x);
    let (dx, grads) = block.backward(&cache, &weights);
    let mut named = Vec::new();
    grads.params("block", &mut named);
    let analytic: Vec<(String, Array2<f64>)> =
        named.into_iter().map(|(n, a)| (n, a.clone())).collect();

    let w_eval = weights.clone();
    let x_eval = x.clone();
    let mut summary = check_param_grads(
        &mut block,
        block_params,
        &analytic,
        move |b| weighted_sum(&b.forward(&x_eval).0, &w_eval),
        step,
        400,
        7,
    );
    let mut x_in = x.clone();
    let input = check_input_grad(
        &mut x_in,
        &dx,
        |xi| weighted_sum(&block.forward(xi).0, &weights),
        step,
        400,
        8,
    );
    summary.max_rel_err = summary.max_rel_err.max(input.max_rel_err);
    summary.max_abs_err_small = summary.max_abs_err_small.max(input.max_abs_err_small);
    summary.entries_checked += input.entries_checked;
    summary
}

/// Decoupling block: the model's own decoupling unit, checked in isolation
/// with the row split applied to its output.
pub fn check_decouple_block(step: f64) -> GradCheckSummary {
    let model: Model<f64> = Model::new(toy_config(), 51).unwrap();
    let mut block = model.decouple[0].clone();
    let mut rng = rng_from(52);
    let x = random_array(&mut rng, 4, 8);
    // Separate weights for the style and content halves of the output.
    let w_s = random_array(&mut rng, 2, 8);
    let w_c = random_array(&mut rng, 2, 8);

    let objective = |b: &Block<f64>| -> f64 {
        let out = b.forward(&x).0;
        weighted_sum(&out.slice(ndarray::s![..2, ..]).to_owned(), &w_s)
            + weighted_sum(&out.slice(ndarray::s![2.., ..]).to_owned(), &w_c)
    };
    let (_, cache) = block.forward(&x);
    let mut d_out = Array2::zeros((4, 8));
    d_out.slice_mut(ndarray::s![..2, ..]).assign(&w_s);
    d_out.slice_mut(ndarray::s![2.., ..]).assign(&w_c);
    let (_, grads) = block.backward(&cache, &d_out);
    let mut named = Vec::new();
    grads.params("block", &mut named);
    let analytic: Vec<(String, Array2<f64>)> =
        named.into_iter().map(|(n, a)| (n, a.clone())).collect();

    check_param_grads(&mut block, block_params, &analytic, objective, step, 400, 53)
}

/// Full encoder (patch embed + backbone + decoupling split).
pub fn check_encoder(step: f64) -> GradCheckSummary {
    let mut model: Model<f64> = Model::new(toy_config(), 11).unwrap();
    let img = toy_image(5, 4, 16);
    let patches = model.image_to_patches(&img).unwrap();
    let mut rng = rng_from(42);
    let w_s = random_array(&mut rng, 2, 8);
    let w_c = random_array(&mut rng, 2, 8);

    let (_, cache) = model.encode(&patches).unwrap();
    let mut grads = model.zeroed_like();
    model.encode_backward(&cache, &w_s, &w_c, &mut grads);
    let analytic: Vec<(String, Array2<f64>)> = grads
        .named_params()
        .into_iter()
        .map(|(n, a)| (n, a.clone()))
        .collect();

    check_param_grads(
        &mut model,
        model_params,
        &analytic,
        move |m| {
            let (ft, _) = m.encode(&patches).unwrap();
            weighted_sum(&ft.f_s, &w_s) + weighted_sum(&ft.f_c, &w_c)
        },
        step,
        48,
        9,
    )
}

/// DIB stack + STR head, checked through the model's dib path.
pub fn check_dib_head(step: f64) -> GradCheckSummary {
    let mut rng = rng_from(43);
    let mut head: StrHead<f64> = StrHead::new(&mut rng, 3, 8, 98, true);
    let f_c = random_array(&mut rng, 2, 8);
    let weights = random_array(&mut rng, 3, 98);

    let (_, cache) = head.forward(&f_c);
    let (d_in, grads) = head.backward(&cache, &weights);
    let mut named = Vec::new();
    grads.params("str", &mut named);
    let analytic: Vec<(String, Array2<f64>)> =
        named.into_iter().map(|(n, a)| (n, a.clone())).collect();

    let f_eval = f_c.clone();
    let w_eval = weights.clone();
    let mut summary = check_param_grads(
        &mut head,
        str_head_params,
        &analytic,
        move |h| weighted_sum(&h.forward(&f_eval).0, &w_eval),
        step,
        300,
        10,
    );
    let mut f_in = f_c.clone();
    let input = check_input_grad(
        &mut f_in,
        &d_in,
        |fi| weighted_sum(&head.forward(fi).0, &weights),
        step,
        400,
        11,
    );
    summary.max_rel_err = summary.max_rel_err.max(input.max_rel_err);
    summary.max_abs_err_small = summary.max_abs_err_small.max(input.max_abs_err_small);
    summary.entries_checked += input.entries_checked;
    summary
}

/// Gated injection: both feature inputs and the gate projection.
pub fn check_gated_injection(step: f64) -> GradCheckSummary {
    let mut rng = rng_from(44);
    let f_hat = random_array(&mut rng, 2, 8);
    let f_c = random_array(&mut rng, 2, 8);
    let w_g = random_array(&mut rng, 8, 1);
    let weights = random_array(&mut rng, 2, 8);

    let (_, g) = gated_inject(&f_hat, &f_c, &w_g).unwrap();
    let (d_hat, d_c, d_wg) = gated_inject_backward(&f_hat, &f_c, &w_g, &g, &weights);

    let eval = |fh: &Array2<f64>, fc: &Array2<f64>, wg: &Array2<f64>| -> f64 {
        weighted_sum(&gated_inject(fh, fc, wg).unwrap().0, &weights)
    };
    let mut worst = GradCheckSummary {
        max_rel_err: 0.0,
        max_abs_err_small: 0.0,
        entries_checked: 0,
        worst: None,
    };
    let mut fold = |s: GradCheckSummary| {
        worst.max_rel_err = worst.max_rel_err.max(s.max_rel_err);
        worst.max_abs_err_small = worst.max_abs_err_small.max(s.max_abs_err_small);
        worst.entries_checked += s.entries_checked;
        if worst.worst.is_none() {
            worst.worst = s.worst;
        }
    };
    let mut a = f_hat.clone();
    fold(check_input_grad(&mut a, &d_hat, |x| eval(x, &f_c, &w_g), step, 400, 12));
    let mut b = f_c.clone();
    fold(check_input_grad(&mut b, &d_c, |x| eval(&f_hat, x, &w_g), step, 400, 13));
    let mut w = w_g.clone();
    fold(check_input_grad(&mut w, &d_wg, |x| eval(&f_hat, &f_c, x), step, 400, 14));
    worst
}

/// Both image heads (residual background head and sigmoid rendering head).
pub fn check_image_heads(step: f64) -> GradCheckSummary {
    let mut model: Model<f64> = Model::new(toy_config(), 15).unwrap();
    // Small output weights keep the residual sum inside (0, 1): no clipping,
    // so the objective stays smooth for finite differences.
    model.bg_head.out.w.mapv_inplace(|v| v * 0.1);
    let mut rng = rng_from(45);
    let tokens = random_array(&mut rng, 7, 8);
    let base = Array2::from_elem((4, 48), 0.5);
    let weights = random_array(&mut rng, 4, 48);

    let mut worst = GradCheckSummary {
        max_rel_err: 0.0,
        max_abs_err_small: 0.0,
        entries_checked: 0,
        worst: None,
    };

    for residual in [true, false] {
        let head = if residual {
            model.bg_head.clone()
        } else {
            model.render_head.clone()
        };
        let base_opt = residual.then_some(&base);
        let (_, cache) = head.forward(&tokens, base_opt);
        let (d_tokens, grads) = head.backward(&cache, &weights);
        let mut named = Vec::new();
        grads.params("head", &mut named);
        let analytic: Vec<(String, Array2<f64>)> =
            named.into_iter().map(|(n, a)| (n, a.clone())).collect();

        let mut head_mut = head.clone();
        fn head_params(
            h: &mut darling_core::model::mtd::ImageHead<f64>,
        ) -> Vec<(String, &mut Array2<f64>)> {
            let mut v = Vec::new();
            h.params_mut("head", &mut v);
            v
        }
        let tokens_eval = tokens.clone();
        let weights_eval = weights.clone();
        let base_local = base.clone();
        let summary = check_param_grads(
            &mut head_mut,
            head_params,
            &analytic,
            move |h| {
                let b = residual.then_some(&base_local);
                weighted_sum(&h.forward(&tokens_eval, b).0, &weights_eval)
            },
            step,
            200,
            16,
        );
        worst.max_rel_err = worst.max_rel_err.max(summary.max_rel_err);
        worst.max_abs_err_small = worst.max_abs_err_small.max(summary.max_abs_err_small);
        worst.entries_checked += summary.entries_checked;
        if worst.worst.is_none() {
            worst.worst = summary.worst;
        }

        let mut t_in = tokens.clone();
        let input = check_input_grad(
            &mut t_in,
            &d_tokens,
            |ti| weighted_sum(&head.forward(ti, base_opt).0, &weights),
            step,
            400,
            17,
        );
        worst.max_rel_err = worst.max_rel_err.max(input.max_rel_err);
        worst.max_abs_err_small = worst.max_abs_err_small.max(input.max_abs_err_small);
        worst.entries_checked += input.entries_checked;
    }
    worst
}

/// The complete pre-training objective for one pair: covers every module in
/// one scalar (encoder, DIB + head, GEB + gates, both image heads, prompt
/// embedding, all three losses).
pub fn check_full_objective(step: f64) -> GradCheckSummary {
    let mut model: Model<f64> = Model::new(toy_config(), 18).unwrap();
    // Keep the background head's residual sum strictly inside (0, 1).
    model.bg_head.out.w.mapv_inplace(|v| v * 0.05);

    let pair = PairSample {
        image_a: toy_image(21, 4, 16),
        image_b: toy_image(22, 4, 16),
        background: toy_image(23, 4, 16),
        text_a: "a".into(),
        text_b: "b".into(),
        style: sample_toy_style(),
        seed: 3,
    };
    let prepared: PreparedPair<f64> = train::prepare_pair(&model, &pair).unwrap();
    let cfg = TrainConfig::default();

    let (grads, _) = train::pair_grads(&model, &prepared, &cfg).unwrap();
    let analytic: Vec<(String, Array2<f64>)> = grads
        .named_params()
        .into_iter()
        .map(|(n, a)| (n, a.clone()))
        .collect();

    check_param_grads(
        &mut model,
        model_params,
        &analytic,
        move |m| {
            let (_, losses) = train::pair_grads(m, &prepared, &cfg).unwrap();
            losses.total(m.cfg.lambda_content, m.cfg.lambda_align)
        },
        step,
        24,
        19,
    )
}

fn sample_toy_style() -> darling_core::synth::StyleSpec {
    let mut cat = AssetCatalog::builtin();
    cat.backgrounds.truncate(1);
    darling_core::synth::sample_style(1, &cat).unwrap()
}

/// A small catalog for fast dataset construction in tests.
pub fn small_catalog(profile: SynthProfile) -> AssetCatalog {
    let mut cat = AssetCatalog::builtin().with_profile(profile);
    cat.backgrounds.truncate(12);
    cat
}
