//! Central finite differences against every hand-derived backward pass at
//! toy dimensions (D = 8, L = 4, T = 3), 1e-4 relative tolerance.
//!
//! Single components run at step 1e-3. The deep composite objectives run at
//! step 1e-4: there the finite-difference oracle's own h^2 truncation at
//! 1e-3 would exceed the tolerance being checked (verified by the h^2
//! scaling of the residual), while the analytic gradients are unchanged.

mod common;

use common::{GRAD_ABS_TOL, GRAD_REL_TOL, GRAD_STEP, GRAD_STEP_FINE};
use darling_core::gradcheck::GradCheckSummary;

fn assert_passes(name: &str, s: GradCheckSummary) {
    assert!(
        s.passes(GRAD_REL_TOL, GRAD_ABS_TOL),
        "{name}: max rel err {:.3e}, max abs err (small grads) {:.3e}, worst entry {:?} over {} entries",
        s.max_rel_err,
        s.max_abs_err_small,
        s.worst,
        s.entries_checked
    );
    assert!(s.entries_checked > 0, "{name}: nothing checked");
}

#[test]
fn backbone_block_gradients() {
    assert_passes("backbone block", common::check_backbone_block(GRAD_STEP));
}

#[test]
fn decoupling_block_gradients() {
    assert_passes("decoupling block", common::check_decouple_block(GRAD_STEP));
}

#[test]
fn dib_str_head_gradients() {
    assert_passes("DIB STR head", common::check_dib_head(GRAD_STEP));
}

#[test]
fn gated_injection_gradients() {
    assert_passes("gated injection", common::check_gated_injection(GRAD_STEP));
}

#[test]
fn image_head_gradients() {
    assert_passes("image heads", common::check_image_heads(GRAD_STEP));
}

#[test]
fn encoder_and_decoupling_gradients() {
    assert_passes("encoder + decoupling", common::check_encoder(GRAD_STEP_FINE));
}

#[test]
fn full_pretraining_objective_gradients() {
    assert_passes("full objective", common::check_full_objective(GRAD_STEP_FINE));
}
