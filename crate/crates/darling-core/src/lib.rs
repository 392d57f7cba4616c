//! Style/content-decoupled scene-text modeling.
//!
//! The crate covers the full loop: procedural synthesis of style-identical /
//! content-different image pairs, a patch-embedding transformer encoder whose
//! decoupling block splits tokens into style and content halves, a multi-task
//! decoder (recognition branch, generation branch with gated injection, and
//! background / text-rendering heads), the three-part pre-training objective,
//! inference entry points for recognition / editing / removal, and an
//! evaluation suite (MSE, PSNR, SSIM, SeqAcc, ClassAcc).
//!
//! All heavy batch loops go through [`par`], which fans out over rayon under
//! the default `parallel` feature and falls back to sequential iteration
//! without it.

pub mod error;
pub mod gradcheck;
pub mod image;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod par;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod tasks;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
pub use scalar::Scalar;
