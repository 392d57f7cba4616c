//! Run configuration: JSON config file merged with flag overrides (flags
//! win), echoed fully resolved next to the run's outputs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use darling_core::model::ModelConfig;
use darling_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Flag-level overrides shared by the training commands.
#[derive(Debug, Clone, clap::Args)]
pub struct TrainOverrides {
    /// Master seed (also honored via DARLING_SEED).
    #[arg(long, env = "DARLING_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning rate after the drop.
    #[arg(long)]
    pub lr_after: Option<f64>,
    /// Step at which the learning rate drops (default: epoch schedule, or
    /// 70% of max-steps).
    #[arg(long)]
    pub lr_drop_step: Option<u64>,
    /// Channel width D.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub backbone_depth: Option<usize>,
    #[arg(long)]
    pub decoder_depth: Option<usize>,
    /// Weight on the alignment loss.
    #[arg(long = "lambda-a")]
    pub lambda_a: Option<f64>,
    /// Weight on the recognition loss.
    #[arg(long = "lambda-c")]
    pub lambda_c: Option<f64>,
    /// Disable gated injection (DIB features are ignored by GEB).
    #[arg(long)]
    pub no_gated_injection: bool,
    /// Save a checkpoint every N steps (the final step always saves).
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
}

impl TrainOverrides {
    pub fn apply(&self, cfg: &mut RunConfig, log: &mut Vec<String>) {
        let mut over = |name: &str, applied: bool| {
            if applied {
                log.push(name.to_string());
            }
        };
        macro_rules! set {
            ($field:expr, $value:expr, $name:literal) => {
                if let Some(v) = $value {
                    $field = v;
                    over($name, true);
                }
            };
        }
        set!(cfg.train.seed, self.seed, "seed");
        set!(cfg.train.batch_size, self.batch_size, "batch-size");
        set!(cfg.train.max_steps, self.max_steps, "max-steps");
        set!(cfg.train.lr_initial, self.lr, "lr");
        set!(cfg.train.lr_after, self.lr_after, "lr-after");
        set!(cfg.model.dim, self.dim, "dim");
        set!(cfg.model.heads, self.heads, "heads");
        set!(cfg.model.backbone_depth, self.backbone_depth, "backbone-depth");
        set!(cfg.model.decoder_depth, self.decoder_depth, "decoder-depth");
        set!(cfg.model.lambda_align, self.lambda_a, "lambda-a");
        set!(cfg.model.lambda_content, self.lambda_c, "lambda-c");
        if self.lr_drop_step.is_some() {
            cfg.train.lr_drop_step = self.lr_drop_step;
            over("lr-drop-step", true);
        }
        if self.checkpoint_every.is_some() {
            cfg.train.checkpoint_every = self.checkpoint_every;
            over("checkpoint-every", true);
        }
        if self.no_gated_injection {
            cfg.model.gated_injection = false;
            over("no-gated-injection", true);
        }
    }
}

/// Load the JSON config (if given), apply flag overrides, validate, and echo
/// the fully resolved config to `<out>/config.resolved.json`.
pub fn resolve(
    config_path: Option<&Path>,
    overrides: &TrainOverrides,
    out_dir: &Path,
) -> Result<RunConfig> {
    let mut cfg = match config_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config file {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("cannot parse config file {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    let mut overridden = Vec::new();
    overrides.apply(&mut cfg, &mut overridden);
    if !overridden.is_empty() {
        eprintln!("flag overrides win over config file for: {}", overridden.join(", "));
    }
    cfg.model.validate().map_err(usage_error)?;
    cfg.train.validate().map_err(usage_error)?;

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output dir {}", out_dir.display()))?;
    let resolved = out_dir.join("config.resolved.json");
    std::fs::write(&resolved, serde_json::to_string_pretty(&cfg)?)
        .with_context(|| format!("cannot write {}", resolved.display()))?;
    Ok(cfg)
}

/// Marker for errors that should exit with the usage/config code (2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage_error(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow::Error::new(UsageError(e.to_string()))
}

/// A directory that must already exist (exit code 2 when missing, naming the
/// path).
pub fn require_dir(path: &Path, what: &str) -> Result<PathBuf> {
    if !path.is_dir() {
        bail!(usage_error(format!(
            "{what} directory does not exist: {}",
            path.display()
        )));
    }
    Ok(path.to_path_buf())
}

pub fn require_file(path: &Path, what: &str) -> Result<PathBuf> {
    if !path.is_file() {
        bail!(usage_error(format!("{what} does not exist: {}", path.display())));
    }
    Ok(path.to_path_buf())
}
