//! Local differential privacy for uploaded gradients: per-coordinate
//! clipping, Laplace randomization, and the privacy-budget bound.
//!
//! Clipping clamps every coordinate to [-delta, +delta], which fixes the
//! per-coordinate sensitivity to 2*delta; adding Laplace(0, lambda) noise
//! then bounds the per-upload privacy budget by epsilon = 2*delta/lambda.
//! Noise covers the full parameter layout by default — embedding rows the
//! client never touched are noised too, so the upload's sparsity pattern
//! cannot reveal which articles the user read.

use crate::error::{Error, Result};
use crate::model::GradientSet;
use crate::nn::laplace_sample;
use crate::rng::RngState;

/// Clip and noise scales of the randomization mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyConfig {
    /// Clip scale delta; `f64::INFINITY` disables clipping.
    pub clip_scale: f64,
    /// Laplace noise scale lambda; 0 disables noise.
    pub noise_scale: f64,
    /// Noise only the embedding rows present in the gradient. Cheaper but
    /// weaker privacy: the sparsity pattern itself leaks click history.
    pub noise_sparse_only: bool,
}

impl PrivacyConfig {
    pub fn new(clip_scale: f64, noise_scale: f64) -> Result<Self> {
        if clip_scale < 0.0 || clip_scale.is_nan() {
            return Err(Error::Config(format!("clip scale must be >= 0: {clip_scale}")));
        }
        if noise_scale < 0.0 || !noise_scale.is_finite() {
            return Err(Error::Config(format!(
                "noise scale must be finite and >= 0: {noise_scale}"
            )));
        }
        Ok(PrivacyConfig {
            clip_scale,
            noise_scale,
            noise_sparse_only: false,
        })
    }

    /// The mechanism does nothing; uploads are raw gradients.
    pub fn disabled() -> Self {
        PrivacyConfig {
            clip_scale: f64::INFINITY,
            noise_scale: 0.0,
            noise_sparse_only: false,
        }
    }

    /// Upper bound of the per-upload privacy budget: epsilon = 2*delta/lambda.
    pub fn budget(&self) -> Result<f64> {
        if self.noise_scale == 0.0 {
            return Err(Error::UndefinedBudget);
        }
        Ok(2.0 * self.clip_scale / self.noise_scale)
    }

    /// Standard deviation of the Laplace noise: lambda * sqrt(2).
    pub fn noise_stddev(&self) -> f64 {
        self.noise_scale * std::f64::consts::SQRT_2
    }
}

/// Clamp every coordinate (dense and sparse parts) to [-delta, +delta].
/// Layout and sample weight are unchanged.
pub fn clip(g: &GradientSet, delta: f64) -> Result<GradientSet> {
    if delta < 0.0 || delta.is_nan() {
        return Err(Error::Config(format!("clip scale must be >= 0: {delta}")));
    }
    let mut out = g.clone();
    if delta.is_finite() {
        out.map_values(|v| v.clamp(-delta, delta));
    }
    Ok(out)
}

/// The randomization mechanism: clip, then add independent Laplace noise to
/// every coordinate of the full parameter layout (or only to present rows
/// when `noise_sparse_only` is set). Deterministic given `rng`; the noise
/// field depends only on the rng stream, never on the gradient values.
pub fn randomize(g: &GradientSet, cfg: &PrivacyConfig, rng: &mut RngState) -> Result<GradientSet> {
    let mut out = clip(g, cfg.clip_scale)?;
    let lambda = cfg.noise_scale;
    if lambda == 0.0 {
        return Ok(out);
    }
    for (_, t) in out.dense.entries_mut() {
        for v in t.data_mut() {
            *v += laplace_sample(rng, lambda)?;
        }
    }
    if cfg.noise_sparse_only {
        for row in out.embed_rows.values_mut() {
            for v in row {
                *v += laplace_sample(rng, lambda)?;
            }
        }
    } else {
        // noise the whole embedding table in ascending row order; absent
        // rows are zero gradients that still receive noise
        for r in 0..out.vocab_size {
            let row = out.embed_row_mut(r);
            for v in row {
                *v += laplace_sample(rng, lambda)?;
            }
        }
    }
    Ok(out)
}
