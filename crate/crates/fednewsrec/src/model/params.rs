//! Model parameter set, gradient layout, and hyperparameters.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{AttnPoolWeights, Conv1dWeights, GruWeights, SelfAttnWeights};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Which interest paths the user encoder combines. `Full` is the model;
/// the other two exist for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserModelMode {
    Full,
    LongTermOnly,
    ShortTermOnly,
}

impl Default for UserModelMode {
    fn default() -> Self {
        UserModelMode::Full
    }
}

/// All tunables in one place. Defaults follow the published settings.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub word_embed_dim: usize,
    pub gru_units: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    pub attn_query_dim: usize,
    pub cnn_window: usize,
    pub cnn_filters: usize,
    pub title_len: usize,
    pub history_len: usize,
    pub negatives_h: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub clip_scale: f64,
    pub noise_scale: f64,
    pub client_fraction: f64,
    pub vocab_size: usize,
    pub user_mode: UserModelMode,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            word_embed_dim: 300,
            gru_units: 400,
            num_heads: 20,
            head_dim: 20,
            attn_query_dim: 200,
            cnn_window: 3,
            cnn_filters: 400,
            title_len: 30,
            history_len: 50,
            negatives_h: 4,
            dropout_rate: 0.2,
            learning_rate: 0.5,
            clip_scale: 0.005,
            noise_scale: 0.015,
            client_fraction: 0.02,
            vocab_size: 0,
            user_mode: UserModelMode::Full,
        }
    }
}

impl HyperParams {
    /// Small dimensions for tests and desk-scale experiments.
    pub fn desk(vocab_size: usize) -> Self {
        HyperParams {
            word_embed_dim: 8,
            gru_units: 8,
            num_heads: 2,
            head_dim: 4,
            attn_query_dim: 8,
            cnn_window: 3,
            cnn_filters: 8,
            title_len: 6,
            history_len: 4,
            negatives_h: 2,
            dropout_rate: 0.2,
            learning_rate: 0.5,
            clip_scale: 0.005,
            noise_scale: 0.015,
            client_fraction: 0.02,
            vocab_size,
            user_mode: UserModelMode::Full,
        }
    }

    /// News-vector dimension; also the user-vector dimension.
    pub fn news_dim(&self) -> usize {
        self.num_heads * self.head_dim
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("word_embed_dim", self.word_embed_dim),
            ("gru_units", self.gru_units),
            ("num_heads", self.num_heads),
            ("head_dim", self.head_dim),
            ("attn_query_dim", self.attn_query_dim),
            ("cnn_window", self.cnn_window),
            ("cnn_filters", self.cnn_filters),
            ("title_len", self.title_len),
            ("history_len", self.history_len),
            ("negatives_H", self.negatives_h),
            ("vocab_size", self.vocab_size),
        ] {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.cnn_window % 2 == 0 {
            return Err(Error::Config("cnn_window must be odd".into()));
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "client_fraction must be in (0,1]: {}",
                self.client_fraction
            )));
        }
        if self.clip_scale < 0.0 {
            return Err(Error::Config("clip_scale must be >= 0".into()));
        }
        if self.noise_scale < 0.0 {
            return Err(Error::Config("noise_scale must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must be in [0,1)".into()));
        }
        if self.gru_units != self.news_dim() {
            // The long/short combiner stacks both interest vectors, so they
            // must share a dimension (400 = 20 heads x 20 at the default scale).
            return Err(Error::Config(format!(
                "gru_units ({}) must equal num_heads*head_dim ({})",
                self.gru_units,
                self.news_dim()
            )));
        }
        Ok(())
    }
}

/// All non-embedding weights, grouped by layer. The named-matrix layout
/// (see [`DenseParams::entries`]) is shared between parameters and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub conv: Conv1dWeights,
    pub news_attn: SelfAttnWeights,
    pub word_pool: AttnPoolWeights,
    pub user_attn: SelfAttnWeights,
    pub hist_pool: AttnPoolWeights,
    pub gru: GruWeights,
    pub comb: AttnPoolWeights,
}

impl DenseParams {
    pub fn zeros(hp: &HyperParams) -> Self {
        let e_news = hp.news_dim();
        DenseParams {
            conv: Conv1dWeights::zeros(hp.cnn_filters, hp.word_embed_dim, hp.cnn_window),
            news_attn: SelfAttnWeights::zeros(hp.cnn_filters, hp.num_heads, hp.head_dim),
            word_pool: AttnPoolWeights::zeros(e_news, hp.attn_query_dim),
            user_attn: SelfAttnWeights::zeros(e_news, hp.num_heads, hp.head_dim),
            hist_pool: AttnPoolWeights::zeros(e_news, hp.attn_query_dim),
            gru: GruWeights::zeros(hp.gru_units, e_news),
            comb: AttnPoolWeights::zeros(e_news, hp.attn_query_dim),
        }
    }

    /// Fixed-order named matrices. Gradient layout compatibility, clipping,
    /// noising, checkpoints, and aggregation all iterate this order.
    pub fn entries(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("cnn_w", &self.conv.w),
            ("cnn_b", &self.conv.b),
            ("news_q", &self.news_attn.q),
            ("news_k", &self.news_attn.k),
            ("news_v", &self.news_attn.v),
            ("word_pool_proj", &self.word_pool.proj),
            ("word_pool_query", &self.word_pool.query),
            ("user_q", &self.user_attn.q),
            ("user_k", &self.user_attn.k),
            ("user_v", &self.user_attn.v),
            ("hist_pool_proj", &self.hist_pool.proj),
            ("hist_pool_query", &self.hist_pool.query),
            ("gru_wz", &self.gru.wz),
            ("gru_uz", &self.gru.uz),
            ("gru_bz", &self.gru.bz),
            ("gru_wr", &self.gru.wr),
            ("gru_ur", &self.gru.ur),
            ("gru_br", &self.gru.br),
            ("gru_wh", &self.gru.wh),
            ("gru_uh", &self.gru.uh),
            ("gru_bh", &self.gru.bh),
            ("comb_proj", &self.comb.proj),
            ("comb_query", &self.comb.query),
        ]
    }

    pub fn entries_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("cnn_w", &mut self.conv.w),
            ("cnn_b", &mut self.conv.b),
            ("news_q", &mut self.news_attn.q),
            ("news_k", &mut self.news_attn.k),
            ("news_v", &mut self.news_attn.v),
            ("word_pool_proj", &mut self.word_pool.proj),
            ("word_pool_query", &mut self.word_pool.query),
            ("user_q", &mut self.user_attn.q),
            ("user_k", &mut self.user_attn.k),
            ("user_v", &mut self.user_attn.v),
            ("hist_pool_proj", &mut self.hist_pool.proj),
            ("hist_pool_query", &mut self.hist_pool.query),
            ("gru_wz", &mut self.gru.wz),
            ("gru_uz", &mut self.gru.uz),
            ("gru_bz", &mut self.gru.bz),
            ("gru_wr", &mut self.gru.wr),
            ("gru_ur", &mut self.gru.ur),
            ("gru_br", &mut self.gru.br),
            ("gru_wh", &mut self.gru.wh),
            ("gru_uh", &mut self.gru.uh),
            ("gru_bh", &mut self.gru.bh),
            ("comb_proj", &mut self.comb.proj),
            ("comb_query", &mut self.comb.query),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.entries().iter().map(|(_, t)| t.len()).sum()
    }

    /// self += alpha * other, entry by entry.
    pub fn axpy(&mut self, alpha: f64, other: &DenseParams) {
        for ((_, dst), (_, src)) in self.entries_mut().into_iter().zip(other.entries()) {
            crate::tensor::axpy(alpha, src.data(), dst.data_mut());
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.entries_mut() {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn same_layout(&self, other: &DenseParams) -> bool {
        let a = self.entries();
        let b = other.entries();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|((na, ta), (nb, tb))| na == nb && ta.shape() == tb.shape())
    }
}

/// The full trainable parameter set: word embeddings plus [`DenseParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hp: HyperParams,
    pub word_embeddings: Tensor,
    pub dense: DenseParams,
}

impl ModelParams {
    pub fn zeros(hp: &HyperParams) -> Result<Self> {
        hp.validate()?;
        Ok(ModelParams {
            hp: hp.clone(),
            word_embeddings: Tensor::zeros(&[hp.vocab_size, hp.word_embed_dim]),
            dense: DenseParams::zeros(hp),
        })
    }

    /// Glorot-uniform initialization for weight matrices; biases and
    /// attention queries start small-random so attention is near-uniform.
    pub fn init(hp: &HyperParams, rng: &RngState) -> Result<Self> {
        let mut params = Self::zeros(hp)?;
        let mut r = rng.split(0xC0DE);
        // uniform ±2*sqrt(3/e) gives embedding rows an expected norm of 2 at
        // any width. Smaller inits leave dot-product scores so close to zero
        // that the ranking softmax stays flat and training stalls for
        // hundreds of rounds.
        let embed_scale = 2.0 * (3.0 / hp.word_embed_dim as f64).sqrt();
        params.word_embeddings.fill_with(|| r.next_symmetric(embed_scale));
        for (name, t) in params.dense.entries_mut() {
            let scale = if t.shape().len() == 2 {
                (6.0 / (t.shape()[0] + t.shape()[1]) as f64).sqrt()
            } else if name.contains("_b") {
                0.0
            } else {
                0.1
            };
            t.fill_with(|| r.next_symmetric(scale));
        }
        Ok(params)
    }

    /// All named matrices including embeddings, in fixed layout order.
    pub fn all_entries(&self) -> Vec<(&'static str, &Tensor)> {
        let mut v = vec![("word_embeddings", &self.word_embeddings)];
        v.extend(self.dense.entries());
        v
    }

    pub fn all_entries_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut v = vec![("word_embeddings", &mut self.word_embeddings)];
        v.extend(self.dense.entries_mut());
        v
    }

    pub fn non_embedding_count(&self) -> usize {
        self.dense.param_count()
    }

    pub fn embedding_count(&self) -> usize {
        self.word_embeddings.len()
    }

    pub fn all_finite(&self) -> bool {
        self.all_entries().iter().all(|(_, t)| t.all_finite())
    }

    /// Theta -= eta * g (dense part plus the sparse embedding rows).
    pub fn apply_gradient(&mut self, g: &GradientSet, eta: f64) -> Result<()> {
        if !self.dense.same_layout(&g.dense) {
            return Err(Error::Protocol("gradient layout mismatch".into()));
        }
        self.dense.axpy(-eta, &g.dense);
        for (&row, grad) in &g.embed_rows {
            crate::tensor::axpy(-eta, grad, self.word_embeddings.row_mut(row));
        }
        Ok(())
    }
}

/// A gradient with the same named layout as [`ModelParams`]. Embedding-row
/// gradients are sparse: absent rows are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub dense: DenseParams,
    pub embed_rows: BTreeMap<usize, Vec<f64>>,
    /// |B_u|: number of training samples this gradient was computed from.
    pub sample_weight: usize,
}

impl GradientSet {
    pub fn zeros(hp: &HyperParams) -> Self {
        GradientSet {
            vocab_size: hp.vocab_size,
            embed_dim: hp.word_embed_dim,
            dense: DenseParams::zeros(hp),
            embed_rows: BTreeMap::new(),
            sample_weight: 0,
        }
    }

    pub fn embed_row_mut(&mut self, row: usize) -> &mut Vec<f64> {
        let dim = self.embed_dim;
        self.embed_rows.entry(row).or_insert_with(|| vec![0.0; dim])
    }

    pub fn same_layout(&self, other: &GradientSet) -> bool {
        self.vocab_size == other.vocab_size
            && self.embed_dim == other.embed_dim
            && self.dense.same_layout(&other.dense)
    }

    /// Apply `f` to every coordinate of the materialized (sparse) gradient.
    pub fn map_values(&mut self, mut f: impl FnMut(f64) -> f64) {
        for (_, t) in self.dense.entries_mut() {
            for v in t.data_mut() {
                *v = f(*v);
            }
        }
        for row in self.embed_rows.values_mut() {
            for v in row {
                *v = f(*v);
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.dense.entries().iter().all(|(_, t)| t.all_finite())
            && self
                .embed_rows
                .values()
                .all(|r| r.iter().all(|v| v.is_finite()))
    }
}
