//! News and user encoders: forward passes with cached intermediates and the
//! matching analytic backward passes.
//!
//! News path: embedding lookup -> CNN(+ReLU) -> dropout -> multi-head
//! self-attention -> dropout -> additive attention pooling.
//! User path: long-term interest from self-attention + attention pooling
//! over the history vectors, short-term interest from a GRU over the same
//! sequence (oldest first), combined by an additive attention layer.

use crate::error::{Error, Result};
use crate::nn::{
    attention_pool_backward, attention_pool_cached, conv1d_backward, conv1d_cached,
    dropout_mask, gru_step_backward, gru_step_cached, self_attention_backward,
    self_attention_cached, AttnPoolCache, Conv1dCache, DropoutMask, GruStepCache,
    SelfAttnCache,
};
use crate::rng::RngState;
use crate::tensor::{axpy, Tensor};

use super::params::{GradientSet, ModelParams, UserModelMode};

/// Intermediates of one news encoding, kept for the backward pass.
pub struct NewsCache {
    pub tokens: Vec<usize>,
    /// Embedded title (L x e).
    pub x0: Tensor,
    pub conv_cache: Conv1dCache,
    /// Post-ReLU conv output after dropout (L x f); self-attention input.
    pub x1d: Tensor,
    pub mask1: DropoutMask,
    pub attn_cache: SelfAttnCache,
    /// Self-attention output after dropout (L x e_news); pooling input.
    pub x2d: Tensor,
    pub mask2: DropoutMask,
    pub pool_cache: AttnPoolCache,
}

/// Encode a news title into its representation vector (dim = heads*head_dim).
pub fn encode_news(
    params: &ModelParams,
    title: &[usize],
    rng: &mut RngState,
    training: bool,
) -> Result<Vec<f64>> {
    Ok(encode_news_cached(params, title, rng, training)?.0)
}

pub fn encode_news_cached(
    params: &ModelParams,
    title: &[usize],
    rng: &mut RngState,
    training: bool,
) -> Result<(Vec<f64>, NewsCache)> {
    let hp = &params.hp;
    if title.is_empty() {
        return Err(Error::Data("cannot encode an empty title".into()));
    }
    let tokens: Vec<usize> = title.iter().take(hp.title_len).copied().collect();
    for &t in &tokens {
        if t >= hp.vocab_size {
            return Err(Error::Data(format!(
                "token id {t} out of vocabulary (size {})",
                hp.vocab_size
            )));
        }
    }
    let l = tokens.len();
    let mut x0 = Tensor::zeros(&[l, hp.word_embed_dim]);
    for (i, &t) in tokens.iter().enumerate() {
        x0.row_mut(i).copy_from_slice(params.word_embeddings.row(t));
    }

    let (x1, conv_cache) = conv1d_cached(&params.dense.conv, &x0)?;
    let rate = if training { hp.dropout_rate } else { 0.0 };
    let mask1 = dropout_mask(x1.len(), rate, rng)?;
    let mut x1d = x1;
    mask1.apply(x1d.data_mut());

    let (x2, attn_cache) = self_attention_cached(&params.dense.news_attn, &x1d)?;
    let mask2 = dropout_mask(x2.len(), rate, rng)?;
    let mut x2d = x2;
    mask2.apply(x2d.data_mut());

    let (out, pool_cache) = attention_pool_cached(&params.dense.word_pool, &x2d)?;
    Ok((
        out,
        NewsCache {
            tokens,
            x0,
            conv_cache,
            x1d,
            mask1,
            attn_cache,
            x2d,
            mask2,
            pool_cache,
        },
    ))
}

/// Backward pass through one news encoding; accumulates into `g`.
pub fn encode_news_backward(
    params: &ModelParams,
    cache: &NewsCache,
    d_out: &[f64],
    g: &mut GradientSet,
) {
    let l = cache.tokens.len();
    let mut d_x2d = Tensor::zeros(cache.x2d.shape());
    attention_pool_backward(
        &params.dense.word_pool,
        &cache.x2d,
        &cache.pool_cache,
        d_out,
        &mut g.dense.word_pool,
        &mut d_x2d,
    );
    cache.mask2.apply(d_x2d.data_mut());

    let mut d_x1d = Tensor::zeros(cache.x1d.shape());
    self_attention_backward(
        &params.dense.news_attn,
        &cache.x1d,
        &cache.attn_cache,
        &d_x2d,
        &mut g.dense.news_attn,
        &mut d_x1d,
    );
    cache.mask1.apply(d_x1d.data_mut());

    let mut d_x0 = Tensor::zeros(cache.x0.shape());
    conv1d_backward(
        &params.dense.conv,
        &cache.x0,
        &cache.conv_cache,
        &d_x1d,
        &mut g.dense.conv,
        &mut d_x0,
    );

    for i in 0..l {
        let row = g.embed_row_mut(cache.tokens[i]);
        axpy(1.0, d_x0.row(i), row);
    }
}

/// Intermediates of one user encoding.
pub struct UserCache {
    pub mode: UserModelMode,
    pub hist_len: usize,
    // long-term branch
    pub attn_cache: Option<SelfAttnCache>,
    pub x2d: Option<Tensor>,
    pub mask2: Option<DropoutMask>,
    pub pool_cache: Option<AttnPoolCache>,
    // short-term branch
    pub gru_steps: Vec<GruStepCache>,
    // combiner
    pub stacked: Option<Tensor>,
    pub comb_cache: Option<AttnPoolCache>,
    pub hvecs: Tensor,
}

/// Encode a click history (rows are news vectors, oldest first) into the
/// unified user vector.
pub fn encode_user(
    params: &ModelParams,
    history_vecs: &Tensor,
    rng: &mut RngState,
    training: bool,
) -> Result<Vec<f64>> {
    Ok(encode_user_cached(params, history_vecs, rng, training)?.0)
}

pub fn encode_user_cached(
    params: &ModelParams,
    history_vecs: &Tensor,
    rng: &mut RngState,
    training: bool,
) -> Result<(Vec<f64>, UserCache)> {
    let hp = &params.hp;
    let e = hp.news_dim();
    if history_vecs.shape().len() != 2 || history_vecs.rows() == 0 {
        return Err(Error::Data(
            "cannot encode a user with an empty click history".into(),
        ));
    }
    if history_vecs.cols() != e {
        return Err(Error::shape(
            "encode_user history vectors",
            history_vecs.shape(),
            &[history_vecs.rows(), e],
        ));
    }
    let l = history_vecs.rows();
    let mode = hp.user_mode;
    let rate = if training { hp.dropout_rate } else { 0.0 };

    let mut cache = UserCache {
        mode,
        hist_len: l,
        attn_cache: None,
        x2d: None,
        mask2: None,
        pool_cache: None,
        gru_steps: Vec::new(),
        stacked: None,
        comb_cache: None,
        hvecs: history_vecs.clone(),
    };

    let u_l = if mode != UserModelMode::ShortTermOnly {
        let (x2, attn_cache) = self_attention_cached(&params.dense.user_attn, history_vecs)?;
        let mask2 = dropout_mask(x2.len(), rate, rng)?;
        let mut x2d = x2;
        mask2.apply(x2d.data_mut());
        let (u_l, pool_cache) = attention_pool_cached(&params.dense.hist_pool, &x2d)?;
        cache.attn_cache = Some(attn_cache);
        cache.x2d = Some(x2d);
        cache.mask2 = Some(mask2);
        cache.pool_cache = Some(pool_cache);
        Some(u_l)
    } else {
        None
    };

    let u_s = if mode != UserModelMode::LongTermOnly {
        let mut h = vec![0.0; hp.gru_units];
        for i in 0..l {
            let step = gru_step_cached(&params.dense.gru, &h, history_vecs.row(i))?;
            h = step.h.clone();
            cache.gru_steps.push(step);
        }
        Some(h)
    } else {
        None
    };

    let u = match (u_l, u_s) {
        (Some(ul), Some(us)) => {
            let mut stacked = Tensor::zeros(&[2, e]);
            stacked.row_mut(0).copy_from_slice(&ul);
            stacked.row_mut(1).copy_from_slice(&us);
            let (u, comb_cache) = attention_pool_cached(&params.dense.comb, &stacked)?;
            cache.stacked = Some(stacked);
            cache.comb_cache = Some(comb_cache);
            u
        }
        (Some(ul), None) => ul,
        (None, Some(us)) => us,
        (None, None) => unreachable!(),
    };
    Ok((u, cache))
}

/// Backward pass through the user encoder. Accumulates parameter gradients
/// into `g` and returns the gradient wrt the history vectors.
pub fn encode_user_backward(
    params: &ModelParams,
    cache: &UserCache,
    d_u: &[f64],
    g: &mut GradientSet,
) -> Tensor {
    let e = params.hp.news_dim();
    let l = cache.hist_len;
    let mut d_hvecs = Tensor::zeros(&[l, e]);

    let (d_ul, d_us): (Option<Vec<f64>>, Option<Vec<f64>>) = match cache.mode {
        UserModelMode::Full => {
            let stacked = cache.stacked.as_ref().unwrap();
            let mut d_stacked = Tensor::zeros(&[2, e]);
            attention_pool_backward(
                &params.dense.comb,
                stacked,
                cache.comb_cache.as_ref().unwrap(),
                d_u,
                &mut g.dense.comb,
                &mut d_stacked,
            );
            (
                Some(d_stacked.row(0).to_vec()),
                Some(d_stacked.row(1).to_vec()),
            )
        }
        UserModelMode::LongTermOnly => (Some(d_u.to_vec()), None),
        UserModelMode::ShortTermOnly => (None, Some(d_u.to_vec())),
    };

    if let Some(d_ul) = d_ul {
        let x2d = cache.x2d.as_ref().unwrap();
        let mut d_x2d = Tensor::zeros(x2d.shape());
        attention_pool_backward(
            &params.dense.hist_pool,
            x2d,
            cache.pool_cache.as_ref().unwrap(),
            &d_ul,
            &mut g.dense.hist_pool,
            &mut d_x2d,
        );
        cache.mask2.as_ref().unwrap().apply(d_x2d.data_mut());
        self_attention_backward(
            &params.dense.user_attn,
            &cache.hvecs,
            cache.attn_cache.as_ref().unwrap(),
            &d_x2d,
            &mut g.dense.user_attn,
            &mut d_hvecs,
        );
    }

    if let Some(d_us) = d_us {
        let mut dh = d_us;
        for i in (0..l).rev() {
            dh = gru_step_backward(
                &params.dense.gru,
                &cache.gru_steps[i],
                &dh,
                &mut g.dense.gru,
                d_hvecs.row_mut(i),
            );
        }
    }

    d_hvecs
}
