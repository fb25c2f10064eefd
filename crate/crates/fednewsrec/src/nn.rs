//! Dense numeric primitives and neural layer kernels.
//!
//! Every op is pure: same inputs and same [`RngState`] give bitwise
//! identical outputs. Forward kernels come in two flavors, a plain one and a
//! `_cached` one that keeps the intermediates the analytic backward pass
//! needs. Accumulation orders are fixed so results are reproducible across
//! runs and thread counts.

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::{axpy, dot, Tensor};

/// c[i][j] = sum_p a[i][p] * b[p][j], accumulated in ascending p order.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.rows() {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut c = Tensor::zeros(&[m, n]);
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a.at(i, p) * b.at(p, j);
            }
            *c.at_mut(i, j) = acc;
        }
    }
    Ok(c)
}

/// Numerically stable softmax over a slice. Panics-free: requires n >= 1
/// at the public [`softmax`] surface.
pub fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

pub fn softmax(x: &Tensor) -> Result<Tensor> {
    if x.is_empty() {
        return Err(Error::shape("softmax of empty input", x.shape(), &[]));
    }
    Ok(Tensor::vector(softmax_slice(x.data())))
}

/// Given y = softmax(s) and dL/dy, returns dL/ds.
pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let inner = dot(y, dy);
    y.iter().zip(dy).map(|(yi, di)| yi * (di - inner)).collect()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// ---------------------------------------------------------------------------
// GRU cell
// ---------------------------------------------------------------------------

/// GRU weights. `w*` act on the input (h×e), `u*` on the hidden state (h×h).
#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights {
    pub wz: Tensor,
    pub uz: Tensor,
    pub bz: Tensor,
    pub wr: Tensor,
    pub ur: Tensor,
    pub br: Tensor,
    pub wh: Tensor,
    pub uh: Tensor,
    pub bh: Tensor,
}

impl GruWeights {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        GruWeights {
            wz: Tensor::zeros(&[hidden, input]),
            uz: Tensor::zeros(&[hidden, hidden]),
            bz: Tensor::zeros(&[hidden]),
            wr: Tensor::zeros(&[hidden, input]),
            ur: Tensor::zeros(&[hidden, hidden]),
            br: Tensor::zeros(&[hidden]),
            wh: Tensor::zeros(&[hidden, input]),
            uh: Tensor::zeros(&[hidden, hidden]),
            bh: Tensor::zeros(&[hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.wz.rows()
    }

    pub fn input(&self) -> usize {
        self.wz.cols()
    }
}

#[derive(Debug, Clone)]
pub struct GruStepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub hbar: Vec<f64>,
    pub h: Vec<f64>,
}

fn mat_vec(w: &Tensor, x: &[f64], out: &mut [f64]) {
    for i in 0..w.rows() {
        out[i] += dot(w.row(i), x);
    }
}

/// One GRU step with the convention
/// z=sigma(Wz x+Uz h+bz), r=sigma(Wr x+Ur h+br),
/// hbar=tanh(Wh x+Uh(r*h)+bh), h'=(1-z)*h + z*hbar.
pub fn gru_step(w: &GruWeights, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    Ok(gru_step_cached(w, h_prev, x)?.h)
}

pub fn gru_step_cached(w: &GruWeights, h_prev: &[f64], x: &[f64]) -> Result<GruStepCache> {
    let h = w.hidden();
    if h_prev.len() != h || x.len() != w.input() {
        return Err(Error::shape(
            "gru_step",
            &[h_prev.len(), x.len()],
            &[h, w.input()],
        ));
    }
    let mut az = w.bz.data().to_vec();
    mat_vec(&w.wz, x, &mut az);
    mat_vec(&w.uz, h_prev, &mut az);
    let z: Vec<f64> = az.iter().map(|&v| sigmoid(v)).collect();

    let mut ar = w.br.data().to_vec();
    mat_vec(&w.wr, x, &mut ar);
    mat_vec(&w.ur, h_prev, &mut ar);
    let r: Vec<f64> = ar.iter().map(|&v| sigmoid(v)).collect();

    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(ri, hi)| ri * hi).collect();
    let mut ah = w.bh.data().to_vec();
    mat_vec(&w.wh, x, &mut ah);
    mat_vec(&w.uh, &rh, &mut ah);
    let hbar: Vec<f64> = ah.iter().map(|&v| v.tanh()).collect();

    let h_new: Vec<f64> = (0..h)
        .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * hbar[i])
        .collect();
    Ok(GruStepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        z,
        r,
        hbar,
        h: h_new,
    })
}

fn outer_acc(g: &mut Tensor, a: &[f64], b: &[f64]) {
    for i in 0..a.len() {
        axpy(a[i], b, g.row_mut(i));
    }
}

fn mat_t_vec(w: &Tensor, x: &[f64], out: &mut [f64]) {
    // out += W^T x
    for i in 0..w.rows() {
        axpy(x[i], w.row(i), out);
    }
}

/// Backward of one GRU step. Accumulates parameter gradients into `gw`,
/// input gradient into `dx`, and returns the gradient wrt h_prev.
pub fn gru_step_backward(
    w: &GruWeights,
    c: &GruStepCache,
    dh: &[f64],
    gw: &mut GruWeights,
    dx: &mut [f64],
) -> Vec<f64> {
    let n = w.hidden();
    let mut dh_prev = vec![0.0; n];

    let dz: Vec<f64> = (0..n).map(|i| dh[i] * (c.hbar[i] - c.h_prev[i])).collect();
    let dhbar: Vec<f64> = (0..n).map(|i| dh[i] * c.z[i]).collect();
    for i in 0..n {
        dh_prev[i] += dh[i] * (1.0 - c.z[i]);
    }

    // candidate branch
    let dah: Vec<f64> = (0..n)
        .map(|i| dhbar[i] * (1.0 - c.hbar[i] * c.hbar[i]))
        .collect();
    outer_acc(&mut gw.wh, &dah, &c.x);
    let rh: Vec<f64> = (0..n).map(|i| c.r[i] * c.h_prev[i]).collect();
    outer_acc(&mut gw.uh, &dah, &rh);
    axpy(1.0, &dah, gw.bh.data_mut());
    mat_t_vec(&w.wh, &dah, dx);
    let mut drh = vec![0.0; n];
    mat_t_vec(&w.uh, &dah, &mut drh);
    let dr: Vec<f64> = (0..n).map(|i| drh[i] * c.h_prev[i]).collect();
    for i in 0..n {
        dh_prev[i] += drh[i] * c.r[i];
    }

    // reset gate
    let dar: Vec<f64> = (0..n).map(|i| dr[i] * c.r[i] * (1.0 - c.r[i])).collect();
    outer_acc(&mut gw.wr, &dar, &c.x);
    outer_acc(&mut gw.ur, &dar, &c.h_prev);
    axpy(1.0, &dar, gw.br.data_mut());
    mat_t_vec(&w.wr, &dar, dx);
    mat_t_vec(&w.ur, &dar, &mut dh_prev);

    // update gate
    let daz: Vec<f64> = (0..n).map(|i| dz[i] * c.z[i] * (1.0 - c.z[i])).collect();
    outer_acc(&mut gw.wz, &daz, &c.x);
    outer_acc(&mut gw.uz, &daz, &c.h_prev);
    axpy(1.0, &daz, gw.bz.data_mut());
    mat_t_vec(&w.wz, &daz, dx);
    mat_t_vec(&w.uz, &daz, &mut dh_prev);

    dh_prev
}

// ---------------------------------------------------------------------------
// Multi-head self-attention
// ---------------------------------------------------------------------------

/// Per-head Q/K/V projections packed column-wise: each matrix is
/// `[input_dim x heads*head_dim]`, head h owning columns h*d..(h+1)*d.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttnWeights {
    pub q: Tensor,
    pub k: Tensor,
    pub v: Tensor,
    pub heads: usize,
    pub head_dim: usize,
}

impl SelfAttnWeights {
    pub fn zeros(input_dim: usize, heads: usize, head_dim: usize) -> Self {
        SelfAttnWeights {
            q: Tensor::zeros(&[input_dim, heads * head_dim]),
            k: Tensor::zeros(&[input_dim, heads * head_dim]),
            v: Tensor::zeros(&[input_dim, heads * head_dim]),
            heads,
            head_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.q.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.heads * self.head_dim
    }
}

#[derive(Debug, Clone)]
pub struct SelfAttnCache {
    /// Per head: Q, K, V projections (L x d) and attention rows (L x L).
    pub q: Vec<Tensor>,
    pub k: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub attn: Vec<Tensor>,
}

fn project_head(w: &Tensor, x: &Tensor, head: usize, d: usize) -> Tensor {
    let l = x.rows();
    let mut out = Tensor::zeros(&[l, d]);
    for i in 0..l {
        for j in 0..d {
            let mut acc = 0.0;
            for p in 0..x.cols() {
                acc += x.at(i, p) * w.at(p, head * d + j);
            }
            *out.at_mut(i, j) = acc;
        }
    }
    out
}

/// Scaled dot-product multi-head self-attention; heads concatenated in
/// head-index order.
pub fn multihead_self_attention(w: &SelfAttnWeights, x: &Tensor) -> Result<Tensor> {
    Ok(self_attention_cached(w, x)?.0)
}

pub fn self_attention_cached(
    w: &SelfAttnWeights,
    x: &Tensor,
) -> Result<(Tensor, SelfAttnCache)> {
    if x.shape().len() != 2 || x.rows() == 0 || x.cols() != w.input_dim() {
        return Err(Error::shape("self_attention", x.shape(), w.q.shape()));
    }
    let l = x.rows();
    let d = w.head_dim;
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = Tensor::zeros(&[l, w.output_dim()]);
    let mut cache = SelfAttnCache {
        q: Vec::with_capacity(w.heads),
        k: Vec::with_capacity(w.heads),
        v: Vec::with_capacity(w.heads),
        attn: Vec::with_capacity(w.heads),
    };
    for h in 0..w.heads {
        let q = project_head(&w.q, x, h, d);
        let k = project_head(&w.k, x, h, d);
        let v = project_head(&w.v, x, h, d);
        let mut attn = Tensor::zeros(&[l, l]);
        for i in 0..l {
            let scores: Vec<f64> = (0..l).map(|j| dot(q.row(i), k.row(j)) * scale).collect();
            attn.row_mut(i).copy_from_slice(&softmax_slice(&scores));
        }
        for i in 0..l {
            for j in 0..d {
                let mut acc = 0.0;
                for p in 0..l {
                    acc += attn.at(i, p) * v.at(p, j);
                }
                *out.at_mut(i, h * d + j) = acc;
            }
        }
        cache.q.push(q);
        cache.k.push(k);
        cache.v.push(v);
        cache.attn.push(attn);
    }
    Ok((out, cache))
}

/// Backward of multi-head self-attention. Accumulates into `gw` and `dx`.
pub fn self_attention_backward(
    w: &SelfAttnWeights,
    x: &Tensor,
    c: &SelfAttnCache,
    d_out: &Tensor,
    gw: &mut SelfAttnWeights,
    dx: &mut Tensor,
) {
    let l = x.rows();
    let d = w.head_dim;
    let scale = 1.0 / (d as f64).sqrt();
    for h in 0..w.heads {
        let (q, k, v, attn) = (&c.q[h], &c.k[h], &c.v[h], &c.attn[h]);
        let mut dq = Tensor::zeros(&[l, d]);
        let mut dk = Tensor::zeros(&[l, d]);
        let mut dv = Tensor::zeros(&[l, d]);
        for i in 0..l {
            let do_i = &d_out.row(i)[h * d..(h + 1) * d];
            // dA_ip = do_i . v_p ; dV_p += A_ip * do_i
            let da: Vec<f64> = (0..l).map(|p| dot(do_i, v.row(p))).collect();
            for p in 0..l {
                axpy(attn.at(i, p), do_i, dv.row_mut(p));
            }
            let ds = softmax_backward(attn.row(i), &da);
            for p in 0..l {
                axpy(ds[p] * scale, k.row(p), dq.row_mut(i));
                axpy(ds[p] * scale, q.row(i), dk.row_mut(p));
            }
        }
        // back through the projections: P = X W_h  =>  dW_h += X^T dP, dX += dP W_h^T
        for (dp, wm, gm) in [
            (&dq, &w.q, &mut gw.q),
            (&dk, &w.k, &mut gw.k),
            (&dv, &w.v, &mut gw.v),
        ] {
            for i in 0..l {
                for j in 0..d {
                    let g = dp.at(i, j);
                    if g == 0.0 {
                        continue;
                    }
                    for p in 0..x.cols() {
                        *gm.at_mut(p, h * d + j) += x.at(i, p) * g;
                        *dx.at_mut(i, p) += g * wm.at(p, h * d + j);
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Additive attention pooling
// ---------------------------------------------------------------------------

/// Additive attention pooling weights: projection `[e x q]` plus query `[q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnPoolWeights {
    pub proj: Tensor,
    pub query: Tensor,
}

impl AttnPoolWeights {
    pub fn zeros(input_dim: usize, query_dim: usize) -> Self {
        AttnPoolWeights {
            proj: Tensor::zeros(&[input_dim, query_dim]),
            query: Tensor::zeros(&[query_dim]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttnPoolCache {
    /// tanh(proj^T x_i), one row per input row.
    pub p: Tensor,
    pub alpha: Vec<f64>,
}

/// alpha_i = softmax_i(query . tanh(proj^T x_i)); out = sum_i alpha_i x_i.
pub fn additive_attention_pool(w: &AttnPoolWeights, x: &Tensor) -> Result<Vec<f64>> {
    Ok(attention_pool_cached(w, x)?.0)
}

pub fn attention_pool_cached(
    w: &AttnPoolWeights,
    x: &Tensor,
) -> Result<(Vec<f64>, AttnPoolCache)> {
    if x.shape().len() != 2 || x.rows() == 0 || x.cols() != w.proj.rows() {
        return Err(Error::shape("attention_pool", x.shape(), w.proj.shape()));
    }
    let (l, e, q) = (x.rows(), x.cols(), w.proj.cols());
    let mut p = Tensor::zeros(&[l, q]);
    let mut scores = vec![0.0; l];
    for i in 0..l {
        for a in 0..q {
            let mut acc = 0.0;
            for b in 0..e {
                acc += w.proj.at(b, a) * x.at(i, b);
            }
            *p.at_mut(i, a) = acc.tanh();
        }
        scores[i] = dot(w.query.data(), p.row(i));
    }
    let alpha = softmax_slice(&scores);
    let mut out = vec![0.0; e];
    for i in 0..l {
        axpy(alpha[i], x.row(i), &mut out);
    }
    Ok((out, AttnPoolCache { p, alpha }))
}

/// Backward of additive attention pooling. Accumulates into `gw` and `dx`.
pub fn attention_pool_backward(
    w: &AttnPoolWeights,
    x: &Tensor,
    c: &AttnPoolCache,
    d_out: &[f64],
    gw: &mut AttnPoolWeights,
    dx: &mut Tensor,
) {
    let (l, e, q) = (x.rows(), x.cols(), w.proj.cols());
    let dalpha: Vec<f64> = (0..l).map(|i| dot(d_out, x.row(i))).collect();
    let ds = softmax_backward(&c.alpha, &dalpha);
    for i in 0..l {
        axpy(c.alpha[i], d_out, dx.row_mut(i));
        if ds[i] != 0.0 {
            axpy(ds[i], c.p.row(i), gw.query.data_mut());
        }
        // da = ds_i * query * (1 - p_i^2)
        for a in 0..q {
            let da = ds[i] * w.query.data()[a] * (1.0 - c.p.at(i, a) * c.p.at(i, a));
            if da == 0.0 {
                continue;
            }
            for b in 0..e {
                *gw.proj.at_mut(b, a) += x.at(i, b) * da;
                *dx.at_mut(i, b) += w.proj.at(b, a) * da;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 1-D convolution over token positions
// ---------------------------------------------------------------------------

/// Same-length 1-D convolution with ReLU. Filter matrix is
/// `[filters x window*input_dim]`, window must be odd; zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dWeights {
    pub w: Tensor,
    pub b: Tensor,
    pub window: usize,
}

impl Conv1dWeights {
    pub fn zeros(filters: usize, input_dim: usize, window: usize) -> Self {
        Conv1dWeights {
            w: Tensor::zeros(&[filters, window * input_dim]),
            b: Tensor::zeros(&[filters]),
            window,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols() / self.window
    }

    pub fn filters(&self) -> usize {
        self.w.rows()
    }
}

#[derive(Debug, Clone)]
pub struct Conv1dCache {
    /// Pre-activation values (L x filters); ReLU mask is pre > 0.
    pub pre: Tensor,
}

pub fn conv1d(w: &Conv1dWeights, x: &Tensor) -> Result<Tensor> {
    Ok(conv1d_cached(w, x)?.0)
}

pub fn conv1d_cached(w: &Conv1dWeights, x: &Tensor) -> Result<(Tensor, Conv1dCache)> {
    if w.window % 2 == 0 {
        return Err(Error::Config(format!(
            "conv window must be odd, got {}",
            w.window
        )));
    }
    if x.shape().len() != 2 || x.cols() != w.input_dim() {
        return Err(Error::shape("conv1d", x.shape(), w.w.shape()));
    }
    let (l, e, f) = (x.rows(), x.cols(), w.filters());
    let half = (w.window - 1) / 2;
    let mut pre = Tensor::zeros(&[l, f]);
    let mut out = Tensor::zeros(&[l, f]);
    for i in 0..l {
        for o in 0..f {
            let mut acc = w.b.data()[o];
            for off in 0..w.window {
                let r = i as isize + off as isize - half as isize;
                if r < 0 || r >= l as isize {
                    continue; // zero padding
                }
                let wr = &w.w.row(o)[off * e..(off + 1) * e];
                acc += dot(wr, x.row(r as usize));
            }
            *pre.at_mut(i, o) = acc;
            *out.at_mut(i, o) = acc.max(0.0);
        }
    }
    Ok((out, Conv1dCache { pre }))
}

/// Backward of conv1d+ReLU. Accumulates into `gw` and `dx`.
pub fn conv1d_backward(
    w: &Conv1dWeights,
    x: &Tensor,
    c: &Conv1dCache,
    d_out: &Tensor,
    gw: &mut Conv1dWeights,
    dx: &mut Tensor,
) {
    let (l, e, f) = (x.rows(), x.cols(), w.filters());
    let half = (w.window - 1) / 2;
    for i in 0..l {
        for o in 0..f {
            if c.pre.at(i, o) <= 0.0 {
                continue;
            }
            let g = d_out.at(i, o);
            if g == 0.0 {
                continue;
            }
            gw.b.data_mut()[o] += g;
            for off in 0..w.window {
                let r = i as isize + off as isize - half as isize;
                if r < 0 || r >= l as isize {
                    continue;
                }
                let r = r as usize;
                let wr = &w.w.row(o)[off * e..(off + 1) * e];
                axpy(g, wr, dx.row_mut(r));
                let gr = &mut gw.w.row_mut(o)[off * e..(off + 1) * e];
                axpy(g, x.row(r), gr);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/// Per-element multipliers: 0 for dropped, 1/(1-rate) for kept.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    pub scale: Vec<f64>,
}

impl DropoutMask {
    /// The identity mask used at inference or rate 0.
    pub fn identity(len: usize) -> Self {
        DropoutMask {
            scale: vec![1.0; len],
        }
    }

    pub fn apply(&self, x: &mut [f64]) {
        for (v, s) in x.iter_mut().zip(&self.scale) {
            *v *= s;
        }
    }
}

pub fn dropout_mask(len: usize, rate: f64, rng: &mut RngState) -> Result<DropoutMask> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0,1): {rate}")));
    }
    if rate == 0.0 {
        return Ok(DropoutMask::identity(len));
    }
    let keep = 1.0 / (1.0 - rate);
    let scale = (0..len)
        .map(|_| if rng.next_f64() < rate { 0.0 } else { keep })
        .collect();
    Ok(DropoutMask { scale })
}

/// Inverted dropout: identity at inference, keep-and-rescale in training.
pub fn dropout(x: &Tensor, rate: f64, rng: &mut RngState, training: bool) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0,1): {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.len(), rate, rng)?;
    let mut out = x.clone();
    mask.apply(out.data_mut());
    Ok(out)
}

// ---------------------------------------------------------------------------
// Laplace sampling
// ---------------------------------------------------------------------------

/// Draw from Laplace(0, scale) by inverting the CDF:
/// u ~ U(0,1); return -scale * sign(u-0.5) * ln(1 - 2|u-0.5|).
pub fn laplace_sample(rng: &mut RngState, scale: f64) -> Result<f64> {
    if scale < 0.0 {
        return Err(Error::Config(format!("laplace scale must be >= 0: {scale}")));
    }
    if scale == 0.0 {
        // still consume a draw so the noise stream position is scale-independent
        let _ = rng.next_f64();
        return Ok(0.0);
    }
    let u = rng.next_f64() - 0.5;
    let sign = if u < 0.0 { -1.0 } else { 1.0 };
    Ok(-scale * sign * (1.0 - 2.0 * u.abs()).ln())
}
