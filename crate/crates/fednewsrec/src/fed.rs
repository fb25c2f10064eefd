//! The federated training loop — client sampling, private local gradients,
//! weighted aggregation, global update — plus the centralized baseline.
//!
//! Every round samples a fraction of clients, lets each compute a gradient
//! against the same model snapshot, applies the randomization mechanism on
//! the client, and aggregates by sample count:
//!   g_bar = sum_u |B_u| * g~_u / sum_u |B_u|,   Theta <- Theta - eta * g_bar.
//! Clients upload per-sample mean gradients, so the weighting reconstructs
//! the pooled mean over all participating samples and a single client
//! holding all data degenerates to full-batch SGD.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ldp::{randomize, PrivacyConfig};
use crate::model::{user_gradient, user_loss, GradientSet, ModelParams, TrainingSample};
use crate::rng::RngState;

/// One simulated user device: its click history, locally built training
/// samples, and a private rng stream.
#[derive(Debug, Clone)]
pub struct ClientStore {
    pub user_id: String,
    /// Clicked news ids with timestamps, oldest first.
    pub clicks: Vec<(String, i64)>,
    pub samples: Vec<TrainingSample>,
    pub rng: RngState,
}

/// Summary of one server round.
#[derive(Debug, Clone)]
pub struct RoundReport {
    pub round: usize,
    pub participants: Vec<String>,
    /// sum of |B_u| over participants.
    pub total_weight: usize,
    /// Mean per-sample training loss before / after the update.
    pub pre_loss: f64,
    pub post_loss: f64,
    pub wall_secs: f64,
}

/// Knobs that do not change the protocol semantics.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Cap on samples a client uses per round (random subset); None = all.
    pub sample_cap: Option<usize>,
    /// Intra-round client parallelism. Results are identical for any value.
    pub workers: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            sample_cap: None,
            workers: 1,
        }
    }
}

/// Uniform sample without replacement of max(1, round(r*N)) client indices,
/// returned in ascending order.
pub fn select_clients(num_clients: usize, fraction: f64, rng: &mut RngState) -> Result<Vec<usize>> {
    if num_clients == 0 {
        return Err(Error::Config("cannot select from zero clients".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "client fraction must be in (0,1]: {fraction}"
        )));
    }
    let count = ((fraction * num_clients as f64).round() as usize)
        .max(1)
        .min(num_clients);
    let mut indices: Vec<usize> = (0..num_clients).collect();
    for i in 0..count {
        let j = i + rng.next_index(num_clients - i);
        indices.swap(i, j);
    }
    let mut picked = indices[..count].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Local step of one client: gradient of the local loss on (a capped subset
/// of) its samples, normalized to a per-sample mean, then passed through
/// the randomization mechanism. The model snapshot is not modified.
pub fn client_update(
    params: &ModelParams,
    store: &ClientStore,
    cfg: &PrivacyConfig,
    rng: &RngState,
    sample_cap: Option<usize>,
) -> Result<GradientSet> {
    let samples = select_samples(store, rng, sample_cap);
    if samples.is_empty() {
        return Err(Error::Data(format!(
            "client {} has no training samples",
            store.user_id
        )));
    }
    let weight = samples.len();
    let mut g = user_gradient(params, &samples, &rng.split(0), true)?;
    // upload the per-sample mean; |B_u| rides along as the weight
    g.map_values(|v| v / weight as f64);
    let mut noise_rng = rng.split(1);
    let mut out = randomize(&g, cfg, &mut noise_rng)?;
    out.sample_weight = weight;
    Ok(out)
}

fn select_samples(store: &ClientStore, rng: &RngState, cap: Option<usize>) -> Vec<TrainingSample> {
    match cap {
        Some(cap) if cap < store.samples.len() => {
            let mut crng = rng.split(2);
            let mut indices: Vec<usize> = (0..store.samples.len()).collect();
            for i in 0..cap {
                let j = i + crng.next_index(indices.len() - i);
                indices.swap(i, j);
            }
            let mut picked = indices[..cap].to_vec();
            picked.sort_unstable();
            picked.iter().map(|&i| store.samples[i].clone()).collect()
        }
        _ => store.samples.clone(),
    }
}

/// Sample-count-weighted mean of client updates, summed in the given order.
/// Sparse embedding parts merge by row union; absent rows count as zero.
pub fn aggregate(updates: &[GradientSet]) -> Result<GradientSet> {
    let Some(first) = updates.first() else {
        return Err(Error::Protocol("aggregate of zero updates".into()));
    };
    let total: usize = updates.iter().map(|u| u.sample_weight).sum();
    if total == 0 {
        return Err(Error::Protocol("aggregate with zero total weight".into()));
    }
    let mut acc = GradientSet {
        vocab_size: first.vocab_size,
        embed_dim: first.embed_dim,
        dense: first.dense.clone(),
        embed_rows: Default::default(),
        sample_weight: total,
    };
    // start from zero, then accumulate every update (including the first)
    acc.dense.scale(0.0);
    for update in updates {
        if !acc.same_layout(update) {
            return Err(Error::Protocol("gradient layout mismatch in aggregate".into()));
        }
        let w = update.sample_weight as f64 / total as f64;
        acc.dense.axpy(w, &update.dense);
        for (&row, values) in &update.embed_rows {
            let dst = acc.embed_row_mut(row);
            crate::tensor::axpy(w, values, dst);
        }
    }
    Ok(acc)
}

/// One synchronous round: sample clients, compute all updates against the
/// same snapshot, aggregate, and apply Theta' = Theta - eta * g_bar.
pub fn server_round(
    params: &ModelParams,
    clients: &[ClientStore],
    privacy: &PrivacyConfig,
    round: usize,
    root_rng: &RngState,
    opts: &TrainOptions,
) -> Result<(ModelParams, RoundReport)> {
    let start = Instant::now();
    let round_rng = root_rng.split(round as u64);
    let mut select_rng = round_rng.split(0);
    let selected = select_clients(clients.len(), params.hp.client_fraction, &mut select_rng)?;

    let usable: Vec<usize> = selected
        .iter()
        .copied()
        .filter(|&i| {
            if clients[i].samples.is_empty() {
                log::warn!("skipping client {} with no samples", clients[i].user_id);
                false
            } else {
                true
            }
        })
        .collect();

    if usable.is_empty() {
        log::warn!("round {round}: all selected clients empty, skipping update");
        let report = RoundReport {
            round,
            participants: Vec::new(),
            total_weight: 0,
            pre_loss: f64::NAN,
            post_loss: f64::NAN,
            wall_secs: start.elapsed().as_secs_f64(),
        };
        return Ok((params.clone(), report));
    }

    let compute = |&idx: &usize| -> Result<(GradientSet, f64)> {
        let store = &clients[idx];
        let crng = store.rng.split(round as u64);
        let update = client_update(params, store, privacy, &crng, opts.sample_cap)?;
        let loss = user_loss(params, &store.samples, &crng.split(0), true)?;
        Ok((update, loss))
    };
    // aggregation order is fixed by client index, not completion order
    let results: Vec<(GradientSet, f64)> = if opts.workers > 1 {
        usable
            .par_iter()
            .map(compute)
            .collect::<Result<Vec<_>>>()?
    } else {
        usable.iter().map(compute).collect::<Result<Vec<_>>>()?
    };

    let updates: Vec<GradientSet> = results.iter().map(|(u, _)| u.clone()).collect();
    let total_weight: usize = updates.iter().map(|u| u.sample_weight).sum();
    let pre_loss =
        results.iter().map(|(_, l)| l).sum::<f64>() / total_samples(clients, &usable) as f64;

    let mean = aggregate(&updates)?;
    let mut next = params.clone();
    next.apply_gradient(&mean, params.hp.learning_rate)?;

    let mut post_loss = 0.0;
    for &idx in &usable {
        let store = &clients[idx];
        let crng = store.rng.split(round as u64);
        post_loss += user_loss(&next, &store.samples, &crng.split(0), true)?;
    }
    post_loss /= total_samples(clients, &usable) as f64;

    let report = RoundReport {
        round,
        participants: usable.iter().map(|&i| clients[i].user_id.clone()).collect(),
        total_weight,
        pre_loss,
        post_loss,
        wall_secs: start.elapsed().as_secs_f64(),
    };
    Ok((next, report))
}

fn total_samples(clients: &[ClientStore], indices: &[usize]) -> usize {
    indices.iter().map(|&i| clients[i].samples.len()).sum()
}

/// Run `rounds` federated rounds from `init`. The callback sees the model
/// after every round (for periodic evaluation); the whole loop is
/// deterministic given `rng` for any worker count.
pub fn train_federated(
    init: &ModelParams,
    clients: &[ClientStore],
    privacy: &PrivacyConfig,
    rounds: usize,
    rng: &RngState,
    opts: &TrainOptions,
    mut on_round: impl FnMut(&ModelParams, &RoundReport),
) -> Result<(ModelParams, Vec<RoundReport>)> {
    if rounds == 0 {
        return Err(Error::Config("rounds must be >= 1".into()));
    }
    if clients.is_empty() {
        return Err(Error::Config("no clients to train on".into()));
    }
    let mut params = init.clone();
    let mut reports = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let (next, report) = server_round(&params, clients, privacy, round, rng, opts)?;
        params = next;
        on_round(&params, &report);
        reports.push(report);
    }
    Ok((params, reports))
}

/// Centralized baseline: plain mini-batch SGD over all samples pooled
/// across users — the same model code path, no clipping, no noise.
pub fn train_centralized(
    init: &ModelParams,
    samples: &[TrainingSample],
    epochs: usize,
    batch_size: usize,
    rng: &RngState,
) -> Result<ModelParams> {
    if samples.is_empty() {
        return Err(Error::Config("no pooled samples to train on".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let mut params = init.clone();
    let eta = params.hp.learning_rate;
    for epoch in 0..epochs {
        let erng = rng.split(epoch as u64);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut shuffle_rng = erng.split(0);
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.next_index(i + 1);
            order.swap(i, j);
        }
        for (b, batch) in order.chunks(batch_size).enumerate() {
            let batch_samples: Vec<TrainingSample> =
                batch.iter().map(|&i| samples[i].clone()).collect();
            let mut g = user_gradient(&params, &batch_samples, &erng.split(1 + b as u64), true)?;
            let n = batch_samples.len() as f64;
            g.map_values(|v| v / n);
            params.apply_gradient(&g, eta)?;
        }
    }
    Ok(params)
}
