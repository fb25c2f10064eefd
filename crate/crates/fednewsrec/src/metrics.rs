//! Impression-level ranking metrics: AUC, MRR, nDCG@k, and a full-model
//! evaluation pass over a test set of impressions.
//!
//! All metrics are rank-based and averaged uniformly over the impressions
//! that are scoreable for them; unusable impressions (e.g. no positive
//! candidate) are skipped per metric and the skip count reported.

use std::collections::HashMap;

use crate::data::{Catalog, Impression};
use crate::error::{Error, Result};
use crate::model::{encode_news, encode_user, score, ModelParams};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Aggregate metrics of one evaluation pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub auc: f64,
    pub mrr: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    /// Impressions that no metric could score (all-positive, all-negative,
    /// or empty history).
    pub skipped: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "round,loss,auc,mrr,ndcg5,ndcg10,skipped";

    /// One CSV row matching [`Self::CSV_HEADER`].
    pub fn csv_row(&self, round: usize, loss: f64) -> String {
        format!(
            "{round},{loss:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.auc, self.mrr, self.ndcg5, self.ndcg10, self.skipped
        )
    }
}

/// Probability that a uniformly chosen positive outranks a uniformly chosen
/// negative; ties count one half. `None` when there is no positive or no
/// negative.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    debug_assert_eq!(scores.len(), labels.len());
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    // zero pairs means all-positive or all-negative: undefined
    if pairs == 0 {
        return None;
    }
    Some(wins / pairs as f64)
}

/// Candidate indices sorted by descending score; ties keep input order.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Mean reciprocal rank over the positives, ranking by descending score
/// with ties broken by input index. `None` when there is no positive.
pub fn mrr(scores: &[f64], labels: &[bool]) -> Option<f64> {
    debug_assert_eq!(scores.len(), labels.len());
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return None;
    }
    let mut total = 0.0;
    for (rank0, &idx) in ranking(scores).iter().enumerate() {
        if labels[idx] {
            total += 1.0 / (rank0 + 1) as f64;
        }
    }
    Some(total / positives as f64)
}

/// nDCG@k with gain 2^label - 1 and discount 1/log2(rank+1), normalized by
/// the ideal ordering's DCG@k. `None` when there is no positive.
pub fn ndcg_at_k(scores: &[f64], labels: &[bool], k: usize) -> Result<Option<f64>> {
    debug_assert_eq!(scores.len(), labels.len());
    if k == 0 {
        return Err(Error::Config("ndcg cutoff k must be >= 1".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Ok(None);
    }
    let dcg: f64 = ranking(scores)
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &idx)| labels[idx])
        .map(|(rank0, _)| 1.0 / ((rank0 + 2) as f64).log2())
        .sum();
    // ideal: all positives first
    let ideal: f64 = (0..positives.min(k))
        .map(|rank0| 1.0 / ((rank0 + 2) as f64).log2())
        .sum();
    Ok(Some(dcg / ideal))
}

/// Score every candidate of every impression with the model (dropout off)
/// and average the per-impression metrics. News encodings are computed
/// once per distinct news id; impressions with an empty history or without
/// both a positive and a negative are skipped and counted.
pub fn evaluate(
    params: &ModelParams,
    impressions: &[Impression],
    catalog: &Catalog,
) -> Result<MetricsReport> {
    // dropout is disabled at evaluation, so this stream is never consumed
    let mut rng = RngState::new(0);
    let encode = |id: &str, cache: &mut HashMap<String, Vec<f64>>| -> Result<Vec<f64>> {
        if let Some(v) = cache.get(id) {
            return Ok(v.clone());
        }
        let tokens = catalog
            .tokens_of(id)
            .ok_or_else(|| Error::Data(format!("unknown news id {id:?}")))?;
        let v = encode_news(params, tokens, &mut RngState::new(0), false)?;
        cache.insert(id.to_string(), v.clone());
        Ok(v)
    };
    let mut cache: HashMap<String, Vec<f64>> = HashMap::new();

    let dim = params.hp.news_dim();
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    let mut skipped = 0usize;

    for imp in impressions {
        let has_pos = imp.candidates.iter().any(|(_, c)| *c);
        let has_neg = imp.candidates.iter().any(|(_, c)| !*c);
        if imp.history.is_empty() || !has_pos {
            skipped += 1;
            continue;
        }
        let mut hist = Tensor::zeros(&[imp.history.len(), dim]);
        for (i, id) in imp.history.iter().enumerate() {
            let v = encode(id, &mut cache)?;
            hist.row_mut(i).copy_from_slice(&v);
        }
        let u = encode_user(params, &hist, &mut rng, false)?;
        let mut scores = Vec::with_capacity(imp.candidates.len());
        let mut labels = Vec::with_capacity(imp.candidates.len());
        for (id, clicked) in &imp.candidates {
            let t = encode(id, &mut cache)?;
            scores.push(score(&u, &t)?);
            labels.push(*clicked);
        }
        let mut used = false;
        if has_neg {
            if let Some(a) = auc(&scores, &labels) {
                sums[0] += a;
                counts[0] += 1;
                used = true;
            }
        }
        if let Some(m) = mrr(&scores, &labels) {
            sums[1] += m;
            counts[1] += 1;
            used = true;
        }
        if let Some(n5) = ndcg_at_k(&scores, &labels, 5)? {
            sums[2] += n5;
            counts[2] += 1;
        }
        if let Some(n10) = ndcg_at_k(&scores, &labels, 10)? {
            sums[3] += n10;
            counts[3] += 1;
        }
        if !used {
            skipped += 1;
        }
    }

    let avg = |i: usize| {
        if counts[i] == 0 {
            f64::NAN
        } else {
            sums[i] / counts[i] as f64
        }
    };
    Ok(MetricsReport {
        auc: avg(0),
        mrr: avg(1),
        ndcg5: avg(2),
        ndcg10: avg(3),
        skipped,
    })
}
