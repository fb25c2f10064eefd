//! Seeded synthetic click-log generator with topic structure.
//!
//! Each news article belongs to one topic and its title is drawn from that
//! topic's private vocabulary block, so titles are fully informative about
//! topics. Each user has a preference distribution over topics with one
//! dominant topic; candidate clicks are Bernoulli with probability
//! `(1 - click_noise) * preference + click_noise / num_topics` — i.e. with
//! probability `click_noise` the user ignores preferences and clicks at the
//! topic-agnostic base rate. Impressions are split chronologically into
//! train and test per user.

use crate::data::{Catalog, Impression, NewsArticle};
use crate::error::{Error, Result};
use crate::rng::RngState;
use std::collections::HashMap;

/// Generator configuration. All counts must be >= 1.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub num_users: usize,
    pub num_news: usize,
    pub num_topics: usize,
    /// Size of each topic's private vocabulary block.
    pub words_per_topic: usize,
    /// Probability that a click decision ignores the user's preferences;
    /// must be in [0, 0.5).
    pub click_noise: f64,
    pub title_len: usize,
    pub impressions_per_user: usize,
    pub candidates_per_impression: usize,
    /// Leading fraction of each user's impressions that goes to train.
    pub train_fraction: f64,
    /// Probability mass on the user's dominant topic (rest spread evenly).
    pub pref_strength: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_users: 200,
            num_news: 500,
            num_topics: 8,
            words_per_topic: 30,
            click_noise: 0.1,
            title_len: 6,
            impressions_per_user: 40,
            candidates_per_impression: 6,
            train_fraction: 0.75,
            pref_strength: 0.9,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_users", self.num_users),
            ("num_news", self.num_news),
            ("num_topics", self.num_topics),
            ("words_per_topic", self.words_per_topic),
            ("title_len", self.title_len),
            ("impressions_per_user", self.impressions_per_user),
            ("candidates_per_impression", self.candidates_per_impression),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !(0.0..0.5).contains(&self.click_noise) {
            return Err(Error::Config(format!(
                "click_noise must be in [0, 0.5): {}",
                self.click_noise
            )));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::Config(format!(
                "train_fraction must be in [0, 1]: {}",
                self.train_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.pref_strength) {
            return Err(Error::Config(format!(
                "pref_strength must be in [0, 1]: {}",
                self.pref_strength
            )));
        }
        Ok(())
    }
}

/// Per-user ground truth, returned for oracle-ranker calibration in tests.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    /// topic index of each news article.
    pub news_topic: Vec<usize>,
    /// user_id -> preference distribution over topics.
    pub user_pref: HashMap<String, Vec<f64>>,
}

/// Deterministically generate a catalog plus chronological train/test
/// impression splits from `spec` and `rng`.
pub fn generate_synthetic(
    spec: &SynthSpec,
    rng: &RngState,
) -> Result<(Catalog, Vec<Impression>, Vec<Impression>, SynthTruth)> {
    spec.validate()?;
    let mut news_rng = rng.split(0);
    let mut user_rng = rng.split(1);
    let click_rng = rng.split(2);

    // catalog: topic-blocked vocabulary, titles drawn within the block
    let mut articles = Vec::with_capacity(spec.num_news);
    let mut news_topic = Vec::with_capacity(spec.num_news);
    let mut words: Vec<String> = Vec::new();
    for t in 0..spec.num_topics {
        for w in 0..spec.words_per_topic {
            words.push(format!("t{t}w{w}"));
        }
    }
    for n in 0..spec.num_news {
        let topic = news_rng.next_index(spec.num_topics);
        news_topic.push(topic);
        let title: Vec<usize> = (0..spec.title_len)
            .map(|_| topic * spec.words_per_topic + news_rng.next_index(spec.words_per_topic))
            .collect();
        articles.push(NewsArticle {
            news_id: format!("n{n:05}"),
            token_ids: title,
        });
    }
    let by_id = articles
        .iter()
        .enumerate()
        .map(|(i, a)| (a.news_id.clone(), i))
        .collect();
    let vocab = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    let catalog = Catalog {
        articles,
        by_id,
        vocab,
        words,
    };

    // user preferences: one dominant topic, remaining mass spread evenly
    let mut user_pref = HashMap::new();
    let user_ids: Vec<String> = (0..spec.num_users).map(|u| format!("u{u:05}")).collect();
    for uid in &user_ids {
        let dominant = user_rng.next_index(spec.num_topics);
        let rest = if spec.num_topics > 1 {
            (1.0 - spec.pref_strength) / (spec.num_topics - 1) as f64
        } else {
            0.0
        };
        let mut pref = vec![rest; spec.num_topics];
        pref[dominant] = if spec.num_topics > 1 {
            spec.pref_strength
        } else {
            1.0
        };
        user_pref.insert(uid.clone(), pref);
    }

    // impressions: interleaved timestamps so users progress in parallel
    let mut train = Vec::new();
    let mut test = Vec::new();
    let train_count =
        ((spec.train_fraction * spec.impressions_per_user as f64).round() as usize)
            .min(spec.impressions_per_user);
    for (u, uid) in user_ids.iter().enumerate() {
        let pref = &user_pref[uid];
        let mut history: Vec<String> = Vec::new();
        let mut irng = click_rng.split(u as u64);
        for k in 0..spec.impressions_per_user {
            let timestamp = (k * spec.num_users + u) as i64;
            let mut candidates = Vec::with_capacity(spec.candidates_per_impression);
            for _ in 0..spec.candidates_per_impression {
                let n = irng.next_index(spec.num_news);
                // with probability click_noise the user ignores preferences
                // and clicks at the topic-agnostic base rate 1/num_topics
                let p_click = (1.0 - spec.click_noise) * pref[news_topic[n]]
                    + spec.click_noise / spec.num_topics as f64;
                let clicked = irng.next_f64() < p_click;
                candidates.push((catalog.articles[n].news_id.clone(), clicked));
            }
            let imp = Impression {
                user_id: uid.clone(),
                timestamp,
                history: history.clone(),
                candidates: candidates.clone(),
            };
            if k < train_count {
                train.push(imp);
            } else {
                test.push(imp);
            }
            // clicked candidates join later histories
            for (id, clicked) in &candidates {
                if *clicked {
                    history.push(id.clone());
                }
            }
        }
    }
    train.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.user_id.cmp(&b.user_id)));
    test.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.user_id.cmp(&b.user_id)));

    let truth = SynthTruth {
        news_topic,
        user_pref,
    };
    Ok((catalog, train, test, truth))
}
