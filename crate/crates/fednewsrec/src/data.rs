//! Dataset ingestion and client-store construction.
//!
//! File formats (UTF-8, TAB-separated):
//!   news TSV:      `news_id<TAB>title text`
//!   behaviors TSV: `user_id<TAB>unix_timestamp<TAB>hist1,hist2,...<TAB>cand-1 cand-0 ...`
//! where each candidate is `newsid-1` (clicked) or `newsid-0` (shown, not
//! clicked) and the history column lists previously clicked news ids,
//! oldest first (it may be empty).

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fed::ClientStore;
use crate::model::{HyperParams, TrainingSample};
use crate::rng::RngState;

/// One news article: its id and the token ids of its (truncated) title.
#[derive(Debug, Clone, PartialEq)]
pub struct NewsArticle {
    pub news_id: String,
    pub token_ids: Vec<usize>,
}

/// The loaded news corpus plus the vocabulary built from it
/// (first-seen order, lowercased, whitespace tokenization).
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub articles: Vec<NewsArticle>,
    pub by_id: HashMap<String, usize>,
    pub vocab: HashMap<String, usize>,
    pub words: Vec<String>,
}

impl Catalog {
    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn tokens_of(&self, news_id: &str) -> Option<&[usize]> {
        self.by_id
            .get(news_id)
            .map(|&i| self.articles[i].token_ids.as_slice())
    }
}

/// One display event: candidates with click labels plus the user's history
/// snapshot at that time (oldest first, capped at `history_len`).
#[derive(Debug, Clone, PartialEq)]
pub struct Impression {
    pub user_id: String,
    pub timestamp: i64,
    pub history: Vec<String>,
    /// (news_id, clicked)
    pub candidates: Vec<(String, bool)>,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Parse a news TSV and build the vocabulary. Titles are lowercased, split
/// on whitespace, and truncated to the first `title_len` words.
pub fn load_catalog(path: &Path, title_len: usize) -> Result<Catalog> {
    let file = std::fs::File::open(path)?;
    let mut catalog = Catalog {
        articles: Vec::new(),
        by_id: HashMap::new(),
        vocab: HashMap::new(),
        words: Vec::new(),
    };
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let Some((id, title)) = line.split_once('\t') else {
            return Err(parse_err(path, lineno, "expected news_id<TAB>title"));
        };
        if id.is_empty() {
            return Err(parse_err(path, lineno, "empty news id"));
        }
        let mut token_ids = Vec::new();
        for word in title.to_lowercase().split_whitespace().take(title_len) {
            let next = catalog.vocab.len();
            let id = *catalog.vocab.entry(word.to_string()).or_insert(next);
            if id == next {
                catalog.words.push(word.to_string());
            }
            token_ids.push(id);
        }
        if token_ids.is_empty() {
            return Err(Error::Data(format!("news {id} has an empty title")));
        }
        if catalog.by_id.contains_key(id) {
            return Err(Error::Data(format!("duplicate news id {id}")));
        }
        catalog.by_id.insert(id.to_string(), catalog.articles.len());
        catalog.articles.push(NewsArticle {
            news_id: id.to_string(),
            token_ids,
        });
    }
    Ok(catalog)
}

/// Parse a behaviors TSV against a loaded catalog. History snapshots are
/// capped at the `history_len` most recent clicks; per-user timestamps must
/// be non-decreasing in file order.
pub fn load_behaviors(path: &Path, catalog: &Catalog, hp: &HyperParams) -> Result<Vec<Impression>> {
    let file = std::fs::File::open(path)?;
    let mut impressions = Vec::new();
    let mut last_ts: HashMap<String, i64> = HashMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 4 TAB-separated fields, got {}", fields.len()),
            ));
        }
        let user_id = fields[0].to_string();
        let timestamp: i64 = fields[1]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad timestamp {:?}", fields[1])))?;
        if let Some(&prev) = last_ts.get(&user_id) {
            if timestamp < prev {
                return Err(Error::Data(format!(
                    "non-monotone timestamps for user {user_id} at line {lineno}"
                )));
            }
        }
        last_ts.insert(user_id.clone(), timestamp);

        let mut history: Vec<String> = if fields[2].is_empty() {
            Vec::new()
        } else {
            fields[2].split(',').map(str::to_string).collect()
        };
        for id in &history {
            if !catalog.by_id.contains_key(id) {
                return Err(Error::Data(format!(
                    "unknown news id {id} in history at line {lineno}"
                )));
            }
        }
        if history.len() > hp.history_len {
            history.drain(..history.len() - hp.history_len);
        }

        let mut candidates = Vec::new();
        for cand in fields[3].split_whitespace() {
            let Some((id, label)) = cand.rsplit_once('-') else {
                return Err(parse_err(path, lineno, format!("bad candidate {cand:?}")));
            };
            let clicked = match label {
                "1" => true,
                "0" => false,
                _ => return Err(parse_err(path, lineno, format!("bad label in {cand:?}"))),
            };
            if !catalog.by_id.contains_key(id) {
                return Err(Error::Data(format!(
                    "unknown news id {id} in candidates at line {lineno}"
                )));
            }
            candidates.push((id.to_string(), clicked));
        }
        if candidates.is_empty() {
            return Err(parse_err(path, lineno, "impression has no candidates"));
        }
        impressions.push(Impression {
            user_id,
            timestamp,
            history,
            candidates,
        });
    }
    Ok(impressions)
}

pub fn write_catalog(path: &Path, catalog: &Catalog) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for article in &catalog.articles {
        let title: Vec<&str> = article
            .token_ids
            .iter()
            .map(|&t| catalog.words[t].as_str())
            .collect();
        writeln!(out, "{}\t{}", article.news_id, title.join(" "))?;
    }
    Ok(())
}

pub fn write_behaviors(path: &Path, impressions: &[Impression]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for imp in impressions {
        let cands: Vec<String> = imp
            .candidates
            .iter()
            .map(|(id, clicked)| format!("{id}-{}", if *clicked { 1 } else { 0 }))
            .collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            imp.user_id,
            imp.timestamp,
            imp.history.join(","),
            cands.join(" ")
        )?;
    }
    Ok(())
}

/// Build per-user client stores from training impressions. Every click
/// becomes a [`TrainingSample`] with H negatives drawn from the same
/// impression's non-clicked candidates (without replacement, falling back
/// to with-replacement when fewer than H exist). Clicks without any
/// preceding history are unusable and skipped; users left with zero
/// samples are dropped.
pub fn build_client_stores(
    impressions: &[Impression],
    catalog: &Catalog,
    hp: &HyperParams,
    rng: &RngState,
) -> Result<Vec<ClientStore>> {
    let mut by_user: HashMap<&str, Vec<&Impression>> = HashMap::new();
    for imp in impressions {
        by_user.entry(&imp.user_id).or_default().push(imp);
    }
    let mut user_ids: Vec<&str> = by_user.keys().copied().collect();
    user_ids.sort_unstable();

    let mut stores = Vec::new();
    for (uidx, user_id) in user_ids.iter().enumerate() {
        let mut urng = rng.split(uidx as u64);
        let mut samples = Vec::new();
        let mut clicks: Vec<(String, i64)> = Vec::new();
        for imp in &by_user[user_id] {
            let history_tokens: Vec<Vec<usize>> = imp
                .history
                .iter()
                .map(|id| catalog.tokens_of(id).unwrap().to_vec())
                .collect();
            let non_clicked: Vec<&str> = imp
                .candidates
                .iter()
                .filter(|(_, c)| !c)
                .map(|(id, _)| id.as_str())
                .collect();
            for (id, clicked) in &imp.candidates {
                if !clicked {
                    continue;
                }
                clicks.push((id.clone(), imp.timestamp));
                if history_tokens.is_empty() || non_clicked.is_empty() {
                    continue;
                }
                let negatives = sample_negatives(&non_clicked, hp.negatives_h, &mut urng);
                samples.push(TrainingSample {
                    history: history_tokens.clone(),
                    positive: catalog.tokens_of(id).unwrap().to_vec(),
                    negatives: negatives
                        .iter()
                        .map(|id| catalog.tokens_of(id).unwrap().to_vec())
                        .collect(),
                });
            }
        }
        if samples.is_empty() {
            continue;
        }
        stores.push(ClientStore {
            user_id: user_id.to_string(),
            clicks,
            samples,
            rng: urng.split(u64::MAX),
        });
    }
    Ok(stores)
}

fn sample_negatives<'a>(pool: &[&'a str], h: usize, rng: &mut RngState) -> Vec<&'a str> {
    if pool.len() >= h {
        // partial Fisher-Yates: uniform without replacement
        let mut indices: Vec<usize> = (0..pool.len()).collect();
        let mut picked = Vec::with_capacity(h);
        for i in 0..h {
            let j = i + rng.next_index(indices.len() - i);
            indices.swap(i, j);
            picked.push(pool[indices[i]]);
        }
        picked
    } else {
        (0..h).map(|_| pool[rng.next_index(pool.len())]).collect()
    }
}
