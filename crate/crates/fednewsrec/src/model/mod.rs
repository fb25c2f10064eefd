//! The news recommendation model: encoders, scoring, loss, and gradients.

mod encoder;
mod loss;
mod params;

pub use encoder::{
    encode_news, encode_news_backward, encode_news_cached, encode_user, encode_user_backward,
    encode_user_cached, NewsCache, UserCache,
};
pub use loss::{sample_loss, score, score_grad, user_gradient, user_loss, TrainingSample};
pub use params::{DenseParams, GradientSet, HyperParams, ModelParams, UserModelMode};

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

/// Overwrite embedding rows with pre-trained vectors from a text file of
/// lines `word v1 v2 ...`. Words absent from the file keep their random
/// initialization. Returns how many rows were loaded.
pub fn load_pretrained_embeddings(
    params: &mut ModelParams,
    vocab: &HashMap<String, usize>,
    path: &Path,
) -> Result<usize> {
    let dim = params.hp.word_embed_dim;
    let file = std::fs::File::open(path)?;
    let mut loaded = 0;
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap();
        let Some(&row) = vocab.get(word) else {
            continue;
        };
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!("bad embedding value {p:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("expected {dim} values, got {}", values.len()),
            });
        }
        params.word_embeddings.row_mut(row).copy_from_slice(&values);
        loaded += 1;
    }
    Ok(loaded)
}
