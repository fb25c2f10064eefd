//! Flat `key = value` configuration files mapped onto [`HyperParams`].
//!
//! Lines are UTF-8, `#` starts a comment, blank lines are ignored. Keys are
//! named exactly like the `HyperParams` fields; unknown keys are errors so
//! typos do not silently fall back to defaults.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::HyperParams;

/// Parse a config file into `HyperParams`, starting from defaults; any key
/// present overrides the default. The result is validated.
pub fn load_config(path: &Path) -> Result<HyperParams> {
    let text = std::fs::read_to_string(path)?;
    let mut hp = HyperParams::default();
    apply_config(&mut hp, &text, &path.display().to_string())?;
    // vocab_size 0 means "take it from the catalog at load time"; validate
    // the rest with a placeholder vocabulary
    if hp.vocab_size == 0 {
        let mut probe = hp.clone();
        probe.vocab_size = 1;
        probe.validate()?;
    } else {
        hp.validate()?;
    }
    Ok(hp)
}

/// Apply `key = value` lines from `text` on top of `hp`. `source` names the
/// origin for error messages.
pub fn apply_config(hp: &mut HyperParams, text: &str, source: &str) -> Result<()> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(parse_err(source, lineno + 1, "expected `key = value`"));
        };
        let key = key.trim();
        let value = value.trim();
        set_key(hp, key, value).map_err(|msg| parse_err(source, lineno + 1, msg))?;
    }
    Ok(())
}

fn set_key(hp: &mut HyperParams, key: &str, value: &str) -> std::result::Result<(), String> {
    fn usize_of(v: &str) -> std::result::Result<usize, String> {
        v.parse().map_err(|_| format!("expected an integer, got {v:?}"))
    }
    fn f64_of(v: &str) -> std::result::Result<f64, String> {
        if v.eq_ignore_ascii_case("inf") || v.eq_ignore_ascii_case("infinity") {
            return Ok(f64::INFINITY);
        }
        v.parse().map_err(|_| format!("expected a number, got {v:?}"))
    }
    match key {
        "word_embed_dim" => hp.word_embed_dim = usize_of(value)?,
        "gru_units" => hp.gru_units = usize_of(value)?,
        "num_heads" => hp.num_heads = usize_of(value)?,
        "head_dim" => hp.head_dim = usize_of(value)?,
        "attn_query_dim" => hp.attn_query_dim = usize_of(value)?,
        "cnn_window" => hp.cnn_window = usize_of(value)?,
        "cnn_filters" => hp.cnn_filters = usize_of(value)?,
        "title_len" => hp.title_len = usize_of(value)?,
        "history_len" => hp.history_len = usize_of(value)?,
        "negatives_h" => hp.negatives_h = usize_of(value)?,
        "dropout_rate" => hp.dropout_rate = f64_of(value)?,
        "learning_rate" => hp.learning_rate = f64_of(value)?,
        "clip_scale" => hp.clip_scale = f64_of(value)?,
        "noise_scale" => hp.noise_scale = f64_of(value)?,
        "client_fraction" => hp.client_fraction = f64_of(value)?,
        "vocab_size" => hp.vocab_size = usize_of(value)?,
        other => return Err(format!("unknown config key {other:?}")),
    }
    Ok(())
}

fn parse_err(source: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        message: message.into(),
    }
}
