//! Self-describing binary model checkpoints.
//!
//! Layout: magic + version, a text header with the hyperparameters and a
//! layout manifest (one `name shape...` line per matrix, embeddings first),
//! then all values row-major as 64-bit little-endian floats in manifest
//! order. Loading verifies the manifest against the hyperparameters, so a
//! checkpoint written under a different configuration is rejected instead
//! of being silently mis-read.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{HyperParams, ModelParams, UserModelMode};

const MAGIC: &[u8; 8] = b"FNRCKPT\n";
const VERSION: u32 = 1;

fn mode_tag(mode: UserModelMode) -> &'static str {
    match mode {
        UserModelMode::Full => "full",
        UserModelMode::LongTermOnly => "long_term_only",
        UserModelMode::ShortTermOnly => "short_term_only",
    }
}

fn mode_of(tag: &str) -> Result<UserModelMode> {
    match tag {
        "full" => Ok(UserModelMode::Full),
        "long_term_only" => Ok(UserModelMode::LongTermOnly),
        "short_term_only" => Ok(UserModelMode::ShortTermOnly),
        other => Err(Error::Checkpoint(format!("unknown user mode {other:?}"))),
    }
}

fn header_text(params: &ModelParams) -> String {
    let hp = &params.hp;
    let mut h = String::new();
    h.push_str(&format!(
        "word_embed_dim {}\ngru_units {}\nnum_heads {}\nhead_dim {}\nattn_query_dim {}\n\
         cnn_window {}\ncnn_filters {}\ntitle_len {}\nhistory_len {}\nnegatives_h {}\n\
         dropout_rate {}\nlearning_rate {}\nclip_scale {}\nnoise_scale {}\n\
         client_fraction {}\nvocab_size {}\nuser_mode {}\n",
        hp.word_embed_dim,
        hp.gru_units,
        hp.num_heads,
        hp.head_dim,
        hp.attn_query_dim,
        hp.cnn_window,
        hp.cnn_filters,
        hp.title_len,
        hp.history_len,
        hp.negatives_h,
        hp.dropout_rate,
        hp.learning_rate,
        hp.clip_scale,
        hp.noise_scale,
        hp.client_fraction,
        hp.vocab_size,
        mode_tag(hp.user_mode),
    ));
    h.push_str("layout\n");
    for (name, t) in params.all_entries() {
        h.push_str(name);
        for d in t.shape() {
            h.push_str(&format!(" {d}"));
        }
        h.push('\n');
    }
    h.push_str("end\n");
    h
}

/// Write `params` to `path`, replacing any existing file.
pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let header = header_text(params);
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    for (_, t) in params.all_entries() {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a checkpoint back into a `ModelParams`. Fails with a checkpoint
/// error on magic/version/manifest mismatch or truncation.
pub fn load(path: &Path) -> Result<ModelParams> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint(format!("{}: truncated header", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: not a model checkpoint",
            path.display()
        )));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let header = String::from_utf8(header)
        .map_err(|_| Error::Checkpoint(format!("{}: header is not UTF-8", path.display())))?;

    let (hp, manifest) = parse_header(&header, path)?;
    let mut params = ModelParams::zeros(&hp)?;

    // the manifest must agree with the layout implied by the header's
    // hyperparameters
    let expected: Vec<(String, Vec<usize>)> = params
        .all_entries()
        .iter()
        .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
        .collect();
    if manifest != expected {
        return Err(Error::Checkpoint(format!(
            "{}: layout manifest does not match the stated hyperparameters",
            path.display()
        )));
    }

    for (_, t) in params.all_entries_mut() {
        for v in t.data_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| {
                Error::Checkpoint(format!("{}: truncated values", path.display()))
            })?;
            *v = f64::from_le_bytes(b);
        }
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Checkpoint(format!(
            "{}: trailing bytes after values",
            path.display()
        )));
    }
    Ok(params)
}

fn parse_header(header: &str, path: &Path) -> Result<(HyperParams, Vec<(String, Vec<usize>)>)> {
    let bad = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));
    let mut hp = HyperParams::default();
    let mut lines = header.lines();
    let mut in_layout = false;
    let mut manifest = Vec::new();
    for line in &mut lines {
        if !in_layout {
            if line == "layout" {
                in_layout = true;
                continue;
            }
            let Some((key, value)) = line.split_once(' ') else {
                return Err(bad(format!("malformed header line {line:?}")));
            };
            let ubad = |k: &str, v: &str| bad(format!("bad value for {k}: {v:?}"));
            match key {
                "word_embed_dim" => hp.word_embed_dim = value.parse().map_err(|_| ubad(key, value))?,
                "gru_units" => hp.gru_units = value.parse().map_err(|_| ubad(key, value))?,
                "num_heads" => hp.num_heads = value.parse().map_err(|_| ubad(key, value))?,
                "head_dim" => hp.head_dim = value.parse().map_err(|_| ubad(key, value))?,
                "attn_query_dim" => hp.attn_query_dim = value.parse().map_err(|_| ubad(key, value))?,
                "cnn_window" => hp.cnn_window = value.parse().map_err(|_| ubad(key, value))?,
                "cnn_filters" => hp.cnn_filters = value.parse().map_err(|_| ubad(key, value))?,
                "title_len" => hp.title_len = value.parse().map_err(|_| ubad(key, value))?,
                "history_len" => hp.history_len = value.parse().map_err(|_| ubad(key, value))?,
                "negatives_h" => hp.negatives_h = value.parse().map_err(|_| ubad(key, value))?,
                "dropout_rate" => hp.dropout_rate = value.parse().map_err(|_| ubad(key, value))?,
                "learning_rate" => hp.learning_rate = value.parse().map_err(|_| ubad(key, value))?,
                "clip_scale" => hp.clip_scale = value.parse().map_err(|_| ubad(key, value))?,
                "noise_scale" => hp.noise_scale = value.parse().map_err(|_| ubad(key, value))?,
                "client_fraction" => hp.client_fraction = value.parse().map_err(|_| ubad(key, value))?,
                "vocab_size" => hp.vocab_size = value.parse().map_err(|_| ubad(key, value))?,
                "user_mode" => hp.user_mode = mode_of(value)?,
                other => return Err(bad(format!("unknown header key {other:?}"))),
            }
        } else {
            if line == "end" {
                return Ok((hp, manifest));
            }
            let mut parts = line.split(' ');
            let name = parts
                .next()
                .ok_or_else(|| bad("empty manifest line".into()))?
                .to_string();
            let shape: Vec<usize> = parts
                .map(|p| p.parse().map_err(|_| bad(format!("bad shape in {line:?}"))))
                .collect::<Result<_>>()?;
            manifest.push((name, shape));
        }
    }
    Err(bad("missing end marker".into()))
}

/// Verify that a checkpoint's layout matches `hp` without loading values.
pub fn check_layout(params: &ModelParams, hp: &HyperParams) -> Result<()> {
    let expected = ModelParams::zeros(hp)?;
    let a: Vec<_> = params
        .all_entries()
        .iter()
        .map(|(n, t)| (*n, t.shape().to_vec()))
        .collect();
    let b: Vec<_> = expected
        .all_entries()
        .iter()
        .map(|(n, t)| (*n, t.shape().to_vec()))
        .collect();
    if a != b {
        return Err(Error::Checkpoint(
            "checkpoint layout does not match the configuration".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    #[test]
    fn round_trip_is_exact() {
        let hp = HyperParams::desk(17);
        let params = ModelParams::init(&hp, &RngState::new(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&params, &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded, params);
    }

    #[test]
    fn saves_are_byte_identical() {
        let hp = HyperParams::desk(9);
        let params = ModelParams::init(&hp, &RngState::new(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save(&params, &a).unwrap();
        save(&params, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        let err = load(&path).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }

    #[test]
    fn truncated_values_rejected() {
        let hp = HyperParams::desk(5);
        let params = ModelParams::init(&hp, &RngState::new(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&params, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
        assert!(load(&path).is_err());
    }

    #[test]
    fn layout_check_rejects_different_dims() {
        let params = ModelParams::init(&HyperParams::desk(5), &RngState::new(4)).unwrap();
        let other = HyperParams::desk(6);
        assert!(check_layout(&params, &other).is_err());
        assert!(check_layout(&params, &HyperParams::desk(5)).is_ok());
    }

    #[test]
    fn ablation_mode_round_trips() {
        let mut hp = HyperParams::desk(5);
        hp.user_mode = UserModelMode::ShortTermOnly;
        let params = ModelParams::init(&hp, &RngState::new(5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&params, &path).unwrap();
        assert_eq!(load(&path).unwrap().hp.user_mode, UserModelMode::ShortTermOnly);
    }
}
