//! Parameter checkpoint format.
//!
//! Layout: magic `MLPF`, one version byte, then the field configuration as
//! little-endian u32 (seq_len, channels, num_classes, embed_dim, time_freqs,
//! hidden-layer count, hidden widths...), the parameter count as u64, and the
//! raw and EMA parameter blocks side by side as little-endian f32.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use latentflow_core::velocity::{MlpConfig, MlpField};

const MAGIC: &[u8; 4] = b"MLPF";
const VERSION: u8 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: MlpConfig,
    pub raw: Vec<f64>,
    pub ema: Vec<f64>,
}

impl Checkpoint {
    pub fn raw_field(&self) -> Result<MlpField> {
        MlpField::from_params(self.config.clone(), self.raw.clone()).map_err(Into::into)
    }

    pub fn ema_field(&self) -> Result<MlpField> {
        MlpField::from_params(self.config.clone(), self.ema.clone()).map_err(Into::into)
    }
}

pub fn encode_checkpoint(config: &MlpConfig, raw: &[f64], ema: &[f64]) -> Result<Vec<u8>> {
    if raw.len() != config.param_count() || ema.len() != config.param_count() {
        bail!(
            "parameter blocks must hold {} values, got {} and {}",
            config.param_count(),
            raw.len(),
            ema.len()
        );
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for v in [
        config.seq_len,
        config.channels,
        config.num_classes,
        config.embed_dim,
        config.time_freqs,
        config.hidden.len(),
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &h in &config.hidden {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    out.extend_from_slice(&(raw.len() as u64).to_le_bytes());
    for block in [raw, ema] {
        for &v in block {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 29 || &bytes[..4] != MAGIC {
        bail!("not a MLPF checkpoint");
    }
    if bytes[4] != VERSION {
        bail!("unsupported checkpoint version {}", bytes[4]);
    }
    let mut off = 5;
    let mut next_u32 = || -> Result<usize> {
        if off + 4 > bytes.len() {
            bail!("checkpoint truncated in header");
        }
        let v = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        off += 4;
        Ok(v)
    };
    let seq_len = next_u32()?;
    let channels = next_u32()?;
    let num_classes = next_u32()?;
    let embed_dim = next_u32()?;
    let time_freqs = next_u32()?;
    let hidden_count = next_u32()?;
    let mut hidden = Vec::with_capacity(hidden_count);
    for _ in 0..hidden_count {
        hidden.push(next_u32()?);
    }
    let config = MlpConfig {
        seq_len,
        channels,
        hidden,
        num_classes,
        embed_dim,
        time_freqs,
    };

    if off + 8 > bytes.len() {
        bail!("checkpoint truncated before parameter count");
    }
    let count = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize;
    off += 8;
    if count != config.param_count() {
        bail!(
            "parameter count {count} does not match the configuration ({})",
            config.param_count()
        );
    }
    if bytes.len() != off + 2 * count * 4 {
        bail!("checkpoint truncated in parameter blocks");
    }
    let read_block = |off: usize| -> Vec<f64> {
        (0..count)
            .map(|i| {
                f32::from_le_bytes(bytes[off + 4 * i..off + 4 * i + 4].try_into().unwrap()) as f64
            })
            .collect()
    };
    let raw = read_block(off);
    let ema = read_block(off + count * 4);
    Ok(Checkpoint { config, raw, ema })
}

pub fn save_checkpoint(path: &Path, config: &MlpConfig, raw: &[f64], ema: &[f64]) -> Result<()> {
    fs::write(path, encode_checkpoint(config, raw, ema)?)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path).with_context(|| format!("reading {}", path.display()))?)
}
