//! Latent-sequence file formats.
//!
//! Binary layout: magic `LSEQ`, one version byte, then `B`, `L`, `d` as
//! little-endian u32, then `B*L*d` little-endian f32 values (row-major per
//! item). The CSV alternative writes one row per frame with `item,frame`
//! index columns. Datasets carry a JSON sidecar with labels and, when known,
//! the generating spec.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use latentflow_core::data::DatasetSpec;
use latentflow_core::{Condition, LatentSeq};
use serde::{Deserialize, Serialize};

const MAGIC: &[u8; 4] = b"LSEQ";
const VERSION: u8 = 1;

pub fn encode_lseq(items: &[LatentSeq]) -> Result<Vec<u8>> {
    let Some(first) = items.first() else {
        bail!("cannot encode an empty latent batch");
    };
    let (l, d) = first.shape();
    if items.iter().any(|x| x.shape() != (l, d)) {
        bail!("all items must share the same shape");
    }
    let mut out = Vec::with_capacity(13 + items.len() * l * d * 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(items.len() as u32).to_le_bytes());
    out.extend_from_slice(&(l as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for item in items {
        for &v in item.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_lseq(bytes: &[u8]) -> Result<Vec<LatentSeq>> {
    if bytes.len() < 17 {
        bail!("latent file too short");
    }
    if &bytes[..4] != MAGIC {
        bail!("bad magic: expected LSEQ");
    }
    if bytes[4] != VERSION {
        bail!("unsupported LSEQ version {}", bytes[4]);
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    let (b, l, d) = (u32_at(5), u32_at(9), u32_at(13));
    let expected = 17 + b * l * d * 4;
    if bytes.len() != expected {
        bail!("expected {expected} bytes for {b}x{l}x{d}, got {}", bytes.len());
    }
    let mut items = Vec::with_capacity(b);
    let mut off = 17;
    for _ in 0..b {
        let mut data = Vec::with_capacity(l * d);
        for _ in 0..l * d {
            data.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64);
            off += 4;
        }
        items.push(LatentSeq::from_vec(l, d, data)?);
    }
    Ok(items)
}

pub fn write_lseq(path: &Path, items: &[LatentSeq]) -> Result<()> {
    fs::write(path, encode_lseq(items)?)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn read_lseq(path: &Path) -> Result<Vec<LatentSeq>> {
    decode_lseq(&fs::read(path).with_context(|| format!("reading {}", path.display()))?)
}

/// CSV alternative: `item,frame,c0..c{d-1}` with one row per frame.
pub fn write_lseq_csv(path: &Path, items: &[LatentSeq]) -> Result<()> {
    let Some(first) = items.first() else {
        bail!("cannot encode an empty latent batch");
    };
    let (_, d) = first.shape();
    let mut out = String::from("item,frame");
    for c in 0..d {
        out.push_str(&format!(",c{c}"));
    }
    out.push('\n');
    for (i, item) in items.iter().enumerate() {
        for r in 0..item.rows() {
            out.push_str(&format!("{i},{r}"));
            for c in 0..item.cols() {
                out.push_str(&format!(",{}", item.get(r, c)));
            }
            out.push('\n');
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_lseq_csv(path: &Path) -> Result<Vec<LatentSeq>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty CSV")?;
    let d = header.split(',').count().saturating_sub(2);
    if d == 0 {
        bail!("CSV header must be item,frame,c0..");
    }
    let mut per_item: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            bail!("line {}: expected {} fields, got {}", line_no + 2, d + 2, fields.len());
        }
        let item: usize = fields[0].trim().parse().context("item index")?;
        if item == per_item.len() {
            per_item.push(Vec::new());
        } else if item > per_item.len() {
            bail!("line {}: item indices must be contiguous", line_no + 2);
        }
        for f in &fields[2..] {
            per_item[item].push(f.trim().parse::<f64>().context("latent value")?);
        }
    }
    per_item
        .into_iter()
        .map(|data| {
            let frames = data.len() / d;
            LatentSeq::from_vec(frames, d, data).map_err(Into::into)
        })
        .collect()
}

/// JSON sidecar carrying per-item labels (and the generating spec if any).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelsSidecar {
    pub labels: Vec<Option<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<DatasetSpec>,
}

impl LabelsSidecar {
    pub fn from_conditions(conditions: &[Condition], spec: Option<DatasetSpec>) -> Self {
        LabelsSidecar {
            labels: conditions
                .iter()
                .map(|c| match c {
                    Condition::ClassLabel(k) => Some(*k),
                    _ => None,
                })
                .collect(),
            spec,
        }
    }

    pub fn conditions(&self) -> Vec<Condition> {
        self.labels
            .iter()
            .map(|l| match l {
                Some(k) => Condition::ClassLabel(*k),
                None => Condition::Null,
            })
            .collect()
    }
}

pub fn write_labels(path: &Path, sidecar: &LabelsSidecar) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(sidecar)?)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn read_labels(path: &Path) -> Result<LabelsSidecar> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).context("parsing labels sidecar")
}

#[cfg(test)]
mod tests {
    use super::*;
    use latentflow_core::{sample_noise, Rng};

    #[test]
    fn binary_round_trip_is_f32_exact() {
        let mut rng = Rng::seed(1);
        let items: Vec<LatentSeq> = (0..3).map(|_| sample_noise(4, 2, &mut rng).unwrap()).collect();
        let decoded = decode_lseq(&encode_lseq(&items).unwrap()).unwrap();
        assert_eq!(decoded.len(), 3);
        for (a, b) in items.iter().zip(&decoded) {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert_eq!(*x as f32, *y as f32);
                assert_eq!(*y, (*x as f32) as f64);
            }
        }
    }

    #[test]
    fn binary_rejects_corruption() {
        let mut rng = Rng::seed(2);
        let items = vec![sample_noise(2, 2, &mut rng).unwrap()];
        let mut bytes = encode_lseq(&items).unwrap();
        assert!(decode_lseq(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode_lseq(&bytes).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join("latentflow-fmt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("latents.csv");
        let mut rng = Rng::seed(3);
        let items: Vec<LatentSeq> = (0..2).map(|_| sample_noise(3, 4, &mut rng).unwrap()).collect();
        write_lseq_csv(&path, &items).unwrap();
        let back = read_lseq_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in items.iter().zip(&back) {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn labels_sidecar_round_trip() {
        let conds = vec![
            Condition::ClassLabel(2),
            Condition::Null,
            Condition::ClassLabel(0),
        ];
        let sidecar = LabelsSidecar::from_conditions(&conds, None);
        let text = serde_json::to_string(&sidecar).unwrap();
        let back: LabelsSidecar = serde_json::from_str(&text).unwrap();
        assert_eq!(back.conditions(), conds);
    }
}
