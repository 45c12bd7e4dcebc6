//! Deterministic synthetic dataset generators.
//!
//! Three toy families stand in for a real corpus: per-class Gaussians on a
//! circle of radius 4 (sigma 0.5), interleaved moon-shaped arcs, and
//! class-frequency sinusoid sequences. Generation is balanced and fully
//! determined by the dataset seed, with one derived rng stream per class.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::latent::{Batch, Condition, LatentSeq};
use crate::rng::Rng;

pub const CIRCLE_RADIUS: f64 = 4.0;
pub const GAUSSIAN_STD: f64 = 0.5;
const SHAPE_NOISE_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DatasetKind {
    Gaussians,
    MoonsLike,
    SeqSines,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub classes: usize,
    pub seq_len: usize,
    pub channels: usize,
    pub n_per_class: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidArgument(String::from(
                "need at least 2 classes",
            )));
        }
        if self.seq_len == 0 || self.channels == 0 || self.n_per_class == 0 {
            return Err(Error::InvalidArgument(String::from(
                "seq_len, channels and n_per_class must be positive",
            )));
        }
        Ok(())
    }
}

/// Class mean for the Gaussian family: evenly spaced on a circle of radius 4
/// in the first two channels, zero elsewhere.
pub fn class_mean(class: usize, classes: usize, channels: usize) -> Vec<f64> {
    let angle = 2.0 * core::f64::consts::PI * class as f64 / classes as f64;
    let mut mu = alloc::vec![0.0; channels];
    mu[0] = CIRCLE_RADIUS * libm::cos(angle);
    if channels > 1 {
        mu[1] = CIRCLE_RADIUS * libm::sin(angle);
    }
    mu
}

fn gaussian_item(spec: &DatasetSpec, mu: &[f64], rng: &mut Rng) -> LatentSeq {
    let mut out = LatentSeq::zeros(spec.seq_len, spec.channels);
    for r in 0..spec.seq_len {
        for (c, &mean) in mu.iter().enumerate() {
            out.set(r, c, mean + GAUSSIAN_STD * rng.normal());
        }
    }
    out
}

fn moons_item(spec: &DatasetSpec, class: usize, rng: &mut Rng) -> LatentSeq {
    // Class parity picks one of the two interleaved arcs; class pairs beyond
    // the first are shifted upward so any class count stays separable.
    let theta = core::f64::consts::PI * rng.uniform();
    let tier = (class / 2) as f64;
    let (cx, cy) = if class.is_multiple_of(2) {
        (
            CIRCLE_RADIUS * libm::cos(theta),
            CIRCLE_RADIUS * libm::sin(theta) + 2.0 * CIRCLE_RADIUS * tier,
        )
    } else {
        (
            CIRCLE_RADIUS * (1.0 - libm::cos(theta)),
            CIRCLE_RADIUS * (0.5 - libm::sin(theta)) + 2.0 * CIRCLE_RADIUS * tier,
        )
    };
    let mut out = LatentSeq::zeros(spec.seq_len, spec.channels);
    for r in 0..spec.seq_len {
        for c in 0..spec.channels {
            let base = match c {
                0 => cx,
                1 => cy,
                _ => 0.0,
            };
            out.set(r, c, base + SHAPE_NOISE_STD * rng.normal());
        }
    }
    out
}

fn sines_item(spec: &DatasetSpec, class: usize, rng: &mut Rng) -> LatentSeq {
    // Class-specific frequency, random phase per item, reshaped row-major.
    let freq = (class + 1) as f64;
    let phase = 2.0 * core::f64::consts::PI * rng.uniform();
    let total = spec.seq_len * spec.channels;
    let mut data = Vec::with_capacity(total);
    for n in 0..total {
        let arg = 2.0 * core::f64::consts::PI * freq * n as f64 / total as f64 + phase;
        data.push(libm::sin(arg) + SHAPE_NOISE_STD * rng.normal());
    }
    LatentSeq::from_vec(spec.seq_len, spec.channels, data).expect("finite by construction")
}

/// Generates the balanced labeled dataset described by `spec`.
pub fn make_dataset(spec: &DatasetSpec) -> Result<Batch> {
    spec.validate()?;
    let root = Rng::seed(spec.seed);
    let mut items = Vec::with_capacity(spec.classes * spec.n_per_class);
    for class in 0..spec.classes {
        let mut rng = root.derive(class as u64);
        let mu = class_mean(class, spec.classes, spec.channels);
        for _ in 0..spec.n_per_class {
            let x = match spec.kind {
                DatasetKind::Gaussians => gaussian_item(spec, &mu, &mut rng),
                DatasetKind::MoonsLike => moons_item(spec, class, &mut rng),
                DatasetKind::SeqSines => sines_item(spec, class, &mut rng),
            };
            items.push((x, Condition::ClassLabel(class as u32)));
        }
    }
    Batch::new(items)
}

/// Labeled items of one split.
pub type ItemList = Vec<(LatentSeq, Condition)>;

/// Deterministic shuffled split into (train, validation, eval) item lists.
///
/// Fractions must sum to 1; empty splits are represented as empty lists.
pub fn split(
    dataset: &Batch,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(ItemList, ItemList, ItemList)> {
    let (f0, f1, f2) = fractions;
    if f0 < 0.0 || f1 < 0.0 || f2 < 0.0 || ((f0 + f1 + f2) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "fractions must be non-negative and sum to 1, got ({f0}, {f1}, {f2})"
        )));
    }
    let n = dataset.len();
    let mut idx: Vec<usize> = (0..n).collect();
    // Fisher-Yates with the derived stream.
    let mut rng = Rng::seed(seed);
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        idx.swap(i, j);
    }
    let c1 = libm::round(f0 * n as f64) as usize;
    let c2 = libm::round((f0 + f1) * n as f64) as usize;
    let c1 = c1.min(n);
    let c2 = c2.clamp(c1, n);
    let items = dataset.items();
    let take = |range: &[usize]| -> ItemList { range.iter().map(|&i| items[i].clone()).collect() };
    Ok((take(&idx[..c1]), take(&idx[c1..c2]), take(&idx[c2..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: DatasetKind) -> DatasetSpec {
        DatasetSpec {
            kind,
            classes: 2,
            seq_len: 1,
            channels: 2,
            n_per_class: 200,
            seed: 1,
        }
    }

    #[test]
    fn gaussian_class_means_match() {
        let mut s = spec(DatasetKind::Gaussians);
        s.n_per_class = 10_000;
        let data = make_dataset(&s).unwrap();
        let mu0 = class_mean(0, 2, 2);
        let (mut m0, mut m1, mut count) = (0.0, 0.0, 0usize);
        for (x, c) in data.items() {
            if *c == Condition::ClassLabel(0) {
                m0 += x.get(0, 0);
                m1 += x.get(0, 1);
                count += 1;
            }
        }
        let (m0, m1) = (m0 / count as f64, m1 / count as f64);
        assert!((m0 - mu0[0]).abs() < 0.1, "{m0} vs {}", mu0[0]);
        assert!((m1 - mu0[1]).abs() < 0.1, "{m1} vs {}", mu0[1]);
    }

    #[test]
    fn identical_spec_identical_bytes() {
        for kind in [DatasetKind::Gaussians, DatasetKind::MoonsLike, DatasetKind::SeqSines] {
            let a = make_dataset(&spec(kind)).unwrap();
            let b = make_dataset(&spec(kind)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn labels_are_balanced() {
        let s = DatasetSpec {
            classes: 4,
            n_per_class: 50,
            ..spec(DatasetKind::Gaussians)
        };
        let data = make_dataset(&s).unwrap();
        for k in 0..4u32 {
            let count = data
                .items()
                .iter()
                .filter(|(_, c)| *c == Condition::ClassLabel(k))
                .count();
            assert_eq!(count, 50);
        }
    }

    #[test]
    fn all_finite_every_kind() {
        for kind in [DatasetKind::Gaussians, DatasetKind::MoonsLike, DatasetKind::SeqSines] {
            let s = DatasetSpec {
                classes: 3,
                seq_len: 4,
                channels: 3,
                n_per_class: 20,
                ..spec(kind)
            };
            let data = make_dataset(&s).unwrap();
            assert!(data.latents().all(|x| x.is_finite()));
            assert_eq!(data.len(), 60);
        }
    }

    #[test]
    fn split_all_in_train() {
        let data = make_dataset(&spec(DatasetKind::Gaussians)).unwrap();
        let (train, val, eval) = split(&data, (1.0, 0.0, 0.0), 3).unwrap();
        assert_eq!(train.len(), data.len());
        assert!(val.is_empty() && eval.is_empty());
    }

    #[test]
    fn split_partitions_dataset() {
        let data = make_dataset(&spec(DatasetKind::Gaussians)).unwrap();
        let (train, val, eval) = split(&data, (0.6, 0.2, 0.2), 7).unwrap();
        assert_eq!(train.len() + val.len() + eval.len(), data.len());

        // Union equals the dataset; the split is disjoint by construction of
        // index partitioning, so matching multisets are enough.
        let mut all: Vec<Vec<u64>> = train
            .iter()
            .chain(&val)
            .chain(&eval)
            .map(|(x, _)| x.as_slice().iter().map(|v| v.to_bits()).collect())
            .collect();
        let mut orig: Vec<Vec<u64>> = data
            .items()
            .iter()
            .map(|(x, _)| x.as_slice().iter().map(|v| v.to_bits()).collect())
            .collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);

        let again = split(&data, (0.6, 0.2, 0.2), 7).unwrap();
        assert_eq!(train, again.0);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let data = make_dataset(&spec(DatasetKind::Gaussians)).unwrap();
        assert!(split(&data, (0.5, 0.2, 0.2), 1).is_err());
        assert!(split(&data, (1.2, -0.2, 0.0), 1).is_err());
    }
}
