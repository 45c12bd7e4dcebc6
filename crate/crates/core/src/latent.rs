//! Latent-sequence domain types and the mixture-path algebra.
//!
//! A [`LatentSeq`] is an `L x d` row-major array of finite reals; it stands
//! for data `x`, noise `eps`, path states `z_t` and velocity estimates alike.
//! The two algebra operations are the linear mixture `z_t = t*x + (1-t)*eps`
//! and its velocity target `x - eps`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// `L x d` real matrix, row-major (time by channel).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSeq {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl LatentSeq {
    /// Builds from row-major data; checks dimensions and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "latent shape must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "expected {} entries for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(String::from(
                "latent entries must be finite",
            )));
        }
        Ok(LatentSeq { data, rows, cols })
    }

    /// Builds from nested rows (convenient in tests and small literals).
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::ShapeMismatch(String::from("ragged rows")));
            }
            data.extend_from_slice(row);
        }
        LatentSeq::from_vec(r, c, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        LatentSeq {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element-wise `self + scale * other`.
    pub fn add_scaled(&self, other: &LatentSeq, scale: f64) -> Result<LatentSeq> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(LatentSeq {
            data,
            rows: self.rows,
            cols: self.cols,
        })
    }

    pub fn sub(&self, other: &LatentSeq) -> Result<LatentSeq> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(LatentSeq {
            data,
            rows: self.rows,
            cols: self.cols,
        })
    }

    pub fn scale(&self, factor: f64) -> LatentSeq {
        LatentSeq {
            data: self.data.iter().map(|v| v * factor).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    /// Squared Frobenius norm over all entries.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Squared Frobenius distance to `other`.
    pub fn dist_sq(&self, other: &LatentSeq) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub(crate) fn check_same_shape(&self, other: &LatentSeq) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

/// Interpolation coordinate `t` in `[0, 1]`; `t = 0` is pure noise, `t = 1` data.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FlowStep(f64);

impl FlowStep {
    pub fn new(t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "flow step must lie in [0, 1], got {t}"
            )));
        }
        Ok(FlowStep(t))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Conditioning signal: absent, a class label, or a raw embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Null,
    ClassLabel(u32),
    Embedding(Vec<f64>),
}

impl Condition {
    pub fn is_null(&self) -> bool {
        matches!(self, Condition::Null)
    }
}

/// A batch of latent sequences with per-item conditions.
///
/// All items share the same `(L, d)` and the batch is nonempty.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    items: Vec<(LatentSeq, Condition)>,
}

impl Batch {
    pub fn new(items: Vec<(LatentSeq, Condition)>) -> Result<Self> {
        let Some(first) = items.first() else {
            return Err(Error::InvalidArgument(String::from("batch must be nonempty")));
        };
        let shape = first.0.shape();
        if items.iter().any(|(x, _)| x.shape() != shape) {
            return Err(Error::ShapeMismatch(String::from(
                "all batch items must share (L, d)",
            )));
        }
        Ok(Batch { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape(&self) -> (usize, usize) {
        self.items[0].0.shape()
    }

    pub fn items(&self) -> &[(LatentSeq, Condition)] {
        &self.items
    }

    pub fn into_items(self) -> Vec<(LatentSeq, Condition)> {
        self.items
    }

    pub fn latents(&self) -> impl Iterator<Item = &LatentSeq> {
        self.items.iter().map(|(x, _)| x)
    }
}

/// Linear mixture `t*x + (1-t)*eps`.
pub fn mix(x: &LatentSeq, eps: &LatentSeq, t: FlowStep) -> Result<LatentSeq> {
    x.check_same_shape(eps)?;
    let t = t.value();
    let data = x
        .as_slice()
        .iter()
        .zip(eps.as_slice())
        .map(|(a, b)| t * a + (1.0 - t) * b)
        .collect();
    Ok(LatentSeq {
        data,
        rows: x.rows,
        cols: x.cols,
    })
}

/// Velocity target `x - eps` of the linear path.
pub fn target_velocity(x: &LatentSeq, eps: &LatentSeq) -> Result<LatentSeq> {
    x.sub(eps)
}

/// I.i.d. standard-normal `L x d` draw; deterministic for a fixed rng state.
pub fn sample_noise(rows: usize, cols: usize, rng: &mut Rng) -> Result<LatentSeq> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "noise shape must be positive, got {rows}x{cols}"
        )));
    }
    let data = (0..rows * cols).map(|_| rng.normal()).collect();
    Ok(LatentSeq {
        data,
        rows,
        cols,
    })
}
