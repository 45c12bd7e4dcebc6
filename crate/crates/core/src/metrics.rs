//! Toy-scale evaluation metrics.
//!
//! `frechet_gaussian` is the Fréchet (2-Wasserstein between Gaussian fits)
//! distance over flattened latent features, standing in for embedding-space
//! audio distances. `lpaps` is the mean per-frame L2 between two sequences
//! (consistency), and `adherence` is an oracle classifier probability
//! standing in for prompt-similarity scores.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::latent::{Condition, LatentSeq};
use crate::linalg::{sqrtm_psd, sym_eigen, SquareMat};
use crate::rng::Rng;

/// Diagonal loading applied to both covariances before the matrix root.
const COV_REGULARIZER: f64 = 1e-6;

/// Fréchet distance between Gaussian fits of two sample sets.
///
/// Samples are flattened to `L*d` feature vectors; the distance is
/// `||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2})` with both
/// covariances regularized by `1e-6 I`.
pub fn frechet_gaussian(a: &[LatentSeq], b: &[LatentSeq]) -> Result<f64> {
    let (mu_a, cov_a) = gaussian_fit(a)?;
    let (mu_b, cov_b) = gaussian_fit(b)?;
    if mu_a.len() != mu_b.len() {
        return Err(Error::InvalidArgument(format!(
            "feature dimension mismatch: {} vs {}",
            mu_a.len(),
            mu_b.len()
        )));
    }
    let mean_term: f64 = mu_a
        .iter()
        .zip(&mu_b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();

    // Tr((S_a S_b)^{1/2}) computed through the symmetric product
    // R S_b R with R = S_a^{1/2}, which shares its eigenvalues.
    let root_a = sqrtm_psd(&cov_a);
    let mut prod = root_a.matmul(&cov_b).matmul(&root_a);
    prod.symmetrize();
    let (eig, _) = sym_eigen(&prod);
    let trace_sqrt: f64 = eig.iter().map(|&w| libm::sqrt(w.max(0.0))).sum();

    let fd = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
    Ok(fd.max(0.0))
}

fn gaussian_fit(set: &[LatentSeq]) -> Result<(Vec<f64>, SquareMat)> {
    let Some(first) = set.first() else {
        return Err(Error::InvalidArgument(String::from("empty sample set")));
    };
    let dim = first.len();
    for s in set {
        if s.len() != dim {
            return Err(Error::InvalidArgument(String::from(
                "samples must share a feature dimension",
            )));
        }
    }
    let n = set.len();
    let mut mu = vec![0.0; dim];
    for s in set {
        for (m, v) in mu.iter_mut().zip(s.as_slice()) {
            *m += v;
        }
    }
    for m in mu.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = SquareMat::zeros(dim);
    if n > 1 {
        let denom = (n - 1) as f64;
        for s in set {
            let x = s.as_slice();
            for i in 0..dim {
                let di = x[i] - mu[i];
                for j in i..dim {
                    cov.data[i * dim + j] += di * (x[j] - mu[j]) / denom;
                }
            }
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                cov.data[j * dim + i] = cov.data[i * dim + j];
            }
        }
    }
    for i in 0..dim {
        cov.data[i * dim + i] += COV_REGULARIZER;
    }
    Ok((mu, cov))
}

/// Mean per-frame L2 distance (consistency proxy).
pub fn lpaps(a: &LatentSeq, b: &LatentSeq) -> Result<f64> {
    a.check_same_shape(b)?;
    let (rows, cols) = a.shape();
    let mut total = 0.0;
    for r in 0..rows {
        let mut frame = 0.0;
        for c in 0..cols {
            let d = a.get(r, c) - b.get(r, c);
            frame += d * d;
        }
        total += libm::sqrt(frame);
    }
    Ok(total / rows as f64)
}

/// Multinomial logistic classifier over flattened latents.
///
/// A metric fixture: it is trained on held-out data and kept apart from the
/// generative model it scores.
#[derive(Debug, Clone)]
pub struct Classifier {
    weights: Vec<f64>, // num_classes x (dim + 1), bias last
    num_classes: usize,
    dim: usize,
}

impl Classifier {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn probs(&self, x: &LatentSeq) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "classifier expects {} features, got {}",
                self.dim,
                x.len()
            )));
        }
        Ok(softmax_probs(&self.weights, self.num_classes, self.dim, x.as_slice()))
    }
}

fn softmax_probs(weights: &[f64], num_classes: usize, dim: usize, x: &[f64]) -> Vec<f64> {
    let mut logits = vec![0.0; num_classes];
    for (k, logit) in logits.iter_mut().enumerate() {
        let row = &weights[k * (dim + 1)..(k + 1) * (dim + 1)];
        let mut z = row[dim];
        for (w, v) in row[..dim].iter().zip(x) {
            z += w * v;
        }
        *logit = z;
    }
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for logit in logits.iter_mut() {
        *logit = libm::exp(*logit - max);
        sum += *logit;
    }
    for logit in logits.iter_mut() {
        *logit /= sum;
    }
    logits
}

/// Configuration for the classifier fit.
#[derive(Debug, Clone)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 300,
            lr: 0.5,
            seed: 0,
        }
    }
}

/// Fits the logistic fixture by full-batch gradient descent on cross-entropy.
pub fn train_classifier(
    items: &[(LatentSeq, Condition)],
    num_classes: usize,
    cfg: &ClassifierConfig,
) -> Result<Classifier> {
    let Some((first, _)) = items.first() else {
        return Err(Error::InvalidArgument(String::from("empty training set")));
    };
    if num_classes < 2 {
        return Err(Error::InvalidArgument(String::from(
            "classifier needs at least 2 classes",
        )));
    }
    let dim = first.len();
    let mut labels = Vec::with_capacity(items.len());
    for (x, c) in items {
        if x.len() != dim {
            return Err(Error::InvalidArgument(String::from(
                "inconsistent feature dimensions",
            )));
        }
        match c {
            Condition::ClassLabel(k) if (*k as usize) < num_classes => labels.push(*k as usize),
            _ => {
                return Err(Error::InvalidArgument(String::from(
                    "classifier training requires class-labeled items",
                )))
            }
        }
    }

    let mut rng = Rng::seed(cfg.seed);
    let stride = dim + 1;
    let mut weights: Vec<f64> = (0..num_classes * stride).map(|_| 0.01 * rng.normal()).collect();
    let n = items.len() as f64;

    let mut grad = vec![0.0; weights.len()];
    for _ in 0..cfg.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for ((x, _), &label) in items.iter().zip(&labels) {
            let p = softmax_probs(&weights, num_classes, dim, x.as_slice());
            for k in 0..num_classes {
                let err = p[k] - if k == label { 1.0 } else { 0.0 };
                let row = &mut grad[k * stride..(k + 1) * stride];
                for (g, v) in row[..dim].iter_mut().zip(x.as_slice()) {
                    *g += err * v / n;
                }
                row[dim] += err / n;
            }
        }
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= cfg.lr * g;
        }
    }
    Ok(Classifier {
        weights,
        num_classes,
        dim,
    })
}

/// Classifier probability of `x` belonging to the class named by `c`.
pub fn adherence(x: &LatentSeq, c: &Condition, classifier: &Classifier) -> Result<f64> {
    let k = match c {
        Condition::ClassLabel(k) => *k as usize,
        Condition::Null => {
            return Err(Error::InvalidArgument(String::from(
                "adherence requires a non-null condition",
            )))
        }
        Condition::Embedding(_) => {
            return Err(Error::InvalidArgument(String::from(
                "adherence requires a class-label condition",
            )))
        }
    };
    if k >= classifier.num_classes {
        return Err(Error::InvalidArgument(format!(
            "class {k} out of range for {}-class classifier",
            classifier.num_classes
        )));
    }
    Ok(classifier.probs(x)?[k])
}

/// Aggregated metric report for one run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub frechet: f64,
    pub lpaps: f64,
    pub adherence: f64,
    pub straightness: f64,
}

/// Assembles the report from a generated set against a reference set.
///
/// `lpaps` is the mean paired distance and requires equal set sizes (it is
/// reported as 0 when sizes differ, e.g. for unconditional generation runs);
/// `straightness` is not derivable from sample sets and is filled in by
/// pipelines that record trajectories.
pub fn evaluate_run(
    generated: &[LatentSeq],
    reference: &[LatentSeq],
    conditions: &[Condition],
    classifier: &Classifier,
) -> Result<MetricsReport> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::InvalidArgument(String::from("empty sample sets")));
    }
    if conditions.len() != generated.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} conditions, got {}",
            generated.len(),
            conditions.len()
        )));
    }
    let frechet = frechet_gaussian(generated, reference)?;
    let lpaps_mean = if generated.len() == reference.len() {
        let mut total = 0.0;
        for (g, r) in generated.iter().zip(reference) {
            total += lpaps(g, r)?;
        }
        total / generated.len() as f64
    } else {
        0.0
    };
    let mut adh = 0.0;
    for (g, c) in generated.iter().zip(conditions) {
        adh += adherence(g, c, classifier)?;
    }
    adh /= generated.len() as f64;
    Ok(MetricsReport {
        frechet,
        lpaps: lpaps_mean,
        adherence: adh,
        straightness: 0.0,
    })
}
