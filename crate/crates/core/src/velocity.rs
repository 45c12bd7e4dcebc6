//! Velocity-field abstraction and its three implementations.
//!
//! A velocity field estimates `dz_t/dt` given the state, the flow step and a
//! condition. The crate ships a closed-form [`GaussianOracleField`] (exact
//! marginal velocity for per-class Gaussian data, used as a test oracle), a
//! small trainable [`MlpField`], and a [`GuidedField`] wrapper implementing
//! classifier-free guidance.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::latent::{Condition, FlowStep, LatentSeq};
use crate::nn::{Cache, DenseNet};
use crate::rng::Rng;

/// Evaluable velocity field `v(z, t, c)`.
///
/// Implementations are deterministic given `(z, t, c)` and their parameters,
/// and side-effect free; solvers account for NFE by adding
/// [`VelocityField::nfe_per_eval`] per call.
pub trait VelocityField {
    fn eval(&self, z: &LatentSeq, t: FlowStep, c: &Condition) -> Result<LatentSeq>;

    /// Number of elementary model evaluations one `eval` call costs.
    fn nfe_per_eval(&self) -> u64 {
        1
    }
}

impl<F: VelocityField + ?Sized> VelocityField for &F {
    fn eval(&self, z: &LatentSeq, t: FlowStep, c: &Condition) -> Result<LatentSeq> {
        (**self).eval(z, t, c)
    }

    fn nfe_per_eval(&self) -> u64 {
        (**self).nfe_per_eval()
    }
}

/// Exact marginal velocity field for per-class Gaussian data.
///
/// With data `x ~ N(mu, sigma^2)` per dimension and `z_t = t x + (1-t) eps`,
/// the conditional expectation `E[x - eps | z_t = z]` has the closed form
/// `mu + (t sigma^2 - (1-t)) (z - t mu) / (t^2 sigma^2 + (1-t)^2)`.
#[derive(Debug, Clone)]
pub struct GaussianOracleField {
    means: Vec<Vec<f64>>,
    stds: Vec<Vec<f64>>,
}

impl GaussianOracleField {
    pub fn new(means: Vec<Vec<f64>>, stds: Vec<Vec<f64>>) -> Result<Self> {
        if means.is_empty() || means.len() != stds.len() {
            return Err(Error::InvalidArgument(String::from(
                "need matching nonempty per-class means and stds",
            )));
        }
        let d = means[0].len();
        for (m, s) in means.iter().zip(&stds) {
            if m.len() != d || s.len() != d {
                return Err(Error::InvalidArgument(String::from(
                    "per-class stats must share the channel count",
                )));
            }
            if s.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                return Err(Error::InvalidArgument(String::from(
                    "stds must be positive and finite",
                )));
            }
        }
        Ok(GaussianOracleField { means, stds })
    }

    /// Single-class field with constant `mu`/`sigma` across `d` channels.
    pub fn isotropic(mu: f64, sigma: f64, channels: usize) -> Result<Self> {
        GaussianOracleField::new(vec![vec![mu; channels]], vec![vec![sigma; channels]])
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn channels(&self) -> usize {
        self.means[0].len()
    }

    pub fn class_stats(&self, class: usize) -> (&[f64], &[f64]) {
        (&self.means[class], &self.stds[class])
    }
}

impl VelocityField for GaussianOracleField {
    fn eval(&self, z: &LatentSeq, t: FlowStep, c: &Condition) -> Result<LatentSeq> {
        let class = match c {
            Condition::ClassLabel(k) => *k as usize,
            Condition::Null => {
                return Err(Error::UnsupportedCondition(String::from(
                    "oracle field is per-class only; null (class-mixture) is unsupported",
                )))
            }
            Condition::Embedding(_) => {
                return Err(Error::UnsupportedCondition(String::from(
                    "oracle field accepts class labels only",
                )))
            }
        };
        if class >= self.means.len() {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for {}-class oracle",
                self.means.len()
            )));
        }
        if z.cols() != self.channels() {
            return Err(Error::ShapeMismatch(format!(
                "oracle has {} channels, state has {}",
                self.channels(),
                z.cols()
            )));
        }
        let t = t.value();
        let mu = &self.means[class];
        let sd = &self.stds[class];
        let mut out = LatentSeq::zeros(z.rows(), z.cols());
        for r in 0..z.rows() {
            for c in 0..z.cols() {
                let var = sd[c] * sd[c];
                let denom = t * t * var + (1.0 - t) * (1.0 - t);
                let v = mu[c] + (t * var - (1.0 - t)) * (z.get(r, c) - t * mu[c]) / denom;
                out.set(r, c, v);
            }
        }
        Ok(out)
    }
}

/// Monte-Carlo check of the oracle's closed form.
///
/// Draws `(x, eps)` pairs for class 0, forms `z_t`, bins the first channel of
/// `z` into 20 bins and compares the per-bin empirical mean of `x - eps`
/// against the oracle evaluated at the bin mean. Returns the largest absolute
/// deviation over bins with enough mass.
pub fn oracle_validate(
    field: &GaussianOracleField,
    t: FlowStep,
    num_samples: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let tv = t.value();
    if tv <= 0.0 || tv >= 1.0 {
        return Err(Error::InvalidArgument(String::from(
            "oracle_validate requires t strictly inside (0, 1)",
        )));
    }
    let (mu, sd) = field.class_stats(0);
    let (mu, sd) = (mu[0], sd[0]);
    const BINS: usize = 20;
    let z_mean = tv * mu;
    let z_std = libm::sqrt(tv * tv * sd * sd + (1.0 - tv) * (1.0 - tv));
    let lo = z_mean - 3.0 * z_std;
    let hi = z_mean + 3.0 * z_std;
    let width = (hi - lo) / BINS as f64;

    let mut count = [0usize; BINS];
    let mut sum_z = [0.0f64; BINS];
    let mut sum_target = [0.0f64; BINS];
    for _ in 0..num_samples {
        let x = mu + sd * rng.normal();
        let eps = rng.normal();
        let z = tv * x + (1.0 - tv) * eps;
        if z < lo || z >= hi {
            continue;
        }
        let bin = ((z - lo) / width) as usize;
        let bin = bin.min(BINS - 1);
        count[bin] += 1;
        sum_z[bin] += z;
        sum_target[bin] += x - eps;
    }

    let min_count = (num_samples / 10_000).max(100);
    let mut max_dev = 0.0f64;
    let channels = field.channels();
    for bin in 0..BINS {
        if count[bin] < min_count {
            continue;
        }
        let z_bar = sum_z[bin] / count[bin] as f64;
        let empirical = sum_target[bin] / count[bin] as f64;
        let mut probe = LatentSeq::zeros(1, channels);
        probe.set(0, 0, z_bar);
        let v = field.eval(&probe, t, &Condition::ClassLabel(0))?;
        max_dev = max_dev.max((empirical - v.get(0, 0)).abs());
    }
    Ok(max_dev)
}

/// Configuration of the trainable MLP velocity field.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpConfig {
    pub seq_len: usize,
    pub channels: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
    pub embed_dim: usize,
    /// Number of sinusoidal feature pairs injected for the flow step.
    pub time_freqs: usize,
}

impl MlpConfig {
    /// 3 hidden layers of width 256, the default field size.
    pub fn new(seq_len: usize, channels: usize, num_classes: usize) -> Self {
        MlpConfig {
            seq_len,
            channels,
            hidden: vec![256, 256, 256],
            num_classes,
            embed_dim: 16,
            time_freqs: 4,
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_embed_dim(mut self, embed_dim: usize) -> Self {
        self.embed_dim = embed_dim;
        self
    }

    pub fn latent_dim(&self) -> usize {
        self.seq_len * self.channels
    }

    pub fn input_dim(&self) -> usize {
        self.latent_dim() + 2 * self.time_freqs + self.embed_dim
    }

    fn net_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim());
        dims.extend_from_slice(&self.hidden);
        dims.push(self.latent_dim());
        dims
    }

    /// Embedding table rows: one per class plus a learned null row.
    pub fn embed_rows(&self) -> usize {
        self.num_classes + 1
    }

    pub fn param_count(&self) -> usize {
        DenseNet::new(self.net_dims()).param_count() + self.embed_rows() * self.embed_dim
    }
}

/// Trainable MLP velocity field.
///
/// The input is the flattened state concatenated with sinusoidal features of
/// `t` and a learned condition embedding; the null condition routes to a
/// dedicated learned embedding row.
#[derive(Debug, Clone)]
pub struct MlpField {
    cfg: MlpConfig,
    net: DenseNet,
    /// Flat parameters: dense-net block first, embedding table last.
    params: Vec<f64>,
}

/// Intermediates of one cached field evaluation, consumed by backprop.
#[derive(Debug)]
pub struct EvalCache {
    net_cache: Cache,
    /// Embedding row used, if the condition came from the table.
    embed_row: Option<usize>,
}

impl MlpField {
    pub fn init(cfg: MlpConfig, seed: u64) -> Result<Self> {
        if cfg.seq_len == 0 || cfg.channels == 0 || cfg.embed_dim == 0 {
            return Err(Error::InvalidConfig(String::from(
                "seq_len, channels and embed_dim must be positive",
            )));
        }
        if cfg.hidden.contains(&0) {
            return Err(Error::InvalidConfig(String::from("zero-width hidden layer")));
        }
        let net = DenseNet::new(cfg.net_dims());
        let mut rng = Rng::seed(seed);
        let mut params = net.init_params(&mut rng);
        for _ in 0..cfg.embed_rows() * cfg.embed_dim {
            params.push(rng.normal());
        }
        Ok(MlpField { cfg, net, params })
    }

    /// Rebuilds a field from a flat parameter vector (checkpoint loading).
    pub fn from_params(cfg: MlpConfig, params: Vec<f64>) -> Result<Self> {
        if params.len() != cfg.param_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                cfg.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(String::from(
                "parameters must be finite",
            )));
        }
        let net = DenseNet::new(cfg.net_dims());
        Ok(MlpField { cfg, net, params })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.cfg
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn net_param_count(&self) -> usize {
        self.net.param_count()
    }

    fn embed_offset(&self, row: usize) -> usize {
        self.net_param_count() + row * self.cfg.embed_dim
    }

    /// Learned embedding row for a class (enables blended conditions).
    pub fn class_embedding(&self, class: usize) -> Result<Vec<f64>> {
        if class >= self.cfg.num_classes {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for {}-class field",
                self.cfg.num_classes
            )));
        }
        let off = self.embed_offset(class);
        Ok(self.params[off..off + self.cfg.embed_dim].to_vec())
    }

    fn build_input(&self, z: &LatentSeq, t: FlowStep, c: &Condition) -> Result<(Vec<f64>, Option<usize>)> {
        if z.shape() != (self.cfg.seq_len, self.cfg.channels) {
            return Err(Error::ShapeMismatch(format!(
                "field expects {}x{}, got {}x{}",
                self.cfg.seq_len,
                self.cfg.channels,
                z.rows(),
                z.cols()
            )));
        }
        let mut input = Vec::with_capacity(self.cfg.input_dim());
        input.extend_from_slice(z.as_slice());
        let tv = t.value();
        for k in 0..self.cfg.time_freqs {
            let freq = (1u64 << k) as f64;
            let phase = 2.0 * core::f64::consts::PI * freq * tv;
            input.push(libm::sin(phase));
            input.push(libm::cos(phase));
        }
        let embed_row = match c {
            Condition::ClassLabel(k) => {
                let k = *k as usize;
                if k >= self.cfg.num_classes {
                    return Err(Error::InvalidArgument(format!(
                        "class {k} out of range for {}-class field",
                        self.cfg.num_classes
                    )));
                }
                Some(k)
            }
            Condition::Null => Some(self.cfg.num_classes),
            Condition::Embedding(v) => {
                if v.len() != self.cfg.embed_dim {
                    return Err(Error::InvalidArgument(format!(
                        "embedding width {} does not match field width {}",
                        v.len(),
                        self.cfg.embed_dim
                    )));
                }
                input.extend_from_slice(v);
                None
            }
        };
        if let Some(row) = embed_row {
            let off = self.embed_offset(row);
            input.extend_from_slice(&self.params[off..off + self.cfg.embed_dim]);
        }
        Ok((input, embed_row))
    }

    /// Forward pass that keeps the intermediates for [`MlpField::backward`].
    pub fn eval_cached(
        &self,
        z: &LatentSeq,
        t: FlowStep,
        c: &Condition,
    ) -> Result<(LatentSeq, EvalCache)> {
        let (input, embed_row) = self.build_input(z, t, c)?;
        let (out, net_cache) = self
            .net
            .forward_cached(&self.params[..self.net_param_count()], &input);
        let out = LatentSeq::from_vec(self.cfg.seq_len, self.cfg.channels, out)?;
        Ok((out, EvalCache { net_cache, embed_row }))
    }

    /// Accumulates parameter gradients for one cached evaluation.
    ///
    /// `d_out` is the loss gradient w.r.t. the field output; `grads` has the
    /// same flat layout as [`MlpField::params`]. Gradients w.r.t. the state
    /// and time features are discarded; the embedding slice of the input
    /// gradient is routed into the table row used by the evaluation.
    pub fn backward(&self, cache: &EvalCache, d_out: &LatentSeq, grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.params.len());
        let net_params = &self.params[..self.net_param_count()];
        let d_input = self.net.backward(
            net_params,
            &cache.net_cache,
            d_out.as_slice(),
            &mut grads[..self.net.param_count()],
        );
        if let Some(row) = cache.embed_row {
            let off = self.embed_offset(row);
            let embed_in = self.cfg.latent_dim() + 2 * self.cfg.time_freqs;
            for i in 0..self.cfg.embed_dim {
                grads[off + i] += d_input[embed_in + i];
            }
        }
    }
}

impl VelocityField for MlpField {
    fn eval(&self, z: &LatentSeq, t: FlowStep, c: &Condition) -> Result<LatentSeq> {
        let (input, _) = self.build_input(z, t, c)?;
        let out = self
            .net
            .forward(&self.params[..self.net_param_count()], &input);
        LatentSeq::from_vec(self.cfg.seq_len, self.cfg.channels, out)
    }
}

/// Classifier-free-guidance wrapper.
///
/// `eval` combines an unconditional and a conditional inner evaluation as
/// `v_null + gamma * (v_c - v_null)`; each call therefore costs two inner
/// evaluations.
#[derive(Debug, Clone)]
pub struct GuidedField<F> {
    inner: F,
    gamma: f64,
}

impl<F: VelocityField> GuidedField<F> {
    pub fn new(inner: F, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "guidance scale must be finite and >= 0, got {gamma}"
            )));
        }
        Ok(GuidedField { inner, gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }
}

impl<F: VelocityField> VelocityField for GuidedField<F> {
    fn eval(&self, z: &LatentSeq, t: FlowStep, c: &Condition) -> Result<LatentSeq> {
        if c.is_null() {
            return Err(Error::InvalidArgument(String::from(
                "guidance needs a non-null condition",
            )));
        }
        let v_null = self.inner.eval(z, t, &Condition::Null)?;
        let v_cond = self.inner.eval(z, t, c)?;
        let diff = v_cond.sub(&v_null)?;
        v_null.add_scaled(&diff, self.gamma)
    }

    fn nfe_per_eval(&self) -> u64 {
        2 * self.inner.nfe_per_eval()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::sample_noise;

    fn step(t: f64) -> FlowStep {
        FlowStep::new(t).unwrap()
    }

    #[test]
    fn oracle_endpoint_identities() {
        let field = GaussianOracleField::isotropic(2.5, 0.7, 3).unwrap();
        let mut rng = Rng::seed(1);
        let z = sample_noise(2, 3, &mut rng).unwrap();
        let c = Condition::ClassLabel(0);

        // t = 1: v(z, 1) = z.
        let v1 = field.eval(&z, step(1.0), &c).unwrap();
        for (a, b) in v1.as_slice().iter().zip(z.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        // t = 0: v(z, 0) = mu - z.
        let v0 = field.eval(&z, step(0.0), &c).unwrap();
        for (a, b) in v0.as_slice().iter().zip(z.as_slice()) {
            assert!((a - (2.5 - b)).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_standard_normal_half_time_is_zero() {
        let field = GaussianOracleField::isotropic(0.0, 1.0, 2).unwrap();
        let mut rng = Rng::seed(2);
        let z = sample_noise(1, 2, &mut rng).unwrap();
        let v = field.eval(&z, step(0.5), &Condition::ClassLabel(0)).unwrap();
        assert!(v.as_slice().iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn oracle_rejects_null() {
        let field = GaussianOracleField::isotropic(0.0, 1.0, 2).unwrap();
        let z = LatentSeq::zeros(1, 2);
        assert!(matches!(
            field.eval(&z, step(0.5), &Condition::Null),
            Err(Error::UnsupportedCondition(_))
        ));
    }

    #[test]
    fn oracle_validate_converges() {
        let field = GaussianOracleField::isotropic(3.0, 0.5, 1).unwrap();
        let dev_small =
            oracle_validate(&field, step(0.3), 10_000, &mut Rng::seed(3)).unwrap();
        let dev_big =
            oracle_validate(&field, step(0.3), 1_000_000, &mut Rng::seed(3)).unwrap();
        assert!(dev_big < 0.05, "deviation {dev_big}");
        assert!(dev_big < dev_small, "{dev_big} vs {dev_small}");

        let centered = GaussianOracleField::isotropic(0.0, 1.0, 1).unwrap();
        let dev = oracle_validate(&centered, step(0.5), 1_000_000, &mut Rng::seed(4)).unwrap();
        assert!(dev < 0.05, "deviation {dev}");
    }

    #[test]
    fn mlp_deterministic_and_shaped() {
        for &(l, d) in &[(1usize, 2usize), (16, 4)] {
            let cfg = MlpConfig::new(l, d, 3).with_hidden(vec![32, 32]).with_embed_dim(8);
            let field = MlpField::init(cfg, 42).unwrap();
            let mut rng = Rng::seed(5);
            let z = sample_noise(l, d, &mut rng).unwrap();
            let a = field.eval(&z, step(0.3), &Condition::ClassLabel(1)).unwrap();
            let b = field.eval(&z, step(0.3), &Condition::ClassLabel(1)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.shape(), (l, d));
        }
    }

    #[test]
    fn mlp_null_uses_dedicated_embedding() {
        let cfg = MlpConfig::new(1, 2, 2).with_hidden(vec![16]).with_embed_dim(4);
        let field = MlpField::init(cfg, 7).unwrap();
        let z = LatentSeq::zeros(1, 2);
        let v_null = field.eval(&z, step(0.5), &Condition::Null).unwrap();
        let v_c0 = field.eval(&z, step(0.5), &Condition::ClassLabel(0)).unwrap();
        assert_ne!(v_null, v_c0);

        // Passing the null row's embedding explicitly reproduces Null exactly.
        let off = field.embed_offset(field.cfg.num_classes);
        let raw = field.params[off..off + field.cfg.embed_dim].to_vec();
        let v_raw = field.eval(&z, step(0.5), &Condition::Embedding(raw)).unwrap();
        assert_eq!(v_null, v_raw);
    }

    #[test]
    fn mlp_rejects_bad_inputs() {
        let cfg = MlpConfig::new(2, 2, 2).with_hidden(vec![8]).with_embed_dim(4);
        let field = MlpField::init(cfg, 0).unwrap();
        let wrong_shape = LatentSeq::zeros(3, 2);
        assert!(field.eval(&wrong_shape, step(0.5), &Condition::Null).is_err());
        let z = LatentSeq::zeros(2, 2);
        assert!(field.eval(&z, step(0.5), &Condition::ClassLabel(5)).is_err());
        assert!(field
            .eval(&z, step(0.5), &Condition::Embedding(vec![0.0; 3]))
            .is_err());
    }

    #[test]
    fn mlp_output_jacobian_matches_finite_differences() {
        let cfg = MlpConfig::new(1, 2, 2).with_hidden(vec![12, 12]).with_embed_dim(4);
        let mut field = MlpField::init(cfg, 11).unwrap();
        let mut rng = Rng::seed(6);
        let z = sample_noise(1, 2, &mut rng).unwrap();
        let c = Condition::ClassLabel(1);

        // d out[0] / d param via backprop with a one-hot output gradient.
        let (_, cache) = field.eval_cached(&z, step(0.4), &c).unwrap();
        let mut grads = vec![0.0; field.param_count()];
        let mut onehot = LatentSeq::zeros(1, 2);
        onehot.set(0, 0, 1.0);
        field.backward(&cache, &onehot, &mut grads);

        let h = 1e-6;
        for idx in (0..field.param_count()).step_by(11) {
            let orig = field.params[idx];
            field.params_mut()[idx] = orig + h;
            let up = field.eval(&z, step(0.4), &c).unwrap().get(0, 0);
            field.params_mut()[idx] = orig - h;
            let down = field.eval(&z, step(0.4), &c).unwrap().get(0, 0);
            field.params_mut()[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            let err = (grads[idx] - fd).abs() / grads[idx].abs().max(fd.abs()).max(1e-6);
            assert!(err < 1e-4, "param {idx}: {} vs {fd}", grads[idx]);
        }
    }

    #[derive(Clone)]
    struct ConstField {
        cond: f64,
        null: f64,
    }

    impl VelocityField for ConstField {
        fn eval(&self, z: &LatentSeq, _t: FlowStep, c: &Condition) -> Result<LatentSeq> {
            let v = if c.is_null() { self.null } else { self.cond };
            let mut out = LatentSeq::zeros(z.rows(), z.cols());
            out.as_mut_slice().iter_mut().for_each(|x| *x = v);
            Ok(out)
        }
    }

    #[test]
    fn guidance_identities() {
        let inner = ConstField { cond: 1.0, null: 0.0 };
        let z = LatentSeq::zeros(1, 3);
        let c = Condition::ClassLabel(0);

        let g1 = GuidedField::new(inner.clone(), 1.0).unwrap();
        assert!(g1
            .eval(&z, step(0.2), &c)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 1.0));

        let g0 = GuidedField::new(inner.clone(), 0.0).unwrap();
        assert!(g0
            .eval(&z, step(0.2), &c)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));

        // gamma = 5 with v_c = 1, v_null = 0 gives exactly 5.
        let g5 = GuidedField::new(inner.clone(), 5.0).unwrap();
        assert!(g5
            .eval(&z, step(0.2), &c)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 5.0));

        assert!(g5.eval(&z, step(0.2), &Condition::Null).is_err());
        assert_eq!(g5.nfe_per_eval(), 2);
    }

    #[test]
    fn guidance_affine_in_gamma() {
        let cfg = MlpConfig::new(1, 2, 2).with_hidden(vec![8]).with_embed_dim(4);
        let field = MlpField::init(cfg, 3).unwrap();
        let mut rng = Rng::seed(8);
        let z = sample_noise(1, 2, &mut rng).unwrap();
        let c = Condition::ClassLabel(0);
        let at = |gamma: f64| {
            GuidedField::new(&field, gamma)
                .unwrap()
                .eval(&z, step(0.3), &c)
                .unwrap()
        };
        let (v0, v1, v2) = (at(0.0), at(1.0), at(2.0));
        // v(2) - v(1) == v(1) - v(0)
        for i in 0..2 {
            let lhs = v2.as_slice()[i] - v1.as_slice()[i];
            let rhs = v1.as_slice()[i] - v0.as_slice()[i];
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
