//! Flow-matching training: loss, condition dropout, coupling, optimizer, EMA.
//!
//! One step draws a noise batch, optionally reorders it by optimal-transport
//! coupling, applies condition dropout, samples a flow step per item and
//! regresses the field output onto `x - eps` at the mixed state. The
//! optimizer is Adam with decoupled weight decay, global-norm gradient
//! clipping and a constant-after-warmup learning rate; an exponential moving
//! average of the parameters is kept for evaluation checkpoints.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::coupling::{ot_couple, pair_cost, Permutation};
use crate::error::{Error, Result};
use crate::latent::{mix, target_velocity, Batch, Condition, FlowStep, LatentSeq};
use crate::rng::Rng;
use crate::sampler::{logit_normal_pdf, sample_flowstep, FlowStepSampler};
use crate::velocity::{MlpField, VelocityField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CouplingKind {
    Independent,
    Ot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LossWeighting {
    None,
    /// Multiply each item's loss by the logit-normal density at its flow step.
    LogitNormalPdf { m: f64, s: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub warmup_steps: u64,
    /// Probability of replacing an item's condition with Null.
    pub dropout_p: f64,
    pub sampler: FlowStepSampler,
    pub coupling: CouplingKind,
    pub ema_decay: f64,
    pub ema_interval: u64,
    pub weighting: LossWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 64,
            lr: 3e-3,
            betas: (0.9, 0.95),
            weight_decay: 0.1,
            grad_clip: 0.2,
            warmup_steps: 100,
            dropout_p: 0.2,
            sampler: FlowStepSampler::default(),
            coupling: CouplingKind::Ot,
            ema_decay: 0.99,
            ema_interval: 10,
            weighting: LossWeighting::None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidConfig(String::from(
                "dropout_p must lie in [0, 1]",
            )));
        }
        if !(0.0 < self.ema_decay && self.ema_decay < 1.0) {
            return Err(Error::InvalidConfig(String::from(
                "ema decay must lie in (0, 1)",
            )));
        }
        if self.ema_interval == 0 {
            return Err(Error::InvalidConfig(String::from(
                "ema interval must be >= 1",
            )));
        }
        if self.batch_size == 0 || self.lr <= 0.0 {
            return Err(Error::InvalidConfig(String::from(
                "batch size and learning rate must be positive",
            )));
        }
        Ok(())
    }
}

/// Mutable training state: parameters, EMA shadow, optimizer moments.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub field: MlpField,
    pub ema: Vec<f64>,
    opt_m: Vec<f64>,
    opt_v: Vec<f64>,
    pub step: u64,
    pub rng: Rng,
}

impl TrainState {
    pub fn new(field: MlpField, seed: u64) -> Self {
        let n = field.param_count();
        let ema = field.params().to_vec();
        TrainState {
            field,
            ema,
            opt_m: vec![0.0; n],
            opt_v: vec![0.0; n],
            step: 0,
            rng: Rng::seed(seed),
        }
    }

    /// Field materialized from the EMA parameters.
    pub fn ema_field(&self) -> MlpField {
        MlpField::from_params(self.field.config().clone(), self.ema.clone())
            .expect("EMA shadow matches the parameter layout")
    }
}

/// Per-step log record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub loss: f64,
    /// Squared pairing cost of the (x, eps) batch actually used.
    pub pair_cost: f64,
    pub ema_loss: f64,
}

fn weight_for(t: FlowStep, weighting: &LossWeighting) -> Result<f64> {
    match *weighting {
        LossWeighting::None => Ok(1.0),
        LossWeighting::LogitNormalPdf { m, s } => logit_normal_pdf(t, m, s),
    }
}

/// Flow-matching loss of `field` on an aligned `(batch, eps, t)` triple.
///
/// Mean over items of `w_i * ||v(z_i, t_i, c_i) - (x_i - eps_i)||^2 / (L d)`.
pub fn fm_loss<F: VelocityField>(
    field: &F,
    batch: &Batch,
    eps: &[LatentSeq],
    ts: &[FlowStep],
    weighting: &LossWeighting,
) -> Result<f64> {
    if eps.len() != batch.len() || ts.len() != batch.len() {
        return Err(Error::InvalidArgument(String::from(
            "batch, noise and flow steps must be aligned",
        )));
    }
    let weights: Vec<f64> = ts
        .iter()
        .map(|&t| weight_for(t, weighting))
        .collect::<Result<_>>()?;
    fm_loss_weighted(field, batch, eps, ts, &weights)
}

/// Loss with explicit per-item weights; zero weights contribute nothing.
pub fn fm_loss_weighted<F: VelocityField>(
    field: &F,
    batch: &Batch,
    eps: &[LatentSeq],
    ts: &[FlowStep],
    weights: &[f64],
) -> Result<f64> {
    if eps.len() != batch.len() || ts.len() != batch.len() || weights.len() != batch.len() {
        return Err(Error::InvalidArgument(String::from(
            "batch, noise, flow steps and weights must be aligned",
        )));
    }
    let (l, d) = batch.shape();
    let denom = (l * d) as f64;
    let mut total = 0.0;
    for (((x, c), e), (&t, &w)) in batch
        .items()
        .iter()
        .zip(eps)
        .zip(ts.iter().zip(weights))
    {
        let z = mix(x, e, t)?;
        let v = field.eval(&z, t, c)?;
        let target = target_velocity(x, e)?;
        total += w * v.dist_sq(&target)? / denom;
    }
    Ok(total / batch.len() as f64)
}

/// Loss and flat parameter gradient of the MLP field via backprop.
pub fn fm_loss_grad(
    field: &MlpField,
    batch: &Batch,
    eps: &[LatentSeq],
    ts: &[FlowStep],
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if eps.len() != batch.len() || ts.len() != batch.len() || weights.len() != batch.len() {
        return Err(Error::InvalidArgument(String::from(
            "batch, noise, flow steps and weights must be aligned",
        )));
    }
    let (l, d) = batch.shape();
    let denom = (l * d) as f64;
    let b = batch.len() as f64;
    let mut grads = vec![0.0; field.param_count()];
    let mut total = 0.0;
    for (((x, c), e), (&t, &w)) in batch
        .items()
        .iter()
        .zip(eps)
        .zip(ts.iter().zip(weights))
    {
        let z = mix(x, e, t)?;
        let target = target_velocity(x, e)?;
        let (out, cache) = field.eval_cached(&z, t, c)?;
        let resid = out.sub(&target)?;
        total += w * resid.norm_sq() / denom;
        if w != 0.0 {
            // d loss / d out = 2 w (out - target) / (B L d)
            let d_out = resid.scale(2.0 * w / (b * denom));
            field.backward(&cache, &d_out, &mut grads);
        }
    }
    Ok((total / b, grads))
}

/// One optimizer step over a data batch. Returns the step's log record.
pub fn train_step(
    state: &mut TrainState,
    data_batch: &Batch,
    cfg: &TrainConfig,
) -> Result<StepStats> {
    cfg.validate()?;
    let (l, d) = data_batch.shape();
    let b = data_batch.len();

    // Noise batch, then optional OT reordering.
    let mut eps: Vec<LatentSeq> = Vec::with_capacity(b);
    for _ in 0..b {
        eps.push(crate::latent::sample_noise(l, d, &mut state.rng)?);
    }
    let (eps, used_cost) = match cfg.coupling {
        CouplingKind::Independent => {
            let cost = pair_cost(data_batch, &eps, &Permutation::identity(b))?;
            (eps, cost)
        }
        CouplingKind::Ot => {
            let perm = ot_couple(data_batch, &eps)?;
            let cost = pair_cost(data_batch, &eps, &perm)?;
            let reordered = perm.map().iter().map(|&j| eps[j].clone()).collect();
            (reordered, cost)
        }
    };

    // Condition dropout.
    let items: Vec<(LatentSeq, Condition)> = data_batch
        .items()
        .iter()
        .map(|(x, c)| {
            let c = if state.rng.uniform() < cfg.dropout_p {
                Condition::Null
            } else {
                c.clone()
            };
            (x.clone(), c)
        })
        .collect();
    let batch = Batch::new(items)?;

    // Per-item flow steps and loss weights.
    let ts: Vec<FlowStep> = (0..b)
        .map(|_| sample_flowstep(&cfg.sampler, &mut state.rng))
        .collect::<Result<_>>()?;
    let weights: Vec<f64> = ts
        .iter()
        .map(|&t| weight_for(t, &cfg.weighting))
        .collect::<Result<_>>()?;

    let (loss, mut grads) = fm_loss_grad(&state.field, &batch, &eps, &ts, &weights)?;
    let next_step = state.step + 1;
    if grads.iter().any(|g| !g.is_finite()) || !loss.is_finite() {
        return Err(Error::TrainingDiverged { step: next_step });
    }

    // Global-norm clipping.
    if cfg.grad_clip > 0.0 {
        let norm = libm::sqrt(grads.iter().map(|g| g * g).sum::<f64>());
        if norm > cfg.grad_clip {
            let scale = cfg.grad_clip / norm;
            grads.iter_mut().for_each(|g| *g *= scale);
        }
    }

    // Adam with decoupled weight decay and linear warmup.
    let lr = if cfg.warmup_steps > 0 && next_step < cfg.warmup_steps {
        cfg.lr * next_step as f64 / cfg.warmup_steps as f64
    } else {
        cfg.lr
    };
    let (b1, b2) = cfg.betas;
    let bias1 = 1.0 - libm::pow(b1, next_step as f64);
    let bias2 = 1.0 - libm::pow(b2, next_step as f64);
    const ADAM_EPS: f64 = 1e-8;
    let params = state.field.params_mut();
    for i in 0..params.len() {
        let g = grads[i];
        state.opt_m[i] = b1 * state.opt_m[i] + (1.0 - b1) * g;
        state.opt_v[i] = b2 * state.opt_v[i] + (1.0 - b2) * g * g;
        let m_hat = state.opt_m[i] / bias1;
        let v_hat = state.opt_v[i] / bias2;
        params[i] -= lr * (m_hat / (libm::sqrt(v_hat) + ADAM_EPS) + cfg.weight_decay * params[i]);
    }
    state.step = next_step;

    // EMA shadow update on the configured cadence.
    if state.step.is_multiple_of(cfg.ema_interval) {
        let params = state.field.params();
        for (e, &p) in state.ema.iter_mut().zip(params) {
            *e = cfg.ema_decay * *e + (1.0 - cfg.ema_decay) * p;
        }
    }

    let ema_loss = fm_loss_weighted(&state.ema_field(), &batch, &eps, &ts, &weights)?;
    Ok(StepStats {
        step: state.step,
        loss,
        pair_cost: used_cost,
        ema_loss,
    })
}

/// Runs the full training loop, sampling minibatches from `dataset`.
pub fn train(
    field: MlpField,
    dataset: &Batch,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(TrainState, Vec<StepStats>)> {
    cfg.validate()?;
    let mut state = TrainState::new(field, seed);
    let mut log = Vec::with_capacity(cfg.steps as usize);
    let n = dataset.len();
    for _ in 0..cfg.steps {
        let items: Vec<(LatentSeq, Condition)> = (0..cfg.batch_size)
            .map(|_| {
                let idx = (state.rng.next_u64() % n as u64) as usize;
                dataset.items()[idx].clone()
            })
            .collect();
        let batch = Batch::new(items)?;
        log.push(train_step(&mut state, &batch, cfg)?);
    }
    Ok((state, log))
}

/// Max relative error between backprop and central finite differences over a
/// random subset of parameters.
pub fn grad_check(
    field: &MlpField,
    batch: &Batch,
    eps: &[LatentSeq],
    ts: &[FlowStep],
    rng: &mut Rng,
) -> Result<f64> {
    let weights = vec![1.0; batch.len()];
    let (_, grads) = fm_loss_grad(field, batch, eps, ts, &weights)?;
    let mut probe = field.clone();
    let n = probe.param_count();
    let samples = 100.min(n);
    let mut max_rel = 0.0f64;
    for _ in 0..samples {
        let idx = (rng.next_u64() % n as u64) as usize;
        let orig = probe.params()[idx];
        let h = 1e-5 * (1.0 + orig.abs());
        probe.params_mut()[idx] = orig + h;
        let up = fm_loss_weighted(&probe, batch, eps, ts, &weights)?;
        probe.params_mut()[idx] = orig - h;
        let down = fm_loss_weighted(&probe, batch, eps, ts, &weights)?;
        probe.params_mut()[idx] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (grads[idx] - fd).abs() / grads[idx].abs().max(fd.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
