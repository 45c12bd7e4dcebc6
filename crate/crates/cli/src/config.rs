//! Run configuration: plain key-value files or JSON, with CLI overrides.
//!
//! The fully resolved configuration is echoed into every run manifest so a
//! run is reproducible from its manifest alone.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use latentflow_core::data::{DatasetKind, DatasetSpec};
use latentflow_core::ode::{Method, SolverConfig};
use latentflow_core::sampler::FlowStepSampler;
use latentflow_core::train::{CouplingKind, LossWeighting, TrainConfig};
use latentflow_core::velocity::MlpConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataCfg {
    pub kind: String,
    pub classes: usize,
    pub seq_len: usize,
    pub channels: usize,
    pub n_per_class: usize,
    pub seed: u64,
    /// Multiplier applied to generated latents before training/metrics
    /// (latent normalization).
    pub scale: f64,
}

impl Default for DataCfg {
    fn default() -> Self {
        DataCfg {
            kind: "gaussians".into(),
            classes: 2,
            seq_len: 8,
            channels: 2,
            n_per_class: 256,
            seed: 11,
            scale: 0.25,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelCfg {
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub time_freqs: usize,
}

impl Default for ModelCfg {
    fn default() -> Self {
        ModelCfg {
            hidden: vec![64, 64],
            embed_dim: 8,
            time_freqs: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCfg {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub warmup_steps: u64,
    pub dropout_p: f64,
    pub ema_decay: f64,
    pub ema_interval: u64,
    /// `none` or `logit-normal-pdf`.
    pub weighting: String,
}

impl Default for TrainCfg {
    fn default() -> Self {
        TrainCfg {
            steps: 1500,
            batch_size: 32,
            lr: 3e-3,
            weight_decay: 0.0,
            grad_clip: 10.0,
            warmup_steps: 50,
            dropout_p: 0.2,
            ema_decay: 0.99,
            ema_interval: 10,
            weighting: "none".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowStepCfg {
    /// `uniform` or `logit-normal`.
    pub kind: String,
    pub m: f64,
    pub s: f64,
}

impl Default for FlowStepCfg {
    fn default() -> Self {
        FlowStepCfg {
            kind: "logit-normal".into(),
            m: 0.0,
            s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingCfg {
    /// `independent` or `ot`.
    pub kind: String,
}

impl Default for CouplingCfg {
    fn default() -> Self {
        CouplingCfg {
            kind: "independent".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverCfg {
    /// `euler` or `midpoint`.
    pub method: String,
    pub num_steps: usize,
}

impl Default for SolverCfg {
    fn default() -> Self {
        SolverCfg {
            method: "midpoint".into(),
            num_steps: 32,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataCfg,
    pub model: ModelCfg,
    pub train: TrainCfg,
    pub flowstep: FlowStepCfg,
    pub coupling: CouplingCfg,
    pub solver: SolverCfg,
    pub guidance: Option<f64>,
    pub seed: u64,
    /// Shuffled (train, validation, eval) fractions.
    pub split: (f64, f64, f64),
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataCfg::default(),
            model: ModelCfg::default(),
            train: TrainCfg::default(),
            flowstep: FlowStepCfg::default(),
            coupling: CouplingCfg::default(),
            solver: SolverCfg::default(),
            guidance: None,
            seed: 0,
            split: (0.7, 0.1, 0.2),
        }
    }
}

impl RunConfig {
    /// Parses JSON (when the file starts with `{`) or `key = value` lines
    /// with dotted keys, e.g. `flowstep.kind = logit-normal`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            return serde_json::from_str(text).context("parsing JSON config");
        }
        let mut cfg = RunConfig::default();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`", line_no + 1);
            };
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("line {}", line_no + 1))?;
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        RunConfig::parse(&text)
    }

    /// Applies one dotted-key override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| anyhow::anyhow!("invalid value for {key}: {e}"))
        }
        match key {
            "data.kind" => self.data.kind = value.into(),
            "data.classes" => self.data.classes = parse(key, value)?,
            "data.seq_len" => self.data.seq_len = parse(key, value)?,
            "data.channels" => self.data.channels = parse(key, value)?,
            "data.n_per_class" => self.data.n_per_class = parse(key, value)?,
            "data.seed" => self.data.seed = parse(key, value)?,
            "data.scale" => self.data.scale = parse(key, value)?,
            "model.hidden" => {
                self.model.hidden = value
                    .split(',')
                    .map(|v| parse("model.hidden", v.trim()))
                    .collect::<Result<_>>()?;
            }
            "model.embed_dim" => self.model.embed_dim = parse(key, value)?,
            "model.time_freqs" => self.model.time_freqs = parse(key, value)?,
            "train.steps" => self.train.steps = parse(key, value)?,
            "train.batch_size" => self.train.batch_size = parse(key, value)?,
            "train.lr" => self.train.lr = parse(key, value)?,
            "train.weight_decay" => self.train.weight_decay = parse(key, value)?,
            "train.grad_clip" => self.train.grad_clip = parse(key, value)?,
            "train.warmup_steps" => self.train.warmup_steps = parse(key, value)?,
            "train.dropout_p" => self.train.dropout_p = parse(key, value)?,
            "train.ema_decay" => self.train.ema_decay = parse(key, value)?,
            "train.ema_interval" => self.train.ema_interval = parse(key, value)?,
            "train.weighting" => self.train.weighting = value.into(),
            "flowstep.kind" => self.flowstep.kind = value.into(),
            "flowstep.m" => self.flowstep.m = parse(key, value)?,
            "flowstep.s" => self.flowstep.s = parse(key, value)?,
            "coupling.kind" => self.coupling.kind = value.into(),
            "solver.method" => self.solver.method = value.into(),
            "solver.num_steps" => self.solver.num_steps = parse(key, value)?,
            "guidance" => {
                self.guidance = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(parse(key, value)?)
                };
            }
            "seed" => self.seed = parse(key, value)?,
            "split.train" => self.split.0 = parse(key, value)?,
            "split.validation" => self.split.1 = parse(key, value)?,
            "split.eval" => self.split.2 = parse(key, value)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let kind = match self.data.kind.as_str() {
            "gaussians" => DatasetKind::Gaussians,
            "moons-like" | "moons_like" => DatasetKind::MoonsLike,
            "seq-sines" | "seq_sines" => DatasetKind::SeqSines,
            other => bail!("unknown dataset kind `{other}`"),
        };
        Ok(DatasetSpec {
            kind,
            classes: self.data.classes,
            seq_len: self.data.seq_len,
            channels: self.data.channels,
            n_per_class: self.data.n_per_class,
            seed: self.data.seed,
        })
    }

    pub fn sampler(&self) -> Result<FlowStepSampler> {
        match self.flowstep.kind.as_str() {
            "uniform" => Ok(FlowStepSampler::Uniform),
            "logit-normal" | "logit_normal" => Ok(FlowStepSampler::LogitNormal {
                m: self.flowstep.m,
                s: self.flowstep.s,
            }),
            other => bail!("unknown flow-step sampler `{other}`"),
        }
    }

    pub fn coupling_kind(&self) -> Result<CouplingKind> {
        match self.coupling.kind.as_str() {
            "independent" => Ok(CouplingKind::Independent),
            "ot" => Ok(CouplingKind::Ot),
            other => bail!("unknown coupling kind `{other}`"),
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let method = match self.solver.method.as_str() {
            "euler" => Method::Euler,
            "midpoint" => Method::Midpoint,
            other => bail!("unknown solver method `{other}`"),
        };
        SolverConfig::new(method, self.solver.num_steps).map_err(Into::into)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let weighting = match self.train.weighting.as_str() {
            "none" => LossWeighting::None,
            "logit-normal-pdf" | "logit_normal_pdf" => LossWeighting::LogitNormalPdf {
                m: self.flowstep.m,
                s: self.flowstep.s,
            },
            other => bail!("unknown loss weighting `{other}`"),
        };
        Ok(TrainConfig {
            steps: self.train.steps,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            betas: (0.9, 0.95),
            weight_decay: self.train.weight_decay,
            grad_clip: self.train.grad_clip,
            warmup_steps: self.train.warmup_steps,
            dropout_p: self.train.dropout_p,
            sampler: self.sampler()?,
            coupling: self.coupling_kind()?,
            ema_decay: self.train.ema_decay,
            ema_interval: self.train.ema_interval,
            weighting,
        })
    }

    pub fn mlp_config(&self) -> MlpConfig {
        MlpConfig {
            seq_len: self.data.seq_len,
            channels: self.data.channels,
            hidden: self.model.hidden.clone(),
            num_classes: self.data.classes,
            embed_dim: self.model.embed_dim,
            time_freqs: self.model.time_freqs,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_parsing_and_overrides() {
        let text = "\
# comment
flowstep.kind = uniform
coupling.kind = ot
solver.method = euler
solver.num_steps = 12
train.steps = 42
data.classes = 4
";
        let mut cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.flowstep.kind, "uniform");
        assert_eq!(cfg.solver.num_steps, 12);
        assert_eq!(cfg.train.steps, 42);
        assert_eq!(cfg.data.classes, 4);
        // CLI-style override wins.
        cfg.set("train.steps", "7").unwrap();
        assert_eq!(cfg.train.steps, 7);
        assert!(cfg.set("bogus.key", "1").is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(serde_json::to_value(&back).unwrap(), cfg.to_json());
    }

    #[test]
    fn conversions() {
        let cfg = RunConfig::default();
        assert!(matches!(cfg.sampler().unwrap(), FlowStepSampler::LogitNormal { .. }));
        assert!(matches!(cfg.coupling_kind().unwrap(), CouplingKind::Independent));
        cfg.solver_config().unwrap();
        cfg.train_config().unwrap();
        cfg.dataset_spec().unwrap();
    }
}
