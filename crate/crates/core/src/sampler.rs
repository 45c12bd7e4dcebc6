//! Flow-step sampling distributions used during training.
//!
//! Training concentrates capacity away from the path endpoints by drawing
//! `t = sigmoid(n)` with `n ~ N(m, s^2)`; the uniform sampler is kept as the
//! ablation baseline. The logit-normal density doubles as an optional loss
//! weighting.

use alloc::format;

use crate::error::{Error, Result};
use crate::latent::FlowStep;
use crate::rng::Rng;

/// Largest double below 1; clamping keeps logit-normal draws in the open interval.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FlowStepSampler {
    Uniform,
    /// `t = sigmoid(n)`, `n ~ N(m, s^2)`; `s > 0`.
    LogitNormal { m: f64, s: f64 },
}

impl Default for FlowStepSampler {
    fn default() -> Self {
        // The underlying (m, s) are configurable; (0, 1) is the standard choice.
        FlowStepSampler::LogitNormal { m: 0.0, s: 1.0 }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Draws one flow step from the sampler.
pub fn sample_flowstep(sampler: &FlowStepSampler, rng: &mut Rng) -> Result<FlowStep> {
    match *sampler {
        FlowStepSampler::Uniform => FlowStep::new(rng.uniform()),
        FlowStepSampler::LogitNormal { m, s } => {
            if s <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "logit-normal scale must be positive, got {s}"
                )));
            }
            let n = m + s * rng.normal();
            let t = sigmoid(n).clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP);
            FlowStep::new(t)
        }
    }
}

/// Logit-normal density at `t` in the open unit interval.
pub fn logit_normal_pdf(t: FlowStep, m: f64, s: f64) -> Result<f64> {
    let t = t.value();
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!(
            "logit-normal pdf requires t in (0, 1), got {t}"
        )));
    }
    if s <= 0.0 {
        return Err(Error::Domain(format!(
            "logit-normal pdf requires s > 0, got {s}"
        )));
    }
    let logit = libm::log(t / (1.0 - t));
    let z = (logit - m) / s;
    let norm = 1.0 / (s * libm::sqrt(2.0 * core::f64::consts::PI));
    Ok(norm / (t * (1.0 - t)) * libm::exp(-0.5 * z * z))
}

/// Standard normal CDF; used by the distributional test oracles.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn sigmoid_zero_is_half() {
        // A normal draw forced to 0 maps to t = 0.5.
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn pdf_at_half() {
        // 4 / sqrt(2*pi) at the symmetric midpoint.
        let v = logit_normal_pdf(FlowStep::new(0.5).unwrap(), 0.0, 1.0).unwrap();
        let expected = 4.0 / libm::sqrt(2.0 * core::f64::consts::PI);
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
        assert!((v - 1.5958).abs() < 1e-4);
    }

    #[test]
    fn pdf_symmetry_at_zero_mean() {
        for &t in &[0.05, 0.2, 0.33, 0.49] {
            for &s in &[0.5, 1.0, 2.0] {
                let a = logit_normal_pdf(FlowStep::new(t).unwrap(), 0.0, s).unwrap();
                let b = logit_normal_pdf(FlowStep::new(1.0 - t).unwrap(), 0.0, s).unwrap();
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        // Midpoint-rule quadrature oracle on a fine grid.
        let n = 2_000_000;
        let h = 1.0 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let t = (i as f64 + 0.5) * h;
            total += logit_normal_pdf(FlowStep::new(t).unwrap(), 0.0, 1.0).unwrap() * h;
        }
        assert!((total - 1.0).abs() < 1e-6, "integral {total}");
    }

    #[test]
    fn pdf_domain_errors() {
        assert!(logit_normal_pdf(FlowStep::new(0.0).unwrap(), 0.0, 1.0).is_err());
        assert!(logit_normal_pdf(FlowStep::new(1.0).unwrap(), 0.0, 1.0).is_err());
        assert!(logit_normal_pdf(FlowStep::new(0.5).unwrap(), 0.0, 0.0).is_err());
    }

    fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &x) in samples.iter().enumerate() {
            let f = cdf(x);
            d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
        }
        d
    }

    #[test]
    fn logit_normal_ks() {
        let sampler = FlowStepSampler::LogitNormal { m: 0.0, s: 1.0 };
        let mut rng = Rng::seed(101);
        let mut ts: Vec<f64> = (0..100_000)
            .map(|_| sample_flowstep(&sampler, &mut rng).unwrap().value())
            .collect();
        assert!(ts.iter().all(|&t| t > 0.0 && t < 1.0));
        let d = ks_statistic(&mut ts, |t| normal_cdf(libm::log(t / (1.0 - t))));
        assert!(d < 0.01, "KS statistic {d}");
    }

    #[test]
    fn uniform_ks() {
        let mut rng = Rng::seed(55);
        let mut ts: Vec<f64> = (0..100_000)
            .map(|_| sample_flowstep(&FlowStepSampler::Uniform, &mut rng).unwrap().value())
            .collect();
        let d = ks_statistic(&mut ts, |t| t.clamp(0.0, 1.0));
        assert!(d < 0.01, "KS statistic {d}");
    }

    #[test]
    fn logit_normal_mean_near_half() {
        let sampler = FlowStepSampler::LogitNormal { m: 0.0, s: 1.0 };
        let mut rng = Rng::seed(9);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_flowstep(&sampler, &mut rng).unwrap().value())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }
}
