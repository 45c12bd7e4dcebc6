//! Fixed-step ODE integration of velocity fields with NFE accounting.
//!
//! Both directions run on a uniform grid. Forward Euler evaluates at each
//! step's start time; backward Euler evaluates at the step's end time with
//! the current state, which makes one backward step the mirror image of the
//! regularized inversion's inner update (and the two coincide bit-for-bit
//! when that algorithm runs a single unregularized iteration).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::latent::{sample_noise, Condition, FlowStep, LatentSeq};
use crate::rng::Rng;
use crate::velocity::VelocityField;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Method {
    Euler,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    pub method: Method,
    pub num_steps: usize,
}

impl SolverConfig {
    pub fn new(method: Method, num_steps: usize) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::InvalidConfig(String::from(
                "solver needs at least one step",
            )));
        }
        Ok(SolverConfig { method, num_steps })
    }

    /// Midpoint solver with the reference step size 1/32.
    pub fn default_midpoint() -> Self {
        SolverConfig {
            method: Method::Midpoint,
            num_steps: 32,
        }
    }
}

/// Recorded solve: ordered `(t, z)` samples plus the field-evaluation count.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<(f64, LatentSeq)>,
    pub nfe: u64,
}

/// Time of grid node `k` on the uniform grid starting at `t_from`.
///
/// Shared by the solvers and the inversion loop so both paths see identical
/// floating-point time values.
#[inline]
pub(crate) fn grid_time(t_from: f64, h: f64, k: usize) -> f64 {
    t_from + k as f64 * h
}

/// Integrates `dz/dt = v(z, t, c)` from `t_from` to `t_to` on a uniform grid.
///
/// With `record` set, the trajectory holds the initial state plus one point
/// per step; otherwise only the NFE counter is filled.
pub fn integrate<F: VelocityField>(
    field: &F,
    z_start: &LatentSeq,
    t_from: f64,
    t_to: f64,
    cfg: &SolverConfig,
    c: &Condition,
    record: bool,
) -> Result<(LatentSeq, Trajectory)> {
    if !(0.0..=1.0).contains(&t_from) || !(0.0..=1.0).contains(&t_to) {
        return Err(Error::InvalidArgument(format!(
            "integration bounds must lie in [0, 1], got {t_from} -> {t_to}"
        )));
    }
    if t_from == t_to {
        return Err(Error::InvalidArgument(String::from(
            "integration bounds must differ",
        )));
    }
    let n = cfg.num_steps;
    let h = (t_to - t_from) / n as f64;
    let backward = h < 0.0;

    let mut z = z_start.clone();
    let mut traj = Trajectory {
        points: Vec::new(),
        nfe: 0,
    };
    if record {
        traj.points.reserve(n + 1);
        traj.points.push((t_from, z.clone()));
    }

    for i in 0..n {
        let t_i = grid_time(t_from, h, i);
        match cfg.method {
            Method::Euler => {
                // Backward steps evaluate at the step's target time.
                let t_eval = if backward { grid_time(t_from, h, i + 1) } else { t_i };
                let v = field.eval(&z, clamped_step(t_eval)?, c)?;
                traj.nfe += field.nfe_per_eval();
                z = z.add_scaled(&v, h)?;
            }
            Method::Midpoint => {
                let v1 = field.eval(&z, clamped_step(t_i)?, c)?;
                traj.nfe += field.nfe_per_eval();
                let z_mid = z.add_scaled(&v1, h * 0.5)?;
                let v2 = field.eval(&z_mid, clamped_step(t_i + h * 0.5)?, c)?;
                traj.nfe += field.nfe_per_eval();
                z = z.add_scaled(&v2, h)?;
            }
        }
        if !z.is_finite() {
            return Err(Error::Divergence { step: i });
        }
        if record {
            let t_next = if i + 1 == n { t_to } else { grid_time(t_from, h, i + 1) };
            traj.points.push((t_next, z.clone()));
        }
    }
    Ok((z, traj))
}

/// Absorbs sub-ulp overshoot of the accumulated grid times.
fn clamped_step(t: f64) -> Result<FlowStep> {
    FlowStep::new(t.clamp(0.0, 1.0))
}

/// Samples `eps ~ N(0, I)` and integrates it from `t = 0` to `t = 1`.
pub fn generate<F: VelocityField>(
    field: &F,
    c: &Condition,
    seq_len: usize,
    channels: usize,
    cfg: &SolverConfig,
    rng: &mut Rng,
) -> Result<LatentSeq> {
    Ok(generate_recorded(field, c, seq_len, channels, cfg, rng, false)?.0)
}

/// Like [`generate`] but optionally records the trajectory.
pub fn generate_recorded<F: VelocityField>(
    field: &F,
    c: &Condition,
    seq_len: usize,
    channels: usize,
    cfg: &SolverConfig,
    rng: &mut Rng,
    record: bool,
) -> Result<(LatentSeq, Trajectory)> {
    let eps = sample_noise(seq_len, channels, rng)?;
    integrate(field, &eps, 0.0, 1.0, cfg, c, record)
}

/// Mean perpendicular deviation of interior points from the endpoint chord.
///
/// Each recorded state is flattened; deviations are distances to the chord
/// line through the first and last states. Exactly straight paths score 0.
pub fn straightness(traj: &Trajectory) -> Result<f64> {
    let pts = &traj.points;
    if pts.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "straightness needs at least 3 recorded points, got {}",
            pts.len()
        )));
    }
    let a = &pts[0].1;
    let b = &pts[pts.len() - 1].1;
    let chord = b.sub(a)?;
    let chord_len = libm::sqrt(chord.norm_sq());
    if chord_len == 0.0 {
        return Err(Error::DegenerateTrajectory(String::from(
            "endpoints coincide",
        )));
    }
    let unit: Vec<f64> = chord.as_slice().iter().map(|v| v / chord_len).collect();

    let mut total = 0.0;
    for (_, p) in &pts[1..pts.len() - 1] {
        let rel = p.sub(a)?;
        let along: f64 = rel.as_slice().iter().zip(&unit).map(|(r, u)| r * u).sum();
        let mut perp_sq = 0.0;
        for (r, u) in rel.as_slice().iter().zip(&unit) {
            let resid = r - along * u;
            perp_sq += resid * resid;
        }
        total += libm::sqrt(perp_sq);
    }
    Ok(total / (pts.len() - 2) as f64)
}
