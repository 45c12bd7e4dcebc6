//! Label-guided editing: invert to an intermediate flow step, then
//! re-integrate forward under a new condition.
//!
//! Guidance, when requested, applies in both ODE directions; an inversion
//! conditioned on Null always uses the bare unconditional field (guidance is
//! undefined without a condition). The sweep helpers reproduce the editing
//! ablations: metrics as a function of the inversion target and of the NFE
//! budget, with deterministic per-cell rng streams.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::invert::{ddim_invert, regularized_invert, CondMode, InversionConfig};
use crate::latent::{Condition, FlowStep, LatentSeq};
use crate::metrics::{adherence, frechet_gaussian, lpaps, Classifier};
use crate::ode::{integrate, Method, SolverConfig};
use crate::rng::Rng;
use crate::velocity::{GuidedField, VelocityField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EditMethod {
    Ddim,
    Regularized,
}

/// One edit: source latent, its (optional) condition, the target condition.
#[derive(Debug, Clone)]
pub struct EditRequest {
    pub x_orig: LatentSeq,
    pub c_orig: Condition,
    /// Target condition; must be non-null.
    pub c_edit: Condition,
    pub inversion: InversionConfig,
    /// Forward (re-generation) solver.
    pub solver: SolverConfig,
    pub method: EditMethod,
    /// Classifier-free guidance scale applied in both directions when set.
    pub guidance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EditOutcome {
    pub x_edit: LatentSeq,
    pub nfe_total: u64,
}

/// Either the bare field or its guidance wrapper, chosen per phase.
enum PhaseField<'a, F> {
    Bare(&'a F),
    Guided(GuidedField<&'a F>),
}

impl<'a, F: VelocityField> PhaseField<'a, F> {
    fn for_condition(field: &'a F, c: &Condition, guidance: Option<f64>) -> Result<Self> {
        match guidance {
            Some(gamma) if !c.is_null() => Ok(PhaseField::Guided(GuidedField::new(field, gamma)?)),
            _ => Ok(PhaseField::Bare(field)),
        }
    }
}

impl<'a, F: VelocityField> VelocityField for PhaseField<'a, F> {
    fn eval(&self, z: &LatentSeq, t: FlowStep, c: &Condition) -> Result<LatentSeq> {
        match self {
            PhaseField::Bare(f) => f.eval(z, t, c),
            PhaseField::Guided(g) => g.eval(z, t, c),
        }
    }

    fn nfe_per_eval(&self) -> u64 {
        match self {
            PhaseField::Bare(f) => f.nfe_per_eval(),
            PhaseField::Guided(g) => g.nfe_per_eval(),
        }
    }
}

/// Runs the two-phase edit; returns the edited latent and the exact NFE sum
/// of both phases.
pub fn edit<F: VelocityField>(field: &F, req: &EditRequest, rng: &mut Rng) -> Result<EditOutcome> {
    if req.c_edit.is_null() {
        return Err(Error::InvalidArgument(String::from(
            "edit target condition must be non-null",
        )));
    }
    let c_inv = match req.inversion.cond_mode {
        CondMode::Null => Condition::Null,
        CondMode::Original => req.c_orig.clone(),
    };
    let inv_field = PhaseField::for_condition(field, &c_inv, req.guidance)?;
    let (z, nfe_backward) = match req.method {
        EditMethod::Ddim => ddim_invert(
            &inv_field,
            &req.x_orig,
            &c_inv,
            req.inversion.t_edit,
            req.inversion.num_steps,
        )?,
        EditMethod::Regularized => {
            regularized_invert(&inv_field, &req.x_orig, &c_inv, &req.inversion, rng)?
        }
    };

    let fwd_field = PhaseField::for_condition(field, &req.c_edit, req.guidance)?;
    let (x_edit, nfe_forward) = if req.inversion.t_edit >= 1.0 {
        (z, 0)
    } else {
        let (x_edit, traj) = integrate(
            &fwd_field,
            &z,
            req.inversion.t_edit,
            1.0,
            &req.solver,
            &req.c_edit,
            false,
        )?;
        (x_edit, traj.nfe)
    };
    Ok(EditOutcome {
        x_edit,
        nfe_total: nfe_backward + nfe_forward,
    })
}

/// One evaluation item for the sweep harness.
#[derive(Debug, Clone)]
pub struct EditItem {
    pub x: LatentSeq,
    pub c_orig: Condition,
    pub c_edit: Condition,
}

/// Edit items plus the reference sample set the Fréchet metric compares against.
#[derive(Debug, Clone)]
pub struct EditEvalSet {
    pub items: Vec<EditItem>,
    pub reference: Vec<LatentSeq>,
}

/// Shared sweep settings; per-cell code overrides the swept parameter.
#[derive(Debug, Clone)]
pub struct SweepTemplate {
    pub inversion: InversionConfig,
    pub solver: SolverConfig,
    pub guidance: Option<f64>,
    /// Give the plain backward pass extra steps so both methods spend the
    /// same backward NFE.
    pub equal_nfe: bool,
}

/// One sweep table row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub method: EditMethod,
    /// The swept value: an inversion target or an NFE budget.
    pub param: f64,
    pub frechet: f64,
    /// Median per-item consistency distance.
    pub lpaps: f64,
    /// Mean classifier probability of the target class.
    pub adherence: f64,
    /// Exact per-item NFE spent.
    pub nfe: u64,
    /// Set when an NFE budget was rounded to reachable step counts.
    pub warning: bool,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

/// Runs one sweep cell: edits every item and aggregates the metrics.
///
/// Exposed so callers can schedule cells on worker pools; results only
/// depend on the arguments and `cell_rng`, never on scheduling order.
#[allow(clippy::too_many_arguments)]
pub fn run_sweep_cell<F: VelocityField>(
    field: &F,
    set: &EditEvalSet,
    classifier: &Classifier,
    method: EditMethod,
    param: f64,
    inversion: InversionConfig,
    solver: SolverConfig,
    guidance: Option<f64>,
    warning: bool,
    cell_rng: &Rng,
) -> Result<SweepRow> {
    if set.items.is_empty() {
        return Err(Error::InvalidArgument(String::from("empty edit set")));
    }
    let mut lpaps_vals = Vec::with_capacity(set.items.len());
    let mut adh_total = 0.0;
    let mut edited = Vec::with_capacity(set.items.len());
    let mut nfe = 0u64;
    for (i, item) in set.items.iter().enumerate() {
        let req = EditRequest {
            x_orig: item.x.clone(),
            c_orig: item.c_orig.clone(),
            c_edit: item.c_edit.clone(),
            inversion: inversion.clone(),
            solver,
            method,
            guidance,
        };
        let mut rng = cell_rng.derive(i as u64);
        let outcome = edit(field, &req, &mut rng)?;
        lpaps_vals.push(lpaps(&outcome.x_edit, &item.x)?);
        adh_total += adherence(&outcome.x_edit, &item.c_edit, classifier)?;
        nfe = outcome.nfe_total;
        edited.push(outcome.x_edit);
    }
    Ok(SweepRow {
        method,
        param,
        frechet: frechet_gaussian(&edited, &set.reference)?,
        lpaps: median(&mut lpaps_vals),
        adherence: adh_total / set.items.len() as f64,
        nfe,
        warning,
    })
}

/// Per-method inversion config for one `t_edit` cell.
pub fn t_edit_cell_config(
    tpl: &SweepTemplate,
    method: EditMethod,
    t_edit: f64,
) -> InversionConfig {
    let mut inv = tpl.inversion.clone();
    inv.t_edit = t_edit;
    if method == EditMethod::Ddim && tpl.equal_nfe {
        // Match the regularized method's backward evaluation count.
        inv.num_steps = tpl.inversion.num_steps * tpl.inversion.evals_per_step();
    }
    inv
}

/// Metrics per (method, t_edit) over the evaluation set.
pub fn sweep_t_edit<F: VelocityField>(
    field: &F,
    set: &EditEvalSet,
    classifier: &Classifier,
    grid: &[f64],
    methods: &[EditMethod],
    tpl: &SweepTemplate,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument(String::from("empty t_edit grid")));
    }
    let root = Rng::seed(seed);
    let mut rows = Vec::with_capacity(grid.len() * methods.len());
    for (cell, (&method, &t_edit)) in methods
        .iter()
        .flat_map(|m| grid.iter().map(move |t| (m, t)))
        .enumerate()
    {
        let inv = t_edit_cell_config(tpl, method, t_edit);
        rows.push(run_sweep_cell(
            field,
            set,
            classifier,
            method,
            t_edit,
            inv,
            tpl.solver,
            tpl.guidance,
            false,
            &root.derive(cell as u64),
        )?);
    }
    Ok(rows)
}

/// Step counts hitting an NFE budget as closely as integer steps allow.
///
/// The budget is split evenly between the backward and forward phases;
/// `warning` in the resulting row flags budgets that required rounding.
pub fn nfe_cell_config(
    tpl: &SweepTemplate,
    method: EditMethod,
    budget: u64,
    per_eval: u64,
) -> (InversionConfig, SolverConfig) {
    let half = (budget / 2).max(1);
    let mut inv = tpl.inversion.clone();
    inv.t_edit = 0.0;
    let backward_cost = per_eval
        * match method {
            EditMethod::Ddim => 1,
            EditMethod::Regularized => inv.evals_per_step() as u64,
        };
    inv.num_steps = ((half + backward_cost / 2) / backward_cost).max(1) as usize;

    let stage_evals = match tpl.solver.method {
        Method::Euler => 1,
        Method::Midpoint => 2,
    };
    let forward_cost = per_eval * stage_evals;
    let solver = SolverConfig {
        method: tpl.solver.method,
        num_steps: ((half + forward_cost / 2) / forward_cost).max(1) as usize,
    };
    (inv, solver)
}

/// Metrics per (method, NFE budget) at `t_edit = 0`.
pub fn sweep_nfe<F: VelocityField>(
    field: &F,
    set: &EditEvalSet,
    classifier: &Classifier,
    budgets: &[u64],
    methods: &[EditMethod],
    tpl: &SweepTemplate,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if budgets.contains(&0) {
        return Err(Error::InvalidArgument(String::from(
            "NFE budgets must be positive",
        )));
    }
    // Guidance doubles every evaluation in both phases.
    let per_eval = if tpl.guidance.is_some() { 2 } else { 1 };
    let root = Rng::seed(seed);
    let mut rows = Vec::with_capacity(budgets.len() * methods.len());
    for (cell, (&method, &budget)) in methods
        .iter()
        .flat_map(|m| budgets.iter().map(move |b| (m, b)))
        .enumerate()
    {
        let (inv, solver) = nfe_cell_config(tpl, method, budget, per_eval);
        let mut row = run_sweep_cell(
            field,
            set,
            classifier,
            method,
            budget as f64,
            inv,
            solver,
            tpl.guidance,
            false,
            &root.derive(cell as u64),
        )?;
        row.warning = row.nfe != budget;
        rows.push(row);
    }
    Ok(rows)
}
