//! Command implementations and their clap argument structs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use latentflow_core::data::make_dataset;
use latentflow_core::edit::{
    nfe_cell_config, run_sweep_cell, t_edit_cell_config, EditEvalSet, EditItem, EditMethod,
    EditOutcome, EditRequest, SweepRow, SweepTemplate,
};
use latentflow_core::invert::{
    ddim_invert, regularized_invert, CondMode, InversionConfig, PredSpace,
};
use latentflow_core::metrics::{
    adherence, evaluate_run, frechet_gaussian, lpaps, train_classifier, Classifier,
    ClassifierConfig,
};
use latentflow_core::ode::{generate_recorded, straightness, Method, SolverConfig};
use latentflow_core::train::train;
use latentflow_core::velocity::{GuidedField, MlpField, VelocityField};
use latentflow_core::{Batch, Condition, LatentSeq, Rng};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::RunConfig;
use crate::formats::{
    read_labels, read_lseq, write_labels, write_lseq, write_lseq_csv, LabelsSidecar,
};
use crate::manifest::{blob_hash, content_hash, write_manifest, RunManifest};
use crate::plot::{line_chart, Series};
use crate::pool::par_map;

#[derive(Debug, Parser)]
#[command(
    name = "latentflow",
    about = "Flow-matching generation and regularized latent inversion over latent sequences",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Directory for manifest.json, metrics.csv and other run outputs.
    #[arg(long, global = true, default_value = "latentflow-out")]
    pub out_dir: PathBuf,
    /// Global seed; falls back to LATENTFLOW_SEED, then the config.
    #[arg(long, global = true, env = "LATENTFLOW_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a velocity field on a synthetic dataset.
    Train(TrainArgs),
    /// Sample latents from a trained field.
    Generate(GenerateArgs),
    /// Invert latents to an intermediate flow step.
    Invert(InvertArgs),
    /// Invert and re-generate under a new condition.
    Edit(EditArgs),
    /// Compute metrics of a generated set against a reference set.
    Eval(EvalArgs),
    /// Run an ablation sweep and tabulate metrics.
    Ablate(AblateArgs),
    /// Monte-Carlo check of the closed-form oracle field.
    OracleCheck(OracleCheckArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Config file (key = value lines or JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Config overrides as `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Number of samples.
    #[arg(long, default_value_t = 64)]
    pub num: usize,
    /// Class id, `null`, or `balanced` to cycle over classes.
    #[arg(long, default_value = "balanced")]
    pub class: String,
    #[arg(long, value_parser = parse_method, default_value = "midpoint")]
    pub solver: Method,
    #[arg(long, default_value_t = 32)]
    pub steps: usize,
    /// Classifier-free guidance scale.
    #[arg(long)]
    pub guidance: Option<f64>,
    /// Latent output path (LSEQ).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the latents as CSV (one row per frame) next to --out.
    #[arg(long)]
    pub csv: bool,
    /// Also dump (t, z) rows per sample to trajectory.csv.
    #[arg(long)]
    pub record_trajectory: bool,
}

#[derive(Debug, Args)]
pub struct InversionArgs {
    #[arg(long = "t-edit", default_value_t = 0.04)]
    pub t_edit: f64,
    /// Backward ODE steps.
    #[arg(long = "s", default_value_t = 25)]
    pub steps: usize,
    /// Inner iterations per step.
    #[arg(long = "k", default_value_t = 4)]
    pub inner: usize,
    /// Iteration weights (comma separated; default w_k = k-1).
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long = "lambda-kl", default_value_t = 0.2)]
    pub lambda_kl: f64,
    /// Inversion conditioning: `null` or `orig`.
    #[arg(long, default_value = "orig")]
    pub cond: String,
    /// `velocity` or `noise`.
    #[arg(long = "pred-space", default_value = "velocity")]
    pub pred_space: String,
    /// Build the reference mixture with coefficient t (the step start)
    /// instead of the step target t - dt.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub literal_mixture: bool,
}

impl InversionArgs {
    fn to_config(&self) -> Result<InversionConfig> {
        let weights = match &self.weights {
            Some(list) => list
                .split(',')
                .map(|w| w.trim().parse::<f64>().context("parsing --weights"))
                .collect::<Result<Vec<_>>>()?,
            None => (0..self.inner).map(|k| k as f64).collect(),
        };
        let cfg = InversionConfig {
            t_edit: self.t_edit,
            num_steps: self.steps,
            inner_iters: self.inner,
            weights,
            lambda_kl: self.lambda_kl,
            cond_mode: match self.cond.as_str() {
                "null" => CondMode::Null,
                "orig" | "original" => CondMode::Original,
                other => bail!("--cond must be null or orig, got `{other}`"),
            },
            pred_space: match self.pred_space.as_str() {
                "velocity" => PredSpace::Velocity,
                "noise" => PredSpace::Noise,
                other => bail!("--pred-space must be velocity or noise, got `{other}`"),
            },
            literal_mixture: self.literal_mixture,
            patch: (4, 4),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input latents (LSEQ).
    #[arg(long)]
    pub input: PathBuf,
    /// Labels sidecar for original conditions (needed by --cond orig).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub inversion: InversionArgs,
    /// `regularized` or `ddim`.
    #[arg(long, default_value = "regularized")]
    pub method: String,
    #[arg(long)]
    pub guidance: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Original condition: class id or `null`.
    #[arg(long = "c-orig", default_value = "null")]
    pub c_orig: String,
    /// Target class id.
    #[arg(long = "c-edit")]
    pub c_edit: Option<u32>,
    /// Blend of two class embeddings: `CLASS_A,CLASS_B,ALPHA`.
    #[arg(long)]
    pub blend: Option<String>,
    #[command(flatten)]
    pub inversion: InversionArgs,
    #[arg(long, default_value = "regularized")]
    pub method: String,
    #[arg(long, value_parser = parse_method, default_value = "euler")]
    pub solver: Method,
    #[arg(long = "forward-steps", default_value_t = 25)]
    pub forward_steps: usize,
    #[arg(long)]
    pub guidance: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Config describing the dataset the classifier fixture is fit on.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub generated: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Labels sidecar for the generated set (required for adherence).
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// One of: t-edit, nfe, lambda-kl, cfg.
    #[arg(long)]
    pub sweep: String,
    /// Comma-separated grid values.
    #[arg(long)]
    pub grid: String,
    /// Methods to compare (t-edit and nfe sweeps).
    #[arg(long, default_value = "ddim,regularized")]
    pub methods: String,
    /// Edit items per cell.
    #[arg(long, default_value_t = 100)]
    pub items: usize,
    #[command(flatten)]
    pub inversion: InversionArgs,
    #[arg(long)]
    pub guidance: Option<f64>,
    /// Give the plain backward pass extra steps to match the regularized
    /// method's backward NFE.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub equal_nfe: bool,
}

#[derive(Debug, Args)]
pub struct OracleCheckArgs {
    #[arg(long, default_value_t = 3.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.3)]
    pub t: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "euler" => Ok(Method::Euler),
        "midpoint" => Ok(Method::Midpoint),
        other => Err(format!("unknown solver method `{other}`")),
    }
}

fn parse_edit_method(s: &str) -> Result<EditMethod> {
    match s {
        "ddim" => Ok(EditMethod::Ddim),
        "regularized" => Ok(EditMethod::Regularized),
        other => bail!("unknown method `{other}` (expected ddim or regularized)"),
    }
}

fn parse_condition(s: &str, classes: usize) -> Result<Condition> {
    if s.eq_ignore_ascii_case("null") {
        return Ok(Condition::Null);
    }
    let id: u32 = s
        .parse()
        .with_context(|| format!("condition must be a class id or `null`, got `{s}`"))?;
    if id as usize >= classes {
        bail!("class {id} out of range for a {classes}-class field");
    }
    Ok(Condition::ClassLabel(id))
}

/// Guidance wrapper used by the standalone commands; inversion under a null
/// condition always runs the bare field.
enum FieldHandle<'a> {
    Bare(&'a MlpField),
    Guided(GuidedField<&'a MlpField>),
}

impl<'a> FieldHandle<'a> {
    fn new(field: &'a MlpField, c: &Condition, guidance: Option<f64>) -> Result<FieldHandle<'a>> {
        Ok(match guidance {
            Some(gamma) if !c.is_null() => FieldHandle::Guided(GuidedField::new(field, gamma)?),
            _ => FieldHandle::Bare(field),
        })
    }
}

impl VelocityField for FieldHandle<'_> {
    fn eval(
        &self,
        z: &LatentSeq,
        t: latentflow_core::FlowStep,
        c: &Condition,
    ) -> latentflow_core::Result<LatentSeq> {
        match self {
            FieldHandle::Bare(f) => f.eval(z, t, c),
            FieldHandle::Guided(g) => g.eval(z, t, c),
        }
    }

    fn nfe_per_eval(&self) -> u64 {
        match self {
            FieldHandle::Bare(f) => f.nfe_per_eval(),
            FieldHandle::Guided(g) => g.nfe_per_eval(),
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let out_dir = cli.out_dir.clone();
    match cli.command {
        Command::Train(args) => cmd_train(args, &out_dir, cli.seed),
        Command::Generate(args) => cmd_generate(args, &out_dir, cli.seed),
        Command::Invert(args) => cmd_invert(args, &out_dir, cli.seed),
        Command::Edit(args) => cmd_edit(args, &out_dir, cli.seed),
        Command::Eval(args) => cmd_eval(args, &out_dir, cli.seed),
        Command::Ablate(args) => cmd_ablate(args, &out_dir, cli.seed),
        Command::OracleCheck(args) => cmd_oracle_check(args, &out_dir, cli.seed),
    }
}

/// Scaled, split dataset plus the classifier fixture fit on the eval split.
struct TaskData {
    train_items: Vec<(LatentSeq, Condition)>,
    eval_items: Vec<(LatentSeq, Condition)>,
    classifier: Classifier,
}

fn load_task(cfg: &RunConfig, seed: u64) -> Result<TaskData> {
    let spec = cfg.dataset_spec()?;
    let dataset = make_dataset(&spec)?;
    let scaled: Vec<(LatentSeq, Condition)> = dataset
        .items()
        .iter()
        .map(|(x, c)| (x.scale(cfg.data.scale), c.clone()))
        .collect();
    let scaled = Batch::new(scaled)?;
    let (train_items, _, eval_items) =
        latentflow_core::data::split(&scaled, cfg.split, seed)?;
    if eval_items.is_empty() {
        bail!("eval split is empty; adjust split fractions");
    }
    let classifier = train_classifier(&eval_items, cfg.data.classes, &ClassifierConfig::default())?;
    Ok(TaskData {
        train_items,
        eval_items,
        classifier,
    })
}

fn cmd_train(args: TrainArgs, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let started = Instant::now();
    let mut cfg = RunConfig::from_path(&args.config)?;
    for kv in &args.overrides {
        let (key, value) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }

    let task = load_task(&cfg, cfg.seed)?;
    let field = MlpField::init(cfg.mlp_config(), cfg.seed)?;
    let train_cfg = cfg.train_config()?;
    let dataset = Batch::new(task.train_items.clone())?;
    let (state, log) = train(field, &dataset, &train_cfg, cfg.seed ^ 0xA5A5_5A5A)?;

    save_checkpoint(&args.out, state.field.config(), state.field.params(), &state.ema)?;

    std::fs::create_dir_all(out_dir)?;
    let mut csv = String::from("step,loss,pair_cost,ema_loss\n");
    for s in &log {
        csv.push_str(&format!("{},{},{},{}\n", s.step, s.loss, s.pair_cost, s.ema_loss));
    }
    std::fs::write(out_dir.join("metrics.csv"), csv)?;

    // Export the held-out split so downstream eval has a matching reference.
    let eval_latents: Vec<LatentSeq> = task.eval_items.iter().map(|(x, _)| x.clone()).collect();
    let eval_conds: Vec<Condition> = task.eval_items.iter().map(|(_, c)| c.clone()).collect();
    write_lseq(&out_dir.join("eval.lseq"), &eval_latents)?;
    write_labels(
        &out_dir.join("eval.labels.json"),
        &LabelsSidecar::from_conditions(&eval_conds, Some(cfg.dataset_spec()?)),
    )?;

    let final_loss = log.last().map(|s| s.loss).unwrap_or(f64::NAN);
    let final_ema = log.last().map(|s| s.ema_loss).unwrap_or(f64::NAN);
    write_manifest(
        out_dir,
        &RunManifest {
            command: "train".into(),
            config: cfg.to_json(),
            seed: cfg.seed,
            input_hash: content_hash(&[&args.config])?,
            metrics: Some(serde_json::json!({
                "final_loss": final_loss,
                "final_ema_loss": final_ema,
                "steps": log.len(),
            })),
            nfe_total: 0,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    )?;
    println!(
        "trained {} steps (final loss {final_loss:.4}); checkpoint at {}",
        log.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_generate(args: GenerateArgs, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let started = Instant::now();
    let seed = seed.unwrap_or(0);
    let ck = load_checkpoint(&args.checkpoint)?;
    let field = ck.ema_field()?;
    let cfg = SolverConfig::new(args.solver, args.steps)?;
    let classes = field.config().num_classes;
    let (l, d) = (field.config().seq_len, field.config().channels);

    let root = Rng::seed(seed);
    let mut outputs = Vec::with_capacity(args.num);
    let mut conditions = Vec::with_capacity(args.num);
    let mut nfe_total = 0u64;
    let mut straightness_sum = 0.0;
    let mut trajectory_csv = String::new();
    for i in 0..args.num {
        let c = match args.class.as_str() {
            "balanced" => Condition::ClassLabel((i % classes) as u32),
            other => parse_condition(other, classes)?,
        };
        let handle = FieldHandle::new(&field, &c, args.guidance)?;
        let mut rng = root.derive(i as u64);
        let (x, traj) = generate_recorded(&handle, &c, l, d, &cfg, &mut rng, args.record_trajectory)?;
        nfe_total += traj.nfe;
        if args.record_trajectory {
            straightness_sum += straightness(&traj)?;
            for (t, z) in &traj.points {
                trajectory_csv.push_str(&format!("{i},{t}"));
                for v in z.as_slice() {
                    trajectory_csv.push_str(&format!(",{v}"));
                }
                trajectory_csv.push('\n');
            }
        }
        conditions.push(c);
        outputs.push(x);
    }

    write_lseq(&args.out, &outputs)?;
    if args.csv {
        write_lseq_csv(&args.out.with_extension("csv"), &outputs)?;
    }
    write_labels(
        &labels_path(&args.out),
        &LabelsSidecar::from_conditions(&conditions, None),
    )?;
    std::fs::create_dir_all(out_dir)?;
    let metrics = if args.record_trajectory {
        let mut header = String::from("sample,t");
        for j in 0..l * d {
            header.push_str(&format!(",e{j}"));
        }
        header.push('\n');
        std::fs::write(out_dir.join("trajectory.csv"), header + &trajectory_csv)?;
        Some(serde_json::json!({
            "mean_straightness": straightness_sum / args.num as f64,
        }))
    } else {
        None
    };

    write_manifest(
        out_dir,
        &RunManifest {
            command: "generate".into(),
            config: serde_json::json!({
                "checkpoint": args.checkpoint.display().to_string(),
                "num": args.num,
                "class": args.class,
                "solver": format!("{:?}", args.solver),
                "steps": args.steps,
                "guidance": args.guidance,
            }),
            seed,
            input_hash: content_hash(&[&args.checkpoint])?,
            metrics,
            nfe_total,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    )?;
    println!("generated {} samples -> {} (NFE {nfe_total})", args.num, args.out.display());
    Ok(())
}

/// Per-item conditions for inversion under the requested mode.
fn inversion_conditions(
    cond_mode: CondMode,
    count: usize,
    labels: Option<&LabelsSidecar>,
) -> Vec<Condition> {
    match cond_mode {
        CondMode::Null => vec![Condition::Null; count],
        CondMode::Original => match labels {
            Some(sidecar) => sidecar.conditions(),
            None => vec![Condition::Null; count],
        },
    }
}

fn cmd_invert(args: InvertArgs, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let started = Instant::now();
    let seed = seed.unwrap_or(0);
    let ck = load_checkpoint(&args.checkpoint)?;
    let field = ck.ema_field()?;
    let items = read_lseq(&args.input)?;
    let inv = args.inversion.to_config()?;
    let labels = args.labels.as_deref().map(read_labels).transpose()?;
    if inv.cond_mode == CondMode::Original && labels.is_none() {
        bail!("--cond orig requires --labels with the original class ids");
    }
    let conditions = inversion_conditions(inv.cond_mode, items.len(), labels.as_ref());
    if conditions.len() != items.len() {
        bail!(
            "labels sidecar has {} entries for {} items",
            conditions.len(),
            items.len()
        );
    }

    let use_ddim = match args.method.as_str() {
        "ddim" => true,
        "regularized" => false,
        other => bail!("unknown method `{other}`"),
    };
    let root = Rng::seed(seed);
    let mut out = Vec::with_capacity(items.len());
    let mut nfe_total = 0u64;
    for (i, (x, c)) in items.iter().zip(&conditions).enumerate() {
        let handle = FieldHandle::new(&field, c, args.guidance)?;
        let (z, nfe) = if use_ddim {
            ddim_invert(&handle, x, c, inv.t_edit, inv.num_steps)?
        } else {
            let mut rng = root.derive(i as u64);
            regularized_invert(&handle, x, c, &inv, &mut rng)?
        };
        nfe_total += nfe;
        out.push(z);
    }

    write_lseq(&args.out, &out)?;
    write_manifest(
        out_dir,
        &RunManifest {
            command: "invert".into(),
            config: serde_json::json!({
                "checkpoint": args.checkpoint.display().to_string(),
                "method": args.method,
                "t_edit": inv.t_edit,
                "s": inv.num_steps,
                "k": inv.inner_iters,
                "weights": inv.weights,
                "lambda_kl": inv.lambda_kl,
                "cond": format!("{:?}", inv.cond_mode),
                "pred_space": format!("{:?}", inv.pred_space),
                "literal_mixture": inv.literal_mixture,
                "guidance": args.guidance,
            }),
            seed,
            input_hash: content_hash(&[&args.checkpoint, &args.input])?,
            metrics: None,
            nfe_total,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    )?;
    println!("inverted {} items -> {} (NFE {nfe_total})", out.len(), args.out.display());
    Ok(())
}

fn cmd_edit(args: EditArgs, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let started = Instant::now();
    let seed = seed.unwrap_or(0);
    let ck = load_checkpoint(&args.checkpoint)?;
    let field = ck.ema_field()?;
    let classes = field.config().num_classes;
    let items = read_lseq(&args.input)?;
    let inversion = args.inversion.to_config()?;
    let method = parse_edit_method(&args.method)?;
    let solver = SolverConfig::new(args.solver, args.forward_steps)?;

    let c_orig = parse_condition(&args.c_orig, classes)?;
    let c_edit = match (&args.c_edit, &args.blend) {
        (Some(id), None) => parse_condition(&id.to_string(), classes)?,
        (None, Some(spec)) => {
            let parts: Vec<&str> = spec.split(',').collect();
            if parts.len() != 3 {
                bail!("--blend expects CLASS_A,CLASS_B,ALPHA");
            }
            let a: usize = parts[0].trim().parse().context("blend class A")?;
            let b: usize = parts[1].trim().parse().context("blend class B")?;
            let alpha: f64 = parts[2].trim().parse().context("blend alpha")?;
            let ea = field.class_embedding(a)?;
            let eb = field.class_embedding(b)?;
            let mixed = ea
                .iter()
                .zip(&eb)
                .map(|(x, y)| (1.0 - alpha) * x + alpha * y)
                .collect();
            Condition::Embedding(mixed)
        }
        (Some(_), Some(_)) => bail!("--c-edit and --blend are mutually exclusive"),
        (None, None) => bail!("one of --c-edit or --blend is required"),
    };

    let root = Rng::seed(seed);
    let mut outputs = Vec::with_capacity(items.len());
    let mut nfe_total = 0u64;
    let mut lpaps_sum = 0.0;
    for (i, x) in items.iter().enumerate() {
        let req = EditRequest {
            x_orig: x.clone(),
            c_orig: c_orig.clone(),
            c_edit: c_edit.clone(),
            inversion: inversion.clone(),
            solver,
            method,
            guidance: args.guidance,
        };
        let mut rng = root.derive(i as u64);
        let EditOutcome { x_edit, nfe_total: nfe } =
            latentflow_core::edit::edit(&field, &req, &mut rng)?;
        nfe_total += nfe;
        lpaps_sum += lpaps(&x_edit, x)?;
        outputs.push(x_edit);
    }

    write_lseq(&args.out, &outputs)?;
    write_manifest(
        out_dir,
        &RunManifest {
            command: "edit".into(),
            config: serde_json::json!({
                "checkpoint": args.checkpoint.display().to_string(),
                "method": args.method,
                "c_orig": args.c_orig,
                "c_edit": args.c_edit,
                "blend": args.blend,
                "t_edit": inversion.t_edit,
                "s": inversion.num_steps,
                "k": inversion.inner_iters,
                "lambda_kl": inversion.lambda_kl,
                "cond": format!("{:?}", inversion.cond_mode),
                "pred_space": format!("{:?}", inversion.pred_space),
                "guidance": args.guidance,
                "solver": format!("{:?}", args.solver),
                "forward_steps": args.forward_steps,
            }),
            seed,
            input_hash: content_hash(&[&args.checkpoint, &args.input])?,
            metrics: Some(serde_json::json!({
                "mean_lpaps": lpaps_sum / items.len().max(1) as f64,
            })),
            nfe_total,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    )?;
    println!("edited {} items -> {} (NFE {nfe_total})", outputs.len(), args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let started = Instant::now();
    let mut cfg = RunConfig::from_path(&args.config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let task = load_task(&cfg, cfg.seed)?;
    let generated = read_lseq(&args.generated)?;
    let reference = read_lseq(&args.reference)?;
    let conditions = read_labels(&args.labels)?.conditions();
    if conditions.len() != generated.len() {
        bail!(
            "labels sidecar has {} entries for {} generated items",
            conditions.len(),
            generated.len()
        );
    }
    let report = evaluate_run(&generated, &reference, &conditions, &task.classifier)?;

    let config_json = serde_json::to_string(&cfg.to_json())?;
    let report_json = serde_json::json!({
        "frechet": report.frechet,
        "lpaps": report.lpaps,
        "adherence": report.adherence,
        "straightness": report.straightness,
        "nfe": 0,
        "config_hash": blob_hash(config_json.as_bytes()),
    });
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report_json)?,
    )?;
    std::fs::write(
        out_dir.join("metrics.csv"),
        format!(
            "frechet,lpaps,adherence,straightness\n{},{},{},{}\n",
            report.frechet, report.lpaps, report.adherence, report.straightness
        ),
    )?;
    write_manifest(
        out_dir,
        &RunManifest {
            command: "eval".into(),
            config: cfg.to_json(),
            seed: cfg.seed,
            input_hash: content_hash(&[
                args.config.as_path(),
                args.generated.as_path(),
                args.reference.as_path(),
                args.labels.as_path(),
            ])?,
            metrics: Some(report_json.clone()),
            nfe_total: 0,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    )?;
    println!(
        "frechet {:.6} lpaps {:.6} adherence {:.4}",
        report.frechet, report.lpaps, report.adherence
    );
    Ok(())
}

fn build_edit_set(task: &TaskData, items: usize, classes: usize) -> EditEvalSet {
    let edit_items: Vec<EditItem> = task
        .eval_items
        .iter()
        .take(items)
        .map(|(x, c)| {
            let k = match c {
                Condition::ClassLabel(k) => *k,
                _ => 0,
            };
            EditItem {
                x: x.clone(),
                c_orig: c.clone(),
                c_edit: Condition::ClassLabel((k + 1) % classes as u32),
            }
        })
        .collect();
    EditEvalSet {
        items: edit_items,
        reference: task.eval_items.iter().map(|(x, _)| x.clone()).collect(),
    }
}

fn cmd_ablate(args: AblateArgs, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let started = Instant::now();
    let mut cfg = RunConfig::from_path(&args.config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let seed = cfg.seed;
    let task = load_task(&cfg, seed)?;
    let ck = load_checkpoint(&args.checkpoint)?;
    let field = ck.ema_field()?;
    let classes = field.config().num_classes;
    let set = build_edit_set(&task, args.items, classes);
    let grid: Vec<f64> = args
        .grid
        .split(',')
        .map(|v| v.trim().parse::<f64>().context("parsing --grid"))
        .collect::<Result<_>>()?;
    if grid.is_empty() {
        bail!("--grid must hold at least one value");
    }
    let methods: Vec<EditMethod> = args
        .methods
        .split(',')
        .map(|m| parse_edit_method(m.trim()))
        .collect::<Result<_>>()?;
    let tpl = SweepTemplate {
        inversion: args.inversion.to_config()?,
        solver: cfg.solver_config()?,
        guidance: args.guidance,
        equal_nfe: args.equal_nfe,
    };

    let root = Rng::seed(seed);
    let rows: Vec<SweepRow> = match args.sweep.as_str() {
        "t-edit" => {
            let cells: Vec<(EditMethod, f64)> = methods
                .iter()
                .flat_map(|&m| grid.iter().map(move |&t| (m, t)))
                .collect();
            collect_rows(par_map(cells.len(), |i| {
                let (method, t_edit) = cells[i];
                let inv = t_edit_cell_config(&tpl, method, t_edit);
                run_sweep_cell(
                    &field,
                    &set,
                    &task.classifier,
                    method,
                    t_edit,
                    inv,
                    tpl.solver,
                    tpl.guidance,
                    false,
                    &root.derive(i as u64),
                )
            }))?
        }
        "nfe" => {
            let budgets: Vec<u64> = grid.iter().map(|&v| v as u64).collect();
            let per_eval = if tpl.guidance.is_some() { 2 } else { 1 };
            let cells: Vec<(EditMethod, u64)> = methods
                .iter()
                .flat_map(|&m| budgets.iter().map(move |&b| (m, b)))
                .collect();
            collect_rows(par_map(cells.len(), |i| {
                let (method, budget) = cells[i];
                let (inv, solver) = nfe_cell_config(&tpl, method, budget, per_eval);
                run_sweep_cell(
                    &field,
                    &set,
                    &task.classifier,
                    method,
                    budget as f64,
                    inv,
                    solver,
                    tpl.guidance,
                    false,
                    &root.derive(i as u64),
                )
                .map(|mut row| {
                    row.warning = row.nfe != budget;
                    row
                })
            }))?
        }
        "lambda-kl" => collect_rows(par_map(grid.len(), |i| {
            let mut inv = tpl.inversion.clone();
            inv.lambda_kl = grid[i];
            run_sweep_cell(
                &field,
                &set,
                &task.classifier,
                EditMethod::Regularized,
                grid[i],
                inv,
                tpl.solver,
                tpl.guidance,
                false,
                &root.derive(i as u64),
            )
        }))?,
        "cfg" => {
            // Generation-side sweep: frechet and adherence vs guidance scale.
            let (l, d) = (field.config().seq_len, field.config().channels);
            let reference: Vec<LatentSeq> =
                task.eval_items.iter().map(|(x, _)| x.clone()).collect();
            collect_rows(par_map(grid.len(), |i| {
                let gamma = grid[i];
                let guided = GuidedField::new(&field, gamma)?;
                let cell_rng = root.derive(i as u64);
                let mut generated = Vec::with_capacity(args.items);
                let mut adh = 0.0;
                let mut nfe = 0u64;
                for j in 0..args.items {
                    let c = Condition::ClassLabel((j % classes) as u32);
                    let mut rng = cell_rng.derive(j as u64);
                    let (x, traj) =
                        generate_recorded(&guided, &c, l, d, &tpl.solver, &mut rng, false)?;
                    adh += adherence(&x, &c, &task.classifier)?;
                    nfe = traj.nfe;
                    generated.push(x);
                }
                Ok(SweepRow {
                    method: EditMethod::Regularized,
                    param: gamma,
                    frechet: frechet_gaussian(&generated, &reference)?,
                    lpaps: 0.0,
                    adherence: adh / args.items as f64,
                    nfe,
                    warning: false,
                })
            }))?
        }
        other => bail!("unknown sweep `{other}` (expected t-edit, nfe, lambda-kl or cfg)"),
    };

    std::fs::create_dir_all(out_dir)?;
    let mut csv = String::from("sweep,method,param,frechet,lpaps,adherence,nfe,warning\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{:?},{},{},{},{},{},{}\n",
            args.sweep, row.method, row.param, row.frechet, row.lpaps, row.adherence, row.nfe,
            row.warning
        ));
    }
    std::fs::write(out_dir.join("results.csv"), csv)?;

    let series: Vec<Series> = methods_in_rows(&rows)
        .into_iter()
        .map(|method| Series {
            name: format!("{method:?}"),
            points: rows
                .iter()
                .filter(|r| r.method == method)
                .map(|r| (r.param, r.frechet))
                .collect(),
        })
        .collect();
    std::fs::write(
        out_dir.join("sweep.svg"),
        line_chart(
            &format!("{} sweep", args.sweep),
            &args.sweep,
            "frechet",
            &series,
        ),
    )?;

    write_manifest(
        out_dir,
        &RunManifest {
            command: "ablate".into(),
            config: serde_json::json!({
                "base": cfg.to_json(),
                "sweep": args.sweep,
                "grid": grid,
                "methods": args.methods,
                "items": args.items,
                "guidance": args.guidance,
                "equal_nfe": args.equal_nfe,
            }),
            seed,
            input_hash: content_hash(&[args.config.as_path(), args.checkpoint.as_path()])?,
            metrics: None,
            nfe_total: rows.iter().map(|r| r.nfe).sum(),
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    )?;
    println!("{} rows -> {}", rows.len(), out_dir.join("results.csv").display());
    Ok(())
}

fn collect_rows(results: Vec<Result<SweepRow, latentflow_core::Error>>) -> Result<Vec<SweepRow>>
where
{
    results.into_iter().map(|r| r.map_err(Into::into)).collect()
}

fn methods_in_rows(rows: &[SweepRow]) -> Vec<EditMethod> {
    let mut seen = Vec::new();
    for row in rows {
        if !seen.contains(&row.method) {
            seen.push(row.method);
        }
    }
    seen
}

fn cmd_oracle_check(args: OracleCheckArgs, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let started = Instant::now();
    let seed = seed.unwrap_or(0);
    let field = latentflow_core::velocity::GaussianOracleField::isotropic(args.mu, args.sigma, 1)?;
    let t = latentflow_core::FlowStep::new(args.t)?;
    let deviation = latentflow_core::velocity::oracle_validate(
        &field,
        t,
        args.samples,
        &mut Rng::seed(seed),
    )?;
    println!("max binned deviation: {deviation:.6}");
    write_manifest(
        out_dir,
        &RunManifest {
            command: "oracle-check".into(),
            config: serde_json::json!({
                "mu": args.mu,
                "sigma": args.sigma,
                "t": args.t,
                "samples": args.samples,
            }),
            seed,
            input_hash: String::new(),
            metrics: Some(serde_json::json!({ "max_binned_deviation": deviation })),
            nfe_total: 0,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    )?;
    if deviation >= 0.05 {
        bail!("oracle deviation {deviation:.6} exceeds 0.05");
    }
    Ok(())
}

fn labels_path(lseq_path: &Path) -> PathBuf {
    let mut name = lseq_path.file_name().unwrap_or_default().to_os_string();
    name.push(".labels.json");
    lseq_path.with_file_name(name)
}
