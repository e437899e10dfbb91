//! `swnet`: dataset generation, operator analysis, training, and evaluation
//! for the wave-scattering forward/inverse pipeline.
//!
//! Exit codes: 0 on success, 1 on validation or usage errors, 2 on numerical
//! failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use switchnet_core::born::{
    build_factorization, eckart_young_tail, filtered_backprojection, rank_report, BornOperator,
    SwitchFactorization,
};
use switchnet_core::data::{self, Dataset, GenerateConfig};
use switchnet_core::domain::{
    make_directions, make_partition, make_receiver_line, GaussianMixtureSpec, GridSpec, Rect,
    ScatteringPattern,
};
use switchnet_core::error::Error;
use switchnet_core::helmholtz::{BackgroundModel, PmlSpec, SeismicBackground};
use switchnet_core::model::{
    end_to_end_gradcheck, model_forward, InitMode, MapDirection, ModelIo, ModelKind, ModelSpec,
};
use switchnet_core::nn::gradcheck::{run_layer_checks, FD_TOL};
use switchnet_core::plot::{write_complex, write_real, PlotFormat};
use switchnet_core::train::{evaluate, train, TrainConfig};
use switchnet_core::{checkpoint, Result};

#[derive(Parser)]
#[command(name = "swnet", version, about = "Wave-scattering data, factorizations, and models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of (scatterer, observation data) pairs
    GenData(GenDataArgs),
    /// Report per-block epsilon-ranks of the linearized operator as CSV
    Ranks(RanksArgs),
    /// Build the switch factorization and report its reconstruction error
    Factorize(FactorizeArgs),
    /// Linear filtered back-projection baseline on one stored sample
    Backproject(BackprojectArgs),
    /// Train a model on a generated dataset
    Train(TrainArgs),
    /// Evaluate a checkpoint against a dataset
    Eval(EvalArgs),
    /// Finite-difference checks of every layer and a tiny end-to-end model
    Gradcheck(GradcheckArgs),
    /// Render a stored field or pattern (or a model prediction) to PGM/CSV
    Plot(PlotArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    FarField,
    Seismic,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::FarField => ModelKind::FarField,
            KindArg::Seismic => ModelKind::Seismic,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    Inverse,
    Forward,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Glorot,
    FromFactorization,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Pgm,
    Csv,
}

impl From<FormatArg> for PlotFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Pgm => PlotFormat::Pgm,
            FormatArg::Csv => PlotFormat::Csv,
        }
    }
}

/// Geometry shared by the operator-facing subcommands.
#[derive(Args)]
struct GeometryArgs {
    /// Acquisition kind
    #[arg(long, value_enum, default_value = "far-field")]
    kind: KindArg,
    /// Angular frequency
    #[arg(long)]
    omega: f64,
    /// Grid points per dimension
    #[arg(long)]
    grid_n: usize,
    /// Receiver/source count (defaults to the grid side)
    #[arg(long)]
    m: Option<usize>,
    /// Acquisition line height (seismic)
    #[arg(long, default_value_t = 0.45)]
    depth: f64,
    /// PML width in grid points
    #[arg(long, default_value_t = 12)]
    pml_thickness: usize,
}

impl GeometryArgs {
    fn born_operator(&self) -> Result<BornOperator> {
        let grid = GridSpec::new(self.grid_n, self.omega)?;
        let m = self.m.unwrap_or(self.grid_n);
        match ModelKind::from(self.kind) {
            ModelKind::FarField => {
                let dirs = make_directions(m)?;
                BornOperator::far_field(&grid, &dirs)
            }
            ModelKind::Seismic => {
                let mut pml = PmlSpec::default_for(self.omega);
                pml.thickness = self.pml_thickness;
                let model = BackgroundModel::free_space(&grid, self.omega, pml)?;
                let line = make_receiver_line(m, self.depth, &grid)?;
                let background = SeismicBackground::new(&model, &grid, &line)?;
                BornOperator::seismic(&background)
            }
        }
    }
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Samples to generate
    #[arg(long)]
    count: usize,
    /// Gaussian bumps per scatterer
    #[arg(long, default_value_t = 2)]
    ns: usize,
    /// Bump amplitude
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    /// Bump width
    #[arg(long, default_value_t = 0.015)]
    sigma: f64,
    /// Fraction of the domain height excluded at the top for seismic centers
    #[arg(long, default_value_t = 0.25)]
    margin_top: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RanksArgs {
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Grid-partition group count
    #[arg(long)]
    px: usize,
    /// Data-partition group count
    #[arg(long)]
    pd: usize,
    /// Rank tolerance (repeatable)
    #[arg(long, default_values_t = [1e-3])]
    tol: Vec<f64>,
    /// CSV output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FactorizeArgs {
    #[command(flatten)]
    geometry: GeometryArgs,
    #[arg(long)]
    px: usize,
    #[arg(long)]
    pd: usize,
    /// Rank per block
    #[arg(long)]
    t: usize,
}

#[derive(Args)]
struct BackprojectArgs {
    /// Dataset holding the observed patterns
    #[arg(long)]
    data: PathBuf,
    /// Sample index
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Tikhonov regularization
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Acquisition line height (seismic datasets)
    #[arg(long, default_value_t = 0.45)]
    depth: f64,
    /// PML width used when regenerating the seismic background
    #[arg(long, default_value_t = 12)]
    pml_thickness: usize,
    #[arg(long, value_enum, default_value = "pgm")]
    format: FormatArg,
    /// Output image/table path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset
    #[arg(long)]
    train_data: PathBuf,
    /// Held-out dataset evaluated after training
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "inverse")]
    direction: DirectionArg,
    #[arg(long)]
    t: usize,
    #[arg(long)]
    px: usize,
    #[arg(long)]
    pd: usize,
    /// Convolution window
    #[arg(long)]
    window: usize,
    /// Convolution channels
    #[arg(long)]
    channels: usize,
    /// ReLU convolution layers
    #[arg(long)]
    layers: usize,
    #[arg(long, default_value_t = 0.002)]
    lr: f64,
    #[arg(long, default_value_t = 200)]
    batch: usize,
    #[arg(long)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "glorot")]
    init: InitArg,
    /// Scale inputs by the dataset's max modulus
    #[arg(long)]
    normalize: bool,
    /// Worker threads for batch gradients (1 = serial)
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Checkpoint every this many epochs (0 = only final)
    #[arg(long, default_value_t = 0)]
    ckpt_every: usize,
    /// Acquisition line height (for from-factorization seismic init)
    #[arg(long, default_value_t = 0.45)]
    depth: f64,
    #[arg(long, default_value_t = 12)]
    pml_thickness: usize,
    /// Checkpoint output path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WhatArg {
    Eta,
    Pattern,
    Prediction,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// What to render: the stored scatterer, the stored pattern, or a
    /// checkpoint's prediction for this sample
    #[arg(long, value_enum, default_value = "eta")]
    what: WhatArg,
    /// Checkpoint (required for predictions)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pgm")]
    format: FormatArg,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own usage text; map every parse failure to 1
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Shape { .. } | Error::Format(_) | Error::Io(_) => 1,
        Error::SingularPivot { .. } | Error::Numerical(_) => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(args) => gen_data(args),
        Command::Ranks(args) => ranks(args),
        Command::Factorize(args) => factorize_cmd(args),
        Command::Backproject(args) => backproject(args),
        Command::Train(args) => train_cmd(args),
        Command::Eval(args) => eval_cmd(args),
        Command::Gradcheck(args) => gradcheck_cmd(args),
        Command::Plot(args) => plot_cmd(args),
    }
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let g = &args.geometry;
    let grid = GridSpec::new(g.grid_n, g.omega)?;
    let kind = ModelKind::from(g.kind);
    let center_region = match kind {
        ModelKind::FarField => Rect::new(grid.lo, grid.hi, grid.lo, grid.hi)?,
        // keep scatterers away from the acquisition line at the top
        ModelKind::Seismic => {
            Rect::new(grid.lo, grid.hi, grid.lo, grid.hi - args.margin_top * (grid.hi - grid.lo))?
        }
    };
    let mixture = GaussianMixtureSpec::with_params(args.ns, args.beta, args.sigma, center_region)?;
    let mut pml = PmlSpec::default_for(g.omega);
    pml.thickness = g.pml_thickness;
    let cfg = GenerateConfig {
        kind,
        count: args.count,
        grid,
        m: g.m.unwrap_or(g.grid_n),
        mixture,
        pml,
        line_depth: g.depth,
        seed: args.seed,
    };
    let ds = data::generate(&cfg)?;
    data::write_file(&args.out, &ds)?;
    println!(
        "wrote {} samples (kind {:?}, N={}, M={}, omega={}) to {}",
        ds.len(),
        ds.kind,
        ds.n,
        ds.m,
        ds.omega,
        args.out.display()
    );
    Ok(())
}

fn ranks(args: RanksArgs) -> Result<()> {
    let op = args.geometry.born_operator()?;
    let m = args.geometry.m.unwrap_or(args.geometry.grid_n);
    let d_part = make_partition(m, args.pd)?;
    let x_part = make_partition(args.geometry.grid_n, args.px)?;
    let report = rank_report(&op, &d_part, &x_part, &args.tol)?;
    let csv = report.to_csv();
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv)?;
            for &tol in &args.tol {
                println!("tol {tol}: max block rank {}", report.max_rank(tol));
            }
            println!("wrote report to {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn factorize_cmd(args: FactorizeArgs) -> Result<()> {
    let op = args.geometry.born_operator()?;
    let m = args.geometry.m.unwrap_or(args.geometry.grid_n);
    let d_part = make_partition(m, args.pd)?;
    let x_part = make_partition(args.geometry.grid_n, args.px)?;
    let f = build_factorization(&op, &d_part, &x_part, args.t)?;
    let tail = eckart_young_tail(&op, &d_part, &x_part, args.t)?;
    let dense = op.dense();
    let err = dense.sub(&f.dense()).fro_norm();
    let rel = err / dense.fro_norm();
    println!("blocks: {} x {}, rank t = {}", args.pd, args.px, args.t);
    println!("frobenius error |A - U S V*|_F = {err:.6e} (relative {rel:.6e})");
    println!("blockwise optimum (Eckart-Young tail) = {tail:.6e}");
    println!("stored complex entries: {}", f.storage_entries());
    if f.clamped {
        println!("note: t exceeded a block dimension and was padded");
    }
    Ok(())
}

fn seismic_operator_for_dataset(
    ds: &Dataset,
    depth: f64,
    pml_thickness: usize,
) -> Result<BornOperator> {
    let grid = GridSpec::new(ds.n, ds.omega)?;
    let mut pml = PmlSpec::default_for(ds.omega);
    pml.thickness = pml_thickness;
    let model = BackgroundModel::free_space(&grid, ds.omega, pml)?;
    let line = make_receiver_line(ds.m, depth, &grid)?;
    let background = SeismicBackground::new(&model, &grid, &line)?;
    BornOperator::seismic(&background)
}

fn operator_for_dataset(ds: &Dataset, depth: f64, pml_thickness: usize) -> Result<BornOperator> {
    match ds.kind {
        ModelKind::FarField => {
            let grid = GridSpec::new(ds.n, ds.omega)?;
            let dirs = make_directions(ds.m)?;
            BornOperator::far_field(&grid, &dirs)
        }
        ModelKind::Seismic => seismic_operator_for_dataset(ds, depth, pml_thickness),
    }
}

fn backproject(args: BackprojectArgs) -> Result<()> {
    let ds = data::read_file(&args.data)?;
    let sample = ds
        .samples
        .get(args.index)
        .ok_or_else(|| Error::config(format!("sample {} out of range ({})", args.index, ds.len())))?;
    let op = operator_for_dataset(&ds, args.depth, args.pml_thickness)?;
    let pattern = ScatteringPattern::from_values(ds.m, sample.d.clone())?;
    let bp = filtered_backprojection(&op, &pattern, args.eps)?;
    if !bp.converged {
        eprintln!("warning: CG stopped before reaching tolerance ({} iterations)", bp.iterations);
    }
    let truth_norm: f64 = sample.eta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if truth_norm > 0.0 {
        let err: f64 = bp
            .field
            .values
            .iter()
            .zip(&sample.eta)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            .sqrt()
            / truth_norm;
        println!("relative error vs stored scatterer: {err:.4}");
    }
    write_real(&args.out, args.format.into(), &bp.field.values, ds.n, ds.n)?;
    println!("wrote back-projection to {}", args.out.display());
    Ok(())
}

fn factorization_for(
    spec: &ModelSpec,
    ds: &Dataset,
    depth: f64,
    pml_thickness: usize,
) -> Result<SwitchFactorization> {
    let op = operator_for_dataset(ds, depth, pml_thickness)?;
    let d_part = make_partition(spec.m, spec.p_d)?;
    let x_part = make_partition(spec.n, spec.p_x)?;
    build_factorization(&op, &d_part, &x_part, spec.t)
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let train_ds = data::read_file(&args.train_data)?;
    let spec = ModelSpec {
        kind: train_ds.kind,
        direction: match args.direction {
            DirectionArg::Inverse => MapDirection::Inverse,
            DirectionArg::Forward => MapDirection::Forward,
        },
        t: args.t,
        p_d: args.pd,
        p_x: args.px,
        n: train_ds.n,
        m: train_ds.m,
        window: args.window,
        alpha: args.channels,
        layers: args.layers,
        init: match args.init {
            InitArg::Glorot => InitMode::Glorot,
            InitArg::FromFactorization => InitMode::FromFactorization,
        },
    };
    spec.validate()?;

    let factorization = match spec.init {
        InitMode::FromFactorization => {
            Some(factorization_for(&spec, &train_ds, args.depth, args.pml_thickness)?)
        }
        InitMode::Glorot => None,
    };

    let cfg = TrainConfig {
        spec,
        lr: args.lr,
        batch: args.batch,
        epochs: args.epochs,
        seed: args.seed,
        checkpoint_every: args.ckpt_every,
        out_path: Some(args.out.clone()),
        normalize: args.normalize,
        threads: args.threads,
    };
    let outcome = train(&cfg, &train_ds, factorization.as_ref())?;
    println!(
        "training loss: {:.6e} -> {:.6e} ({} steps)",
        outcome.initial_loss,
        outcome.final_loss,
        outcome.loss_trace.len()
    );
    println!("checkpoint written to {}", args.out.display());

    if let Some(test_path) = &args.test_data {
        let test_ds = data::read_file(test_path)?;
        let metrics = evaluate(&outcome.params, &test_ds, args.normalize)?;
        println!(
            "test mean relative error: {:.4} over {} samples ({} excluded)",
            metrics.mean_rel_error,
            metrics.per_sample.len(),
            metrics.excluded
        );
    }
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let params = checkpoint::read_file(&args.checkpoint)?;
    let ds = data::read_file(&args.data)?;
    let metrics = evaluate(&params, &ds, args.normalize)?;
    println!(
        "mean relative error: {:.6} over {} samples ({} excluded)",
        metrics.mean_rel_error,
        metrics.per_sample.len(),
        metrics.excluded
    );
    Ok(())
}

fn gradcheck_cmd(args: GradcheckArgs) -> Result<()> {
    let mut worst: f64 = 0.0;
    for check in run_layer_checks(args.seed) {
        let status = if check.passed() { "ok" } else { "FAIL" };
        println!("{status:>4}  {:<18} max relative error {:.3e}", check.name, check.max_rel_err);
        worst = worst.max(check.max_rel_err);
    }
    let e2e = end_to_end_gradcheck(args.seed)?;
    let status = if e2e <= FD_TOL { "ok" } else { "FAIL" };
    println!("{status:>4}  {:<18} max relative error {e2e:.3e}", "model/end-to-end");
    worst = worst.max(e2e);
    if worst > FD_TOL {
        return Err(Error::numerical(format!(
            "gradient checks exceeded tolerance: worst {worst:.3e} > {FD_TOL:.0e}"
        )));
    }
    Ok(())
}

fn plot_cmd(args: PlotArgs) -> Result<()> {
    let ds = data::read_file(&args.data)?;
    let sample = ds
        .samples
        .get(args.index)
        .ok_or_else(|| Error::config(format!("sample {} out of range ({})", args.index, ds.len())))?;
    let format: PlotFormat = args.format.into();
    match args.what {
        WhatArg::Eta => write_real(&args.out, format, &sample.eta, ds.n, ds.n)?,
        WhatArg::Pattern => write_complex(&args.out, format, &sample.d, ds.m, ds.m)?,
        WhatArg::Prediction => {
            let ckpt = args
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::config("--checkpoint is required for predictions"))?;
            let params = checkpoint::read_file(ckpt)?;
            match params.spec.direction {
                MapDirection::Inverse => {
                    let (out, _) = model_forward(&params, &ModelIo::Pattern(sample.d.clone()))?;
                    match out {
                        ModelIo::Field(v) => write_real(&args.out, format, &v, ds.n, ds.n)?,
                        _ => unreachable!(),
                    }
                }
                MapDirection::Forward => {
                    let (out, _) = model_forward(&params, &ModelIo::Field(sample.eta.clone()))?;
                    match out {
                        ModelIo::Pattern(z) => write_complex(&args.out, format, &z, ds.m, ds.m)?,
                        _ => unreachable!(),
                    }
                }
            }
        }
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
