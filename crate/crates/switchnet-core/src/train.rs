//! Mini-batch training and evaluation.
//!
//! The loss is mean-squared error over the model's raw output entries (the
//! two real channels for pattern-valued outputs). Per-epoch shuffles come
//! from the run's seeded generator, gradients are averaged over the batch,
//! and parameters follow ADAM. With `threads > 1`, per-sample gradients are
//! computed in parallel but summed in sample order, so the loss trace is
//! bitwise identical to a serial run.

use std::path::PathBuf;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::born::SwitchFactorization;
use crate::checkpoint;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{
    build, model_backward, model_forward, MapDirection, ModelGrads, ModelIo, ModelParams,
    ModelSpec,
};
use crate::nn::AdamState;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub spec: ModelSpec,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0 = only at the end).
    pub checkpoint_every: usize,
    pub out_path: Option<PathBuf>,
    /// Scale model inputs by the dataset's max modulus before training; the
    /// same flag must then be passed at evaluation time.
    pub normalize: bool,
    /// 1 = serial; more enables data-parallel gradient evaluation.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            spec: ModelSpec {
                kind: crate::model::ModelKind::FarField,
                direction: MapDirection::Inverse,
                t: 1,
                p_d: 1,
                p_x: 1,
                n: 2,
                m: 2,
                window: 1,
                alpha: 1,
                layers: 1,
                init: crate::model::InitMode::Glorot,
            },
            lr: 0.002,
            batch: 200,
            epochs: 1,
            seed: 0,
            checkpoint_every: 0,
            out_path: None,
            normalize: false,
            threads: 1,
        }
    }
}

/// Evaluation metrics: mean relative Frobenius error over the dataset.
#[derive(Debug, Clone)]
pub struct Metrics {
    pub mean_rel_error: f64,
    pub per_sample: Vec<f64>,
    /// Samples skipped because their ground truth has zero norm.
    pub excluded: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Batch loss per optimizer step.
    pub loss_trace: Vec<f64>,
    /// Full-training-set loss before the first update.
    pub initial_loss: f64,
    /// Full-training-set loss after the last update.
    pub final_loss: f64,
}

fn check_dataset(spec: &ModelSpec, ds: &Dataset, role: &str) -> Result<()> {
    if ds.kind != spec.kind || ds.n != spec.n || ds.m != spec.m {
        return Err(Error::shape(
            format!("{role} dataset"),
            format!("kind {:?}, N={}, M={}", spec.kind, spec.n, spec.m),
            format!("kind {:?}, N={}, M={}", ds.kind, ds.n, ds.m),
        ));
    }
    Ok(())
}

/// Largest input modulus over the dataset for the given direction
/// (|d| entries for inverse models, |eta| for forward models).
fn input_scale(spec: &ModelSpec, ds: &Dataset) -> f64 {
    let max = match spec.direction {
        MapDirection::Inverse => ds
            .samples
            .iter()
            .flat_map(|s| s.d.iter())
            .map(|z| z.norm())
            .fold(0.0f64, f64::max),
        MapDirection::Forward => ds
            .samples
            .iter()
            .flat_map(|s| s.eta.iter())
            .map(|v| v.abs())
            .fold(0.0f64, f64::max),
    };
    if max > 0.0 {
        max
    } else {
        1.0
    }
}

fn model_input(spec: &ModelSpec, sample: &crate::data::SamplePair, scale: f64) -> ModelIo {
    match spec.direction {
        MapDirection::Inverse => {
            ModelIo::Pattern(sample.d.iter().map(|z| z / scale).collect())
        }
        MapDirection::Forward => {
            ModelIo::Field(sample.eta.iter().map(|v| v / scale).collect())
        }
    }
}

/// MSE over real output entries and its gradient in the model's output
/// representation.
fn loss_and_grad(spec: &ModelSpec, output: &ModelIo, sample: &crate::data::SamplePair) -> Result<(f64, ModelIo)> {
    match (spec.direction, output) {
        (MapDirection::Inverse, ModelIo::Field(pred)) => {
            let len = pred.len() as f64;
            let mut loss = 0.0;
            let mut grad = Vec::with_capacity(pred.len());
            for (p, t) in pred.iter().zip(&sample.eta) {
                let diff = p - t;
                loss += diff * diff;
                grad.push(2.0 * diff / len);
            }
            Ok((loss / len, ModelIo::Field(grad)))
        }
        (MapDirection::Forward, ModelIo::Pattern(pred)) => {
            // two real channels per complex entry
            let len = (2 * pred.len()) as f64;
            let mut loss = 0.0;
            let mut grad = Vec::with_capacity(pred.len());
            for (p, t) in pred.iter().zip(&sample.d) {
                let diff = p - t;
                loss += diff.norm_sqr();
                grad.push(2.0 * diff / len);
            }
            Ok((loss / len, ModelIo::Pattern(grad)))
        }
        _ => Err(Error::shape(
            "loss",
            "output matching the map direction".to_string(),
            "mismatched output".to_string(),
        )),
    }
}

fn sample_loss(params: &ModelParams, sample: &crate::data::SamplePair, scale: f64) -> Result<f64> {
    let input = model_input(&params.spec, sample, scale);
    let (output, _) = model_forward(params, &input)?;
    Ok(loss_and_grad(&params.spec, &output, sample)?.0)
}

fn sample_grad(
    params: &ModelParams,
    sample: &crate::data::SamplePair,
    scale: f64,
) -> Result<(f64, ModelGrads)> {
    let input = model_input(&params.spec, sample, scale);
    let (output, tape) = model_forward(params, &input)?;
    let (loss, g_out) = loss_and_grad(&params.spec, &output, sample)?;
    let (grads, _) = model_backward(params, &tape, &g_out)?;
    Ok((loss, grads))
}

fn dataset_loss(params: &ModelParams, ds: &Dataset, scale: f64, threads: usize) -> Result<f64> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = if threads > 1 {
        let losses: Vec<Result<f64>> = ds
            .samples
            .par_iter()
            .map(|s| sample_loss(params, s, scale))
            .collect();
        let mut acc = 0.0;
        for l in losses {
            acc += l?;
        }
        acc
    } else {
        let mut acc = 0.0;
        for s in &ds.samples {
            acc += sample_loss(params, s, scale)?;
        }
        acc
    };
    Ok(total / ds.len() as f64)
}

/// Train a freshly built model on `train_data`. `factorization` backs the
/// `from-factorization` init mode.
pub fn train(
    cfg: &TrainConfig,
    train_data: &Dataset,
    factorization: Option<&SwitchFactorization>,
) -> Result<TrainOutcome> {
    let spec = cfg.spec;
    check_dataset(&spec, train_data, "training")?;
    if train_data.is_empty() {
        return Err(Error::config("training needs at least one sample"));
    }
    if cfg.batch == 0 || cfg.batch > train_data.len() {
        return Err(Error::config(format!(
            "batch size {} must lie in 1..={}",
            cfg.batch,
            train_data.len()
        )));
    }
    if cfg.epochs == 0 {
        return Err(Error::config("training needs epochs >= 1"));
    }

    let scale = if cfg.normalize { input_scale(&spec, train_data) } else { 1.0 };
    let mut params = build(&spec, cfg.seed, factorization)?;
    let mut flat = params.flat_params();
    let mut adam = AdamState::new(flat.len(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e_5f72_6e67);

    let initial_loss = dataset_loss(&params, train_data, scale, cfg.threads)?;

    let mut loss_trace = Vec::new();
    let mut indices: Vec<usize> = (0..train_data.len()).collect();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        for batch in indices.chunks(cfg.batch) {
            let results: Vec<Result<(f64, ModelGrads)>> = if cfg.threads > 1 {
                batch
                    .par_iter()
                    .map(|&i| sample_grad(&params, &train_data.samples[i], scale))
                    .collect()
            } else {
                batch
                    .iter()
                    .map(|&i| sample_grad(&params, &train_data.samples[i], scale))
                    .collect()
            };

            let mut batch_loss = 0.0;
            let mut total = ModelGrads::zeros_like(&params);
            for r in results {
                let (loss, grads) = r?;
                batch_loss += loss;
                total.accumulate(&grads);
            }
            let inv_b = 1.0 / batch.len() as f64;
            batch_loss *= inv_b;
            if !batch_loss.is_finite() {
                return Err(Error::numerical(format!(
                    "non-finite loss at step {step} (epoch {epoch})"
                )));
            }
            let mut g_flat = total.flat();
            for g in g_flat.iter_mut() {
                *g *= inv_b;
            }
            adam.apply(&mut flat, &g_flat);
            params.read_params(&flat)?;
            loss_trace.push(batch_loss);
            step += 1;
        }

        if let (Some(path), true) = (
            &cfg.out_path,
            cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0,
        ) {
            checkpoint::write_file(path, &params)?;
        }
    }

    let final_loss = dataset_loss(&params, train_data, scale, cfg.threads)?;
    if let Some(path) = &cfg.out_path {
        checkpoint::write_file(path, &params)?;
    }

    Ok(TrainOutcome { params, loss_trace, initial_loss, final_loss })
}

/// Mean relative Frobenius error of the model's predictions over a dataset.
/// Zero-norm ground-truth samples are excluded and counted.
pub fn evaluate(params: &ModelParams, ds: &Dataset, normalize: bool) -> Result<Metrics> {
    let spec = params.spec;
    check_dataset(&spec, ds, "evaluation")?;
    let scale = if normalize { input_scale(&spec, ds) } else { 1.0 };

    let mut per_sample = Vec::with_capacity(ds.len());
    let mut excluded = 0usize;
    for sample in &ds.samples {
        let input = model_input(&spec, sample, scale);
        let (output, _) = model_forward(params, &input)?;
        let rel = match (spec.direction, &output) {
            (MapDirection::Inverse, ModelIo::Field(pred)) => {
                let truth_norm: f64 = sample.eta.iter().map(|v| v * v).sum::<f64>().sqrt();
                if truth_norm == 0.0 {
                    excluded += 1;
                    continue;
                }
                let diff: f64 = pred
                    .iter()
                    .zip(&sample.eta)
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum::<f64>()
                    .sqrt();
                diff / truth_norm
            }
            (MapDirection::Forward, ModelIo::Pattern(pred)) => {
                let truth_norm: f64 = sample.d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if truth_norm == 0.0 {
                    excluded += 1;
                    continue;
                }
                let diff: f64 = pred
                    .iter()
                    .zip(&sample.d)
                    .map(|(p, t)| (p - t).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                diff / truth_norm
            }
            _ => unreachable!("model_forward output matches the direction"),
        };
        per_sample.push(rel);
    }
    let mean_rel_error = if per_sample.is_empty() {
        0.0
    } else {
        per_sample.iter().sum::<f64>() / per_sample.len() as f64
    };
    Ok(Metrics { mean_rel_error, per_sample, excluded })
}

/// Relative-error metric between two value sets of the same shape, used by
/// tests and the CLI to compare stored patterns.
pub fn relative_error_complex(pred: &[Complex64], truth: &[Complex64]) -> f64 {
    let diff: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).norm_sqr()).sum::<f64>().sqrt();
    let norm: f64 = truth.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    diff / norm
}
