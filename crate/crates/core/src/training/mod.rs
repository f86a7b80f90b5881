//! Training: windowing, losses over rollouts, the SGD loop, gradient checks
//! and ablation runs.

mod ablation;
mod config;
mod gradcheck;
mod optimizer;

pub use ablation::{run_ablation, split_dataset, AblationReport, AblationRow};
pub use config::{LossKind, TrainConfig, TraversalSpec};
pub use gradcheck::{
    check_gradients, grad_check, grad_check_instance, CorruptedGradient, GradCheckOptions, GradCheckReport, GradTarget,
    ParamError, RolloutTarget,
};
pub use optimizer::{sgd_momentum_step, OptimizerState};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cells::{rollout, rollout_graph, ForcedFactors, ModelConfig, ModelVars, ParameterSet};
use crate::datamodel::SkeletonSequence;
use crate::error::{Error, Result};
use crate::loss::{
    batch_mean_angle_error, coefficient_matrix, gram_loss_graph, median_pairwise_distance, mse_loss_graph,
    zero_velocity, GramNormalization,
};
use crate::numerics::{Matrix, Tape};

/// One training example: `T` observed frames and the `T'` frames after them.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// `d x T` observed feature map.
    pub observed: Matrix,
    pub future: Vec<Vec<f64>>,
    pub sequence: usize,
    pub start: usize,
}

/// Slices every sequence into windows of `observed + horizon` frames, moving
/// by `stride` frames.
pub fn make_windows(
    dataset: &[SkeletonSequence],
    observed: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<Window>> {
    if dataset.is_empty() {
        return Err(Error::Data("dataset is empty".into()));
    }
    if observed == 0 || horizon == 0 || stride == 0 {
        return Err(Error::Argument("window sizes and stride must be positive".into()));
    }
    let span = observed + horizon;
    let joints = dataset[0].joints();
    let mut windows = Vec::new();
    for (si, seq) in dataset.iter().enumerate() {
        if seq.joints() != joints {
            return Err(Error::Data(format!(
                "sequence {si} has {} joints, sequence 0 has {joints}",
                seq.joints()
            )));
        }
        if seq.len() < span {
            return Err(Error::Data(format!(
                "sequence {si} has {} frames; need at least {span} (observed {observed} + horizon {horizon})",
                seq.len()
            )));
        }
        let mut start = 0;
        while start + span <= seq.len() {
            let cols: Vec<Vec<f64>> = seq.frames()[start..start + observed].to_vec();
            windows.push(Window {
                observed: Matrix::from_columns(&cols)?,
                future: seq.frames()[start + observed..start + span].to_vec(),
                sequence: si,
                start,
            });
            start += stride;
        }
    }
    Ok(windows)
}

/// Loss settings shared by training and gradient checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    /// `None` uses the median pairwise distance of the window's future.
    pub rbf_tau: Option<f64>,
    pub normalization: GramNormalization,
}

impl LossSpec {
    pub fn from_config(config: &TrainConfig) -> LossSpec {
        LossSpec {
            kind: config.loss,
            rbf_tau: config.rbf_tau,
            normalization: config.gram_normalization,
        }
    }
}

fn record_window_loss(
    tape: &mut Tape,
    model: &ModelConfig,
    params: &ParameterSet,
    window: &Window,
    spec: &LossSpec,
) -> Result<(ModelVars, crate::numerics::Var)> {
    let vars = ModelVars::register(tape, params);
    let f = tape.leaf(window.observed.clone());
    let horizon = window.future.len();
    let nodes = rollout_graph(tape, model, &vars, f, horizon, &ForcedFactors::default())?;
    let loss = match spec.kind {
        LossKind::Gram => {
            let tau = spec.rbf_tau.unwrap_or_else(|| median_pairwise_distance(&window.future));
            let coeffs = coefficient_matrix(&window.future, tau)?;
            let divisor = spec.normalization.divisor(horizon, model.observed);
            gram_loss_graph(tape, &nodes.predictions, &window.future, &coeffs, divisor)?
        }
        LossKind::Mse => mse_loss_graph(tape, &nodes.predictions, &window.future)?,
    };
    Ok((vars, loss))
}

/// Loss of one window's rollout.
pub fn window_loss(model: &ModelConfig, params: &ParameterSet, window: &Window, spec: &LossSpec) -> Result<f64> {
    let mut tape = Tape::new();
    let (_, loss) = record_window_loss(&mut tape, model, params, window, spec)?;
    Ok(tape.scalar(loss))
}

/// Loss of one window's rollout and its gradient for every parameter.
pub fn window_loss_and_grad(
    model: &ModelConfig,
    params: &ParameterSet,
    window: &Window,
    spec: &LossSpec,
) -> Result<(f64, ParameterSet)> {
    let mut tape = Tape::new();
    let (vars, loss) = record_window_loss(&mut tape, model, params, window, spec)?;
    let grads = tape.backward(loss)?;
    let map = vars.iter().map(|(k, v)| (k, grads.get(v).clone())).collect();
    Ok((tape.scalar(loss), ParameterSet::from_map(map)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    /// 1-based optimizer step across all epochs.
    pub step: usize,
    /// Mean window loss of the batch, before the update.
    pub loss: f64,
}

/// Loss history as CSV with header `epoch,step,loss`.
pub fn history_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("epoch,step,loss\n");
    for r in history {
        writeln!(out, "{},{},{}", r.epoch, r.step, r.loss).ok();
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelConfig,
    pub params: ParameterSet,
    pub history: Vec<LossRecord>,
    pub optimizer: OptimizerState,
}

/// Trains from a seeded initialization.
pub fn train(dataset: &[SkeletonSequence], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let joints = dataset
        .first()
        .ok_or_else(|| Error::Data("dataset is empty".into()))?
        .joints();
    let model = config.model_config(joints)?;
    let params = ParameterSet::init(&model, config.seed);
    train_from(dataset, config, &model, params)
}

/// Trains starting from `params`.
///
/// Each epoch shuffles the windows with a generator seeded from
/// `config.seed`, then takes one optimizer step per batch (the last batch may
/// be smaller). Per-window gradients are averaged in window order.
pub fn train_from(
    dataset: &[SkeletonSequence],
    config: &TrainConfig,
    model: &ModelConfig,
    mut params: ParameterSet,
) -> Result<TrainOutcome> {
    config.validate()?;
    params.validate(model)?;
    let windows = make_windows(dataset, config.observed, config.horizon, config.window_stride)?;
    let spec = LossSpec::from_config(config);
    let mut optimizer = OptimizerState::new(&params, config.learning_rate, config.decay_rate, config.momentum)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut history = Vec::new();
    let mut step = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            step += 1;
            let at = |e: Error, window: Option<usize>| match e {
                Error::Numeric { location, message } => Error::Numeric {
                    location: match window {
                        Some(w) => format!("epoch {epoch}, step {step}, window {w}, {location}"),
                        None => format!("epoch {epoch}, step {step}, {location}"),
                    },
                    message,
                },
                other => other,
            };
            let results: Vec<Result<(f64, ParameterSet)>> = if config.threads > 1 {
                pool.install(|| {
                    batch
                        .par_iter()
                        .map(|&w| window_loss_and_grad(model, &params, &windows[w], &spec).map_err(|e| at(e, Some(w))))
                        .collect()
                })
            } else {
                batch
                    .iter()
                    .map(|&w| window_loss_and_grad(model, &params, &windows[w], &spec).map_err(|e| at(e, Some(w))))
                    .collect()
            };
            let mut grads = params.zeros_like();
            let mut loss = 0.0;
            for r in results {
                let (l, g) = r?;
                loss += l;
                grads.add_scaled(&g, 1.0);
            }
            let n = batch.len() as f64;
            loss /= n;
            grads.scale_in_place(1.0 / n);
            let norm = grads.global_norm();
            if !loss.is_finite() || !norm.is_finite() {
                return Err(at(
                    Error::Numeric {
                        location: "batch".into(),
                        message: format!("loss {loss}, gradient norm {norm}"),
                    },
                    None,
                ));
            }
            if let Some(clip) = config.clip_norm {
                if norm > clip {
                    grads.scale_in_place(clip / norm);
                }
            }
            sgd_momentum_step(&mut params, &grads, &mut optimizer)?;
            history.push(LossRecord { epoch, step, loss });
        }
        optimizer.end_epoch();
    }
    Ok(TrainOutcome {
        model: model.clone(),
        params,
        history,
        optimizer,
    })
}

fn eval_pairs<F>(
    sequences: &[SkeletonSequence],
    observed: usize,
    horizon: usize,
    predict: F,
) -> Result<Vec<(SkeletonSequence, SkeletonSequence)>>
where
    F: Fn(&SkeletonSequence) -> Result<SkeletonSequence>,
{
    if sequences.is_empty() {
        return Err(Error::Data("no sequences to evaluate".into()));
    }
    sequences
        .iter()
        .enumerate()
        .map(|(i, seq)| {
            if seq.len() < observed + horizon {
                return Err(Error::Data(format!(
                    "evaluation sequence {i} has {} frames; need {}",
                    seq.len(),
                    observed + horizon
                )));
            }
            let obs = seq.slice(0..observed)?;
            let truth = seq.slice(observed..observed + horizon)?;
            Ok((predict(&obs)?, truth))
        })
        .collect()
}

/// Mean angle error of the model over the first window of each sequence, at
/// the given 1-based horizon frames.
pub fn evaluate(
    model: &ModelConfig,
    params: &ParameterSet,
    sequences: &[SkeletonSequence],
    horizon_frames: &[usize],
) -> Result<Vec<f64>> {
    let horizon = horizon_frames.iter().copied().max().unwrap_or(0);
    if horizon == 0 {
        return Err(Error::Argument("no evaluation horizons".into()));
    }
    let pairs = eval_pairs(sequences, model.observed, horizon, |obs| {
        rollout(obs, horizon, params, model)
    })?;
    batch_mean_angle_error(&pairs, horizon_frames)
}

/// Mean angle error of repeating the last observed frame.
pub fn zero_velocity_mae(
    sequences: &[SkeletonSequence],
    observed: usize,
    horizon_frames: &[usize],
) -> Result<Vec<f64>> {
    let horizon = horizon_frames.iter().copied().max().unwrap_or(0);
    if horizon == 0 {
        return Err(Error::Argument("no evaluation horizons".into()));
    }
    let pairs = eval_pairs(sequences, observed, horizon, |obs| zero_velocity(obs, horizon))?;
    batch_mean_angle_error(&pairs, horizon_frames)
}
