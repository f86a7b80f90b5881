//! Central finite-difference checks of analytic gradients.
//!
//! The relative error of an entry is `|a - n| / max(|a|, |n|, floor)`, where
//! `a` is the analytic and `n` the numeric derivative. The floor keeps
//! entries whose true derivative is (near) zero from dividing noise by noise.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{make_windows, window_loss, window_loss_and_grad, LossSpec, TrainConfig, Window};
use crate::cells::{ModelConfig, ParamKey, ParameterSet};
use crate::datamodel::{synth_generate, SynthKind};
use crate::error::{Error, Result};

/// A scalar function of a parameter set with an analytic gradient.
pub trait GradTarget {
    fn loss(&self, params: &ParameterSet) -> Result<f64>;
    fn gradient(&self, params: &ParameterSet) -> Result<ParameterSet>;
}

/// Loss of the model's rollout on one window.
#[derive(Debug, Clone)]
pub struct RolloutTarget {
    pub model: ModelConfig,
    pub window: Window,
    pub spec: LossSpec,
}

impl GradTarget for RolloutTarget {
    fn loss(&self, params: &ParameterSet) -> Result<f64> {
        window_loss(&self.model, params, &self.window, &self.spec)
    }

    fn gradient(&self, params: &ParameterSet) -> Result<ParameterSet> {
        Ok(window_loss_and_grad(&self.model, params, &self.window, &self.spec)?.1)
    }
}

/// Wraps a target and adds `delta` to the first gradient entry of `key`.
/// Used to confirm the checker notices a wrong gradient.
#[derive(Debug, Clone)]
pub struct CorruptedGradient<T> {
    pub inner: T,
    pub key: ParamKey,
    pub delta: f64,
}

impl<T: GradTarget> GradTarget for CorruptedGradient<T> {
    fn loss(&self, params: &ParameterSet) -> Result<f64> {
        self.inner.loss(params)
    }

    fn gradient(&self, params: &ParameterSet) -> Result<ParameterSet> {
        let mut g = self.inner.gradient(params)?;
        if let Some(m) = g.try_get_mut(self.key) {
            m.as_mut_slice()[0] += self.delta;
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub floor: f64,
    pub threshold: f64,
    /// Check at most this many entries, sampled uniformly; `None` checks all.
    pub max_entries: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            floor: 1e-6,
            threshold: 1e-4,
            max_entries: None,
            seed: 0,
        }
    }
}

/// Worst entry of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamError {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamError>,
    pub threshold: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn entries(&self) -> usize {
        self.params.iter().map(|p| p.entries).sum()
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.threshold
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("param,entries,max_rel_error,analytic,numeric\n");
        for p in &self.params {
            writeln!(
                out,
                "{},{},{:e},{:e},{:e}",
                p.name, p.entries, p.max_rel_error, p.analytic, p.numeric
            )
            .ok();
        }
        out
    }
}

/// Compares `target.gradient` with central differences at `params`.
pub fn check_gradients<T: GradTarget + ?Sized>(
    target: &T,
    params: &ParameterSet,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let analytic = target.gradient(params)?;
    let mut all: Vec<(ParamKey, usize)> = Vec::new();
    for (key, m) in params.iter() {
        all.extend((0..m.len()).map(|i| (key, i)));
    }
    let chosen: Vec<(ParamKey, usize)> = match options.max_entries {
        Some(n) if n < all.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            let mut idx = sample(&mut rng, all.len(), n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| all[i]).collect()
        }
        _ => all,
    };

    let mut report: Vec<ParamError> = Vec::new();
    let mut probe = params.clone();
    for (key, i) in chosen {
        let orig = params.get(key).as_slice()[i];
        probe.get_mut(key).as_mut_slice()[i] = orig + options.step;
        let up = target.loss(&probe)?;
        probe.get_mut(key).as_mut_slice()[i] = orig - options.step;
        let down = target.loss(&probe)?;
        probe.get_mut(key).as_mut_slice()[i] = orig;
        let numeric = (up - down) / (2.0 * options.step);
        let a = analytic
            .try_get(key)
            .ok_or_else(|| Error::Internal(format!("no gradient for {}", key.name())))?
            .as_slice()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(options.floor);
        if report.last().map(|p| p.name.as_str()) != Some(key.name()) {
            report.push(ParamError {
                name: key.name().into(),
                entries: 0,
                max_rel_error: -1.0,
                analytic: 0.0,
                numeric: 0.0,
            });
        }
        let entry = report.last_mut().expect("pushed above");
        entry.entries += 1;
        if rel > entry.max_rel_error {
            entry.max_rel_error = rel;
            entry.analytic = a;
            entry.numeric = numeric;
        }
    }
    Ok(GradCheckReport {
        params: report,
        threshold: options.threshold,
    })
}

/// A random rollout instance: walk-like data of `T + T'` frames and seeded
/// parameters with biases drawn away from their initial constants.
pub fn grad_check_instance(
    config: &TrainConfig,
    joints: usize,
    instance_seed: u64,
) -> Result<(RolloutTarget, ParameterSet)> {
    config.validate()?;
    let model = config.model_config(joints)?;
    let seq = synth_generate(
        SynthKind::WalkLike,
        joints,
        config.observed + config.horizon,
        instance_seed,
    )?;
    let window = make_windows(&[seq], config.observed, config.horizon, 1)?.remove(0);
    let mut params = ParameterSet::init(&model, instance_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed.wrapping_add(1));
    for (key, m) in params.iter_mut() {
        if key.is_bias() {
            for v in m.as_mut_slice() {
                *v += rng.gen_range(-0.5..0.5);
            }
        }
    }
    let target = RolloutTarget {
        model,
        window,
        spec: LossSpec::from_config(config),
    };
    Ok((target, params))
}

/// Gradient check of the configured loss over a full rollout on a random
/// small instance, covering every parameter entry.
pub fn grad_check(config: &TrainConfig, joints: usize, instance_seed: u64) -> Result<GradCheckReport> {
    let (target, params) = grad_check_instance(config, joints, instance_seed)?;
    check_gradients(&target, &params, &GradCheckOptions::default())
}
