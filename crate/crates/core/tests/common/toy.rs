//! Small synthetic learning task: four joints, twenty observed frames, ten
//! predicted, on walk-like motion.

use std::time::{Duration, Instant};

use scrnn::datamodel::{synth_generate, SynthKind};
use scrnn::training::{evaluate, train, zero_velocity_mae, LossKind, TrainConfig};

use super::*;

pub const GOLDEN_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/toy_task.json");

pub fn config() -> TrainConfig {
    TrainConfig {
        observed: 20,
        horizon: 10,
        batch_size: 8,
        epochs: 200,
        hidden: Some(96),
        loss: LossKind::Mse,
        learning_rate: 0.2,
        decay_rate: 0.99,
        momentum: 0.9,
        seed: 0,
        threads: 1,
        ..TrainConfig::default()
    }
}

pub fn train_set() -> Vec<SkeletonSequence> {
    (0..64)
        .map(|s| synth_generate(SynthKind::WalkLike, 4, 30, s).unwrap())
        .collect()
}

pub fn validation_set() -> Vec<SkeletonSequence> {
    (1000..1032)
        .map(|s| synth_generate(SynthKind::WalkLike, 4, 30, s).unwrap())
        .collect()
}

#[derive(Debug, Clone)]
pub struct ToyOutcome {
    pub zero_velocity: f64,
    pub untrained: f64,
    pub trained: f64,
    pub first_loss: f64,
    pub last_loss: f64,
    pub elapsed: Duration,
}

pub fn run() -> ToyOutcome {
    let config = config();
    let (train_data, val) = (train_set(), validation_set());
    let frames = [config.horizon];
    let start = Instant::now();
    let untrained = train(
        &train_data,
        &TrainConfig {
            epochs: 0,
            ..config.clone()
        },
    )
    .unwrap();
    let out = train(&train_data, &config).unwrap();
    let elapsed = start.elapsed();
    ToyOutcome {
        zero_velocity: zero_velocity_mae(&val, config.observed, &frames).unwrap()[0],
        untrained: evaluate(&untrained.model, &untrained.params, &val, &frames).unwrap()[0],
        trained: evaluate(&out.model, &out.params, &val, &frames).unwrap()[0],
        first_loss: out.history.first().map_or(f64::NAN, |r| r.loss),
        last_loss: out.history.last().map_or(f64::NAN, |r| r.loss),
        elapsed,
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Golden {
    pub zero_velocity_mae: f64,
    pub trained_mae: f64,
    /// Trained error must not exceed this fraction of the baseline.
    pub max_ratio: f64,
}

pub fn load_golden() -> Option<Golden> {
    let text = std::fs::read_to_string(GOLDEN_PATH).ok()?;
    serde_json::from_str(&text).ok()
}

pub fn save_golden(g: &Golden) {
    std::fs::write(GOLDEN_PATH, serde_json::to_string_pretty(g).unwrap() + "\n").unwrap();
}
