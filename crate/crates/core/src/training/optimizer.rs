//! SGD with momentum and per-epoch exponential learning-rate decay.

use crate::cells::ParameterSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    base_learning_rate: f64,
    learning_rate: f64,
    decay_rate: f64,
    momentum: f64,
    velocity: ParameterSet,
    steps: u64,
    epochs: u32,
}

impl OptimizerState {
    pub fn new(params: &ParameterSet, learning_rate: f64, decay_rate: f64, momentum: f64) -> Result<OptimizerState> {
        if !learning_rate.is_finite() || learning_rate < 0.0 {
            return Err(Error::Config {
                key: "learning_rate".into(),
                message: format!("must be a non-negative number, got {learning_rate}"),
            });
        }
        if !(decay_rate > 0.0 && decay_rate <= 1.0) {
            return Err(Error::Config {
                key: "decay_rate".into(),
                message: format!("must lie in (0, 1], got {decay_rate}"),
            });
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config {
                key: "momentum".into(),
                message: format!("must lie in [0, 1), got {momentum}"),
            });
        }
        Ok(OptimizerState {
            base_learning_rate: learning_rate,
            learning_rate,
            decay_rate,
            momentum,
            velocity: params.zeros_like(),
            steps: 0,
            epochs: 0,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn velocity(&self) -> &ParameterSet {
        &self.velocity
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn epochs(&self) -> u32 {
        self.epochs
    }

    /// Marks an epoch boundary: `lr = lr_0 * decay^epochs`.
    pub fn end_epoch(&mut self) {
        self.epochs += 1;
        self.learning_rate = self.base_learning_rate * self.decay_rate.powi(self.epochs as i32);
    }
}

/// `v <- momentum * v - lr * g; p <- p + v`.
pub fn sgd_momentum_step(params: &mut ParameterSet, grads: &ParameterSet, state: &mut OptimizerState) -> Result<()> {
    for (key, p) in params.iter() {
        let g = grads
            .try_get(key)
            .ok_or_else(|| Error::Internal(format!("no gradient for {}", key.name())))?;
        let v = state
            .velocity
            .try_get(key)
            .ok_or_else(|| Error::Internal(format!("no velocity for {}", key.name())))?;
        if g.shape() != p.shape() {
            return Err(Error::dim(key.name(), g.shape(), p.shape()));
        }
        if v.shape() != p.shape() {
            return Err(Error::dim(key.name(), v.shape(), p.shape()));
        }
    }
    let (lr, mu) = (state.learning_rate, state.momentum);
    for (key, p) in params.iter_mut() {
        let g = grads.get(key).as_slice();
        let v = state.velocity.get_mut(key).as_mut_slice();
        for ((pi, vi), gi) in p.as_mut_slice().iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = mu * *vi - lr * gi;
            *pi += *vi;
        }
    }
    state.steps += 1;
    Ok(())
}
