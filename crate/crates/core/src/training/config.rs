//! JSON training configuration.
//!
//! Every field has a default, so `{}` is a valid configuration. Unknown keys
//! are rejected with the list of accepted keys.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cells::{InitState, ModelConfig, Variant};
use crate::datamodel::{JointTraversal, DEFAULT_FRAME_INTERVAL_MS};
use crate::error::{Error, Result};
use crate::loss::GramNormalization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Gram,
    Mse,
}

/// A builtin traversal name or an explicit 1-based joint order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraversalSpec {
    Name(String),
    Order(Vec<usize>),
}

impl TraversalSpec {
    pub fn resolve(&self, joints: usize) -> Result<JointTraversal> {
        match self {
            TraversalSpec::Name(name) => JointTraversal::from_name(name, joints),
            TraversalSpec::Order(order) => JointTraversal::custom(order.clone(), joints).map_err(|e| Error::Config {
                key: "traversal".into(),
                message: e.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Observed window length `T`.
    pub observed: usize,
    /// Prediction horizon `T'` used by the loss.
    pub horizon: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub tau1: f64,
    pub tau2: f64,
    pub rho: f64,
    /// RBF bandwidth of the gram-loss coefficients; `null` uses the median
    /// pairwise distance of each window's ground truth.
    pub rbf_tau: Option<f64>,
    pub traversal: TraversalSpec,
    pub variant: Variant,
    /// Skeleton GRU width; `null` means `3K`.
    pub hidden: Option<usize>,
    /// Attention scoring width; `null` means `3K`.
    pub attention_width: Option<usize>,
    pub init_state: InitState,
    pub seed: u64,
    pub loss: LossKind,
    pub gram_normalization: GramNormalization,
    pub learning_rate: f64,
    pub decay_rate: f64,
    pub momentum: f64,
    /// Global gradient-norm clip; `null` disables clipping.
    pub clip_norm: Option<f64>,
    /// Offset between consecutive training windows of a sequence.
    pub window_stride: usize,
    /// Trailing share of the sequences held out for validation.
    pub validation_fraction: f64,
    pub frame_interval_ms: f64,
    /// 0-based joints to keep when loading CSV data; `null` keeps all.
    pub joint_selection: Option<Vec<usize>>,
    /// Worker threads for per-window gradients. Results are reduced in
    /// window order, so the thread count does not change the outcome.
    pub threads: usize,
    /// Evaluation horizons; `null` keeps the standard horizons that fit in
    /// `horizon` frames.
    pub eval_horizons_ms: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            observed: 10,
            horizon: 10,
            batch_size: 32,
            epochs: 10,
            tau1: 1.0,
            tau2: 1.0,
            rho: 1.0,
            rbf_tau: None,
            traversal: TraversalSpec::Name("id".into()),
            variant: Variant::Full,
            hidden: None,
            attention_width: None,
            init_state: InitState::Encoder,
            seed: 0,
            loss: LossKind::Gram,
            gram_normalization: GramNormalization::Horizon,
            learning_rate: 0.5e-3,
            decay_rate: 0.95,
            momentum: 0.9,
            clip_norm: Some(5.0),
            window_stride: 1,
            validation_fraction: 0.0,
            frame_interval_ms: DEFAULT_FRAME_INTERVAL_MS,
            joint_selection: None,
            threads: 1,
            eval_horizons_ms: None,
        }
    }
}

fn known_keys() -> Vec<String> {
    match serde_json::to_value(TrainConfig::default()) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

impl TrainConfig {
    /// Parses a JSON object, reporting the offending key on failure.
    pub fn from_json(text: &str) -> Result<TrainConfig> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config {
            key: "<file>".into(),
            message: format!("invalid JSON: {e}"),
        })?;
        let Value::Object(map) = value else {
            return Err(Error::Config {
                key: "<file>".into(),
                message: "expected a JSON object".into(),
            });
        };
        let mut config = TrainConfig::default();
        for (key, v) in map {
            config.set_value(&key, v)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(format!("config encoding: {e}")))
    }

    /// Applies a `key=value` override. The value is read as JSON, falling
    /// back to a plain string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| Error::Config {
            key: assignment.into(),
            message: "override must look like key=value".into(),
        })?;
        let key = key.trim();
        let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
        let mut next = self.clone();
        next.set_value(key, value)?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    fn set_value(&mut self, key: &str, value: Value) -> Result<()> {
        let keys = known_keys();
        if !keys.iter().any(|k| k == key) {
            return Err(Error::Config {
                key: key.into(),
                message: format!("unknown key; expected one of: {}", keys.join(", ")),
            });
        }
        let mut map: Map<String, Value> = match serde_json::to_value(&*self) {
            Ok(Value::Object(m)) => m,
            _ => return Err(Error::Internal("config is not an object".into())),
        };
        map.insert(key.into(), value);
        *self = serde_json::from_value(Value::Object(map)).map_err(|e| Error::Config {
            key: key.into(),
            message: e.to_string(),
        })?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        for (key, v) in [
            ("observed", self.observed),
            ("horizon", self.horizon),
            ("batch_size", self.batch_size),
            ("window_stride", self.window_stride),
            ("threads", self.threads),
        ] {
            if v == 0 {
                return bad(key, "must be at least 1");
            }
        }
        if self.hidden == Some(0) {
            return bad("hidden", "must be at least 1");
        }
        if self.attention_width == Some(0) {
            return bad("attention_width", "must be at least 1");
        }
        for (key, v) in [
            ("tau1", Some(self.tau1)),
            ("tau2", Some(self.tau2)),
            ("rho", Some(self.rho)),
            ("rbf_tau", self.rbf_tau),
            ("frame_interval_ms", Some(self.frame_interval_ms)),
            ("clip_norm", self.clip_norm),
        ] {
            if let Some(v) = v {
                if !v.is_finite() || v <= 0.0 {
                    return bad(key, "must be a positive number");
                }
            }
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad("learning_rate", "must be a non-negative number");
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return bad("decay_rate", "must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction", "must lie in [0, 1)");
        }
        if let Some(h) = &self.eval_horizons_ms {
            if h.is_empty() || h.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return bad("eval_horizons_ms", "must be a non-empty list of positive numbers");
            }
        }
        if let TraversalSpec::Name(name) = &self.traversal {
            if !crate::datamodel::TraversalKind::NAMES.contains(&name.as_str()) || name == "custom" {
                return bad(
                    "traversal",
                    &format!("unknown traversal `{name}`; expected one of: id, traveling, surrounding, traveling_fixed, or a list of joints"),
                );
            }
        }
        Ok(())
    }

    /// Model shape for data with `joints` joints.
    pub fn model_config(&self, joints: usize) -> Result<ModelConfig> {
        let mut m = ModelConfig::new(joints, self.observed);
        m.hidden = self.hidden.unwrap_or(3 * joints);
        m.attention_width = self.attention_width.unwrap_or(3 * joints);
        m.tau1 = self.tau1;
        m.tau2 = self.tau2;
        m.rho = self.rho;
        m.traversal = self.traversal.resolve(joints)?;
        m.variant = self.variant;
        m.init_state = self.init_state;
        m.validate()?;
        Ok(m)
    }

    /// Evaluation horizons in milliseconds.
    pub fn eval_horizons(&self) -> Vec<f64> {
        if let Some(h) = &self.eval_horizons_ms {
            return h.clone();
        }
        let limit = self.horizon as f64 * self.frame_interval_ms;
        let fitting: Vec<f64> = crate::loss::DEFAULT_HORIZONS_MS
            .iter()
            .copied()
            .filter(|ms| (ms / self.frame_interval_ms).round() >= 1.0 && *ms <= limit + 1e-9)
            .collect();
        if fitting.is_empty() {
            vec![limit]
        } else {
            fitting
        }
    }
}
