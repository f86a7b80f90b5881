//! Trains every architecture variant on the same data and seed and compares
//! their validation errors.

use super::{evaluate, train, zero_velocity_mae, TrainConfig};
use crate::cells::Variant;
use crate::datamodel::SkeletonSequence;
use crate::error::{Error, Result};
use crate::loss::{horizon_frames, MaeTable};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub parameters: usize,
    pub mae: Vec<f64>,
    /// Mean batch loss of the last optimizer step, if any step ran.
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub horizons_ms: Vec<f64>,
    pub rows: Vec<AblationRow>,
    pub zero_velocity: Vec<f64>,
}

impl AblationReport {
    /// One row per variant plus the zero-velocity baseline.
    pub fn table(&self) -> MaeTable {
        let mut t = MaeTable::new(self.horizons_ms.clone());
        for r in &self.rows {
            t.rows.push((r.variant.as_str().to_string(), r.mae.clone()));
        }
        t.rows.push(("zero_velocity".into(), self.zero_velocity.clone()));
        t
    }

    pub fn row(&self, variant: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    /// Whether the full model is at least as good as every single ablation at
    /// the longest horizon.
    pub fn full_leads_at_longest_horizon(&self) -> Option<bool> {
        let last = |v| self.row(v).and_then(|r| r.mae.last().copied());
        let full = last(Variant::Full)?;
        Some(
            [Variant::NoSkelAttn, Variant::NoJointAttn, Variant::NoSca]
                .into_iter()
                .filter_map(last)
                .all(|m| full <= m),
        )
    }
}

/// Splits off the trailing `fraction` of sequences for validation. With no
/// held-out sequences the training set doubles as validation set.
pub fn split_dataset(dataset: &[SkeletonSequence], fraction: f64) -> (&[SkeletonSequence], &[SkeletonSequence]) {
    let n = dataset.len();
    let held = ((n as f64) * fraction).round() as usize;
    let held = held.min(n.saturating_sub(1));
    if held == 0 {
        (dataset, dataset)
    } else {
        dataset.split_at(n - held)
    }
}

pub fn run_ablation(dataset: &[SkeletonSequence], base: &TrainConfig) -> Result<AblationReport> {
    base.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("dataset is empty".into()));
    }
    let (train_set, val_set) = split_dataset(dataset, base.validation_fraction);
    let horizons_ms = base.eval_horizons();
    let frames = horizon_frames(&horizons_ms, base.frame_interval_ms)?;
    let mut rows = Vec::new();
    for variant in Variant::ALL {
        let config = TrainConfig {
            variant,
            ..base.clone()
        };
        let out = train(train_set, &config)?;
        rows.push(AblationRow {
            variant,
            parameters: out.params.num_scalars(),
            mae: evaluate(&out.model, &out.params, val_set, &frames)?,
            final_loss: out.history.last().map(|r| r.loss),
        });
    }
    Ok(AblationReport {
        zero_velocity: zero_velocity_mae(val_set, base.observed, &frames)?,
        horizons_ms,
        rows,
    })
}
