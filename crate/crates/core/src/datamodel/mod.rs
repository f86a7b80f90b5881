//! Skeleton sequences and the feature maps built from them.
//!
//! Joints are addressed by 1-based ids (`1..=K`), matching the joint
//! numbering used by the traversal orders. Row `3 * (k - 1) + c` of a feature
//! map holds coordinate `c` (0, 1, 2) of joint `k`.

mod csv;
mod synth;
mod traversal;

pub use self::csv::{load_csv, parse_csv, save_csv, write_atomic};
pub use synth::{synth_generate, SynthKind};
pub use traversal::{JointTraversal, TraversalKind, SURROUNDING_ORDER, TRAVELING_ORDER};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Default frame spacing: 25 Hz capture.
pub const DEFAULT_FRAME_INTERVAL_MS: f64 = 40.0;

/// Ordered frames of `K` joints, each frame a `3K` angle-axis vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSequence {
    joints: usize,
    frames: Vec<Vec<f64>>,
    frame_interval_ms: f64,
}

impl SkeletonSequence {
    pub fn new(joints: usize, frames: Vec<Vec<f64>>, frame_interval_ms: f64) -> Result<Self> {
        if joints < 2 {
            return Err(Error::Data(format!("a skeleton needs at least 2 joints, got {joints}")));
        }
        if frames.is_empty() {
            return Err(Error::Data("a sequence needs at least one frame".into()));
        }
        if !frame_interval_ms.is_finite() || frame_interval_ms <= 0.0 {
            return Err(Error::Parameter(format!(
                "frame interval must be positive, got {frame_interval_ms}"
            )));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.len() != 3 * joints {
                return Err(Error::Data(format!(
                    "frame {} has {} values, expected {}",
                    t + 1,
                    f.len(),
                    3 * joints
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("frame {} has a non-finite value", t + 1)));
            }
        }
        Ok(SkeletonSequence {
            joints,
            frames,
            frame_interval_ms,
        })
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    /// Skeleton vector length `d = 3K`.
    pub fn dim(&self) -> usize {
        3 * self.joints
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    /// Frame at 0-based position `t`.
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t]
    }

    pub fn frame_interval_ms(&self) -> f64 {
        self.frame_interval_ms
    }

    /// Frames in `range` as a new sequence.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<SkeletonSequence> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::Data(format!(
                "frame range {}..{} outside a sequence of {} frames",
                range.start,
                range.end,
                self.len()
            )));
        }
        SkeletonSequence::new(self.joints, self.frames[range].to_vec(), self.frame_interval_ms)
    }
}

/// Time step covered by a feature-map column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnTime {
    /// Observed frame `t` (1-based).
    Observed(usize),
    /// Future step `t'` (1-based).
    Future(usize),
}

/// A `d x T` (or `d x (T+1)`) matrix whose columns are skeleton vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    matrix: Matrix,
    column_times: Vec<ColumnTime>,
}

impl FeatureMap {
    pub fn new(matrix: Matrix, column_times: Vec<ColumnTime>) -> Result<Self> {
        if !matrix.rows().is_multiple_of(3) {
            return Err(Error::Argument(format!(
                "feature map needs 3K rows, got {}",
                matrix.rows()
            )));
        }
        if column_times.len() != matrix.cols() {
            return Err(Error::Argument(format!(
                "{} column times for {} columns",
                column_times.len(),
                matrix.cols()
            )));
        }
        Ok(FeatureMap { matrix, column_times })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn column_times(&self) -> &[ColumnTime] {
        &self.column_times
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn joints(&self) -> usize {
        self.matrix.rows() / 3
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.matrix.column(j)
    }
}

/// Feature map whose column `j` is frame `window.start + j`.
pub fn build_feature_map(seq: &SkeletonSequence, window: std::ops::Range<usize>) -> Result<FeatureMap> {
    if window.start >= window.end {
        return Err(Error::Argument("empty feature-map window".into()));
    }
    if window.end > seq.len() {
        return Err(Error::Argument(format!(
            "window {}..{} exceeds the {} available frames",
            window.start,
            window.end,
            seq.len()
        )));
    }
    let times = window.clone().map(|t| ColumnTime::Observed(t + 1)).collect();
    let matrix = Matrix::from_columns(&seq.frames[window])?;
    FeatureMap::new(matrix, times)
}

/// `[F, h]`: appends the state `h` as the column for future step `t_prime`.
pub fn append_state(f: &FeatureMap, h: &[f64], t_prime: usize) -> Result<FeatureMap> {
    if h.len() != f.dim() {
        return Err(Error::dim("append_state", f.matrix.shape(), (h.len(), 1)));
    }
    let (d, cols) = f.matrix.shape();
    let mut data = Vec::with_capacity(d * (cols + 1));
    for (r, hv) in h.iter().enumerate() {
        data.extend_from_slice(f.matrix.row(r));
        data.push(*hv);
    }
    let mut times = f.column_times.clone();
    times.push(ColumnTime::Future(t_prime));
    FeatureMap::new(Matrix::from_vec(d, cols + 1, data)?, times)
}

/// The three coordinate rows of joint `k` (1-based).
pub fn joint_rows(f: &FeatureMap, k: usize) -> Result<Matrix> {
    check_joint(k, f.joints())?;
    f.matrix.block(3 * (k - 1), 0, 3, f.cols())
}

pub(crate) fn check_joint(k: usize, joints: usize) -> Result<()> {
    if k == 0 || k > joints {
        return Err(Error::Argument(format!("joint {k} outside 1..={joints}")));
    }
    Ok(())
}
