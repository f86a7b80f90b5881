//! Training losses and evaluation metrics.
//!
//! The weighted gram loss compares, for every prefix length `t'`, the gram
//! matrix of the coefficient-weighted predicted prefix with that of the
//! ground-truth prefix. The RBF coefficients come from ground truth only and
//! are constants during differentiation.

use std::fmt::Write as _;

use crate::datamodel::SkeletonSequence;
use crate::error::{Error, Result, Shape};
use crate::numerics::{Matrix, Tape, Var};

/// Standard evaluation horizons in milliseconds.
pub const DEFAULT_HORIZONS_MS: [f64; 8] = [80.0, 160.0, 320.0, 400.0, 560.0, 640.0, 720.0, 1000.0];

/// RBF coefficients `I_ij = exp(-|x_i - x_j|^2 / tau^2)` over a ground-truth
/// horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    matrix: Matrix,
    tau: f64,
}

impl CoefficientMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Horizon length `T'`.
    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entry for 0-based frames `i`, `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    /// Coefficients with every entry 1.
    pub fn ones(len: usize) -> Result<CoefficientMatrix> {
        if len == 0 {
            return Err(Error::Argument("coefficient matrix needs at least one frame".into()));
        }
        Ok(CoefficientMatrix {
            matrix: Matrix::ones(len, len),
            tau: f64::INFINITY,
        })
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_frames(frames: &[Vec<f64>], what: &'static str) -> Result<usize> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Argument(format!("{what}: empty frame list")))?;
    let d = first.len();
    if d == 0 {
        return Err(Error::Argument(format!("{what}: empty frames")));
    }
    for f in frames {
        if f.len() != d {
            return Err(Error::dim(what, (f.len(), 1), (d, 1)));
        }
    }
    Ok(d)
}

pub fn coefficient_matrix(ground_truth: &[Vec<f64>], tau: f64) -> Result<CoefficientMatrix> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::Parameter(format!(
            "RBF bandwidth tau must be positive, got {tau}"
        )));
    }
    check_frames(ground_truth, "coefficient matrix")?;
    let n = ground_truth.len();
    let tau2 = tau * tau;
    let mut m = Matrix::ones(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = (-squared_distance(&ground_truth[i], &ground_truth[j]) / tau2).exp();
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    Ok(CoefficientMatrix { matrix: m, tau })
}

/// Median pairwise distance between ground-truth frames, or 1 when it is zero
/// or there is only one frame.
pub fn median_pairwise_distance(frames: &[Vec<f64>]) -> f64 {
    let mut dists = Vec::new();
    for i in 0..frames.len() {
        for j in i + 1..frames.len() {
            dists.push(squared_distance(&frames[i], &frames[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    if median > 0.0 && median.is_finite() {
        median
    } else {
        1.0
    }
}

/// `G = V V^T` where row `i` of `V` is `I_{i,t} x_i` for `i < t` and the last
/// row is `x_t`; `t = x_seq.len()`.
pub fn weighted_gram(x_seq: &[Vec<f64>], coeffs: &CoefficientMatrix) -> Result<Matrix> {
    let d = check_frames(x_seq, "weighted gram")?;
    let t = x_seq.len();
    if t > coeffs.len() {
        return Err(Error::Dimension {
            op: "weighted gram",
            lhs: Shape(t, d),
            rhs: Shape(coeffs.len(), coeffs.len()),
        });
    }
    let mut v = Vec::with_capacity(t * d);
    for (i, x) in x_seq.iter().enumerate() {
        let w = if i + 1 == t { 1.0 } else { coeffs.get(i, t - 1) };
        v.extend(x.iter().map(|e| w * e));
    }
    let v = Matrix::from_vec(t, d, v)?;
    v.matmul(&v.transpose())
}

/// Which length divides the summed gram discrepancies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramNormalization {
    /// Divide by the prediction horizon `T'`.
    Horizon,
    /// Divide by the observed length `T`.
    Observed,
}

impl GramNormalization {
    pub fn divisor(self, horizon: usize, observed: usize) -> f64 {
        match self {
            GramNormalization::Horizon => horizon as f64,
            GramNormalization::Observed => observed as f64,
        }
    }
}

fn check_pair(pred: &[Vec<f64>], truth: &[Vec<f64>], what: &'static str) -> Result<usize> {
    let d = check_frames(truth, what)?;
    let dp = check_frames(pred, what)?;
    if pred.len() != truth.len() || dp != d {
        return Err(Error::Dimension {
            op: what,
            lhs: Shape(pred.len(), dp),
            rhs: Shape(truth.len(), d),
        });
    }
    Ok(d)
}

/// `(1/T') sum_t |G(pred_1..t) - G(truth_1..t)|_F^2` with coefficients from
/// `truth` and bandwidth `tau`.
pub fn gram_loss(pred: &[Vec<f64>], truth: &[Vec<f64>], tau: f64) -> Result<f64> {
    check_pair(pred, truth, "gram loss")?;
    let coeffs = coefficient_matrix(truth, tau)?;
    gram_loss_with(pred, truth, &coeffs, truth.len() as f64)
}

/// Gram loss with explicit coefficients and divisor.
pub fn gram_loss_with(pred: &[Vec<f64>], truth: &[Vec<f64>], coeffs: &CoefficientMatrix, divisor: f64) -> Result<f64> {
    check_pair(pred, truth, "gram loss")?;
    if coeffs.len() != truth.len() {
        return Err(Error::dim(
            "gram loss coefficients",
            coeffs.matrix().shape(),
            (truth.len(), truth.len()),
        ));
    }
    let mut total = 0.0;
    for t in 1..=truth.len() {
        let gp = weighted_gram(&pred[..t], coeffs)?;
        let gt = weighted_gram(&truth[..t], coeffs)?;
        total += gp.sub(&gt)?.frobenius_norm_sq();
    }
    Ok(total / divisor)
}

/// Records the gram loss for predicted `d x 1` nodes against constant truth.
pub fn gram_loss_graph(
    tape: &mut Tape,
    preds: &[Var],
    truth: &[Vec<f64>],
    coeffs: &CoefficientMatrix,
    divisor: f64,
) -> Result<Var> {
    let d = check_frames(truth, "gram loss")?;
    if preds.len() != truth.len() || coeffs.len() != truth.len() {
        return Err(Error::Dimension {
            op: "gram loss",
            lhs: Shape(preds.len(), d),
            rhs: Shape(truth.len(), d),
        });
    }
    let rows = preds
        .iter()
        .map(|p| {
            if tape.shape(*p) != (d, 1) {
                return Err(Error::dim("gram loss prediction", tape.shape(*p), (d, 1)));
            }
            tape.transpose(*p)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut terms = Vec::with_capacity(truth.len());
    for t in 1..=truth.len() {
        let mut v = Vec::with_capacity(t);
        for (i, row) in rows.iter().take(t - 1).enumerate() {
            v.push(tape.scale(*row, coeffs.get(i, t - 1))?);
        }
        v.push(rows[t - 1]);
        let v = tape.concat_rows(&v)?;
        let vt = tape.transpose(v)?;
        let g = tape.matmul(v, vt)?;
        let target = tape.leaf(weighted_gram(&truth[..t], coeffs)?);
        let diff = tape.sub(g, target)?;
        let sq = tape.square(diff)?;
        terms.push(tape.sum(sq)?);
    }
    let all = tape.concat_rows(&terms)?;
    let total = tape.sum(all)?;
    tape.scale(total, 1.0 / divisor)
}

/// Mean over all `T' * d` entries of the squared difference.
pub fn mse_loss(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    let d = check_pair(pred, truth, "mse loss")?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| squared_distance(p, t)).sum();
    Ok(sum / (truth.len() * d) as f64)
}

pub fn mse_loss_graph(tape: &mut Tape, preds: &[Var], truth: &[Vec<f64>]) -> Result<Var> {
    let d = check_frames(truth, "mse loss")?;
    if preds.len() != truth.len() {
        return Err(Error::Dimension {
            op: "mse loss",
            lhs: Shape(preds.len(), d),
            rhs: Shape(truth.len(), d),
        });
    }
    let mut terms = Vec::with_capacity(preds.len());
    for (p, t) in preds.iter().zip(truth) {
        let target = tape.leaf(Matrix::column_vector(t)?);
        let diff = tape.sub(*p, target)?;
        let sq = tape.square(diff)?;
        terms.push(tape.sum(sq)?);
    }
    let all = tape.concat_rows(&terms)?;
    let total = tape.sum(all)?;
    tape.scale(total, 1.0 / (truth.len() * d) as f64)
}

/// Converts horizons in milliseconds to 1-based frame offsets.
pub fn horizon_frames(horizons_ms: &[f64], frame_interval_ms: f64) -> Result<Vec<usize>> {
    if !frame_interval_ms.is_finite() || frame_interval_ms <= 0.0 {
        return Err(Error::Parameter(format!(
            "frame interval must be positive, got {frame_interval_ms}"
        )));
    }
    horizons_ms
        .iter()
        .map(|&ms| {
            if !ms.is_finite() || ms <= 0.0 {
                return Err(Error::Parameter(format!("horizon must be positive, got {ms} ms")));
            }
            Ok(((ms / frame_interval_ms).round() as usize).max(1))
        })
        .collect()
}

/// Euclidean distance between prediction and truth at each 1-based horizon
/// frame.
pub fn mean_angle_error(
    pred: &SkeletonSequence,
    truth: &SkeletonSequence,
    horizon_frames: &[usize],
) -> Result<Vec<f64>> {
    if pred.joints() != truth.joints() {
        return Err(Error::Dimension {
            op: "mean angle error",
            lhs: Shape(pred.len(), pred.dim()),
            rhs: Shape(truth.len(), truth.dim()),
        });
    }
    horizon_frames
        .iter()
        .map(|&h| {
            if h == 0 || h > pred.len() || h > truth.len() {
                return Err(Error::Data(format!(
                    "horizon frame {h} outside prediction ({} frames) or truth ({} frames)",
                    pred.len(),
                    truth.len()
                )));
            }
            Ok(squared_distance(pred.frame(h - 1), truth.frame(h - 1)).sqrt())
        })
        .collect()
}

/// Mean of per-sequence errors for a batch of `(pred, truth)` pairs.
pub fn batch_mean_angle_error(
    pairs: &[(SkeletonSequence, SkeletonSequence)],
    horizon_frames: &[usize],
) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::Data("no sequences to evaluate".into()));
    }
    let mut acc = vec![0.0; horizon_frames.len()];
    for (p, t) in pairs {
        for (a, e) in acc.iter_mut().zip(mean_angle_error(p, t, horizon_frames)?) {
            *a += e;
        }
    }
    Ok(acc.into_iter().map(|a| a / pairs.len() as f64).collect())
}

/// Repeats the last observed frame `horizon` times.
pub fn zero_velocity(observed: &SkeletonSequence, horizon: usize) -> Result<SkeletonSequence> {
    if observed.is_empty() || horizon == 0 {
        return Err(Error::Argument(
            "zero-velocity baseline needs frames and a positive horizon".into(),
        ));
    }
    let last = observed.frame(observed.len() - 1).to_vec();
    SkeletonSequence::new(observed.joints(), vec![last; horizon], observed.frame_interval_ms())
}

/// Error table: one row per tag, one column per horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MaeTable {
    pub horizons_ms: Vec<f64>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl MaeTable {
    pub fn new(horizons_ms: Vec<f64>) -> MaeTable {
        MaeTable {
            horizons_ms,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, tag: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.horizons_ms.len() {
            return Err(Error::dim(
                "error table row",
                (1, values.len()),
                (1, self.horizons_ms.len()),
            ));
        }
        self.rows.push((tag.into(), values));
        Ok(())
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| tag |");
        for h in &self.horizons_ms {
            write!(out, " {h}ms |").ok();
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(self.horizons_ms.len()));
        out.push('\n');
        for (tag, values) in &self.rows {
            write!(out, "| {tag} |").ok();
            for v in values {
                write!(out, " {v:.4} |").ok();
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tag");
        for h in &self.horizons_ms {
            write!(out, ",{h}").ok();
        }
        out.push('\n');
        for (tag, values) in &self.rows {
            out.push_str(tag);
            for v in values {
                write!(out, ",{v}").ok();
            }
            out.push('\n');
        }
        out
    }
}
