//! Skeleton attention over observed time steps and joint attention over the
//! other joints of the skeleton.
//!
//! Every operation exists twice: a `*_graph` form that records onto a
//! [`Tape`] (used by training and rollouts) and a plain-value form that wraps
//! it on a private tape.

use std::collections::BTreeMap;

use crate::datamodel::{check_joint, FeatureMap};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape, Var};

/// Scores `beta_j = w_e . tanh(U_eh h + U_ef F_j + b_e)` over columns of `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonAttentionParams {
    /// `a x d`, applied to the previous state.
    pub u_eh: Matrix,
    /// `a x d`, applied to each observed frame.
    pub u_ef: Matrix,
    /// `a x 1`
    pub w_e: Matrix,
    /// `a x 1`
    pub b_e: Matrix,
}

/// Scores `beta_l = w_c . tanh(U_cb M_k 1 + U_cm M_l 1 + b)` for joint pairs.
/// One bias vector is shared by every `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointAttentionParams {
    /// `a x 3`
    pub u_cb: Matrix,
    /// `a x 3`
    pub u_cm: Matrix,
    /// `a x 1`
    pub w_c: Matrix,
    /// `a x 1`
    pub b_c: Matrix,
}

#[derive(Debug, Clone, Copy)]
pub struct SkeletonAttentionVars {
    pub u_eh: Var,
    pub u_ef: Var,
    pub w_e: Var,
    pub b_e: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct JointAttentionVars {
    pub u_cb: Var,
    pub u_cm: Var,
    pub w_c: Var,
    pub b_c: Var,
}

impl SkeletonAttentionParams {
    pub fn register(&self, tape: &mut Tape) -> SkeletonAttentionVars {
        SkeletonAttentionVars {
            u_eh: tape.leaf(self.u_eh.clone()),
            u_ef: tape.leaf(self.u_ef.clone()),
            w_e: tape.leaf(self.w_e.clone()),
            b_e: tape.leaf(self.b_e.clone()),
        }
    }
}

impl JointAttentionParams {
    pub fn register(&self, tape: &mut Tape) -> JointAttentionVars {
        JointAttentionVars {
            u_cb: tape.leaf(self.u_cb.clone()),
            u_cm: tape.leaf(self.u_cm.clone()),
            w_c: tape.leaf(self.w_c.clone()),
            b_c: tape.leaf(self.b_c.clone()),
        }
    }
}

/// Nodes produced by [`skeleton_attention_graph`].
#[derive(Debug, Clone, Copy)]
pub struct SkeletonAttentionNodes {
    /// `1 x T` attention factors.
    pub alphas: Var,
    /// `d x T` attended feature map.
    pub f_a: Var,
    /// `d x 1` skeleton motion context (column mean of `f_a`).
    pub h_a: Var,
}

/// Records skeleton attention over the `d x T` map `f` given state `h_prev`.
///
/// With `forced` set (a `1 x T` node), the factors are taken from it instead
/// of the softmax and the scoring parameters are not touched.
pub fn skeleton_attention_graph(
    tape: &mut Tape,
    f: Var,
    h_prev: Var,
    params: &SkeletonAttentionVars,
    tau1: f64,
    forced: Option<Var>,
) -> Result<SkeletonAttentionNodes> {
    let t = tape.shape(f).1;
    let alphas = match forced {
        Some(a) => {
            if tape.value(a).len() != t {
                return Err(Error::dim("forced skeleton factors", (1, t), tape.shape(a)));
            }
            a
        }
        None => {
            let frames = tape.matmul(params.u_ef, f)?;
            let state = tape.matmul(params.u_eh, h_prev)?;
            let state = tape.add(state, params.b_e)?;
            let pre = tape.add_col(frames, state)?;
            let act = tape.tanh(pre)?;
            let w_t = tape.transpose(params.w_e)?;
            let scores = tape.matmul(w_t, act)?;
            tape.softmax(scores, tau1)?
        }
    };
    let f_a = tape.scale_cols(f, alphas)?;
    let sums = tape.row_sum(f_a)?;
    let h_a = tape.scale(sums, 1.0 / t as f64)?;
    Ok(SkeletonAttentionNodes { alphas, f_a, h_a })
}

/// Joint-attention factors for every target joint, from the `d x (T+1)` map
/// `f_tp`. Entry `k - 1` of the result is a `(K-1) x 1` node holding
/// `alpha^k_l` for `l != k` in increasing `l`.
pub fn joint_attention_graph(tape: &mut Tape, f_tp: Var, params: &JointAttentionVars, tau2: f64) -> Result<Vec<Var>> {
    let (d, _) = tape.shape(f_tp);
    let joints = d / 3;
    if joints < 2 {
        return Err(Error::Argument(format!(
            "joint attention needs at least 2 joints, got {joints}"
        )));
    }
    // Column l of `per_joint` is M_l 1, the 3-vector of row sums of joint l.
    let sums = tape.row_sum(f_tp)?;
    let by_row = tape.reshape(sums, joints, 3)?;
    let per_joint = tape.transpose(by_row)?;
    let others = tape.matmul(params.u_cm, per_joint)?;
    let w_t = tape.transpose(params.w_c)?;

    let mut out = Vec::with_capacity(joints);
    for k in 1..=joints {
        let own = tape.column(per_joint, k - 1)?;
        let own = tape.matmul(params.u_cb, own)?;
        let own = tape.add(own, params.b_c)?;
        let pre = tape.add_col(others, own)?;
        let act = tape.tanh(pre)?;
        let scores = tape.matmul(w_t, act)?;
        let mut kept = Vec::with_capacity(2);
        if k > 1 {
            kept.push(tape.slice(scores, 0, 0, 1, k - 1)?);
        }
        if k < joints {
            kept.push(tape.slice(scores, 0, k, 1, joints - k)?);
        }
        let kept = if kept.len() == 1 {
            kept[0]
        } else {
            tape.concat_cols(&kept)?
        };
        let kept = tape.reshape(kept, joints - 1, 1)?;
        out.push(tape.softmax(kept, tau2)?);
    }
    Ok(out)
}

/// Co-attention feature map for target joint `k`: the rows of every joint
/// `l != k` of `[F_a, F^{t'}_{:,end}]` scaled by `alpha^k_l`; joint `k`'s own
/// rows pass through unscaled.
pub fn coattention_map_graph(tape: &mut Tape, f_a: Var, f_tp: Var, k: usize, alphas: Var) -> Result<Var> {
    let (d, cols) = tape.shape(f_tp);
    let joints = d / 3;
    check_joint(k, joints)?;
    if tape.shape(f_a) != (d, cols - 1) {
        return Err(Error::dim("coattention_map", tape.shape(f_a), (d, cols - 1)));
    }
    if tape.value(alphas).len() != joints - 1 {
        return Err(Error::Argument(format!(
            "joint {k} needs {} attention factors, got {}",
            joints - 1,
            tape.value(alphas).len()
        )));
    }
    let last = tape.column(f_tp, cols - 1)?;
    let base = tape.concat_cols(&[f_a, last])?;
    let mut blocks = Vec::with_capacity(joints);
    let mut idx = 0;
    for l in 1..=joints {
        let rows = tape.slice(base, 3 * (l - 1), 0, 3, cols)?;
        if l == k {
            blocks.push(rows);
        } else {
            let factor = tape.entry(alphas, idx)?;
            blocks.push(tape.scale_by(rows, factor)?);
            idx += 1;
        }
    }
    tape.concat_rows(&blocks)
}

/// `O_k`: mean over `l != k` of the 3-row blocks of `f_co`.
pub fn coattention_context_graph(tape: &mut Tape, f_co: Var, k: usize) -> Result<Var> {
    let (d, cols) = tape.shape(f_co);
    let joints = d / 3;
    check_joint(k, joints)?;
    if joints < 2 {
        return Err(Error::Argument("context needs at least 2 joints".into()));
    }
    let mut acc: Option<Var> = None;
    for l in (1..=joints).filter(|&l| l != k) {
        let rows = tape.slice(f_co, 3 * (l - 1), 0, 3, cols)?;
        acc = Some(match acc {
            None => rows,
            Some(a) => tape.add(a, rows)?,
        });
    }
    let sum = acc.expect("at least one other joint");
    tape.scale(sum, 1.0 / (joints - 1) as f64)
}

/// Result of [`skeleton_attention`].
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonAttention {
    pub alphas: Vec<f64>,
    pub f_a: FeatureMap,
    pub h_a: Vec<f64>,
}

pub fn skeleton_attention(
    f: &FeatureMap,
    h_prev: &[f64],
    params: &SkeletonAttentionParams,
    tau1: f64,
) -> Result<SkeletonAttention> {
    let mut tape = Tape::new();
    let fv = tape.leaf(f.matrix().clone());
    let hv = tape.leaf(Matrix::column_vector(h_prev)?);
    let pv = params.register(&mut tape);
    let nodes = skeleton_attention_graph(&mut tape, fv, hv, &pv, tau1, None)?;
    Ok(SkeletonAttention {
        alphas: tape.value(nodes.alphas).as_slice().to_vec(),
        f_a: FeatureMap::new(tape.value(nodes.f_a).clone(), f.column_times().to_vec())?,
        h_a: tape.value(nodes.h_a).as_slice().to_vec(),
    })
}

/// Joint-attention factors `l -> alpha^k_l` for every `l != k`.
pub fn joint_attention(
    f_tp: &FeatureMap,
    k: usize,
    params: &JointAttentionParams,
    tau2: f64,
) -> Result<BTreeMap<usize, f64>> {
    let joints = f_tp.joints();
    if joints < 2 {
        return Err(Error::Argument(format!(
            "joint attention needs at least 2 joints, got {joints}"
        )));
    }
    check_joint(k, joints)?;
    let mut tape = Tape::new();
    let fv = tape.leaf(f_tp.matrix().clone());
    let pv = params.register(&mut tape);
    let all = joint_attention_graph(&mut tape, fv, &pv, tau2)?;
    let values = tape.value(all[k - 1]).as_slice();
    Ok((1..=joints).filter(|&l| l != k).zip(values.iter().copied()).collect())
}

pub fn coattention_map(
    f_a: &FeatureMap,
    f_tp: &FeatureMap,
    k: usize,
    alphas: &BTreeMap<usize, f64>,
) -> Result<FeatureMap> {
    let joints = f_tp.joints();
    check_joint(k, joints)?;
    let mut factors = Vec::with_capacity(joints.saturating_sub(1));
    for l in (1..=joints).filter(|&l| l != k) {
        let a = alphas
            .get(&l)
            .ok_or_else(|| Error::Argument(format!("missing joint-attention factor for joint {l} (target {k})")))?;
        factors.push(*a);
    }
    if alphas.len() != factors.len() {
        return Err(Error::Argument(format!(
            "joint-attention factors for target {k} must cover exactly the other joints"
        )));
    }
    let mut tape = Tape::new();
    let fa = tape.leaf(f_a.matrix().clone());
    let ftp = tape.leaf(f_tp.matrix().clone());
    let av = tape.leaf(Matrix::column_vector(&factors)?);
    let co = coattention_map_graph(&mut tape, fa, ftp, k, av)?;
    FeatureMap::new(tape.value(co).clone(), f_tp.column_times().to_vec())
}

pub fn coattention_context(f_co: &FeatureMap, k: usize) -> Result<Matrix> {
    let mut tape = Tape::new();
    let co = tape.leaf(f_co.matrix().clone());
    let o = coattention_context_graph(&mut tape, co, k)?;
    Ok(tape.value(o).clone())
}
