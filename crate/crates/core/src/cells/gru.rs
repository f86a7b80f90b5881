//! The skeleton GRU, the spatial (joint) GRU, the confidence gate and the
//! joint traversal that chains the spatial GRU.

use std::collections::BTreeMap;

use crate::attention::{coattention_context_graph, coattention_map_graph, JointAttentionParams, JointAttentionVars};
use crate::datamodel::{FeatureMap, JointTraversal};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGruParams {
    pub w_zx: Matrix,
    pub w_zh: Matrix,
    pub w_za: Matrix,
    pub w_rx: Matrix,
    pub w_rh: Matrix,
    pub w_ra: Matrix,
    pub w_cx: Matrix,
    pub w_ch: Matrix,
    pub b_z: Matrix,
    pub b_r: Matrix,
    pub b_c: Matrix,
}

#[derive(Debug, Clone, Copy)]
pub struct SkeletonGruVars {
    pub w_zx: Var,
    pub w_zh: Var,
    pub w_za: Var,
    pub w_rx: Var,
    pub w_rh: Var,
    pub w_ra: Var,
    pub w_cx: Var,
    pub w_ch: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_c: Var,
}

/// Matrix-valued GRU over `3 x (T+1)` joint motions. The `3 x 3` weights
/// left-multiply their operands.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGruParams {
    pub w_zm: Matrix,
    pub w_zq: Matrix,
    pub w_zo: Matrix,
    pub w_rm: Matrix,
    pub w_rq: Matrix,
    pub w_ro: Matrix,
    pub w_cm: Matrix,
    pub w_cq: Matrix,
    pub b_z: Matrix,
    pub b_r: Matrix,
    pub b_c: Matrix,
}

#[derive(Debug, Clone, Copy)]
pub struct SpatialGruVars {
    pub w_zm: Var,
    pub w_zq: Var,
    pub w_zo: Var,
    pub w_rm: Var,
    pub w_rq: Var,
    pub w_ro: Var,
    pub w_cm: Var,
    pub w_cq: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_c: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w_fh: Matrix,
    pub w_fm: Matrix,
    pub b_h: Matrix,
    pub b_m: Matrix,
    /// Bandwidth of `exp(-rho * theta^2)`.
    pub rho: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct GateVars {
    pub w_fh: Var,
    pub w_fm: Var,
    pub b_h: Var,
    pub b_m: Var,
}

macro_rules! register_fields {
    ($params:expr, $tape:expr, $vars:ident { $($f:ident),* }) => {
        $vars { $($f: $tape.leaf($params.$f.clone())),* }
    };
}

impl SkeletonGruParams {
    pub fn register(&self, tape: &mut Tape) -> SkeletonGruVars {
        register_fields!(
            self,
            tape,
            SkeletonGruVars {
                w_zx,
                w_zh,
                w_za,
                w_rx,
                w_rh,
                w_ra,
                w_cx,
                w_ch,
                b_z,
                b_r,
                b_c
            }
        )
    }
}

impl SpatialGruParams {
    pub fn register(&self, tape: &mut Tape) -> SpatialGruVars {
        register_fields!(
            self,
            tape,
            SpatialGruVars {
                w_zm,
                w_zq,
                w_zo,
                w_rm,
                w_rq,
                w_ro,
                w_cm,
                w_cq,
                b_z,
                b_r,
                b_c
            }
        )
    }
}

impl GateParams {
    pub fn register(&self, tape: &mut Tape) -> GateVars {
        register_fields!(self, tape, GateVars { w_fh, w_fm, b_h, b_m })
    }
}

/// `sigma(W_1 a + W_2 b + W_3 c + bias)` or `tanh(...)`: the shared gate body.
fn gate_sum(tape: &mut Tape, terms: &[(Var, Var)], bias: Var) -> Result<Var> {
    let mut acc = bias;
    for &(w, x) in terms {
        let wx = tape.matmul(w, x)?;
        acc = tape.add(wx, acc)?;
    }
    Ok(acc)
}

/// `(1 - z) . prev + z . cand`
fn interpolate(tape: &mut Tape, z: Var, prev: Var, cand: Var) -> Result<Var> {
    let keep = tape.one_minus(z)?;
    let kept = tape.mul(keep, prev)?;
    let fresh = tape.mul(z, cand)?;
    tape.add(kept, fresh)
}

/// Gate activations of one GRU update, kept for inspection.
#[derive(Debug, Clone, Copy)]
pub struct GruNodes {
    pub z: Var,
    pub r: Var,
    pub c: Var,
    pub state: Var,
}

/// Skeleton GRU step: the update and reset gates see the motion context
/// `h_a`; the candidate does not.
pub fn skeleton_gru_graph(
    tape: &mut Tape,
    x_tilde: Var,
    h_prev: Var,
    h_a: Var,
    p: &SkeletonGruVars,
) -> Result<GruNodes> {
    let z = gate_sum(tape, &[(p.w_zx, x_tilde), (p.w_zh, h_prev), (p.w_za, h_a)], p.b_z)?;
    let z = tape.sigmoid(z)?;
    let r = gate_sum(tape, &[(p.w_rx, x_tilde), (p.w_rh, h_prev), (p.w_ra, h_a)], p.b_r)?;
    let r = tape.sigmoid(r)?;
    let reset = tape.mul(r, h_prev)?;
    let c = gate_sum(tape, &[(p.w_cx, x_tilde), (p.w_ch, reset)], p.b_c)?;
    let c = tape.tanh(c)?;
    let state = interpolate(tape, z, h_prev, c)?;
    Ok(GruNodes { z, r, c, state })
}

/// Spatial GRU step over joint motion `m`, previous joint state `q_prev` and
/// co-attention context `o`.
pub fn spatial_gru_graph(tape: &mut Tape, m: Var, q_prev: Var, o: Var, p: &SpatialGruVars) -> Result<GruNodes> {
    let z = gate_sum(tape, &[(p.w_zm, m), (p.w_zq, q_prev), (p.w_zo, o)], p.b_z)?;
    let z = tape.sigmoid(z)?;
    let r = gate_sum(tape, &[(p.w_rm, m), (p.w_rq, q_prev), (p.w_ro, o)], p.b_r)?;
    let r = tape.sigmoid(r)?;
    let reset = tape.mul(r, q_prev)?;
    let c = gate_sum(tape, &[(p.w_cm, m), (p.w_cq, reset)], p.b_c)?;
    let c = tape.tanh(c)?;
    let state = interpolate(tape, z, q_prev, c)?;
    Ok(GruNodes { z, r, c, state })
}

/// `gamma = exp(-rho (tanh(W_fh h + b_h) - tanh(W_fm m + b_m))^2)`.
pub fn confidence_gate_graph(tape: &mut Tape, h_joint: Var, m_joint: Var, p: &GateVars, rho: f64) -> Result<Var> {
    if !rho.is_finite() || rho <= 0.0 {
        return Err(Error::Parameter(format!(
            "gate bandwidth rho must be positive, got {rho}"
        )));
    }
    let fh = gate_sum(tape, &[(p.w_fh, h_joint)], p.b_h)?;
    let fh = tape.tanh(fh)?;
    let fm = gate_sum(tape, &[(p.w_fm, m_joint)], p.b_m)?;
    let fm = tape.tanh(fm)?;
    let diff = tape.sub(fh, fm)?;
    let sq = tape.square(diff)?;
    let arg = tape.scale(sq, -rho)?;
    tape.exp(arg)
}

/// Chains the spatial GRU along `traversal`. At step `s` the visited joint
/// `k` contributes its motion rows `M_k` and context `O_k`; the state flows
/// from each step to the next regardless of joint. Returns, per joint, the
/// state produced at its last visit.
///
/// `joint_alphas[k - 1]` holds the `(K-1) x 1` joint-attention factors for
/// target `k`.
pub fn traverse_joints_graph(
    tape: &mut Tape,
    f_a: Var,
    f_tp: Var,
    traversal: &JointTraversal,
    joint_alphas: &[Var],
    spatial: &SpatialGruVars,
    q0: Var,
) -> Result<BTreeMap<usize, Var>> {
    let (d, cols) = tape.shape(f_tp);
    let joints = d / 3;
    traversal.validate(joints)?;
    if joint_alphas.len() != joints {
        return Err(Error::Argument(format!(
            "need joint-attention factors for {joints} joints, got {}",
            joint_alphas.len()
        )));
    }
    let mut contexts: BTreeMap<usize, Var> = BTreeMap::new();
    let mut motions: BTreeMap<usize, Var> = BTreeMap::new();
    let mut last = BTreeMap::new();
    let mut q = q0;
    for &k in traversal.order() {
        let o = match contexts.get(&k) {
            Some(o) => *o,
            None => {
                let co = coattention_map_graph(tape, f_a, f_tp, k, joint_alphas[k - 1])?;
                let o = coattention_context_graph(tape, co, k)?;
                contexts.insert(k, o);
                o
            }
        };
        let m = match motions.get(&k) {
            Some(m) => *m,
            None => {
                let m = tape.slice(f_tp, 3 * (k - 1), 0, 3, cols)?;
                motions.insert(k, m);
                m
            }
        };
        q = spatial_gru_graph(tape, m, q, o, spatial)?.state;
        last.insert(k, q);
    }
    Ok(last)
}

fn vector(tape: &mut Tape, v: &[f64]) -> Result<Var> {
    Ok(tape.leaf(Matrix::column_vector(v)?))
}

pub fn skeleton_gru_step(x_tilde: &[f64], h_prev: &[f64], h_a: &[f64], params: &SkeletonGruParams) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let x = vector(&mut tape, x_tilde)?;
    let h = vector(&mut tape, h_prev)?;
    let a = vector(&mut tape, h_a)?;
    let p = params.register(&mut tape);
    let out = skeleton_gru_graph(&mut tape, x, h, a, &p)?;
    Ok(tape.value(out.state).as_slice().to_vec())
}

pub fn spatial_gru_step(m: &Matrix, q_prev: &Matrix, o: &Matrix, params: &SpatialGruParams) -> Result<Matrix> {
    let mut tape = Tape::new();
    let mv = tape.leaf(m.clone());
    let qv = tape.leaf(q_prev.clone());
    let ov = tape.leaf(o.clone());
    let p = params.register(&mut tape);
    let out = spatial_gru_graph(&mut tape, mv, qv, ov, &p)?;
    Ok(tape.value(out.state).clone())
}

pub fn confidence_gate(h_joint: &[f64], m_joint: &[f64], params: &GateParams) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let h = vector(&mut tape, h_joint)?;
    let m = vector(&mut tape, m_joint)?;
    let p = params.register(&mut tape);
    let g = confidence_gate_graph(&mut tape, h, m, &p, params.rho)?;
    Ok(tape.value(g).as_slice().to_vec())
}

/// Runs [`traverse_joints_graph`] on plain values, from a zero initial state.
/// `forced_joint`, when given, replaces the joint-attention factors (entry
/// `k - 1` lists `alpha^k_l` for `l != k`).
pub fn traverse_joints(
    f_a: &FeatureMap,
    f_tp: &FeatureMap,
    traversal: &JointTraversal,
    attention: &JointAttentionParams,
    spatial: &SpatialGruParams,
    tau2: f64,
    forced_joint: Option<&[Vec<f64>]>,
) -> Result<BTreeMap<usize, Matrix>> {
    let mut tape = Tape::new();
    let fa = tape.leaf(f_a.matrix().clone());
    let ftp = tape.leaf(f_tp.matrix().clone());
    let sp = spatial.register(&mut tape);
    let alphas = match forced_joint {
        Some(forced) => forced
            .iter()
            .map(|a| vector(&mut tape, a))
            .collect::<Result<Vec<_>>>()?,
        None => {
            let ap: JointAttentionVars = attention.register(&mut tape);
            crate::attention::joint_attention_graph(&mut tape, ftp, &ap, tau2)?
        }
    };
    let q0 = tape.leaf(Matrix::zeros(3, f_tp.cols()));
    let last = traverse_joints_graph(&mut tape, fa, ftp, traversal, &alphas, &sp, q0)?;
    Ok(last.into_iter().map(|(k, v)| (k, tape.value(v).clone())).collect())
}
