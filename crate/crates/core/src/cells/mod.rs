//! Recurrent cells and the full SC-GRU prediction step.
//!
//! One step at future time `t'`:
//!
//! 1. skeleton attention over the observed map `F` with the previous state;
//! 2. skeleton GRU update to `h_{t'}`;
//! 3. `F^{t'} = [F, h_{t'}]`;
//! 4. spatial GRU chained along the joint traversal, fed by co-attention
//!    contexts, giving a final joint state `Q_k` per joint;
//! 5. `h_joint` (last columns of `Q_k`) and `m_joint` (last columns of `M_k`);
//! 6. confidence gate `gamma`;
//! 7. `x_{t'+1} = (h_{t'} + gamma . h_joint) / 2`.

mod checkpoint;
mod gru;
mod params;

pub use checkpoint::{load_checkpoint, parse_checkpoint, render_checkpoint, save_checkpoint};
pub use gru::{
    confidence_gate, confidence_gate_graph, skeleton_gru_graph, skeleton_gru_step, spatial_gru_graph, spatial_gru_step,
    traverse_joints, traverse_joints_graph, GateParams, GateVars, GruNodes, SkeletonGruParams, SkeletonGruVars,
    SpatialGruParams, SpatialGruVars,
};
pub use params::{param_shapes, ModelVars, ParamKey, ParameterSet};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::{joint_attention_graph, skeleton_attention_graph};
use crate::datamodel::{build_feature_map, FeatureMap, JointTraversal, SkeletonSequence};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape, Var};

/// Architecture variants used for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Both attention factor families forced to 1.
    NoSca,
    /// Skeleton-attention factors forced to 1.
    NoSkelAttn,
    /// Joint-attention factors forced to 1.
    NoJointAttn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoSca, Variant::NoSkelAttn, Variant::NoJointAttn];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSca => "no_sca",
            Variant::NoSkelAttn => "no_skel_attn",
            Variant::NoJointAttn => "no_joint_attn",
        }
    }

    pub fn forces_skeleton(self) -> bool {
        matches!(self, Variant::NoSca | Variant::NoSkelAttn)
    }

    pub fn forces_joint(self) -> bool {
        matches!(self, Variant::NoSca | Variant::NoJointAttn)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config {
                key: "variant".into(),
                message: format!(
                    "unknown variant `{s}`; expected one of: {}",
                    Variant::ALL.map(Variant::as_str).join(", ")
                ),
            })
    }
}

/// How the skeleton state `h_0` is obtained before the first prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitState {
    /// Run the skeleton GRU (with skeleton attention) over `x_1..x_{T-1}`;
    /// the first prediction step then consumes `x_T`.
    Encoder,
    Zero,
}

/// Shapes and constants of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub joints: usize,
    /// Observed window length `T`.
    pub observed: usize,
    /// Skeleton GRU width `n`. When it differs from `3K`, `W_out` maps the
    /// state back to skeleton space.
    pub hidden: usize,
    /// Width `a` of both attention scoring layers.
    pub attention_width: usize,
    pub tau1: f64,
    pub tau2: f64,
    pub rho: f64,
    pub traversal: JointTraversal,
    pub variant: Variant,
    pub init_state: InitState,
}

impl ModelConfig {
    pub fn new(joints: usize, observed: usize) -> ModelConfig {
        ModelConfig {
            joints,
            observed,
            hidden: 3 * joints,
            attention_width: 3 * joints,
            tau1: 1.0,
            tau2: 1.0,
            rho: 1.0,
            traversal: JointTraversal::id(joints),
            variant: Variant::Full,
            init_state: InitState::Encoder,
        }
    }

    pub fn dim(&self) -> usize {
        3 * self.joints
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Config {
                key: key.into(),
                message,
            })
        };
        if self.joints < 2 {
            return bad("joints", format!("need at least 2 joints, got {}", self.joints));
        }
        if self.observed < 1 {
            return bad("observed", "observed window must be at least 1 frame".into());
        }
        if self.hidden < 1 || self.attention_width < 1 {
            return bad("hidden", "hidden and attention widths must be positive".into());
        }
        for (key, v) in [("tau1", self.tau1), ("tau2", self.tau2), ("rho", self.rho)] {
            if !v.is_finite() || v <= 0.0 {
                return bad(key, format!("must be positive, got {v}"));
            }
        }
        self.traversal.validate(self.joints)
    }
}

/// Caller-supplied attention factors replacing the computed ones.
///
/// `skeleton` has `T` entries; `joint[k - 1]` holds `alpha^k_l` for `l != k`
/// in increasing `l`. The ablation variants force the affected family to 1;
/// explicit values here take precedence over the variant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForcedFactors {
    pub skeleton: Option<Vec<f64>>,
    pub joint: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default)]
struct ForcedNodes {
    skeleton: Option<Var>,
    joint: Option<Vec<Var>>,
}

fn forced_nodes(tape: &mut Tape, config: &ModelConfig, forced: &ForcedFactors) -> Result<ForcedNodes> {
    let (t, k) = (config.observed, config.joints);
    let skeleton = match (&forced.skeleton, config.variant.forces_skeleton()) {
        (Some(v), _) => {
            if v.len() != t {
                return Err(Error::dim("forced skeleton factors", (1, v.len()), (1, t)));
            }
            Some(tape.leaf(Matrix::row_vector(v)?))
        }
        (None, true) => Some(tape.leaf(Matrix::ones(1, t))),
        (None, false) => None,
    };
    let joint = match (&forced.joint, config.variant.forces_joint()) {
        (Some(all), _) => {
            if all.len() != k || all.iter().any(|a| a.len() != k - 1) {
                return Err(Error::Argument(format!(
                    "forced joint factors need {k} lists of {} entries",
                    k - 1
                )));
            }
            Some(
                all.iter()
                    .map(|a| Ok(tape.leaf(Matrix::column_vector(a)?)))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        (None, true) => {
            let ones = tape.leaf(Matrix::ones(k - 1, 1));
            Some(vec![ones; k])
        }
        (None, false) => None,
    };
    Ok(ForcedNodes { skeleton, joint })
}

/// Maps the GRU state to skeleton space (identity when `n = 3K`).
fn project(tape: &mut Tape, vars: &ModelVars, h: Var) -> Result<Var> {
    match vars.try_get(ParamKey::WOut) {
        Some(w) => tape.matmul(w, h),
        None => Ok(h),
    }
}

/// Nodes of one recorded prediction step.
#[derive(Debug, Clone)]
pub struct StepNodes {
    pub x_next: Var,
    /// GRU state (`n x 1`).
    pub h: Var,
    /// State in skeleton space (`d x 1`), the appended column of `F^{t'}`.
    pub h_out: Var,
    pub skeleton_alphas: Var,
    pub joint_alphas: Vec<Var>,
    pub f_a: Var,
    pub f_tp: Var,
    pub q: BTreeMap<usize, Var>,
    pub h_joint: Var,
    pub m_joint: Var,
    pub gamma: Var,
}

#[allow(clippy::too_many_arguments)]
fn step_graph_inner(
    tape: &mut Tape,
    config: &ModelConfig,
    vars: &ModelVars,
    f: Var,
    h_prev: Var,
    x_tilde: Var,
    q0: Var,
    forced: &ForcedNodes,
) -> Result<StepNodes> {
    let d = config.dim();
    if tape.shape(f) != (d, config.observed) {
        return Err(Error::dim("feature map", tape.shape(f), (d, config.observed)));
    }
    let h_prev_out = project(tape, vars, h_prev)?;
    let skel = skeleton_attention_graph(
        tape,
        f,
        h_prev_out,
        &vars.skeleton_attention(),
        config.tau1,
        forced.skeleton,
    )?;
    let h = skeleton_gru_graph(tape, x_tilde, h_prev, skel.h_a, &vars.skeleton_gru())?.state;
    let h_out = project(tape, vars, h)?;
    let f_tp = tape.concat_cols(&[f, h_out])?;

    let joint_alphas = match &forced.joint {
        Some(v) => v.clone(),
        None => joint_attention_graph(tape, f_tp, &vars.joint_attention(), config.tau2)?,
    };
    let q = traverse_joints_graph(
        tape,
        skel.f_a,
        f_tp,
        &config.traversal,
        &joint_alphas,
        &vars.spatial_gru(),
        q0,
    )?;

    let last_col = config.observed;
    let mut q_last = Vec::with_capacity(config.joints);
    let mut m_last = Vec::with_capacity(config.joints);
    for k in 1..=config.joints {
        let qk = q[&k];
        q_last.push(tape.column(qk, last_col)?);
        m_last.push(tape.slice(f_tp, 3 * (k - 1), last_col, 3, 1)?);
    }
    let h_joint = tape.concat_rows(&q_last)?;
    let m_joint = tape.concat_rows(&m_last)?;
    let gamma = confidence_gate_graph(tape, h_joint, m_joint, &vars.gate(), config.rho)?;
    let gated = tape.mul(gamma, h_joint)?;
    let sum = tape.add(h_out, gated)?;
    let x_next = tape.scale(sum, 0.5)?;
    Ok(StepNodes {
        x_next,
        h,
        h_out,
        skeleton_alphas: skel.alphas,
        joint_alphas,
        f_a: skel.f_a,
        f_tp,
        q,
        h_joint,
        m_joint,
        gamma,
    })
}

/// Records one prediction step. `f` is the `d x T` observed map, `h_prev`
/// the GRU state and `x_tilde` the last prediction.
pub fn step_graph(
    tape: &mut Tape,
    config: &ModelConfig,
    vars: &ModelVars,
    f: Var,
    h_prev: Var,
    x_tilde: Var,
    forced: &ForcedFactors,
) -> Result<StepNodes> {
    let forced = forced_nodes(tape, config, forced)?;
    let q0 = tape.leaf(Matrix::zeros(3, config.observed + 1));
    step_graph_inner(tape, config, vars, f, h_prev, x_tilde, q0, &forced)
}

fn encode_inner(tape: &mut Tape, config: &ModelConfig, vars: &ModelVars, f: Var, forced: &ForcedNodes) -> Result<Var> {
    let mut h = tape.leaf(Matrix::zeros(config.hidden, 1));
    if config.init_state == InitState::Zero {
        return Ok(h);
    }
    let skel_vars = vars.skeleton_attention();
    let gru_vars = vars.skeleton_gru();
    for t in 0..config.observed - 1 {
        let x = tape.column(f, t)?;
        let h_out = project(tape, vars, h)?;
        let att = skeleton_attention_graph(tape, f, h_out, &skel_vars, config.tau1, forced.skeleton)?;
        h = skeleton_gru_graph(tape, x, h, att.h_a, &gru_vars)?.state;
    }
    Ok(h)
}

/// Records the initial GRU state `h_0` for the observed map `f`.
pub fn encode_graph(
    tape: &mut Tape,
    config: &ModelConfig,
    vars: &ModelVars,
    f: Var,
    forced: &ForcedFactors,
) -> Result<Var> {
    let forced = forced_nodes(tape, config, forced)?;
    encode_inner(tape, config, vars, f, &forced)
}

#[derive(Debug, Clone)]
pub struct RolloutNodes {
    pub h0: Var,
    pub predictions: Vec<Var>,
    pub steps: Vec<StepNodes>,
}

/// Records a full rollout of `horizon` self-fed steps from the observed map.
pub fn rollout_graph(
    tape: &mut Tape,
    config: &ModelConfig,
    vars: &ModelVars,
    f: Var,
    horizon: usize,
    forced: &ForcedFactors,
) -> Result<RolloutNodes> {
    if horizon < 1 {
        return Err(Error::Argument("prediction horizon must be at least 1".into()));
    }
    let forced = forced_nodes(tape, config, forced)?;
    let h0 = encode_inner(tape, config, vars, f, &forced)?;
    let q0 = tape.leaf(Matrix::zeros(3, config.observed + 1));
    let mut x = tape.column(f, config.observed - 1)?;
    let mut h = h0;
    let mut predictions = Vec::with_capacity(horizon);
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let step = step_graph_inner(tape, config, vars, f, h, x, q0, &forced)?;
        x = step.x_next;
        h = step.h;
        predictions.push(step.x_next);
        steps.push(step);
    }
    Ok(RolloutNodes { h0, predictions, steps })
}

/// Recurrent state carried between prediction steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ScGruState {
    /// Skeleton motion state (GRU width).
    pub h: Vec<f64>,
    /// Final joint motion state per joint from the last step (1-based ids).
    pub q: BTreeMap<usize, Matrix>,
    /// Last prediction, or the last observed frame before the first step.
    pub x_tilde: Vec<f64>,
}

/// Values recorded during one step, for inspection and ablation checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub skeleton_alphas: Vec<f64>,
    /// Entry `k - 1`: `alpha^k_l` for `l != k`.
    pub joint_alphas: Vec<Vec<f64>>,
    /// State in skeleton space.
    pub h_out: Vec<f64>,
    pub h_joint: Vec<f64>,
    pub gamma: Vec<f64>,
}

fn check_params(params: &ParameterSet, config: &ModelConfig) -> Result<()> {
    config.validate()?;
    params.validate(config)
}

/// Initial state for the observed map `f` (see [`InitState`]).
pub fn initial_state(f: &FeatureMap, params: &ParameterSet, config: &ModelConfig) -> Result<ScGruState> {
    check_params(params, config)?;
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, params);
    let fv = tape.leaf(f.matrix().clone());
    if tape.shape(fv) != (config.dim(), config.observed) {
        return Err(Error::dim(
            "feature map",
            tape.shape(fv),
            (config.dim(), config.observed),
        ));
    }
    let h = encode_graph(&mut tape, config, &vars, fv, &ForcedFactors::default())?;
    Ok(ScGruState {
        h: tape.value(h).as_slice().to_vec(),
        q: BTreeMap::new(),
        x_tilde: f.column(config.observed - 1),
    })
}

pub fn sc_gru_step(
    f: &FeatureMap,
    state: &ScGruState,
    params: &ParameterSet,
    config: &ModelConfig,
) -> Result<(Vec<f64>, ScGruState)> {
    let (x, state, _) = sc_gru_step_traced(f, state, params, config, &ForcedFactors::default())?;
    Ok((x, state))
}

/// [`sc_gru_step`] with optional forced attention factors, also returning the
/// intermediate values.
pub fn sc_gru_step_traced(
    f: &FeatureMap,
    state: &ScGruState,
    params: &ParameterSet,
    config: &ModelConfig,
    forced: &ForcedFactors,
) -> Result<(Vec<f64>, ScGruState, StepTrace)> {
    check_params(params, config)?;
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, params);
    let fv = tape.leaf(f.matrix().clone());
    let h = tape.leaf(Matrix::column_vector(&state.h)?);
    if tape.shape(h) != (config.hidden, 1) {
        return Err(Error::dim("state h", tape.shape(h), (config.hidden, 1)));
    }
    let x = tape.leaf(Matrix::column_vector(&state.x_tilde)?);
    if tape.shape(x) != (config.dim(), 1) {
        return Err(Error::dim("state x_tilde", tape.shape(x), (config.dim(), 1)));
    }
    let nodes = step_graph(&mut tape, config, &vars, fv, h, x, forced)?;
    let read = |v: Var| tape.value(v).as_slice().to_vec();
    let x_next = read(nodes.x_next);
    let new_state = ScGruState {
        h: read(nodes.h),
        q: nodes.q.iter().map(|(k, v)| (*k, tape.value(*v).clone())).collect(),
        x_tilde: x_next.clone(),
    };
    let trace = StepTrace {
        skeleton_alphas: read(nodes.skeleton_alphas),
        joint_alphas: nodes.joint_alphas.iter().map(|v| read(*v)).collect(),
        h_out: read(nodes.h_out),
        h_joint: read(nodes.h_joint),
        gamma: read(nodes.gamma),
    };
    Ok((x_next, new_state, trace))
}

/// Predicts `horizon` frames following the last `T` frames of `observed`.
pub fn rollout(
    observed: &SkeletonSequence,
    horizon: usize,
    params: &ParameterSet,
    config: &ModelConfig,
) -> Result<SkeletonSequence> {
    rollout_forced(observed, horizon, params, config, &ForcedFactors::default())
}

pub fn rollout_forced(
    observed: &SkeletonSequence,
    horizon: usize,
    params: &ParameterSet,
    config: &ModelConfig,
    forced: &ForcedFactors,
) -> Result<SkeletonSequence> {
    check_params(params, config)?;
    if observed.joints() != config.joints {
        return Err(Error::Dimension {
            op: "rollout joints",
            lhs: crate::error::Shape(observed.joints(), 3),
            rhs: crate::error::Shape(config.joints, 3),
        });
    }
    if observed.len() < config.observed {
        return Err(Error::Data(format!(
            "model observes {} frames, sequence has {}",
            config.observed,
            observed.len()
        )));
    }
    let f = build_feature_map(observed, observed.len() - config.observed..observed.len())?;
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, params);
    let fv = tape.leaf(f.into_matrix());
    let nodes = rollout_graph(&mut tape, config, &vars, fv, horizon, forced)?;
    let frames = nodes
        .predictions
        .iter()
        .map(|v| tape.value(*v).as_slice().to_vec())
        .collect();
    SkeletonSequence::new(config.joints, frames, observed.frame_interval_ms())
}
