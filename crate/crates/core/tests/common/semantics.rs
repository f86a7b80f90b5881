//! Ablation forcing, run determinism and traversal constants.

use rand::Rng;
use scrnn::cells::{
    render_checkpoint, rollout, rollout_forced, sc_gru_step_traced, ForcedFactors, ModelConfig, ParamKey, ScGruState,
    Variant,
};
use scrnn::datamodel::{synth_generate, JointTraversal, SynthKind, TraversalKind};
use scrnn::training::{train, TrainConfig};

use super::*;

pub const ABLATION_INSTANCES: usize = 40;

type Outcome = std::result::Result<usize, String>;

struct Instance {
    config: ModelConfig,
    params: ParameterSet,
    f: Mat,
    state: ScGruState,
}

fn instance(r: &mut ChaCha8Rng) -> Instance {
    let joints = r.gen_range(2..=4);
    let t = r.gen_range(1..=4);
    let mut config = ModelConfig::new(joints, t);
    if r.gen_bool(0.3) {
        config.hidden = r.gen_range(1..=12);
    }
    config.attention_width = r.gen_range(1..=6);
    let mut order: Vec<usize> = (1..=joints).collect();
    for _ in 0..r.gen_range(0..3) {
        order.push(r.gen_range(1..=joints));
    }
    config.traversal = JointTraversal::custom(order, joints).unwrap();
    let params = random_params(&config, r.gen(), 0.7);
    let d = 3 * joints;
    let f = rand_mat(r, d, t, 1.0);
    let state = ScGruState {
        h: rand_vec(r, config.hidden, 1.0),
        q: Default::default(),
        x_tilde: rand_vec(r, d, 1.0),
    };
    Instance {
        config,
        params,
        f,
        state,
    }
}

fn ones_for(variant: Variant, joints: usize, t: usize) -> ForcedFactors {
    ForcedFactors {
        skeleton: variant.forces_skeleton().then(|| vec![1.0; t]),
        joint: variant.forces_joint().then(|| vec![vec![1.0; joints - 1]; joints]),
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn same_bits(what: &str, a: &[f64], b: &[f64]) -> std::result::Result<(), String> {
    if bits(a) == bits(b) {
        Ok(())
    } else {
        Err(format!("{what}: {a:?} != {b:?}"))
    }
}

/// Every ablation equals the full pipeline with ones substituted by hand,
/// bit for bit, and matches the reference step with the same substitution.
pub fn ablation_forcing(seed: u64) -> Outcome {
    let mut r = rng(seed);
    let mut compared = 0;
    for _ in 0..ABLATION_INSTANCES {
        let inst = instance(&mut r);
        let (joints, t) = (inst.config.joints, inst.config.observed);
        let fm = observed_map(&inst.f);
        for variant in [Variant::NoSca, Variant::NoSkelAttn, Variant::NoJointAttn] {
            let cfg = ModelConfig {
                variant,
                ..inst.config.clone()
            };
            let (xv, sv, tv) =
                sc_gru_step_traced(&fm, &inst.state, &inst.params, &cfg, &ForcedFactors::default()).unwrap();
            let forced = ones_for(variant, joints, t);
            let (xe, se, te) = sc_gru_step_traced(&fm, &inst.state, &inst.params, &inst.config, &forced).unwrap();
            same_bits("prediction", &xv, &xe)?;
            same_bits("state", &sv.h, &se.h)?;
            if sv.q != se.q || tv != te {
                return Err(format!("{variant}: joint states or trace differ"));
            }
            if variant.forces_skeleton() && tv.skeleton_alphas.iter().any(|&a| a != 1.0) {
                return Err(format!("{variant}: skeleton factors not forced"));
            }
            if variant.forces_joint() && tv.joint_alphas.iter().flatten().any(|&a| a != 1.0) {
                return Err(format!("{variant}: joint factors not forced"));
            }

            let oracle = super::sc_gru_step(
                &inst.config,
                &inst.params,
                &inst.f,
                &inst.state.h,
                &inst.state.x_tilde,
                forced.skeleton.as_deref(),
                forced.joint.as_deref(),
            );
            let diff = max_rel_diff(&xe, &oracle.x_next);
            if diff > 1e-10 {
                return Err(format!("{variant}: reference differs by {diff:e}"));
            }
            compared += 1;
        }

        // Feeding the full model its own factors reproduces it exactly.
        let (xf, sf, tf) =
            sc_gru_step_traced(&fm, &inst.state, &inst.params, &inst.config, &ForcedFactors::default()).unwrap();
        let own = ForcedFactors {
            skeleton: Some(tf.skeleton_alphas.clone()),
            joint: Some(tf.joint_alphas.clone()),
        };
        let (xo, so, _) = sc_gru_step_traced(&fm, &inst.state, &inst.params, &inst.config, &own).unwrap();
        same_bits("self-substituted prediction", &xf, &xo)?;
        same_bits("self-substituted state", &sf.h, &so.h)?;
        compared += 1;
    }
    Ok(compared)
}

/// Forced factors make the prediction independent of the attention
/// parameters they replace.
pub fn ablation_ignores_replaced_params(seed: u64) -> Outcome {
    let mut r = rng(seed);
    let mut compared = 0;
    for _ in 0..ABLATION_INSTANCES {
        let inst = instance(&mut r);
        let seq = SkeletonSequence::new(
            inst.config.joints,
            (0..inst.config.observed)
                .map(|j| inst.f.iter().map(|row| row[j]).collect())
                .collect(),
            40.0,
        )
        .unwrap();
        let cases = [
            (
                Variant::NoSkelAttn,
                [ParamKey::UEh, ParamKey::UEf, ParamKey::WE, ParamKey::BE],
            ),
            (
                Variant::NoJointAttn,
                [ParamKey::UCb, ParamKey::UCm, ParamKey::WC, ParamKey::BL],
            ),
        ];
        for (variant, keys) in cases {
            let cfg = ModelConfig {
                variant,
                ..inst.config.clone()
            };
            let base = rollout(&seq, 3, &inst.params, &cfg).unwrap();
            let mut perturbed = inst.params.clone();
            for key in keys {
                for v in perturbed.get_mut(key).as_mut_slice() {
                    *v += r.gen_range(-1.0..1.0);
                }
            }
            let moved = rollout(&seq, 3, &perturbed, &cfg).unwrap();
            if base != moved {
                return Err(format!("{variant}: output depends on replaced parameters"));
            }
            let explicit = rollout_forced(
                &seq,
                3,
                &inst.params,
                &inst.config,
                &ones_for(variant, cfg.joints, cfg.observed),
            )
            .unwrap();
            if base != explicit {
                return Err(format!("{variant}: multi-step rollout differs from explicit ones"));
            }
            compared += 1;
        }
    }
    Ok(compared)
}

pub fn determinism_config() -> TrainConfig {
    TrainConfig {
        observed: 6,
        horizon: 4,
        batch_size: 4,
        epochs: 3,
        learning_rate: 0.05,
        seed: 42,
        threads: 1,
        ..TrainConfig::default()
    }
}

pub fn determinism_data() -> Vec<SkeletonSequence> {
    (0..6)
        .map(|s| synth_generate(SynthKind::WalkLike, 3, 14, s).unwrap())
        .collect()
}

/// Two runs with the same config and seed: identical loss history bits and
/// identical checkpoint text.
pub fn training_determinism(config: &TrainConfig) -> Outcome {
    let data = determinism_data();
    let a = train(&data, config).map_err(|e| e.to_string())?;
    let b = train(&data, config).map_err(|e| e.to_string())?;
    let ha: Vec<(usize, usize, u64)> = a.history.iter().map(|r| (r.epoch, r.step, r.loss.to_bits())).collect();
    let hb: Vec<(usize, usize, u64)> = b.history.iter().map(|r| (r.epoch, r.step, r.loss.to_bits())).collect();
    if ha.is_empty() || ha != hb {
        return Err("loss histories differ".into());
    }
    let ca = render_checkpoint(&a.model, &a.params).map_err(|e| e.to_string())?;
    let cb = render_checkpoint(&b.model, &b.params).map_err(|e| e.to_string())?;
    if ca != cb {
        return Err("checkpoints differ".into());
    }
    Ok(ha.len())
}

/// Builtin orders against the golden listings, element for element.
pub fn traversal_constants() -> Outcome {
    let golden: serde_json::Value =
        serde_json::from_str(include_str!("../golden/traversals.json")).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for kind in [
        TraversalKind::Traveling,
        TraversalKind::Surrounding,
        TraversalKind::TravelingFixed,
    ] {
        let expected: Vec<usize> = serde_json::from_value(golden[kind.as_str()].clone()).map_err(|e| e.to_string())?;
        let got = JointTraversal::builtin(kind, 17).map_err(|e| e.to_string())?;
        if got.order() != expected.as_slice() {
            return Err(format!("{kind}: {:?} != {:?}", got.order(), expected));
        }
        if got.len() != 33 || !(1..=17).all(|j| got.order().contains(&j)) {
            return Err(format!("{kind}: length or coverage wrong"));
        }
        checked += expected.len();
    }
    let traveling = JointTraversal::builtin(TraversalKind::Traveling, 17).unwrap();
    if traveling.order()[21..23] != [15, 15] {
        return Err("traveling order lost its repeated 15".into());
    }
    Ok(checked)
}
