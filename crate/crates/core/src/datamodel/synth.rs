//! Deterministic synthetic motion for desk-scale experiments.

use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{SkeletonSequence, DEFAULT_FRAME_INTERVAL_MS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Independent per-joint sinusoids with integer periods.
    Sinusoid,
    /// One shared gait cycle; joint `k` and joint `k + K/2` move in antiphase.
    WalkLike,
}

/// Generates `frames` frames of a `joints`-joint skeleton.
///
/// `Sinusoid`: coordinate `c` of joint `k` is `A_k sin(w_k t + phi_kc)` with
/// `w_k = 2 pi / P_k` for an integer period `P_k` in `[12, 40]` frames.
///
/// `WalkLike`: a shared period in `[20, 32]` frames; paired joints carry
/// mirrored sinusoids around per-coordinate offsets, so paired coordinates
/// are perfectly anti-correlated. With odd `K` the last joint is unpaired.
pub fn synth_generate(kind: SynthKind, joints: usize, frames: usize, seed: u64) -> Result<SkeletonSequence> {
    if joints < 2 {
        return Err(Error::Parameter(format!("synthetic data needs K >= 2, got {joints}")));
    }
    if frames < 4 {
        return Err(Error::Parameter(format!(
            "synthetic data needs at least 4 frames, got {frames}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 3 * joints;
    let mut data = vec![vec![0.0; d]; frames];

    match kind {
        SynthKind::Sinusoid => {
            for k in 0..joints {
                let amp = rng.gen_range(0.2..0.8);
                let period = rng.gen_range(12..=40) as f64;
                let omega = TAU / period;
                for c in 0..3 {
                    let phase = rng.gen_range(0.0..TAU);
                    for (t, frame) in data.iter_mut().enumerate() {
                        frame[3 * k + c] = amp * (omega * t as f64 + phase).sin();
                    }
                }
            }
        }
        SynthKind::WalkLike => {
            let half = joints / 2;
            let period = rng.gen_range(20.0..32.0);
            let omega = TAU / period;
            for k in 0..joints {
                if k >= half && k < 2 * half {
                    continue;
                }
                let partner = (k < half).then_some(k + half);
                for c in 0..3 {
                    let amp = rng.gen_range(0.2..0.5);
                    let phase = rng.gen_range(0.0..TAU);
                    let offset = rng.gen_range(-0.2..0.2);
                    let mirror = rng.gen_range(0.7..1.0);
                    let partner_offset = rng.gen_range(-0.2..0.2);
                    for (t, frame) in data.iter_mut().enumerate() {
                        let wave = amp * (omega * t as f64 + phase).sin();
                        frame[3 * k + c] = offset + wave;
                        if let Some(p) = partner {
                            frame[3 * p + c] = partner_offset - mirror * wave;
                        }
                    }
                }
            }
        }
    }
    SkeletonSequence::new(joints, data, DEFAULT_FRAME_INTERVAL_MS)
}
