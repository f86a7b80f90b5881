//! Named parameter store for the whole model.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{JointAttentionParams, JointAttentionVars, SkeletonAttentionParams, SkeletonAttentionVars};
use crate::cells::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape, Var};

/// Every trainable tensor of the model, named after its symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamKey {
    // skeleton attention
    UEh,
    UEf,
    WE,
    BE,
    // joint attention
    UCb,
    UCm,
    WC,
    BL,
    // skeleton GRU
    WZx,
    WZh,
    WZa,
    WRx,
    WRh,
    WRa,
    WCx,
    WCh,
    BZ,
    BR,
    BC,
    // spatial GRU
    WZm,
    WZq,
    WZo,
    WRm,
    WRq,
    WRo,
    WCm,
    WCq,
    BigBZ,
    BigBR,
    BigBC,
    // confidence gate
    WFh,
    WFm,
    BH,
    BM,
    // state projection, only when the hidden size differs from 3K
    WOut,
}

impl ParamKey {
    pub const ALL: [ParamKey; 35] = [
        ParamKey::UEh,
        ParamKey::UEf,
        ParamKey::WE,
        ParamKey::BE,
        ParamKey::UCb,
        ParamKey::UCm,
        ParamKey::WC,
        ParamKey::BL,
        ParamKey::WZx,
        ParamKey::WZh,
        ParamKey::WZa,
        ParamKey::WRx,
        ParamKey::WRh,
        ParamKey::WRa,
        ParamKey::WCx,
        ParamKey::WCh,
        ParamKey::BZ,
        ParamKey::BR,
        ParamKey::BC,
        ParamKey::WZm,
        ParamKey::WZq,
        ParamKey::WZo,
        ParamKey::WRm,
        ParamKey::WRq,
        ParamKey::WRo,
        ParamKey::WCm,
        ParamKey::WCq,
        ParamKey::BigBZ,
        ParamKey::BigBR,
        ParamKey::BigBC,
        ParamKey::WFh,
        ParamKey::WFm,
        ParamKey::BH,
        ParamKey::BM,
        ParamKey::WOut,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamKey::UEh => "U_eh",
            ParamKey::UEf => "U_ef",
            ParamKey::WE => "w_e",
            ParamKey::BE => "b_e",
            ParamKey::UCb => "U_cb",
            ParamKey::UCm => "U_cm",
            ParamKey::WC => "w_c",
            ParamKey::BL => "b_l",
            ParamKey::WZx => "W_zx",
            ParamKey::WZh => "W_zh",
            ParamKey::WZa => "W_za",
            ParamKey::WRx => "W_rx",
            ParamKey::WRh => "W_rh",
            ParamKey::WRa => "W_ra",
            ParamKey::WCx => "W_cx",
            ParamKey::WCh => "W_ch",
            ParamKey::BZ => "b_z",
            ParamKey::BR => "b_r",
            ParamKey::BC => "b_c",
            ParamKey::WZm => "W_zm",
            ParamKey::WZq => "W_zq",
            ParamKey::WZo => "W_zo",
            ParamKey::WRm => "W_rm",
            ParamKey::WRq => "W_rq",
            ParamKey::WRo => "W_ro",
            ParamKey::WCm => "W_cm",
            ParamKey::WCq => "W_cq",
            ParamKey::BigBZ => "B_z",
            ParamKey::BigBR => "B_r",
            ParamKey::BigBC => "B_c",
            ParamKey::WFh => "W_fh",
            ParamKey::WFm => "W_fm",
            ParamKey::BH => "b_h",
            ParamKey::BM => "b_m",
            ParamKey::WOut => "W_out",
        }
    }

    pub fn from_name(name: &str) -> Option<ParamKey> {
        ParamKey::ALL.iter().copied().find(|k| k.name() == name)
    }

    pub fn is_bias(self) -> bool {
        matches!(
            self,
            ParamKey::BE
                | ParamKey::BL
                | ParamKey::BZ
                | ParamKey::BR
                | ParamKey::BC
                | ParamKey::BigBZ
                | ParamKey::BigBR
                | ParamKey::BigBC
                | ParamKey::BH
                | ParamKey::BM
        )
    }

    /// Sub-network the tensor belongs to, used to group gradient reports.
    pub fn group(self) -> &'static str {
        match self {
            ParamKey::UEh | ParamKey::UEf | ParamKey::WE | ParamKey::BE => "skeleton_attention",
            ParamKey::UCb | ParamKey::UCm | ParamKey::WC | ParamKey::BL => "joint_attention",
            ParamKey::WZx
            | ParamKey::WZh
            | ParamKey::WZa
            | ParamKey::WRx
            | ParamKey::WRh
            | ParamKey::WRa
            | ParamKey::WCx
            | ParamKey::WCh
            | ParamKey::BZ
            | ParamKey::BR
            | ParamKey::BC => "skeleton_gru",
            ParamKey::WZm
            | ParamKey::WZq
            | ParamKey::WZo
            | ParamKey::WRm
            | ParamKey::WRq
            | ParamKey::WRo
            | ParamKey::WCm
            | ParamKey::WCq
            | ParamKey::BigBZ
            | ParamKey::BigBR
            | ParamKey::BigBC => "spatial_gru",
            ParamKey::WFh | ParamKey::WFm | ParamKey::BH | ParamKey::BM => "confidence_gate",
            ParamKey::WOut => "projection",
        }
    }
}

impl fmt::Display for ParamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Expected `(rows, cols)` of every tensor for a model configuration.
pub fn param_shapes(config: &ModelConfig) -> BTreeMap<ParamKey, (usize, usize)> {
    let d = config.dim();
    let n = config.hidden;
    let a = config.attention_width;
    let cols = config.observed + 1;
    let mut shapes = BTreeMap::new();
    for key in ParamKey::ALL {
        let shape = match key {
            ParamKey::UEh | ParamKey::UEf => (a, d),
            ParamKey::WE | ParamKey::BE | ParamKey::WC | ParamKey::BL => (a, 1),
            ParamKey::UCb | ParamKey::UCm => (a, 3),
            ParamKey::WZx | ParamKey::WZa | ParamKey::WRx | ParamKey::WRa | ParamKey::WCx => (n, d),
            ParamKey::WZh | ParamKey::WRh | ParamKey::WCh => (n, n),
            ParamKey::BZ | ParamKey::BR | ParamKey::BC => (n, 1),
            ParamKey::WZm
            | ParamKey::WZq
            | ParamKey::WZo
            | ParamKey::WRm
            | ParamKey::WRq
            | ParamKey::WRo
            | ParamKey::WCm
            | ParamKey::WCq => (3, 3),
            ParamKey::BigBZ | ParamKey::BigBR | ParamKey::BigBC => (3, cols),
            ParamKey::WFh | ParamKey::WFm => (d, d),
            ParamKey::BH | ParamKey::BM => (d, 1),
            ParamKey::WOut => {
                if n == d {
                    continue;
                }
                (d, n)
            }
        };
        shapes.insert(key, shape);
    }
    shapes
}

/// All model tensors, keyed in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    values: BTreeMap<ParamKey, Matrix>,
}

impl ParameterSet {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights; zero biases except
    /// the update-gate biases, which start at `+1`.
    pub fn init(config: &ModelConfig, seed: u64) -> ParameterSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = param_shapes(config)
            .into_iter()
            .map(|(key, (rows, cols))| {
                let m = if key.is_bias() {
                    let fill = if matches!(key, ParamKey::BZ | ParamKey::BigBZ) {
                        1.0
                    } else {
                        0.0
                    };
                    Matrix::filled(rows, cols, fill)
                } else {
                    // Scoring vectors are used transposed, so their fan-in is their length.
                    let fan_in = if cols == 1 { rows } else { cols };
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
                };
                (key, m)
            })
            .collect();
        ParameterSet { values }
    }

    pub fn from_map(values: BTreeMap<ParamKey, Matrix>) -> ParameterSet {
        ParameterSet { values }
    }

    /// Zero tensors with the same keys and shapes.
    pub fn zeros_like(&self) -> ParameterSet {
        ParameterSet {
            values: self
                .values
                .iter()
                .map(|(k, m)| (*k, Matrix::zeros(m.rows(), m.cols())))
                .collect(),
        }
    }

    /// Checks keys and shapes against a configuration.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let shapes = param_shapes(config);
        for (key, shape) in &shapes {
            let m = self.values.get(key).ok_or_else(|| Error::Config {
                key: key.name().into(),
                message: "parameter missing".into(),
            })?;
            if m.shape() != *shape {
                return Err(Error::dim(key.name(), m.shape(), *shape));
            }
        }
        if let Some(extra) = self.values.keys().find(|k| !shapes.contains_key(k)) {
            return Err(Error::Config {
                key: extra.name().into(),
                message: "parameter not used by this configuration".into(),
            });
        }
        Ok(())
    }

    pub fn get(&self, key: ParamKey) -> &Matrix {
        self.values
            .get(&key)
            .unwrap_or_else(|| panic!("parameter {key} not present"))
    }

    pub fn try_get(&self, key: ParamKey) -> Option<&Matrix> {
        self.values.get(&key)
    }

    pub fn get_mut(&mut self, key: ParamKey) -> &mut Matrix {
        self.values
            .get_mut(&key)
            .unwrap_or_else(|| panic!("parameter {key} not present"))
    }

    pub fn try_get_mut(&mut self, key: ParamKey) -> Option<&mut Matrix> {
        self.values.get_mut(&key)
    }

    pub fn insert(&mut self, key: ParamKey, value: Matrix) {
        self.values.insert(key, value);
    }

    pub fn keys(&self) -> impl Iterator<Item = ParamKey> + '_ {
        self.values.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamKey, &Matrix)> {
        self.values.iter().map(|(k, m)| (*k, m))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamKey, &mut Matrix)> {
        self.values.iter_mut().map(|(k, m)| (*k, m))
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.values.values().map(Matrix::len).sum()
    }

    pub fn global_norm(&self) -> f64 {
        self.values.values().map(Matrix::frobenius_norm_sq).sum::<f64>().sqrt()
    }

    /// `self += other * factor`, key by key.
    pub fn add_scaled(&mut self, other: &ParameterSet, factor: f64) {
        for (k, m) in self.values.iter_mut() {
            let o = other.get(*k);
            for (a, b) in m.as_mut_slice().iter_mut().zip(o.as_slice()) {
                *a += factor * b;
            }
        }
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        for m in self.values.values_mut() {
            for v in m.as_mut_slice() {
                *v *= factor;
            }
        }
    }

    pub fn skeleton_attention(&self) -> SkeletonAttentionParams {
        SkeletonAttentionParams {
            u_eh: self.get(ParamKey::UEh).clone(),
            u_ef: self.get(ParamKey::UEf).clone(),
            w_e: self.get(ParamKey::WE).clone(),
            b_e: self.get(ParamKey::BE).clone(),
        }
    }

    pub fn joint_attention(&self) -> JointAttentionParams {
        JointAttentionParams {
            u_cb: self.get(ParamKey::UCb).clone(),
            u_cm: self.get(ParamKey::UCm).clone(),
            w_c: self.get(ParamKey::WC).clone(),
            b_c: self.get(ParamKey::BL).clone(),
        }
    }

    pub fn skeleton_gru(&self) -> super::SkeletonGruParams {
        super::SkeletonGruParams {
            w_zx: self.get(ParamKey::WZx).clone(),
            w_zh: self.get(ParamKey::WZh).clone(),
            w_za: self.get(ParamKey::WZa).clone(),
            w_rx: self.get(ParamKey::WRx).clone(),
            w_rh: self.get(ParamKey::WRh).clone(),
            w_ra: self.get(ParamKey::WRa).clone(),
            w_cx: self.get(ParamKey::WCx).clone(),
            w_ch: self.get(ParamKey::WCh).clone(),
            b_z: self.get(ParamKey::BZ).clone(),
            b_r: self.get(ParamKey::BR).clone(),
            b_c: self.get(ParamKey::BC).clone(),
        }
    }

    pub fn spatial_gru(&self) -> super::SpatialGruParams {
        super::SpatialGruParams {
            w_zm: self.get(ParamKey::WZm).clone(),
            w_zq: self.get(ParamKey::WZq).clone(),
            w_zo: self.get(ParamKey::WZo).clone(),
            w_rm: self.get(ParamKey::WRm).clone(),
            w_rq: self.get(ParamKey::WRq).clone(),
            w_ro: self.get(ParamKey::WRo).clone(),
            w_cm: self.get(ParamKey::WCm).clone(),
            w_cq: self.get(ParamKey::WCq).clone(),
            b_z: self.get(ParamKey::BigBZ).clone(),
            b_r: self.get(ParamKey::BigBR).clone(),
            b_c: self.get(ParamKey::BigBC).clone(),
        }
    }

    pub fn gate(&self, rho: f64) -> super::GateParams {
        super::GateParams {
            w_fh: self.get(ParamKey::WFh).clone(),
            w_fm: self.get(ParamKey::WFm).clone(),
            b_h: self.get(ParamKey::BH).clone(),
            b_m: self.get(ParamKey::BM).clone(),
            rho,
        }
    }
}

/// Parameters registered as leaves on one tape.
#[derive(Debug, Clone)]
pub struct ModelVars {
    vars: BTreeMap<ParamKey, Var>,
}

impl ModelVars {
    pub fn register(tape: &mut Tape, params: &ParameterSet) -> ModelVars {
        ModelVars {
            vars: params.iter().map(|(k, m)| (k, tape.leaf(m.clone()))).collect(),
        }
    }

    pub fn get(&self, key: ParamKey) -> Var {
        self.vars[&key]
    }

    pub fn try_get(&self, key: ParamKey) -> Option<Var> {
        self.vars.get(&key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamKey, Var)> + '_ {
        self.vars.iter().map(|(k, v)| (*k, *v))
    }

    pub fn skeleton_attention(&self) -> SkeletonAttentionVars {
        SkeletonAttentionVars {
            u_eh: self.get(ParamKey::UEh),
            u_ef: self.get(ParamKey::UEf),
            w_e: self.get(ParamKey::WE),
            b_e: self.get(ParamKey::BE),
        }
    }

    pub fn joint_attention(&self) -> JointAttentionVars {
        JointAttentionVars {
            u_cb: self.get(ParamKey::UCb),
            u_cm: self.get(ParamKey::UCm),
            w_c: self.get(ParamKey::WC),
            b_c: self.get(ParamKey::BL),
        }
    }

    pub fn skeleton_gru(&self) -> super::SkeletonGruVars {
        super::SkeletonGruVars {
            w_zx: self.get(ParamKey::WZx),
            w_zh: self.get(ParamKey::WZh),
            w_za: self.get(ParamKey::WZa),
            w_rx: self.get(ParamKey::WRx),
            w_rh: self.get(ParamKey::WRh),
            w_ra: self.get(ParamKey::WRa),
            w_cx: self.get(ParamKey::WCx),
            w_ch: self.get(ParamKey::WCh),
            b_z: self.get(ParamKey::BZ),
            b_r: self.get(ParamKey::BR),
            b_c: self.get(ParamKey::BC),
        }
    }

    pub fn spatial_gru(&self) -> super::SpatialGruVars {
        super::SpatialGruVars {
            w_zm: self.get(ParamKey::WZm),
            w_zq: self.get(ParamKey::WZq),
            w_zo: self.get(ParamKey::WZo),
            w_rm: self.get(ParamKey::WRm),
            w_rq: self.get(ParamKey::WRq),
            w_ro: self.get(ParamKey::WRo),
            w_cm: self.get(ParamKey::WCm),
            w_cq: self.get(ParamKey::WCq),
            b_z: self.get(ParamKey::BigBZ),
            b_r: self.get(ParamKey::BigBR),
            b_c: self.get(ParamKey::BigBC),
        }
    }

    pub fn gate(&self) -> super::GateVars {
        super::GateVars {
            w_fh: self.get(ParamKey::WFh),
            w_fm: self.get(ParamKey::WFm),
            b_h: self.get(ParamKey::BH),
            b_m: self.get(ParamKey::BM),
        }
    }
}
