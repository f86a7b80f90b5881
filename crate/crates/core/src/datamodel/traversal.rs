use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Traveling order over the 17-joint skeleton, kept verbatim. Position 23
/// repeats joint 15 where joint 16 is expected; see
/// [`TraversalKind::TravelingFixed`].
pub const TRAVELING_ORDER: [usize; 33] = [
    9, 8, 1, 2, 3, 4, 3, 2, 1, 5, 6, 7, 6, 5, 1, 8, 9, 10, 11, 10, 9, 15, 15, 17, 16, 15, 9, 12, 13, 14, 13, 12, 9,
];

/// Surrounding order over the 17-joint skeleton.
pub const SURROUNDING_ORDER: [usize; 33] = [
    9, 15, 16, 17, 16, 15, 9, 8, 1, 2, 3, 4, 3, 2, 1, 5, 6, 7, 6, 5, 1, 8, 9, 12, 13, 14, 13, 12, 9, 10, 11, 10, 9,
];

const BUILTIN_JOINTS: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraversalKind {
    /// Joints in id order `1..=K`.
    Id,
    Traveling,
    Surrounding,
    /// Traveling order with the repeated 15 replaced by 16.
    TravelingFixed,
    Custom,
}

impl TraversalKind {
    pub const NAMES: [&'static str; 4] = ["id", "traveling", "surrounding", "traveling_fixed"];

    pub fn as_str(self) -> &'static str {
        match self {
            TraversalKind::Id => "id",
            TraversalKind::Traveling => "traveling",
            TraversalKind::Surrounding => "surrounding",
            TraversalKind::TravelingFixed => "traveling_fixed",
            TraversalKind::Custom => "custom",
        }
    }
}

impl fmt::Display for TraversalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Visit order of the spatial recurrence over joints. Ids are 1-based and may
/// repeat; every joint is visited at least once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointTraversal {
    kind: TraversalKind,
    order: Vec<usize>,
}

impl JointTraversal {
    /// Id order for any skeleton size.
    pub fn id(joints: usize) -> Self {
        JointTraversal {
            kind: TraversalKind::Id,
            order: (1..=joints).collect(),
        }
    }

    /// Built-in order by kind. Body-structured orders need a 17-joint skeleton.
    pub fn builtin(kind: TraversalKind, joints: usize) -> Result<Self> {
        let order = match kind {
            TraversalKind::Id => return Ok(JointTraversal::id(joints)),
            TraversalKind::Traveling => TRAVELING_ORDER.to_vec(),
            TraversalKind::Surrounding => SURROUNDING_ORDER.to_vec(),
            TraversalKind::TravelingFixed => {
                let mut order = TRAVELING_ORDER.to_vec();
                order[22] = 16;
                order
            }
            TraversalKind::Custom => return Err(Error::Argument("custom traversals need an explicit order".into())),
        };
        if joints != BUILTIN_JOINTS {
            return Err(Error::Parameter(format!(
                "the {kind} traversal is defined for {BUILTIN_JOINTS} joints, got {joints}"
            )));
        }
        Ok(JointTraversal { kind, order })
    }

    pub fn from_name(name: &str, joints: usize) -> Result<Self> {
        let kind = match name {
            "id" => TraversalKind::Id,
            "traveling" => TraversalKind::Traveling,
            "surrounding" => TraversalKind::Surrounding,
            "traveling_fixed" => TraversalKind::TravelingFixed,
            other => {
                return Err(Error::Config {
                    key: "traversal".into(),
                    message: format!(
                        "unknown traversal `{other}`; expected one of {} or a list of joint ids",
                        TraversalKind::NAMES.join(", ")
                    ),
                })
            }
        };
        JointTraversal::builtin(kind, joints)
    }

    pub fn custom(order: Vec<usize>, joints: usize) -> Result<Self> {
        let t = JointTraversal {
            kind: TraversalKind::Custom,
            order,
        };
        t.validate(joints)?;
        Ok(t)
    }

    /// Checks ids lie in `1..=joints` and cover every joint.
    pub fn validate(&self, joints: usize) -> Result<()> {
        if let Some(bad) = self.order.iter().find(|&&k| k == 0 || k > joints) {
            return Err(Error::Argument(format!(
                "traversal references joint {bad}, skeleton has joints 1..={joints}"
            )));
        }
        let mut seen = vec![false; joints];
        for &k in &self.order {
            seen[k - 1] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Argument(format!("traversal never visits joint {}", missing + 1)));
        }
        Ok(())
    }

    pub fn kind(&self) -> TraversalKind {
        self.kind
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}
