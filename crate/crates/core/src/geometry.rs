//! Node placement and the air-to-ground line-of-sight probability model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::q_function;

/// Identifier of a node as written in the scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Position of a node in meters. `z` is the height above ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodePosition {
    pub node_id: NodeId,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl NodePosition {
    pub fn new(node_id: NodeId, x: f64, y: f64, z: f64) -> Result<Self> {
        let p = NodePosition { node_id, x, y, z };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) {
            return Err(Error::validation(format!(
                "node {} has a non-finite coordinate",
                self.node_id
            )));
        }
        if self.z < 0.0 {
            return Err(Error::validation(format!(
                "node {} has negative height z = {}",
                self.node_id, self.z
            )));
        }
        Ok(())
    }
}

/// Environmental constants of the LoS model (zeta, v, mu) and the square area side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Environment {
    pub zeta: f64,
    pub v: f64,
    #[serde(rename = "mu")]
    pub mu_env: f64,
    pub area_side: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Environment {
            zeta: 20.0,
            v: 3e-4,
            mu_env: 0.5,
            area_side: 100.0,
        }
    }
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("zeta", self.zeta),
            ("v", self.v),
            ("mu", self.mu_env),
            ("area_side", self.area_side),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!(
                    "environment.{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Horizontal, vertical and total distance between two nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distances {
    pub horizontal: f64,
    pub vertical: f64,
    pub total: f64,
}

pub fn distances(tx: &NodePosition, rx: &NodePosition) -> Distances {
    let horizontal = (tx.x - rx.x).hypot(tx.y - rx.y);
    let vertical = (tx.z - rx.z).abs();
    Distances {
        horizontal,
        vertical,
        total: horizontal.hypot(vertical),
    }
}

/// LoS probability between transmitter `tx` (height z_i) and receiver `rx` (height z_u).
///
/// Equal heights (compared exactly) use the single-height branch; otherwise the
/// Q-function difference branch. A zero horizontal distance with unequal heights
/// gives an exponent of zero and therefore probability one.
pub fn p_los(tx: &NodePosition, rx: &NodePosition, env: &Environment) -> f64 {
    let dist = distances(tx, rx);
    let scale = (env.v * env.mu_env).sqrt();
    let p = if tx.z == rx.z {
        let base = 1.0 - (-(tx.z * tx.z) / (2.0 * env.zeta * env.zeta)).exp();
        base.powf(dist.total * scale)
    } else {
        let dq = (q_function(tx.z / env.zeta) - q_function(rx.z / env.zeta)).abs();
        let base = 1.0 - (2.0 * std::f64::consts::PI).sqrt() * env.zeta / dist.vertical * dq;
        base.clamp(0.0, 1.0).powf(dist.horizontal * scale)
    };
    p.clamp(0.0, 1.0)
}

/// Places `count` nodes uniformly in the square area (a Poisson field conditioned on
/// its count). Entries of `fixed` are used verbatim for the first nodes; the rest
/// are drawn on the ground (z = 0) with ids continuing after the fixed ones.
pub fn place_nodes(count: usize, env: &Environment, seed: u64, fixed: &[NodePosition]) -> Result<Vec<NodePosition>> {
    if count == 0 {
        return Err(Error::validation("place_nodes requires count >= 1"));
    }
    env.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<NodePosition> = fixed.iter().take(count).copied().collect();
    let mut next_id = out.iter().map(|p| p.node_id.0).max().map_or(1, |m| m + 1);
    while out.len() < count {
        let x = rng.random::<f64>() * env.area_side;
        let y = rng.random::<f64>() * env.area_side;
        out.push(NodePosition {
            node_id: NodeId(next_id),
            x,
            y,
            z: 0.0,
        });
        next_id += 1;
    }
    Ok(out)
}
