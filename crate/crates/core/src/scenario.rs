//! Scenario files and the network derived from them.
//!
//! A scenario is a TOML (or JSON) document with optional sections
//! `environment`, `radio`, `traffic`, `interference`, `optimizer`, `sim` and a
//! `[[nodes]]` array. Each node carries an `id`, a `position = [x, y, z]`, a
//! `role` (`source`, `interferer`, `uav-main` or `uav-interferer`), the `target`
//! node it transmits to (absent for the receive-only main UAV), the fading
//! family of its own link (`rician`, `rayleigh` or `auto`) and optionally a
//! default threshold `beta`.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{beta_upper_bound, link_channel, FadingKind, LinkChannel, RadioParams};
use crate::error::{Error, Result};
use crate::geometry::{Environment, NodeId, NodePosition};
use crate::interference::{InterferenceModel, InterfererLink};
use crate::numerics::QuadratureSpec;
use crate::policy_opt::OptimizerConfig;
use crate::queueing::TrafficParams;
use crate::simcheck::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Source,
    Interferer,
    UavMain,
    UavInterferer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: u32,
    pub position: [f64; 3],
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<u32>,
    #[serde(default = "auto_fading")]
    pub fading: FadingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

fn auto_fading() -> FadingKind {
    FadingKind::Auto
}

impl NodeSpec {
    pub fn node_id(&self) -> NodeId {
        NodeId(self.id)
    }

    pub fn position(&self) -> NodePosition {
        NodePosition {
            node_id: self.node_id(),
            x: self.position[0],
            y: self.position[1],
            z: self.position[2],
        }
    }
}

/// Parsed scenario file before any derived quantity is computed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub environment: Environment,
    pub radio: RadioParams,
    pub traffic: TrafficParams,
    pub interference: InterferenceModel,
    pub optimizer: OptimizerConfig,
    pub sim: SimConfig,
    pub nodes: Vec<NodeSpec>,
}

/// The reference scenario shipped with the crate.
pub const BUNDLED_REFERENCE: &str = include_str!("../scenarios/reference.toml");

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    /// Reads a scenario, choosing JSON for `.json` files and TOML otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn reference() -> Self {
        Self::from_toml_str(BUNDLED_REFERENCE).expect("bundled scenario parses")
    }

    pub fn node(&self, id: u32) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Moves every `uav-interferer` node to height `h`.
    pub fn with_uav_altitude(mut self, h: f64) -> Result<Self> {
        let mut found = false;
        for n in self.nodes.iter_mut().filter(|n| n.role == Role::UavInterferer) {
            n.position[2] = h;
            found = true;
        }
        if !found {
            return Err(Error::validation("scenario has no uav-interferer node to move"));
        }
        Ok(self)
    }

    /// Keeps the UAVs and sources plus the first interferers (in file order) so
    /// that `count` nodes remain.
    pub fn with_num_nodes(mut self, count: usize) -> Result<Self> {
        let fixed = self.nodes.iter().filter(|n| n.role != Role::Interferer).count();
        let total = self.nodes.len();
        if count < fixed || count > total {
            return Err(Error::validation(format!(
                "num_nodes must lie in [{fixed}, {total}] for this scenario, got {count}"
            )));
        }
        let mut keep = count - fixed;
        self.nodes.retain(|n| {
            if n.role != Role::Interferer {
                true
            } else if keep > 0 {
                keep -= 1;
                true
            } else {
                false
            }
        });
        Ok(self)
    }

    pub fn with_gamma_th(mut self, g: f64) -> Result<Self> {
        if !(g > 0.0) {
            return Err(Error::validation(format!("gamma_th must be positive, got {g}")));
        }
        self.interference.gamma_th = g;
        Ok(self)
    }

    /// Checks the parameter blocks and node references and derives the network.
    pub fn build(&self) -> Result<Network> {
        Network::new(self)
    }
}

/// A transmitting node with its derived link state.
#[derive(Debug, Clone, PartialEq)]
pub struct TxNode {
    pub id: NodeId,
    pub role: Role,
    pub target: NodeId,
    pub link: LinkChannel,
    /// Largest stable threshold for this node's traffic.
    pub bound: f64,
    pub default_beta: Option<f64>,
    /// Interferers as (index into `Network::tx`, link to this node's receiver).
    pub interferers: Vec<(usize, InterfererLink)>,
}

/// Validated scenario with every link computed.
#[derive(Debug, Clone)]
pub struct Network {
    pub scenario: Scenario,
    pub tx: Vec<TxNode>,
    pub quad: QuadratureSpec,
}

impl Network {
    fn new(sc: &Scenario) -> Result<Self> {
        sc.environment.validate()?;
        sc.radio.validate()?;
        sc.traffic.validate()?;
        sc.interference.validate()?;
        sc.optimizer.validate()?;
        sc.sim.validate()?;

        let mut seen = HashSet::new();
        for n in &sc.nodes {
            if !seen.insert(n.id) {
                return Err(Error::validation(format!("duplicate node id {}", n.id)));
            }
            n.position().validate()?;
        }
        let mains = sc.nodes.iter().filter(|n| n.role == Role::UavMain).count();
        if mains != 1 {
            return Err(Error::validation(format!(
                "expected exactly one uav-main node, found {mains}"
            )));
        }
        if !sc.nodes.iter().any(|n| n.role == Role::Source) {
            return Err(Error::validation("scenario has no source node"));
        }
        let by_id: HashMap<u32, &NodeSpec> = sc.nodes.iter().map(|n| (n.id, n)).collect();
        for n in &sc.nodes {
            match (n.role, n.target) {
                (Role::UavMain, Some(_)) => {
                    return Err(Error::validation(format!(
                        "node {} is the main UAV and cannot have a target",
                        n.id
                    )));
                }
                (Role::UavMain, None) => {}
                (_, None) => {
                    return Err(Error::validation(format!("node {} transmits but has no target", n.id)));
                }
                (_, Some(t)) if t == n.id => {
                    return Err(Error::validation(format!("node {} targets itself", n.id)));
                }
                (_, Some(t)) if !by_id.contains_key(&t) => {
                    return Err(Error::validation(format!("node {} targets unknown node {t}", n.id)));
                }
                _ => {}
            }
        }

        let rp = &sc.radio;
        let env = &sc.environment;
        let senders: Vec<&NodeSpec> = sc.nodes.iter().filter(|n| n.target.is_some()).collect();
        let mut tx = Vec::with_capacity(senders.len());
        for n in &senders {
            let rx = by_id[&n.target.unwrap()];
            let link = link_channel(&n.position(), &rx.position(), env, rp, n.fading)?;
            let bound = beta_upper_bound(&link.fading, sc.traffic.lambda_n, sc.traffic.t_slot, rp.num_channels)?;
            if let Some(b) = n.beta {
                check_beta(n.node_id(), b, bound)?;
            }
            tx.push(TxNode {
                id: n.node_id(),
                role: n.role,
                target: rx.node_id(),
                link,
                bound,
                default_beta: n.beta,
                interferers: Vec::new(),
            });
        }
        for i in 0..tx.len() {
            let rx = by_id[&tx[i].target.0].position();
            let mut list = Vec::new();
            for (m, other) in senders.iter().enumerate() {
                if m == i || other.id == tx[i].target.0 {
                    continue;
                }
                let cross = link_channel(&other.position(), &rx, env, rp, FadingKind::Auto)?;
                list.push((
                    m,
                    InterfererLink {
                        own_fading: tx[m].link.fading,
                        cross_fading: cross.fading,
                        cross_power_gain: cross.power_gain(),
                        tx_power: rp.tx_power,
                    },
                ));
            }
            tx[i].interferers = list;
        }
        Ok(Network {
            scenario: sc.clone(),
            tx,
            quad: QuadratureSpec::default(),
        })
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.tx.iter().position(|t| t.id == id)
    }

    pub fn ids(&self) -> Vec<NodeId> {
        self.tx.iter().map(|t| t.id).collect()
    }

    pub fn bounds(&self) -> Vec<f64> {
        self.tx.iter().map(|t| t.bound).collect()
    }

    /// The designated source: the `optimizer.source` node if set, else the first `source` node.
    pub fn source_index(&self) -> Result<usize> {
        match self.scenario.optimizer.source {
            Some(id) => self
                .index_of(NodeId(id))
                .filter(|&i| self.tx[i].role == Role::Source)
                .ok_or_else(|| Error::validation(format!("optimizer.source {id} is not a transmitting source node"))),
            None => self
                .tx
                .iter()
                .position(|t| t.role == Role::Source)
                .ok_or_else(|| Error::validation("scenario has no source node")),
        }
    }

    /// Default thresholds: each node's `beta` if given, otherwise the initial value
    /// of its coordinate group (Rician interferers, Rayleigh interferers, source),
    /// clipped to the node's bound.
    pub fn default_betas(&self) -> Vec<f64> {
        let ini = self.scenario.optimizer.beta_ini;
        self.tx
            .iter()
            .map(|t| {
                t.default_beta.unwrap_or_else(|| {
                    let v = if t.role == Role::Source {
                        ini[2]
                    } else if t.link.fading.is_rician() {
                        ini[0]
                    } else {
                        ini[1]
                    };
                    v.min(t.bound)
                })
            })
            .collect()
    }

    /// Validates a full threshold vector against the per-node bounds.
    pub fn check_betas(&self, betas: &[f64]) -> Result<()> {
        if betas.len() != self.tx.len() {
            return Err(Error::validation(format!(
                "expected {} thresholds, got {}",
                self.tx.len(),
                betas.len()
            )));
        }
        for (t, &b) in self.tx.iter().zip(betas) {
            check_beta(t.id, b, t.bound)?;
        }
        Ok(())
    }

    /// Applies `(id, beta)` overrides on top of `base`.
    pub fn apply_overrides(&self, base: &[f64], overrides: &[(u32, f64)]) -> Result<Vec<f64>> {
        let mut out = base.to_vec();
        for &(id, b) in overrides {
            let i = self
                .index_of(NodeId(id))
                .ok_or_else(|| Error::validation(format!("beta override names node {id}, which does not transmit")))?;
            check_beta(NodeId(id), b, self.tx[i].bound)?;
            out[i] = b;
        }
        Ok(out)
    }
}

fn check_beta(id: NodeId, b: f64, bound: f64) -> Result<()> {
    if !(b >= 0.0 && b <= bound) {
        return Err(Error::validation(format!(
            "beta {b} for node {id} is outside [0, {bound}] (upper bound keeps lambda * T_slt <= mu)"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenario_builds() {
        let net = Scenario::reference().build().unwrap();
        assert_eq!(net.scenario.nodes.len(), 10);
        assert_eq!(net.tx.len(), 9);
        let src = net.source_index().unwrap();
        assert_eq!(net.tx[src].role, Role::Source);
        // each transmitter is interfered by every other sender except its own receiver
        for t in &net.tx {
            let expected = net.tx.iter().filter(|o| o.id != t.id && o.id != t.target).count();
            assert_eq!(t.interferers.len(), expected);
        }
        for t in &net.tx {
            assert!(t.bound > 0.0);
        }
        net.check_betas(&net.default_betas()).unwrap();
    }

    #[test]
    fn validation_names_the_offender() {
        let mut sc = Scenario::reference();
        sc.nodes[0].target = Some(77);
        let e = sc.build().unwrap_err().to_string();
        assert!(e.contains("77"), "{e}");

        let mut sc = Scenario::reference();
        sc.nodes[0].beta = Some(50.0);
        let e = sc.build().unwrap_err().to_string();
        assert!(e.contains("node 1") && e.contains("[0, "), "{e}");

        let mut sc = Scenario::reference();
        let dup = sc.nodes[1].clone();
        sc.nodes.push(dup);
        assert!(sc.build().unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = format!("{BUNDLED_REFERENCE}\n[sim2]\nx = 1\n");
        let e = Scenario::from_toml_str(&text).unwrap_err().to_string();
        assert!(e.contains("line"), "{e}");
    }

    #[test]
    fn json_and_toml_agree() {
        let sc = Scenario::reference();
        let json = serde_json::to_string(&sc).unwrap();
        assert_eq!(Scenario::from_json_str(&json).unwrap(), sc);
    }

    #[test]
    fn sweep_transforms() {
        let sc = Scenario::reference();
        let four = sc.clone().with_num_nodes(4).unwrap();
        assert_eq!(four.nodes.len(), 4);
        assert!(four.build().is_ok());
        assert!(sc.clone().with_num_nodes(2).is_err());
        let low = sc.clone().with_uav_altitude(10.0).unwrap();
        assert!(low
            .nodes
            .iter()
            .any(|n| n.role == Role::UavInterferer && n.position[2] == 10.0));
        assert!(sc.with_gamma_th(-1.0).is_err());
    }
}
