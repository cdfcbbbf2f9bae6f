//! Overall packet loss and expected throughput of each node.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::transmit_prob;
use crate::error::Result;
use crate::geometry::NodeId;
use crate::interference::{
    exact_moments, gamma_fit, p_outage, ActivityDraws, InterferenceFit, InterferenceSampler, MomentMethod, SourceLink,
};
use crate::queueing::{p_delay, p_overflow};
use crate::scenario::Network;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub node_id: NodeId,
    pub beta: f64,
    pub mu: f64,
    pub p_dly: f64,
    pub p_ov: f64,
    pub p_out: f64,
    pub p_loss_exact: f64,
    pub p_loss_first_order: f64,
    /// Throughput under the first-order loss, the optimization objective.
    pub r_n: f64,
    /// Throughput under the exact loss composition.
    pub r_exact: f64,
    pub unstable: bool,
    pub clamped: bool,
}

/// `1 - (1 - p_ov)(1 - p_dly)(1 - p_out)`.
pub fn loss_exact(p_dly: f64, p_ov: f64, p_out: f64) -> f64 {
    let v = p_ov + (1.0 - p_ov) * p_dly + (1.0 - p_ov) * (1.0 - p_dly) * p_out;
    v.clamp(0.0, 1.0)
}

/// Assembles the breakdown from the three component losses.
#[allow(clippy::too_many_arguments)]
pub fn compose(
    node_id: NodeId,
    beta: f64,
    mu: f64,
    lambda_n: f64,
    p_dly: f64,
    p_ov: f64,
    p_out: f64,
    unstable: bool,
) -> LossBreakdown {
    let exact = loss_exact(p_dly, p_ov, p_out);
    let sum = p_dly + p_ov + p_out;
    let first = sum.min(1.0);
    LossBreakdown {
        node_id,
        beta,
        mu,
        p_dly,
        p_ov,
        p_out,
        p_loss_exact: exact,
        p_loss_first_order: first,
        r_n: lambda_n * (1.0 - first),
        r_exact: lambda_n * (1.0 - exact),
        unstable,
        clamped: sum > 1.0,
    }
}

type FitKey = (usize, Vec<i64>);

/// Evaluates losses of every transmitter of a network.
///
/// Exact moments are cached by the bit patterns of the interferer thresholds.
/// Sampled moments are computed at thresholds rounded to `quantum` and cached
/// by that rounded vector, so a result never depends on which evaluation
/// happened first. Samplers are built on first use.
pub struct Evaluator {
    pub network: Network,
    samplers: OnceLock<Vec<InterferenceSampler>>,
    quantum: f64,
    cache: Mutex<HashMap<FitKey, InterferenceFit>>,
}

impl Evaluator {
    pub fn new(network: Network) -> Result<Self> {
        network.scenario.interference.validate()?;
        let quantum = network.scenario.optimizer.stp / 10.0;
        Ok(Evaluator {
            network,
            samplers: OnceLock::new(),
            quantum,
            cache: Mutex::new(HashMap::new()),
        })
    }

    fn samplers(&self) -> Result<&[InterferenceSampler]> {
        if let Some(s) = self.samplers.get() {
            return Ok(s);
        }
        let sc = &self.network.scenario;
        let im = &sc.interference;
        let own: Vec<_> = self.network.tx.iter().map(|t| t.link.fading).collect();
        let act = ActivityDraws::new(&own, sc.radio.num_channels, im.moment_samples, im.moment_seed)?;
        let built = self
            .network
            .tx
            .iter()
            .enumerate()
            .map(|(n, t)| {
                InterferenceSampler::from_activity(&act, &t.interferers, im.moment_seed, (1 + n as u64) << 32)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.samplers.get_or_init(|| built))
    }

    fn method(&self) -> MomentMethod {
        self.network.scenario.interference.moments
    }

    pub fn len(&self) -> usize {
        self.network.tx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.network.tx.is_empty()
    }

    fn key(&self, n: usize, betas: &[f64]) -> FitKey {
        let exact = self.method() == MomentMethod::Exact;
        let q = self.network.tx[n]
            .interferers
            .iter()
            .map(|&(m, _)| {
                if exact {
                    betas[m].to_bits() as i64
                } else {
                    (betas[m] / self.quantum).round() as i64
                }
            })
            .collect();
        (n, q)
    }

    /// Gamma fit of node `n`'s interference under the full threshold vector `betas`.
    pub fn fit(&self, n: usize, betas: &[f64]) -> Result<InterferenceFit> {
        let key = self.key(n, betas);
        if let Some(f) = self.cache.lock().expect("fit cache poisoned").get(&key) {
            return Ok(*f);
        }
        let t = &self.network.tx[n];
        let (m1, m2) = match self.method() {
            MomentMethod::Exact => {
                let links: Vec<_> = t.interferers.iter().map(|&(_, l)| l).collect();
                let own: Vec<f64> = t.interferers.iter().map(|&(m, _)| betas[m]).collect();
                exact_moments(&links, &own, self.network.scenario.radio.num_channels)?
            }
            MomentMethod::Sampled => {
                let rounded: Vec<f64> = key.1.iter().map(|&k| k as f64 * self.quantum).collect();
                self.samplers()?[n].moments(&rounded)?
            }
        };
        let fit = gamma_fit(m1, m2)?;
        self.cache.lock().expect("fit cache poisoned").insert(key, fit);
        Ok(fit)
    }

    /// Empirical interference draws of node `n` under `betas` (moment-sampler realizations).
    pub fn interference_samples(&self, n: usize, betas: &[f64]) -> Result<Vec<f64>> {
        let own: Vec<f64> = self.network.tx[n].interferers.iter().map(|&(m, _)| betas[m]).collect();
        self.samplers()?[n].realizations(&own)
    }

    /// Loss breakdown and throughput of transmitter `n`.
    pub fn node(&self, n: usize, betas: &[f64]) -> Result<LossBreakdown> {
        let sc = &self.network.scenario;
        let t = &self.network.tx[n];
        let channels = sc.radio.num_channels;
        let beta = betas[n];
        let mu = transmit_prob(&t.link.fading, beta, channels)?;
        let dly = p_delay(mu, &sc.traffic)?;
        let ov = p_overflow(mu, &sc.traffic)?;
        let fit = self.fit(n, betas)?;
        let src = SourceLink {
            fading: t.link.fading,
            power_gain: t.link.power_gain(),
            tx_power: sc.radio.tx_power,
        };
        let out = p_outage(&src, beta, channels, &sc.interference, &fit, &self.network.quad)?;
        Ok(compose(
            t.id,
            beta,
            mu,
            sc.traffic.lambda_n,
            dly.prob,
            ov.prob,
            out,
            dly.unstable || ov.unstable,
        ))
    }

    /// Breakdowns of every transmitter, in network order.
    pub fn all(&self, betas: &[f64]) -> Result<Vec<LossBreakdown>> {
        self.network.check_betas(betas)?;
        (0..self.len()).into_par_iter().map(|n| self.node(n, betas)).collect()
    }

    /// First-order throughput of node `n`; the optimizers' objective.
    pub fn throughput(&self, n: usize, betas: &[f64]) -> Result<f64> {
        Ok(self.node(n, betas)?.r_n)
    }
}

/// One-shot evaluation of the designated source under `betas`.
pub fn expected_throughput(network: &Network, betas: &[f64], source: NodeId) -> Result<LossBreakdown> {
    let n = network
        .index_of(source)
        .ok_or_else(|| crate::Error::validation(format!("node {source} does not transmit")))?;
    network.check_betas(betas)?;
    Evaluator::new(network.clone())?.node(n, betas)
}
