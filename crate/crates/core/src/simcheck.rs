//! Slot-level Monte Carlo simulation of the network, used as an oracle for the
//! analytic loss model.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::NodeId;
use crate::interference::OutageConvention;
use crate::scenario::Network;
use crate::throughput::LossBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficMode {
    /// Poisson arrivals into a finite buffer with a waiting-time deadline.
    #[default]
    Queued,
    /// Every node always has a packet; queue losses are not measured.
    Saturated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub num_slots: u64,
    pub warmup_slots: u64,
    pub seed: u64,
    pub traffic: TrafficMode,
    pub convention: OutageConvention,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_slots: 1_000_000,
            warmup_slots: 10_000,
            seed: 1,
            traffic: TrafficMode::Queued,
            convention: OutageConvention::PerSlot,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_slots <= self.warmup_slots {
            return Err(Error::validation(format!(
                "sim.num_slots ({}) must exceed sim.warmup_slots ({})",
                self.num_slots, self.warmup_slots
            )));
        }
        Ok(())
    }

    pub fn measured_slots(&self) -> u64 {
        self.num_slots - self.warmup_slots
    }
}

/// Whole-run packet accounting of one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlowCounters {
    pub arrivals: u64,
    pub delivered: u64,
    pub outage_losses: u64,
    pub overflow_drops: u64,
    pub deadline_drops: u64,
    pub queued_end: u64,
}

impl FlowCounters {
    /// `arrivals = departures + overflow + deadline + still queued`.
    pub fn conserved(&self) -> bool {
        self.arrivals
            == self.delivered + self.outage_losses + self.overflow_drops + self.deadline_drops + self.queued_end
    }
}

/// Measured probability with its 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSimStats {
    pub node_id: NodeId,
    pub beta: f64,
    /// Counters over the measured window (after warmup).
    pub arrivals: u64,
    pub overflow_drops: u64,
    pub deadline_drops: u64,
    pub delivered: u64,
    pub outage_losses: u64,
    pub opportunities: u64,
    pub sinr_failures: u64,
    pub mu: Estimate,
    pub p_dly: Estimate,
    pub p_ov: Estimate,
    pub p_out: Estimate,
    /// Throughput in packets per second.
    pub r: Estimate,
    pub flow: FlowCounters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub slots: u64,
    pub warmup_slots: u64,
    pub seed: u64,
    pub traffic: TrafficMode,
    pub convention: OutageConvention,
    pub nodes: Vec<NodeSimStats>,
}

const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval half-width for `k` successes in `n` trials.
pub fn wilson_half_width(k: u64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z95 * Z95;
    Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

fn proportion(k: u64, n: u64) -> Estimate {
    Estimate {
        value: if n == 0 { 0.0 } else { k as f64 / n as f64 },
        ci: wilson_half_width(k, n),
    }
}

struct NodeState {
    queue: VecDeque<(u64, f64)>,
    used: f64,
    rng: ChaCha8Rng,
    window: [u64; 7],
    flow: FlowCounters,
}

// indices into NodeState::window
const ARR: usize = 0;
const OV: usize = 1;
const DL: usize = 2;
const DELIV: usize = 3;
const OUT: usize = 4;
const OPP: usize = 5;
const FAIL: usize = 6;

/// Runs the slot-level simulation of `network` under thresholds `betas`.
///
/// Each slot: Poisson arrivals with unit-mean exponential lengths are admitted
/// while they fit in the `B eta` buffer; each node draws its F channel
/// coefficients and may transmit on the best one if it clears its threshold;
/// the receiver computes the SINR against the co-channel transmissions of that
/// slot (fresh cross-link fading, no Gamma approximation) and a failed test
/// discards the packet; finally packets older than the deadline are dropped.
/// The SINR test is also evaluated in opportunity slots with an empty queue,
/// which gives the outage rate independent of queue occupancy.
pub fn simulate(network: &Network, betas: &[f64], cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    network.check_betas(betas)?;
    let sc = &network.scenario;
    let tp = &sc.traffic;
    let channels = sc.radio.num_channels;
    let noise = sc.interference.noise_power();
    let gamma = sc.interference.gamma_th;
    let power = sc.radio.tx_power;
    let deadline = (tp.t_threshold / tp.t_slot).round().max(1.0) as u64;
    let arrivals = Poisson::new(tp.load()).map_err(|e| Error::domain(e.to_string()))?;
    let saturated = cfg.traffic == TrafficMode::Saturated;

    let mut nodes: Vec<NodeState> = (0..network.tx.len())
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            NodeState {
                queue: VecDeque::new(),
                used: 0.0,
                rng,
                window: [0; 7],
                flow: FlowCounters::default(),
            }
        })
        .collect();
    let mut rx_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rx_rng.set_stream(1 << 32);

    let count = network.tx.len();
    let mut best = vec![0.0; count];
    let mut chan = vec![0usize; count];
    let mut opp = vec![false; count];
    let mut sending = vec![false; count];

    for t in 0..cfg.num_slots {
        let measured = t >= cfg.warmup_slots;
        let tick = measured as u64;
        for (i, st) in nodes.iter_mut().enumerate() {
            if !saturated {
                let k = st.rng.sample(arrivals) as u64;
                for _ in 0..k {
                    let len: f64 = st.rng.sample(Exp1);
                    st.flow.arrivals += 1;
                    st.window[ARR] += tick;
                    if st.used + len > tp.b_eta {
                        st.flow.overflow_drops += 1;
                        st.window[OV] += tick;
                    } else {
                        st.used += len;
                        st.queue.push_back((t, len));
                    }
                }
            }
            let (b, f) = network.tx[i].link.fading.sample_best(&mut st.rng, channels);
            best[i] = b;
            chan[i] = f;
            opp[i] = b >= betas[i];
            sending[i] = opp[i] && (saturated || !st.queue.is_empty());
        }

        for i in 0..count {
            if !opp[i] {
                continue;
            }
            let tx = &network.tx[i];
            let mut interference = 0.0;
            for (m, link) in &tx.interferers {
                if sending[*m] && chan[*m] == chan[i] {
                    let x = link.cross_fading.sample(&mut rx_rng);
                    interference += link.tx_power * link.cross_power_gain * x * x;
                }
            }
            let signal = power * tx.link.power_gain() * best[i] * best[i];
            let fail = signal / (interference + noise) < gamma;
            let st = &mut nodes[i];
            st.window[OPP] += tick;
            if fail {
                st.window[FAIL] += tick;
            }
            if sending[i] {
                if !saturated {
                    let (_, len) = st.queue.pop_front().expect("sending implies a queued packet");
                    st.used = (st.used - len).max(0.0);
                    if st.queue.is_empty() {
                        st.used = 0.0;
                    }
                }
                if fail {
                    st.flow.outage_losses += 1;
                    st.window[OUT] += tick;
                } else {
                    st.flow.delivered += 1;
                    st.window[DELIV] += tick;
                }
            }
        }

        if !saturated {
            for st in nodes.iter_mut() {
                while let Some(&(a, len)) = st.queue.front() {
                    if t + 1 - a > deadline {
                        st.queue.pop_front();
                        st.used = (st.used - len).max(0.0);
                        st.flow.deadline_drops += 1;
                        st.window[DL] += tick;
                    } else {
                        break;
                    }
                }
                if st.queue.is_empty() {
                    st.used = 0.0;
                }
            }
        }
    }

    let slots = cfg.measured_slots();
    let seconds = slots as f64 * tp.t_slot;
    let stats = nodes
        .into_iter()
        .enumerate()
        .map(|(i, mut st)| {
            st.flow.queued_end = st.queue.len() as u64;
            let w = st.window;
            let p_out = match cfg.convention {
                OutageConvention::PerSlot => proportion(w[FAIL], slots),
                OutageConvention::PerTransmission => proportion(w[FAIL], w[OPP]),
            };
            NodeSimStats {
                node_id: network.tx[i].id,
                beta: betas[i],
                arrivals: w[ARR],
                overflow_drops: w[OV],
                deadline_drops: w[DL],
                delivered: w[DELIV],
                outage_losses: w[OUT],
                opportunities: w[OPP],
                sinr_failures: w[FAIL],
                mu: proportion(w[OPP], slots),
                p_dly: proportion(w[DL], w[ARR]),
                p_ov: proportion(w[OV], w[ARR]),
                p_out,
                r: Estimate {
                    value: w[DELIV] as f64 / seconds,
                    ci: Z95 * (w[DELIV].max(1) as f64).sqrt() / seconds,
                },
                flow: st.flow,
            }
        })
        .collect();
    Ok(SimReport {
        slots,
        warmup_slots: cfg.warmup_slots,
        seed: cfg.seed,
        traffic: cfg.traffic,
        convention: cfg.convention,
        nodes: stats,
    })
}

/// One analytic-versus-empirical line of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub node_id: NodeId,
    pub component: String,
    pub analytic: f64,
    pub empirical: f64,
    pub ci: f64,
    pub rel_error: f64,
}

fn rel_error(analytic: f64, empirical: f64) -> f64 {
    if analytic == 0.0 {
        if empirical == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (empirical - analytic).abs() / analytic.abs()
    }
}

/// Side-by-side table of analytic and simulated quantities for every node.
pub fn compare(report: &SimReport, analytic: &[LossBreakdown]) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for (s, a) in report.nodes.iter().zip(analytic) {
        let mut push = |name: &str, an: f64, e: Estimate| {
            rows.push(ComparisonRow {
                node_id: s.node_id,
                component: name.to_string(),
                analytic: an,
                empirical: e.value,
                ci: e.ci,
                rel_error: rel_error(an, e.value),
            })
        };
        push("mu", a.mu, s.mu);
        if report.traffic == TrafficMode::Queued {
            push("p_dly", a.p_dly, s.p_dly);
            push("p_ov", a.p_ov, s.p_ov);
        }
        push("p_out", a.p_out, s.p_out);
        if report.traffic == TrafficMode::Queued {
            push("r", a.r_exact, s.r);
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::transmit_prob;
    use crate::channel::FadingKind;
    use crate::scenario::{NodeSpec, Role, Scenario};

    fn pair_scenario() -> Scenario {
        let mut sc = Scenario::reference();
        sc.nodes = vec![
            NodeSpec {
                id: 1,
                position: [95.0, 10.0, 0.0],
                role: Role::Source,
                target: Some(2),
                fading: FadingKind::Rician,
                beta: None,
            },
            NodeSpec {
                id: 2,
                position: [75.0, 50.0, 40.0],
                role: Role::UavMain,
                target: None,
                fading: FadingKind::Auto,
                beta: None,
            },
        ];
        sc
    }

    fn short(slots: u64) -> SimConfig {
        SimConfig {
            num_slots: slots,
            warmup_slots: 1_000,
            ..SimConfig::default()
        }
    }

    #[test]
    fn lossless_limit_recovers_arrival_rate() {
        let mut sc = pair_scenario();
        sc.traffic.b_eta = 1e12;
        sc.traffic.t_threshold = 1e9;
        sc.interference.gamma_th = 1e-12;
        let net = sc.build().unwrap();
        let rep = simulate(&net, &[0.0], &short(200_000)).unwrap();
        let r = rep.nodes[0].r;
        assert!((r.value - 80.0).abs() < 3.0 * r.ci, "{r:?}");
        assert_eq!(rep.nodes[0].outage_losses, 0);
    }

    #[test]
    fn opportunity_rate_matches_transmit_prob() {
        let net = pair_scenario().build().unwrap();
        let beta = 3.2;
        let rep = simulate(&net, &[beta], &short(300_000)).unwrap();
        let mu = transmit_prob(&net.tx[0].link.fading, beta, 14).unwrap();
        let n = rep.slots as f64;
        assert!((rep.nodes[0].mu.value - mu).abs() < 3.0 * (mu * (1.0 - mu) / n).sqrt());
    }

    #[test]
    fn flow_is_conserved_and_runs_repeat() {
        let net = Scenario::reference().build().unwrap();
        let betas = net.default_betas();
        let a = simulate(&net, &betas, &short(30_000)).unwrap();
        for s in &a.nodes {
            assert!(s.flow.conserved(), "{:?}", s.flow);
            for e in [s.mu, s.p_dly, s.p_ov, s.p_out] {
                assert!((0.0..=1.0).contains(&e.value) && e.ci > 0.0);
            }
        }
        let b = simulate(&net, &betas, &short(30_000)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn wilson_examples() {
        assert!(wilson_half_width(0, 100) > 0.0);
        let w = wilson_half_width(500, 1000);
        assert!((w - 1.96 * (0.25f64 / 1000.0).sqrt()).abs() < 1e-3);
    }
}
