//! Threshold optimization: centralized grouped coordinate search (IA-TC),
//! distributed best-response rounds (IA-DTC) and baseline policies.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::NodeId;
use crate::throughput::Evaluator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    /// Every node answers the same snapshot of the previous round.
    #[default]
    Jacobi,
    /// Nodes update in order and see earlier updates of the same round.
    GaussSeidel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Initial `[Rician interferers, Rayleigh interferers, source]` thresholds for IA-TC.
    pub beta_ini: [f64; 3],
    pub stp_m: f64,
    pub stp_n: f64,
    /// Step of the distributed local searches.
    pub stp: f64,
    pub maxiter: usize,
    pub epsilon_r: f64,
    pub epsilon_beta: f64,
    pub update: UpdateRule,
    /// Optional caps on the shared interferer-group thresholds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_max_rice: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_max_ray: Option<f64>,
    /// Source node optimized by IA-TC; defaults to the first `source` node.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<u32>,
    /// Seed of the random baseline.
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            beta_ini: [3.0, 2.0, 4.0],
            stp_m: 0.05,
            stp_n: 0.02,
            stp: 0.05,
            maxiter: 100,
            epsilon_r: 1e-4,
            epsilon_beta: 1e-3,
            update: UpdateRule::Jacobi,
            group_max_rice: None,
            group_max_ray: None,
            source: None,
            seed: 7,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("stp_m", self.stp_m),
            ("stp_n", self.stp_n),
            ("stp", self.stp),
            ("epsilon_r", self.epsilon_r),
            ("epsilon_beta", self.epsilon_beta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("optimizer.{name} must be positive, got {v}")));
            }
        }
        if self.maxiter == 0 {
            return Err(Error::validation("optimizer.maxiter must be >= 1"));
        }
        if self.beta_ini.iter().any(|b| !(*b >= 0.0)) {
            return Err(Error::validation("optimizer.beta_ini entries must be >= 0"));
        }
        for (name, cap) in [
            ("group_max_rice", self.group_max_rice),
            ("group_max_ray", self.group_max_ray),
        ] {
            if let Some(c) = cap {
                if !(c > 0.0) {
                    return Err(Error::validation(format!("optimizer.{name} must be positive, got {c}")));
                }
            }
        }
        Ok(())
    }
}

/// Thresholds of every transmitter with their upper bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyVector {
    pub ids: Vec<NodeId>,
    pub beta: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PolicyVector {
    pub fn new(ev: &Evaluator, beta: Vec<f64>) -> Self {
        PolicyVector {
            ids: ev.network.ids(),
            beta,
            upper: ev.network.bounds(),
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.beta.iter().zip(&self.upper).all(|(b, u)| *b >= 0.0 && b <= u)
    }
}

/// Greedy line search along one coordinate.
///
/// Probes `x + stp` and `x - stp` (projected onto `[lo, hi]`), follows the
/// direction that strictly beats `r_best` (the larger gain wins, ties go up)
/// and keeps stepping while the objective strictly increases. Returns the
/// incumbent unchanged when neither probe improves.
pub fn coordinate_search<F>(mut objective: F, x: f64, lo: f64, hi: f64, stp: f64, r_best: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let project = |v: f64| v.clamp(lo, hi);
    let mut probe = |v: f64| -> Result<f64> {
        if v == x {
            Ok(f64::NEG_INFINITY)
        } else {
            objective(v)
        }
    };
    let up = project(x + stp);
    let down = project(x - stp);
    let r_up = probe(up)?;
    let r_down = probe(down)?;
    let (dir, mut cur, mut r_cur) = if r_up > r_best && r_up >= r_down {
        (1.0, up, r_up)
    } else if r_down > r_best {
        (-1.0, down, r_down)
    } else {
        return Ok((x, r_best));
    };
    loop {
        let next = project(cur + dir * stp);
        if next == cur {
            break;
        }
        let r = objective(next)?;
        if r > r_cur {
            cur = next;
            r_cur = r;
        } else {
            break;
        }
    }
    Ok((cur, r_cur))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaTcStep {
    pub iteration: usize,
    pub beta_rice: Option<f64>,
    pub beta_ray: Option<f64>,
    pub beta_n: f64,
    pub r_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaTcResult {
    pub source: NodeId,
    pub policy: PolicyVector,
    pub trace: Vec<IaTcStep>,
    pub r_initial: f64,
    pub r_best: f64,
    pub group_max_rice: Option<f64>,
    pub group_max_ray: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

struct Groups {
    source: usize,
    rice: Vec<usize>,
    ray: Vec<usize>,
    max_rice: Option<f64>,
    max_ray: Option<f64>,
}

fn groups(ev: &Evaluator, cfg: &OptimizerConfig) -> Result<Groups> {
    let source = ev.network.source_index()?;
    let (mut rice, mut ray) = (Vec::new(), Vec::new());
    for (i, t) in ev.network.tx.iter().enumerate() {
        if i == source {
            continue;
        }
        if t.link.fading.is_rician() {
            rice.push(i);
        } else {
            ray.push(i);
        }
    }
    let group_max = |members: &[usize], cap: Option<f64>| -> Option<f64> {
        if members.is_empty() {
            return None;
        }
        let b = members
            .iter()
            .map(|&i| ev.network.tx[i].bound)
            .fold(f64::INFINITY, f64::min);
        Some(cap.map_or(b, |c| c.min(b)))
    };
    Ok(Groups {
        source,
        max_rice: group_max(&rice, cfg.group_max_rice),
        max_ray: group_max(&ray, cfg.group_max_ray),
        rice,
        ray,
    })
}

/// Centralized optimization of the source's throughput over three coordinates:
/// a shared threshold for Rician interferers, one for Rayleigh interferers, and
/// the source's own threshold.
pub fn ia_tc(ev: &Evaluator, cfg: &OptimizerConfig) -> Result<IaTcResult> {
    cfg.validate()?;
    let g = groups(ev, cfg)?;
    let n = g.source;
    let bound_n = ev.network.tx[n].bound;
    let [ini_rice, ini_ray, ini_n] = cfg.beta_ini;
    for (name, v, max) in [
        ("Rician group", Some(ini_rice), g.max_rice),
        ("Rayleigh group", Some(ini_ray), g.max_ray),
        ("source", Some(ini_n), Some(bound_n)),
    ] {
        if let (Some(v), Some(m)) = (v, max) {
            if v > m {
                return Err(Error::validation(format!(
                    "initial {name} threshold {v} exceeds its maximum {m}"
                )));
            }
        }
    }

    let mut beta = ev.network.default_betas();
    let assign = |beta: &mut Vec<f64>, rice: Option<f64>, ray: Option<f64>, bn: f64| {
        if let Some(v) = rice {
            for &i in &g.rice {
                beta[i] = v;
            }
        }
        if let Some(v) = ray {
            for &i in &g.ray {
                beta[i] = v;
            }
        }
        beta[n] = bn;
    };
    let mut rice = g.max_rice.map(|_| ini_rice);
    let mut ray = g.max_ray.map(|_| ini_ray);
    let mut bn = ini_n;
    assign(&mut beta, rice, ray, bn);
    let r_initial = ev.throughput(n, &beta)?;
    let mut r_best = r_initial;
    let mut trace = Vec::new();
    let mut converged = false;

    for it in 1..=cfg.maxiter {
        let r_prev = r_best;
        if let (Some(v), Some(max)) = (rice, g.max_rice) {
            if v < max {
                let (x, r) = coordinate_search(
                    |x| {
                        let mut b = beta.clone();
                        assign(&mut b, Some(x), ray, bn);
                        ev.throughput(n, &b)
                    },
                    v,
                    0.0,
                    max,
                    cfg.stp_m,
                    r_best,
                )?;
                rice = Some(x);
                r_best = r;
                assign(&mut beta, rice, ray, bn);
            }
        }
        if let (Some(v), Some(max)) = (ray, g.max_ray) {
            if v < max {
                let (x, r) = coordinate_search(
                    |x| {
                        let mut b = beta.clone();
                        assign(&mut b, rice, Some(x), bn);
                        ev.throughput(n, &b)
                    },
                    v,
                    0.0,
                    max,
                    cfg.stp_m,
                    r_best,
                )?;
                ray = Some(x);
                r_best = r;
                assign(&mut beta, rice, ray, bn);
            }
        }
        let (x, r) = coordinate_search(
            |x| {
                let mut b = beta.clone();
                b[n] = x;
                ev.throughput(n, &b)
            },
            bn,
            0.0,
            bound_n,
            cfg.stp_n,
            r_best,
        )?;
        bn = x;
        r_best = r;
        assign(&mut beta, rice, ray, bn);
        trace.push(IaTcStep {
            iteration: it,
            beta_rice: rice,
            beta_ray: ray,
            beta_n: bn,
            r_best,
        });
        if (r_prev - r_best).abs() < cfg.epsilon_r {
            converged = true;
            break;
        }
    }
    let iterations = trace.len();
    Ok(IaTcResult {
        source: ev.network.tx[n].id,
        policy: PolicyVector::new(ev, beta),
        trace,
        r_initial,
        r_best,
        group_max_rice: g.max_rice,
        group_max_ray: g.max_ray,
        converged,
        iterations,
    })
}

/// Best response of node `n`: a line search over its own threshold that
/// maximizes its own throughput with every other threshold held at `betas`.
/// Returns the new threshold and the throughput it achieves.
pub fn local_coordinate_search(ev: &Evaluator, n: usize, betas: &[f64], stp: f64) -> Result<(f64, f64)> {
    let bound = ev.network.tx[n].bound;
    let mut b = betas.to_vec();
    let start = b[n].clamp(0.0, bound);
    b[n] = start;
    let r0 = ev.throughput(n, &b)?;
    coordinate_search(
        |x| {
            let mut bb = betas.to_vec();
            bb[n] = x;
            ev.throughput(n, &bb)
        },
        start,
        0.0,
        bound,
        stp,
        r0,
    )
}

/// One round of best responses; returns the new thresholds and the throughputs reached.
pub fn best_response_round(ev: &Evaluator, betas: &[f64], stp: f64, rule: UpdateRule) -> Result<(Vec<f64>, Vec<f64>)> {
    match rule {
        UpdateRule::Jacobi => {
            let out = (0..ev.len())
                .into_par_iter()
                .map(|n| local_coordinate_search(ev, n, betas, stp))
                .collect::<Result<Vec<_>>>()?;
            Ok(out.into_iter().unzip())
        }
        UpdateRule::GaussSeidel => {
            let mut cur = betas.to_vec();
            let mut rs = vec![0.0; ev.len()];
            for n in 0..ev.len() {
                let (x, r) = local_coordinate_search(ev, n, &cur, stp)?;
                cur[n] = x;
                rs[n] = r;
            }
            Ok((cur, rs))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaDtcResult {
    pub policy: PolicyVector,
    /// Thresholds after each round; row 0 is the selfish pass.
    pub beta_rounds: Vec<Vec<f64>>,
    /// Per-node throughput reached by each round's local searches.
    pub r_matrix: Vec<Vec<f64>>,
    pub converged: bool,
    pub rounds: usize,
}

/// Distributed optimization: every node starts at its bound, answers the others
/// selfishly, then all nodes repeat best responses against the previous round
/// until no threshold moves by `epsilon_beta` or more.
pub fn ia_dtc(ev: &Evaluator, cfg: &OptimizerConfig) -> Result<IaDtcResult> {
    cfg.validate()?;
    let start = ev.network.bounds();
    let (mut cand, r0) = best_response_round(ev, &start, cfg.stp, UpdateRule::Jacobi)?;
    let mut beta_rounds = vec![cand.clone()];
    let mut r_matrix = vec![r0];
    let mut converged = false;
    for _ in 0..cfg.maxiter {
        let snapshot = cand.clone();
        let (next, r) = best_response_round(ev, &snapshot, cfg.stp, cfg.update)?;
        let change = next
            .iter()
            .zip(&snapshot)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        cand = next;
        beta_rounds.push(cand.clone());
        r_matrix.push(r);
        if change < cfg.epsilon_beta {
            converged = true;
            break;
        }
    }
    let rounds = beta_rounds.len() - 1;
    Ok(IaDtcResult {
        policy: PolicyVector::new(ev, cand),
        beta_rounds,
        r_matrix,
        converged,
        rounds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Random,
    Aggressive,
    Selfish,
    Conservative,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::Random,
        BaselineKind::Aggressive,
        BaselineKind::Selfish,
        BaselineKind::Conservative,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::Aggressive => "aggressive",
            BaselineKind::Selfish => "selfish",
            BaselineKind::Conservative => "conservative",
        }
    }
}

impl FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::validation(format!(
                "unknown baseline '{s}' (random|aggressive|selfish|conservative)"
            ))
        })
    }
}

/// Fraction of the bound used by the conservative baseline.
pub const CONSERVATIVE_FRACTION: f64 = 0.95;

pub fn baseline_policy(kind: BaselineKind, ev: &Evaluator, seed: u64) -> Result<PolicyVector> {
    let bounds = ev.network.bounds();
    let beta = match kind {
        BaselineKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            bounds.iter().map(|&u| rng.random::<f64>() * u).collect()
        }
        BaselineKind::Aggressive => vec![0.0; bounds.len()],
        BaselineKind::Conservative => bounds.iter().map(|u| CONSERVATIVE_FRACTION * u).collect(),
        BaselineKind::Selfish => {
            best_response_round(ev, &bounds, ev.network.scenario.optimizer.stp, UpdateRule::Jacobi)?.0
        }
    };
    Ok(PolicyVector::new(ev, beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64, h: f64) -> f64 {
        let n = ((hi - lo) / h).round() as usize;
        (0..=n)
            .map(|i| lo + i as f64 * h)
            .fold((lo, f64::NEG_INFINITY), |(bx, br), x| {
                let r = f(x);
                if r > br {
                    (x, r)
                } else {
                    (bx, br)
                }
            })
            .0
    }

    #[test]
    fn constant_objective_keeps_input() {
        let (x, r) = coordinate_search(|_| Ok(1.0), 2.0, 0.0, 5.0, 0.1, 1.0).unwrap();
        assert_eq!((x, r), (2.0, 1.0));
    }

    #[test]
    fn concave_objective_reaches_grid_optimum() {
        for (peak, start) in [(3.33, 0.0), (0.71, 4.0), (2.0, 2.0), (4.96, 1.0)] {
            let f = |x: f64| -(x - peak) * (x - peak);
            let stp = 0.05;
            let (x, r) = coordinate_search(|x| Ok(f(x)), start, 0.0, 5.0, stp, f(start)).unwrap();
            let oracle = grid_argmax(f, 0.0, 5.0, stp / 10.0);
            assert!((x - oracle).abs() <= stp, "peak {peak}: {x} vs {oracle}");
            assert!(r >= f(start));
        }
    }

    #[test]
    fn bound_blocks_improving_direction() {
        let (x, _) = coordinate_search(Ok, 5.0, 0.0, 5.0, 0.1, 5.0).unwrap();
        assert_eq!(x, 5.0);
        let (x, _) = coordinate_search(|x| Ok(-x), 0.0, 0.0, 5.0, 0.1, 0.0).unwrap();
        assert_eq!(x, 0.0);
    }

    #[test]
    fn monotone_decreasing_objective_goes_to_zero() {
        let (x, _) = coordinate_search(|x| Ok(-x), 3.0, 0.0, 5.0, 0.07, -3.0).unwrap();
        assert_eq!(x, 0.0);
    }

    #[test]
    fn oversized_step_picks_better_projection() {
        let f = |x: f64| -(x - 4.0).abs();
        let (x, _) = coordinate_search(|x| Ok(f(x)), 2.0, 0.0, 5.0, 100.0, f(2.0)).unwrap();
        assert_eq!(x, 5.0);
    }

    #[test]
    fn never_returns_worse_than_incumbent() {
        let f = |x: f64| (3.0 * x).sin() + 0.3 * x;
        for i in 0..50 {
            let start = i as f64 * 0.1;
            let r0 = f(start);
            let (_, r) = coordinate_search(|x| Ok(f(x)), start, 0.0, 5.0, 0.05, r0).unwrap();
            assert!(r >= r0);
        }
    }

    #[test]
    fn baseline_names_round_trip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("greedy".parse::<BaselineKind>().is_err());
    }
}
