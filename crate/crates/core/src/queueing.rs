//! Queue-side losses: waiting-time threshold violation and buffer overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::reg_lower_gamma;

/// Half-width around unit load inside which the overflow series expansion is used.
const UNIT_LOAD_BAND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficParams {
    /// Packet arrival rate (packets/s).
    pub lambda_n: f64,
    /// Slot duration (s).
    pub t_slot: f64,
    /// Waiting-time threshold (s).
    pub t_threshold: f64,
    /// Buffer capacity times the packet-length rate.
    pub b_eta: f64,
}

impl Default for TrafficParams {
    fn default() -> Self {
        TrafficParams {
            lambda_n: 80.0,
            t_slot: 0.005,
            t_threshold: 0.08,
            b_eta: 100.0,
        }
    }
}

impl TrafficParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_n", self.lambda_n),
            ("t_slot", self.t_slot),
            ("t_threshold", self.t_threshold),
            ("b_eta", self.b_eta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("traffic.{name} must be positive, got {v}")));
            }
        }
        if self.load() >= 1.0 {
            return Err(Error::InfeasibleTraffic { load: self.load() });
        }
        Ok(())
    }

    /// Arrivals per slot, `lambda_n * T_slt`.
    pub fn load(&self) -> f64 {
        self.lambda_n * self.t_slot
    }

    /// Offered load `rho = lambda_n T_slt / mu`.
    pub fn rho(&self, mu: f64) -> f64 {
        self.load() / mu
    }
}

/// A loss probability together with the unstable-queue flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueLoss {
    pub prob: f64,
    pub unstable: bool,
}

impl QueueLoss {
    fn unstable() -> Self {
        QueueLoss {
            prob: 1.0,
            unstable: true,
        }
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::domain(format!(
            "transmission probability must lie in [0, 1], got {mu}"
        )));
    }
    Ok(())
}

/// Probability that a packet waits longer than `T_th`, `exp(-(mu/T_slt - lambda_n) T_th)`.
pub fn p_delay(mu: f64, tp: &TrafficParams) -> Result<QueueLoss> {
    check_mu(mu)?;
    if mu == 0.0 {
        return Ok(QueueLoss::unstable());
    }
    let margin = mu / tp.t_slot - tp.lambda_n;
    if margin <= 0.0 {
        return Ok(QueueLoss::unstable());
    }
    Ok(QueueLoss {
        prob: (-margin * tp.t_threshold).exp(),
        unstable: false,
    })
}

/// Closed-form overflow approximation as a function of the offered load.
///
/// Valid for any `rho > 0`; within `1e-6` of unit load a first-order series
/// replaces the removable singularity.
pub fn overflow_from_rho(rho: f64, b_eta: f64) -> f64 {
    let eps = 1.0 - rho;
    let c = b_eta;
    if eps.abs() < UNIT_LOAD_BAND {
        let d = 1.0 + c;
        return 1.0 / d - eps * c * c / (2.0 * d * d);
    }
    let e = (-c * eps).exp();
    // 1 - rho e^{-c eps} rewritten so small eps does not cancel
    let den = -(-c * eps).exp_m1() + eps * e;
    (eps * e / den).clamp(0.0, 1.0)
}

/// Buffer-overflow probability; unstable loads (`rho > 1`) report 1 with the flag set.
pub fn p_overflow(mu: f64, tp: &TrafficParams) -> Result<QueueLoss> {
    check_mu(mu)?;
    if mu == 0.0 {
        return Ok(QueueLoss::unstable());
    }
    let rho = tp.rho(mu);
    if rho > 1.0 {
        return Ok(QueueLoss::unstable());
    }
    Ok(QueueLoss {
        prob: overflow_from_rho(rho, tp.b_eta),
        unstable: false,
    })
}

/// Unnormalized stationary weight of state `i` of the buffer chain (`pi_0 = 1`):
/// `rho^i * P[Pois(B eta) >= i]`.
pub fn markov_chain_pi(i: u32, mu: f64, tp: &TrafficParams) -> f64 {
    if i == 0 {
        return 1.0;
    }
    let rho = tp.rho(mu);
    let survive = reg_lower_gamma(i as f64, tp.b_eta).unwrap_or(0.0);
    rho.powi(i as i32) * survive
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use statrs::function::gamma::ln_gamma;

    fn reference() -> TrafficParams {
        TrafficParams::default()
    }

    #[test]
    fn delay_examples() {
        let tp = reference();
        let p = p_delay(1.0, &tp).unwrap();
        assert_relative_eq!(p.prob, (-9.6f64).exp(), max_relative = 1e-14);
        assert!((p.prob - 6.77e-5).abs() < 1e-7);
        assert!(!p.unstable);

        let edge = p_delay(0.4, &tp).unwrap();
        assert_eq!(edge.prob, 1.0);
        let slow = p_delay(0.2, &tp).unwrap();
        assert!(slow.unstable && slow.prob == 1.0);
        assert!(p_delay(0.0, &tp).unwrap().unstable);
        assert!(p_delay(1.5, &tp).is_err());

        let long = TrafficParams { t_threshold: 1e6, ..tp };
        assert_eq!(p_delay(0.9, &long).unwrap().prob, 0.0);
    }

    #[test]
    fn overflow_examples() {
        assert_relative_eq!(overflow_from_rho(1e-12, 100.0), (-100.0f64).exp(), max_relative = 1e-9);
        assert_relative_eq!(overflow_from_rho(1.0, 100.0), 1.0 / 101.0, max_relative = 1e-14);
        let tp = reference();
        assert_relative_eq!(p_overflow(0.4, &tp).unwrap().prob, 1.0 / 101.0, max_relative = 1e-12);
        let p = p_overflow(0.3, &tp).unwrap();
        assert!(p.unstable && p.prob == 1.0);
    }

    #[test]
    fn overflow_matches_direct_formula_away_from_unit_load() {
        for rho in [0.3, 0.5, 0.9, 0.978, 0.999] {
            for c in [10.0f64, 100.0] {
                let e = (-c * (1.0 - rho)).exp();
                let direct = (1.0 - rho) * e / (1.0 - rho * e);
                assert_relative_eq!(overflow_from_rho(rho, c), direct, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn overflow_continuous_across_unit_load() {
        for c in [1.0, 10.0, 100.0] {
            let at = overflow_from_rho(1.0, c);
            for k in 4..9 {
                let h = 10f64.powi(-k);
                assert!((overflow_from_rho(1.0 - h, c) - at).abs() < c * c * h);
                assert!((overflow_from_rho(1.0 + h, c) - at).abs() < c * c * h);
            }
            let h = 1e-9;
            assert!((overflow_from_rho(1.0 - h, c) - at).abs() < 1e-9 * c.max(1.0) * 10.0);
            // straddling the series band edge
            let inside = overflow_from_rho(1.0 - 0.999e-6, c);
            let outside = overflow_from_rho(1.0 - 1.001e-6, c);
            assert!((inside - outside).abs() < 1e-9, "{c}: {inside} {outside}");
        }
    }

    #[test]
    fn chain_weights_examples() {
        let tp = reference();
        let mu = 0.5;
        assert_eq!(markov_chain_pi(0, mu, &tp), 1.0);
        let rho = tp.rho(mu);
        assert_relative_eq!(
            markov_chain_pi(1, mu, &tp),
            rho * (1.0 - (-100.0f64).exp()),
            max_relative = 1e-14
        );
    }

    /// Long-run fraction of arrivals refused by the truncated chain.
    fn chain_overflow(rho: f64, b_eta: f64) -> f64 {
        let mu = 1.0;
        let tp = TrafficParams {
            lambda_n: rho / 0.005,
            t_slot: 0.005,
            t_threshold: 0.08,
            b_eta,
        };
        let (mut num, mut den) = (0.0, 0.0);
        let mut i = 0u32;
        loop {
            let pi = markov_chain_pi(i, mu, &tp);
            if pi < 1e-300 || i > 200_000 {
                break;
            }
            // refusal probability in state i: P[Pois = i] / P[Pois >= i]
            let ln_pmf = i as f64 * b_eta.ln() - b_eta - ln_gamma(i as f64 + 1.0);
            let refuse = if i == 0 {
                (-b_eta).exp()
            } else {
                ln_pmf.exp() / reg_lower_gamma(i as f64, b_eta).unwrap()
            };
            num += refuse * pi;
            den += pi;
            i += 1;
        }
        num / den
    }

    #[test]
    fn closed_form_agrees_with_truncated_chain() {
        for rho in [0.5, 0.9, 0.99] {
            for c in [10.0, 100.0] {
                let oracle = chain_overflow(rho, c);
                let closed = overflow_from_rho(rho, c);
                assert!(
                    (closed - oracle).abs() <= 1e-3 * oracle,
                    "rho={rho} B={c}: {closed} vs {oracle}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn losses_non_increasing_in_mu(a in 0.401..1.0f64, b in 0.401..1.0f64) {
            let tp = reference();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(p_delay(hi, &tp).unwrap().prob <= p_delay(lo, &tp).unwrap().prob);
            prop_assert!(p_overflow(hi, &tp).unwrap().prob <= p_overflow(lo, &tp).unwrap().prob + 1e-15);
        }

        #[test]
        fn losses_are_probabilities(mu in 0.0..=1.0f64, lam in 1.0..199.0f64, c in 0.5..500.0f64) {
            let tp = TrafficParams { lambda_n: lam, b_eta: c, ..reference() };
            let d = p_delay(mu, &tp).unwrap().prob;
            let o = p_overflow(mu, &tp).unwrap().prob;
            prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&o));
        }
    }
}
