//! Path loss, Rician K-factor blending, fading laws and the best-channel
//! transmission probability.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distances, p_los, Environment, NodePosition};
use crate::numerics::{marcum_q1_pair, rician_pdf};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Fading density level below which the tail is ignored by integrals.
pub const TAIL_DENSITY: f64 = 1e-12;

/// Radio and propagation constants shared by every link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub carrier_freq: f64,
    pub d0: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    pub k_los: f64,
    pub k_nlos: f64,
    pub omega: f64,
    pub num_channels: usize,
    pub tx_power: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            carrier_freq: 2.4e9,
            d0: 10.0,
            alpha_los: 2.0,
            alpha_nlos: 3.5,
            k_los: 15.0,
            k_nlos: 1.0,
            omega: 2.0,
            num_channels: 14,
            tx_power: 0.5,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq", self.carrier_freq),
            ("d0", self.d0),
            ("alpha_los", self.alpha_los),
            ("k_nlos", self.k_nlos),
            ("omega", self.omega),
            ("tx_power", self.tx_power),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("radio.{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha_nlos >= self.alpha_los) {
            return Err(Error::validation("radio.alpha_nlos must be >= radio.alpha_los"));
        }
        if !(self.k_los >= self.k_nlos) {
            return Err(Error::validation("radio.k_los must be >= radio.k_nlos"));
        }
        if self.num_channels == 0 {
            return Err(Error::validation("radio.num_channels must be >= 1"));
        }
        Ok(())
    }

    pub fn carrier_wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Reference-distance constant `lambda^2 / (16 pi^2 d0^2)`.
    pub fn path_constant(&self) -> f64 {
        let w = self.carrier_wavelength();
        w * w / (16.0 * std::f64::consts::PI.powi(2) * self.d0 * self.d0)
    }
}

/// Distribution of a single-channel fading coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum FadingFamily {
    /// Rician envelope with LoS amplitude `b = sqrt(2K)` and unit-variance scatter.
    Rician { b: f64 },
    /// Rayleigh envelope with mean power `omega`.
    Rayleigh { omega: f64 },
}

/// Fading family requested by configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FadingKind {
    Rician,
    Rayleigh,
    /// Rician iff the link's LoS probability is at least 0.5.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkTypeSource {
    Configured,
    ThresholdRule,
}

impl FadingFamily {
    pub fn is_rician(&self) -> bool {
        matches!(self, FadingFamily::Rician { .. })
    }

    /// `(P[h < x], P[h >= x])`.
    pub fn cdf_pair(&self, x: f64) -> Result<(f64, f64)> {
        if x.is_nan() || x < 0.0 {
            return Err(Error::domain(format!("fading cdf requires x >= 0, got {x}")));
        }
        Ok(match *self {
            FadingFamily::Rician { b } => {
                if x.is_infinite() {
                    (1.0, 0.0)
                } else {
                    let (q, qc) = marcum_q1_pair(b, x)?;
                    (qc, q)
                }
            }
            FadingFamily::Rayleigh { omega } => {
                let e = -x * x / omega;
                (-e.exp_m1(), e.exp())
            }
        })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            FadingFamily::Rician { b } => rician_pdf(b, x),
            FadingFamily::Rayleigh { omega } => 2.0 * x / omega * (-x * x / omega).exp(),
        }
    }

    /// Density of the best of `channels` i.i.d. coefficients.
    pub fn max_pdf(&self, x: f64, channels: usize) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let cdf = self.cdf_pair(x).map(|(c, _)| c).unwrap_or(1.0);
        let f = channels as f64;
        f * cdf.powi(channels as i32 - 1) * self.pdf(x)
    }

    /// `P[max of channels coefficients < x]`.
    pub fn max_cdf(&self, x: f64, channels: usize) -> Result<f64> {
        Ok(self.cdf_pair(x)?.0.powi(channels as i32))
    }

    /// Second moment `E[h^2]`.
    pub fn mean_power(&self) -> f64 {
        match *self {
            FadingFamily::Rician { b } => 2.0 + b * b,
            FadingFamily::Rayleigh { omega } => omega,
        }
    }

    /// Fourth moment `E[h^4]`.
    pub fn power_second_moment(&self) -> f64 {
        match *self {
            FadingFamily::Rician { b } => b.powi(4) + 8.0 * b * b + 8.0,
            FadingFamily::Rayleigh { omega } => 2.0 * omega * omega,
        }
    }

    /// Point beyond which `channels * pdf` stays below [`TAIL_DENSITY`].
    pub fn tail_cutoff(&self, channels: usize) -> f64 {
        let start = match *self {
            FadingFamily::Rician { b } => b + 1.0,
            FadingFamily::Rayleigh { omega } => (0.5 * omega).sqrt() + 1.0,
        };
        let mut x = start;
        while channels as f64 * self.pdf(x) >= TAIL_DENSITY {
            x += 0.25;
        }
        x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            FadingFamily::Rician { b } => {
                let i: f64 = rng.sample(StandardNormal);
                let q: f64 = rng.sample(StandardNormal);
                (b + i).hypot(q)
            }
            FadingFamily::Rayleigh { omega } => {
                let e: f64 = rng.sample(Exp1);
                (omega * e).sqrt()
            }
        }
    }

    /// Draws `channels` coefficients and returns the largest with its channel index.
    pub fn sample_best<R: Rng + ?Sized>(&self, rng: &mut R, channels: usize) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for f in 0..channels {
            let x = self.sample(rng);
            if x > best {
                best = x;
                arg = f;
            }
        }
        (best, arg)
    }
}

/// Derived state of one transmitter-receiver link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkChannel {
    pub distance: f64,
    pub p_los: f64,
    /// Square root of the path loss.
    pub path_gain: f64,
    pub fading: FadingFamily,
    pub link_type_source: LinkTypeSource,
}

impl LinkChannel {
    /// Mean received power per unit transmit power and unit fading power.
    pub fn power_gain(&self) -> f64 {
        self.path_gain * self.path_gain
    }
}

/// Blended path-loss exponent.
pub fn path_loss_exponent(p_los: f64, rp: &RadioParams) -> f64 {
    rp.alpha_los * p_los + rp.alpha_nlos * (1.0 - p_los)
}

/// Amplitude gain `sqrt(c (d0/d)^alpha)` of the single-slope model.
pub fn path_gain(d: f64, alpha: f64, rp: &RadioParams) -> Result<f64> {
    if !(d >= rp.d0) {
        return Err(Error::domain(format!(
            "link distance {d} m is below the reference distance d0 = {} m; move the nodes apart or reject the scenario",
            rp.d0
        )));
    }
    Ok((rp.path_constant() * (rp.d0 / d).powf(alpha)).sqrt())
}

/// Distance-dependent Rician factor interpolated between K_NLoS and K_LoS.
pub fn rician_k(p_los: f64, rp: &RadioParams) -> f64 {
    rp.k_nlos * ((rp.k_los / rp.k_nlos).ln() * p_los * p_los).exp()
}

pub fn fading_cdf(fam: &FadingFamily, x: f64) -> Result<f64> {
    fam.cdf_pair(x).map(|(c, _)| c)
}

/// Probability that the best of `channels` coefficients clears `beta`: `1 - CDF(beta)^F`.
pub fn transmit_prob(fam: &FadingFamily, beta: f64, channels: usize) -> Result<f64> {
    if channels == 0 {
        return Err(Error::domain("transmit_prob requires at least one channel"));
    }
    let (cdf, _) = fam.cdf_pair(beta)?;
    if cdf <= 0.0 {
        return Ok(1.0);
    }
    Ok((-(channels as f64 * cdf.ln()).exp_m1()).clamp(0.0, 1.0))
}

/// Largest threshold that still keeps the offered load at or below one,
/// i.e. the beta solving `transmit_prob(beta) = lambda_n * T_slt`.
pub fn beta_upper_bound(fam: &FadingFamily, lambda_n: f64, t_slot: f64, channels: usize) -> Result<f64> {
    let load = lambda_n * t_slot;
    if !(load < 1.0) {
        return Err(Error::InfeasibleTraffic { load });
    }
    if !(load > 0.0) || channels == 0 {
        return Err(Error::domain(format!(
            "beta_upper_bound requires positive load and channels, got load={load}, F={channels}"
        )));
    }
    // target single-channel exceedance probability
    let target = -((1.0 - load).ln() / channels as f64).exp_m1();
    match *fam {
        FadingFamily::Rayleigh { omega } => Ok((-omega * target.ln()).sqrt()),
        FadingFamily::Rician { b } => {
            let mut lo = 0.0;
            let mut hi = b + 40.0;
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                let (_, exceed) = fam.cdf_pair(mid)?;
                if exceed > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        }
    }
}

/// Builds the channel of the link `tx -> rx`.
pub fn link_channel(
    tx: &NodePosition,
    rx: &NodePosition,
    env: &Environment,
    rp: &RadioParams,
    kind: FadingKind,
) -> Result<LinkChannel> {
    let d = distances(tx, rx).total;
    if d < rp.d0 {
        return Err(Error::validation(format!(
            "link {} -> {} is {d:.3} m long, below d0 = {} m",
            tx.node_id, rx.node_id, rp.d0
        )));
    }
    let p = p_los(tx, rx, env);
    let gain = path_gain(d, path_loss_exponent(p, rp), rp)?;
    let (rician, source) = match kind {
        FadingKind::Rician => (true, LinkTypeSource::Configured),
        FadingKind::Rayleigh => (false, LinkTypeSource::Configured),
        FadingKind::Auto => (p >= 0.5, LinkTypeSource::ThresholdRule),
    };
    let fading = if rician {
        FadingFamily::Rician {
            b: (2.0 * rician_k(p, rp)).sqrt(),
        }
    } else {
        FadingFamily::Rayleigh { omega: rp.omega }
    };
    Ok(LinkChannel {
        distance: d,
        p_los: p,
        path_gain: gain,
        fading,
        link_type_source: source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::NodeId;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const RAY: FadingFamily = FadingFamily::Rayleigh { omega: 2.0 };

    #[test]
    fn exponent_and_k_examples() {
        let rp = RadioParams::default();
        assert_eq!(path_loss_exponent(1.0, &rp), 2.0);
        assert_eq!(path_loss_exponent(0.0, &rp), 3.5);
        assert_eq!(path_loss_exponent(0.5, &rp), 2.75);
        assert_relative_eq!(rician_k(1.0, &rp), 15.0, max_relative = 1e-14);
        assert_relative_eq!(rician_k(0.0, &rp), 1.0, max_relative = 1e-14);
        assert_relative_eq!(rician_k(0.5, &rp), 15f64.powf(0.25), max_relative = 1e-14);
        assert!((rician_k(0.5, &rp) - 1.968).abs() < 1e-3);
    }

    #[test]
    fn rician_k_monotone() {
        let rp = RadioParams::default();
        let mut prev = 0.0;
        for i in 0..=100 {
            let k = rician_k(i as f64 / 100.0, &rp);
            assert!(k >= prev);
            prev = k;
        }
    }

    #[test]
    fn path_gain_examples() {
        let rp = RadioParams::default();
        assert!((rp.carrier_wavelength() - 0.1249).abs() < 1e-4);
        let c = rp.path_constant();
        assert_relative_eq!(path_gain(10.0, 2.7, &rp).unwrap(), c.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(
            path_gain(100.0, 2.0, &rp).unwrap(),
            c.sqrt() * 0.1,
            max_relative = 1e-14
        );
        assert!(matches!(path_gain(9.0, 2.0, &rp), Err(Error::Domain(_))));

        let alpha = path_loss_exponent(0.319, &rp);
        let g = path_gain(64.031, alpha, &rp).unwrap();
        assert_relative_eq!(g * g, c * (10.0f64 / 64.031).powf(alpha), max_relative = 1e-13);
    }

    #[test]
    fn fading_cdf_examples() {
        let v = fading_cdf(&RAY, 2.57).unwrap();
        assert_relative_eq!(v, 1.0 - (-2.57f64 * 2.57 / 2.0).exp(), max_relative = 1e-14);
        assert!((v - 0.9632).abs() < 1e-4);
        assert_eq!(fading_cdf(&RAY, 0.0).unwrap(), 0.0);
        let rice = FadingFamily::Rician { b: 30f64.sqrt() };
        assert_eq!(fading_cdf(&rice, 0.0).unwrap(), 0.0);
        assert!((fading_cdf(&rice, 40.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(fading_cdf(&RAY, -0.1).is_err());
    }

    #[test]
    fn transmit_prob_examples() {
        assert_eq!(transmit_prob(&RAY, 0.0, 14).unwrap(), 1.0);
        let rice = FadingFamily::Rician { b: 30f64.sqrt() };
        assert_eq!(transmit_prob(&rice, 0.0, 14).unwrap(), 1.0);
        let mu = transmit_prob(&RAY, 2.57, 14).unwrap();
        let cdf = 1.0 - (-2.57f64 * 2.57 / 2.0).exp();
        assert_relative_eq!(mu, 1.0 - cdf.powi(14), max_relative = 1e-12);
        assert!((mu - 0.409).abs() < 1e-3, "{mu}");
    }

    #[test]
    fn transmit_prob_monotonicity() {
        let fams = [RAY, FadingFamily::Rician { b: 2.3 }, FadingFamily::Rician { b: 5.0 }];
        for fam in fams {
            let mut prev = 1.0 + 1e-12;
            for i in 1..80 {
                let mu = transmit_prob(&fam, i as f64 * 0.1, 14).unwrap();
                assert!(mu < prev || mu == 1.0 || mu < 1e-300, "{fam:?} at {i}");
                prev = mu;
            }
            for beta in [0.5, 2.0, 4.0] {
                let mut prev = 0.0;
                for f in 1..20 {
                    let mu = transmit_prob(&fam, beta, f).unwrap();
                    assert!(mu > prev || mu == 1.0);
                    prev = mu;
                }
            }
        }
    }

    #[test]
    fn rayleigh_bound_closed_form() {
        // closed form evaluated directly: sqrt(-2 ln(1 - 0.6^(1/14)))
        let want = (-2.0 * (1.0 - 0.6f64.powf(1.0 / 14.0)).ln()).sqrt();
        let got = beta_upper_bound(&RAY, 80.0, 0.005, 14).unwrap();
        assert_relative_eq!(got, want, max_relative = 1e-12);
        assert!((got - 2.580_300).abs() < 1e-6);

        let f1 = beta_upper_bound(&RAY, 80.0, 0.005, 1).unwrap();
        assert_relative_eq!(f1, (-2.0 * 0.4f64.ln()).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn bounds_are_the_unit_load_point() {
        let fams = [
            RAY,
            FadingFamily::Rician { b: 2.3 },
            FadingFamily::Rician { b: 30f64.sqrt() },
        ];
        for fam in fams {
            for (lambda, f) in [(80.0, 14), (20.0, 3), (150.0, 1)] {
                let b = beta_upper_bound(&fam, lambda, 0.005, f).unwrap();
                let mu = transmit_prob(&fam, b, f).unwrap();
                assert!((mu - lambda * 0.005).abs() < 1e-6, "{fam:?} {lambda} {f}: {mu}");
            }
        }
        assert!(matches!(
            beta_upper_bound(&RAY, 200.0, 0.005, 14),
            Err(Error::InfeasibleTraffic { .. })
        ));
    }

    #[test]
    fn empirical_best_channel_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 200_000;
        for (fam, beta) in [(RAY, 2.3), (FadingFamily::Rician { b: 2.5 }, 4.0)] {
            let hits = (0..n).filter(|_| fam.sample_best(&mut rng, 14).0 >= beta).count();
            let p = transmit_prob(&fam, beta, 14).unwrap();
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((hits as f64 / n as f64 - p).abs() < 4.0 * se);
        }
    }

    #[test]
    fn max_pdf_integrates_to_transmit_prob() {
        use crate::numerics::{integrate, QuadratureSpec};
        let fam = FadingFamily::Rician { b: 2.33 };
        let spec = QuadratureSpec::default();
        let cut = fam.tail_cutoff(14);
        let tail = integrate(|x| fam.max_pdf(x, 14), 3.5, cut, &spec).unwrap();
        assert!((tail - transmit_prob(&fam, 3.5, 14).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn link_channel_rejects_short_links_and_applies_rule() {
        let env = Environment::default();
        let rp = RadioParams::default();
        let a = NodePosition::new(NodeId(1), 0.0, 0.0, 0.0).unwrap();
        let b = NodePosition::new(NodeId(2), 3.0, 4.0, 0.0).unwrap();
        assert!(matches!(
            link_channel(&a, &b, &env, &rp, FadingKind::Auto),
            Err(Error::Validation(_))
        ));

        let uav = NodePosition::new(NodeId(3), 20.0, 0.0, 40.0).unwrap();
        let l = link_channel(&a, &uav, &env, &rp, FadingKind::Auto).unwrap();
        assert_eq!(l.link_type_source, LinkTypeSource::ThresholdRule);
        assert_eq!(l.fading.is_rician(), l.p_los >= 0.5);
        let forced = link_channel(&a, &uav, &env, &rp, FadingKind::Rayleigh).unwrap();
        assert_eq!(forced.fading, FadingFamily::Rayleigh { omega: 2.0 });
    }
}
