//! Aggregate co-channel interference at a receiver, its Gamma approximation and
//! the resulting SINR outage probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::FadingFamily;
use crate::error::{Error, Result};
use crate::numerics::{integrate, reg_lower_gamma, reg_upper_gamma, QuadratureSpec};

pub const BOLTZMANN: f64 = 1.380_649e-23;

/// How an outage probability is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutageConvention {
    /// Probability per slot that the node transmits and the SINR test fails.
    #[default]
    PerSlot,
    /// Probability that a transmitted packet fails the SINR test.
    PerTransmission,
}

/// How the interference moments behind the Gamma fit are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentMethod {
    /// Closed form of the sampling model (independent interferers, uniform best channel).
    #[default]
    Exact,
    /// Common-random-number Monte Carlo estimate with `moment_samples` draws.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterferenceModel {
    /// Linear SINR threshold.
    pub gamma_th: f64,
    /// Receiver noise temperature (K).
    pub temperature: f64,
    /// Noise bandwidth per channel (Hz).
    pub bandwidth: f64,
    pub moments: MomentMethod,
    pub moment_samples: usize,
    pub moment_seed: u64,
    pub convention: OutageConvention,
}

impl Default for InterferenceModel {
    fn default() -> Self {
        InterferenceModel {
            gamma_th: 10.0,
            temperature: 290.0,
            bandwidth: 5e6,
            moments: MomentMethod::Exact,
            moment_samples: 200_000,
            moment_seed: 2024,
            convention: OutageConvention::PerSlot,
        }
    }
}

impl InterferenceModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma_th", self.gamma_th),
            ("temperature", self.temperature),
            ("bandwidth", self.bandwidth),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!(
                    "interference.{name} must be positive, got {v}"
                )));
            }
        }
        if self.moment_samples < 100_000 {
            return Err(Error::validation(format!(
                "interference.moment_samples must be >= 100000, got {}",
                self.moment_samples
            )));
        }
        Ok(())
    }

    /// Thermal noise power `k T W` (W).
    pub fn noise_power(&self) -> f64 {
        BOLTZMANN * self.temperature * self.bandwidth
    }
}

/// One interferer as seen from a particular receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfererLink {
    /// Fading on the interferer's own link; its best-of-F value drives the transmit decision.
    pub own_fading: FadingFamily,
    /// Fading on the interferer-to-receiver link.
    pub cross_fading: FadingFamily,
    /// Squared path gain of the interferer-to-receiver link.
    pub cross_power_gain: f64,
    pub tx_power: f64,
}

/// Slots in which a transmitter's best channel was the tagged one, with the best value.
#[derive(Debug, Clone)]
pub struct ActivityDraws {
    samples: usize,
    per_tx: Vec<Vec<(u32, f64)>>,
}

impl ActivityDraws {
    /// Draws `samples` best-of-F decisions for each transmitter; transmitter `m`
    /// uses stream `m` of a generator seeded with `seed`.
    pub fn new(own_fading: &[FadingFamily], channels: usize, samples: usize, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::domain("interference sampling needs at least one channel"));
        }
        if samples == 0 || samples > u32::MAX as usize {
            return Err(Error::domain(format!("sample count {samples} out of range")));
        }
        let per_tx = own_fading
            .par_iter()
            .enumerate()
            .map(|(m, fam)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(m as u64);
                let mut out = Vec::with_capacity(samples / channels + 16);
                for s in 0..samples {
                    let (best, arg) = fam.sample_best(&mut rng, channels);
                    // channel 0 is the tagged one; the argmax is uniform by symmetry
                    if arg == 0 {
                        out.push((s as u32, best));
                    }
                }
                out
            })
            .collect();
        Ok(ActivityDraws { samples, per_tx })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    sample: u32,
    best: f64,
    power: f64,
}

/// Common-random-number sampler of the aggregate interference on one tagged channel.
///
/// Fading draws are made once; each threshold vector only re-decides which
/// interferers transmit, so moments are deterministic and cheap to re-evaluate.
#[derive(Debug, Clone)]
pub struct InterferenceSampler {
    samples: usize,
    // per interferer, the draws in which it picked the tagged channel
    hits: Vec<Vec<Hit>>,
}

impl InterferenceSampler {
    /// Self-contained sampler: activity and cross-link fading drawn from `seed`.
    pub fn new(links: &[InterfererLink], channels: usize, samples: usize, seed: u64) -> Result<Self> {
        let own: Vec<FadingFamily> = links.iter().map(|l| l.own_fading).collect();
        let act = ActivityDraws::new(&own, channels, samples, seed)?;
        let members: Vec<(usize, InterfererLink)> = links.iter().copied().enumerate().collect();
        Self::from_activity(&act, &members, seed, 1 << 32)
    }

    /// Builds the sampler of one receiver from shared activity draws. `members`
    /// pairs each interferer's index in `act` with its link to this receiver;
    /// cross-link fading of member `j` uses stream `stream_base + j`.
    pub fn from_activity(
        act: &ActivityDraws,
        members: &[(usize, InterfererLink)],
        seed: u64,
        stream_base: u64,
    ) -> Result<Self> {
        let hits = members
            .par_iter()
            .enumerate()
            .map(|(j, (m, link))| {
                let draws = act
                    .per_tx
                    .get(*m)
                    .ok_or_else(|| Error::domain(format!("no activity draws for transmitter index {m}")))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream_base + j as u64);
                let scale = link.tx_power * link.cross_power_gain;
                Ok(draws
                    .iter()
                    .map(|&(sample, best)| {
                        let x = link.cross_fading.sample(&mut rng);
                        Hit {
                            sample,
                            best,
                            power: scale * x * x,
                        }
                    })
                    .collect())
            })
            .collect::<Result<Vec<Vec<Hit>>>>()?;
        Ok(InterferenceSampler {
            samples: act.samples,
            hits,
        })
    }

    pub fn num_interferers(&self) -> usize {
        self.hits.len()
    }

    /// Interference value of every sampled slot under thresholds `betas`.
    pub fn realizations(&self, betas: &[f64]) -> Result<Vec<f64>> {
        if betas.len() != self.hits.len() {
            return Err(Error::domain(format!(
                "expected {} interferer thresholds, got {}",
                self.hits.len(),
                betas.len()
            )));
        }
        let mut total = vec![0.0; self.samples];
        for (hits, &beta) in self.hits.iter().zip(betas) {
            for h in hits.iter().filter(|h| h.best >= beta) {
                total[h.sample as usize] += h.power;
            }
        }
        Ok(total)
    }

    /// `(E[I], E[I^2])` under thresholds `betas`.
    pub fn moments(&self, betas: &[f64]) -> Result<(f64, f64)> {
        let total = self.realizations(betas)?;
        let n = self.samples as f64;
        let (s1, s2) = total.iter().fold((0.0, 0.0), |(a, b), &x| (a + x, b + x * x));
        Ok((s1 / n, s2 / n))
    }
}

/// Monte Carlo estimate of the first two moments of the aggregate interference.
pub fn interference_moments(
    links: &[InterfererLink],
    betas: &[f64],
    channels: usize,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if links.is_empty() {
        return Ok((0.0, 0.0));
    }
    InterferenceSampler::new(links, channels, samples, seed)?.moments(betas)
}

/// Exact first two moments of the interference on the tagged channel: interferer
/// `m` lands there with probability `mu_m / F` and then contributes
/// `P_m g_m x^2` with `x` drawn from its cross-link fading, independently of the others.
pub fn exact_moments(links: &[InterfererLink], betas: &[f64], channels: usize) -> Result<(f64, f64)> {
    if betas.len() != links.len() {
        return Err(Error::domain(format!(
            "expected {} interferer thresholds, got {}",
            links.len(),
            betas.len()
        )));
    }
    let f = channels as f64;
    let (mut m1, mut var) = (0.0, 0.0);
    for (l, &b) in links.iter().zip(betas) {
        let p = crate::channel::transmit_prob(&l.own_fading, b, channels)? / f;
        let a = l.tx_power * l.cross_power_gain;
        let e1 = a * l.cross_fading.mean_power();
        let e2 = a * a * l.cross_fading.power_second_moment();
        m1 += p * e1;
        var += p * e2 - (p * e1) * (p * e1);
    }
    Ok((m1, var + m1 * m1))
}

/// Gamma law fitted to the interference, or none when no interferer is active.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InterferenceFit {
    None,
    Gamma { k: f64, theta: f64 },
}

/// Two-moment Gamma fit: `k = m1^2 / var`, `theta = var / m1`.
pub fn gamma_fit(m1: f64, m2: f64) -> Result<InterferenceFit> {
    if m1 == 0.0 && m2 == 0.0 {
        return Ok(InterferenceFit::None);
    }
    if !(m1 > 0.0) || !m2.is_finite() {
        return Err(Error::domain(format!(
            "gamma_fit needs a positive mean, got m1={m1}, m2={m2}"
        )));
    }
    let var = m2 - m1 * m1;
    if !(var > 0.0) {
        return Err(Error::domain(format!(
            "degenerate interference variance {var:e} (m1={m1:e}, m2={m2:e})"
        )));
    }
    Ok(InterferenceFit::Gamma {
        k: m1 * m1 / var,
        theta: var / m1,
    })
}

/// `P[I > x]` under a Gamma(k, theta) law; certain for `x <= 0`.
pub fn interference_ccdf(x: f64, k: f64, theta: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    reg_upper_gamma(k, x / theta).unwrap_or(0.0)
}

fn fit_ccdf(fit: &InterferenceFit, x: f64) -> f64 {
    match *fit {
        InterferenceFit::None => {
            if x <= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        InterferenceFit::Gamma { k, theta } => interference_ccdf(x, k, theta),
    }
}

/// The receiving end of a source link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceLink {
    pub fading: FadingFamily,
    /// Squared path gain of the source link.
    pub power_gain: f64,
    pub tx_power: f64,
}

impl SourceLink {
    pub fn signal_scale(&self) -> f64 {
        self.tx_power * self.power_gain
    }
}

/// Outage probability of the source with threshold `beta_n`: the best-channel
/// coefficient clears `beta_n` but `S x^2 / (I + noise)` stays below `gamma_th`.
pub fn p_outage(
    source: &SourceLink,
    beta_n: f64,
    channels: usize,
    im: &InterferenceModel,
    fit: &InterferenceFit,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if !(beta_n >= 0.0) {
        return Err(Error::domain(format!("beta must be >= 0, got {beta_n}")));
    }
    let fam = source.fading;
    let s = source.signal_scale();
    let noise = im.noise_power();
    let gamma = im.gamma_th;

    // below x0 even zero interference fails the SINR test
    let x0 = (gamma * noise / s).sqrt();
    let lo = beta_n.max(x0);
    let mut p = 0.0;
    if x0 > beta_n {
        p += fam.max_cdf(x0, channels)? - fam.max_cdf(beta_n, channels)?;
    }
    let cut = fam.tail_cutoff(channels);
    if !matches!(fit, InterferenceFit::None) && lo < cut {
        p += integrate(
            |x| fam.max_pdf(x, channels) * fit_ccdf(fit, s * x * x / gamma - noise),
            lo,
            cut,
            quad,
        )?;
    }
    let mu = crate::channel::transmit_prob(&fam, beta_n, channels)?;
    let p = p.clamp(0.0, mu);
    Ok(match im.convention {
        OutageConvention::PerSlot => p,
        OutageConvention::PerTransmission => {
            if mu > 0.0 {
                p / mu
            } else {
                0.0
            }
        }
    })
}

/// Largest absolute gap between the empirical CDF of `samples` and the fitted Gamma CDF.
pub fn ks_distance(samples: &[f64], fit: &InterferenceFit) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("ks_distance needs at least one sample"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let model = match *fit {
            InterferenceFit::None => 1.0,
            InterferenceFit::Gamma { k, theta } => {
                if x <= 0.0 {
                    0.0
                } else {
                    reg_lower_gamma(k, x / theta)?
                }
            }
        };
        let above = (i + 1) as f64 / n;
        let below = i as f64 / n;
        d = d.max((model - above).abs()).max((model - below).abs());
    }
    Ok(d)
}

/// Draws `n` i.i.d. Gamma(k, theta) variates; used to exercise the fit.
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, k: f64, theta: f64, n: usize) -> Result<Vec<f64>> {
    let g = rand_distr::Gamma::new(k, theta).map_err(|e| Error::domain(e.to_string()))?;
    Ok((0..n).map(|_| rng.sample(g)).collect())
}
