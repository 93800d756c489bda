//! Closed-form quantum gains and QBERs for BB84, SARG04 and BBM92, and the
//! false-coincidence analysis that places the entangled source.
//!
//! Pulses are weak coherent states with Poissonian photon number of mean μ.
//! A channel of efficiency η then yields a signal click with probability
//! `1 - exp(-η μ)`; noise clicks occur with probability `y0` per pulse and are
//! treated as additive (the signal/noise overlap is of order `y0` and dropped).

use serde::{Deserialize, Serialize};

use crate::channel_model::{attenuation, link_budget, noise_probability, SystemConfig, WaterProfile};
use crate::error::{Error, Result};

/// Error probability of a click carrying no information.
pub const E0: f64 = 0.5;
/// Security threshold shared by BB84 and BBM92.
pub const BB84_THRESHOLD: f64 = 0.11;
pub const BBM92_THRESHOLD: f64 = BB84_THRESHOLD;
pub const SARG04_THRESHOLD: f64 = 0.149;

/// How the per-arm signal click probability enters the coincidence rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoincidenceModel {
    /// `1 - exp(-η μ)` per arm.
    Exact,
    /// `η μ` per arm, the single-photon expansion.
    #[default]
    FirstOrder,
}

impl CoincidenceModel {
    /// Probability that an arm of efficiency `eta` registers the signal.
    pub fn arm_click(self, eta: f64, mu: f64) -> f64 {
        match self {
            CoincidenceModel::Exact => signal_click(eta, mu),
            CoincidenceModel::FirstOrder => eta * mu,
        }
    }
}

/// `1 - exp(-η μ)`, computed without cancellation for small `η μ`.
pub fn signal_click(eta: f64, mu: f64) -> f64 {
    -(-eta * mu).exp_m1()
}

/// Split of a gain into noise and signal contributions.
///
/// For BBM92 `signal` is the true-coincidence probability and `noise` the
/// false-coincidence probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainBreakdown {
    pub total: f64,
    pub noise: f64,
    pub signal: f64,
}

impl GainBreakdown {
    fn new(noise: f64, signal: f64) -> Self {
        Self { total: noise + signal, noise, signal }
    }

    pub fn p_true(&self) -> f64 {
        self.signal
    }

    pub fn p_false(&self) -> f64 {
        self.noise
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QberResult {
    pub qber: f64,
    /// Error contribution `E_μ` to the gain.
    pub errors: f64,
    pub gain: GainBreakdown,
}

impl QberResult {
    fn from_errors(errors: f64, gain: GainBreakdown) -> Result<Self> {
        if !(gain.total > 0.0) {
            return Err(Error::Degenerate(format!("gain is {}, QBER undefined", gain.total)));
        }
        Ok(Self { qber: errors / gain.total, errors, gain })
    }
}

fn check_inputs(y0: f64, eta: f64, mu: f64) -> Result<()> {
    if !(y0 >= 0.0) {
        return Err(Error::domain(format!("y0 must be >= 0, got {y0}")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::domain(format!("efficiency must lie in [0, 1], got {eta}")));
    }
    if !(mu > 0.0) {
        return Err(Error::domain(format!("mean photon number must be > 0, got {mu}")));
    }
    Ok(())
}

fn check_e_det(e_det: f64) -> Result<()> {
    if (0.0..0.5).contains(&e_det) {
        Ok(())
    } else {
        Err(Error::domain(format!("e_det must lie in [0, 0.5), got {e_det}")))
    }
}

/// `Q = y0 + 1 - exp(-η_B μ)`.
pub fn gain_bb84(y0: f64, eta_b: f64, mu: f64) -> Result<GainBreakdown> {
    check_inputs(y0, eta_b, mu)?;
    Ok(GainBreakdown::new(y0, signal_click(eta_b, mu)))
}

/// Truncated photon-number sum `Σ_{i=0..=n} Y_i P(N = i)` with `Y_0 = y0` and
/// `Y_i = 1 - (1-η)^i + y0`.
pub fn gain_bb84_series(y0: f64, eta_b: f64, mu: f64, n_terms: usize) -> Result<f64> {
    check_inputs(y0, eta_b, mu)?;
    if n_terms == 0 {
        return Err(Error::domain("series needs at least one term"));
    }
    let mut weight = (-mu).exp();
    let mut loss = 1.0;
    let mut sum = y0 * weight;
    for i in 1..=n_terms {
        weight *= mu / i as f64;
        loss *= 1.0 - eta_b;
        sum += ((1.0 - loss) + y0) * weight;
    }
    Ok(sum)
}

/// Conclusive-click gain of SARG04.
pub fn gain_sarg04(y0: f64, eta_b: f64, mu: f64, e_det: f64) -> Result<GainBreakdown> {
    check_inputs(y0, eta_b, mu)?;
    check_e_det(e_det)?;
    let survive = (-eta_b * mu).exp();
    Ok(GainBreakdown::new(
        0.25 * y0 * survive,
        (0.25 + e_det / 2.0) * signal_click(eta_b, mu),
    ))
}

/// Coincidence probability with its true/false split.
pub fn gain_bbm92(
    y0: f64,
    eta_a: f64,
    eta_b: f64,
    mu: f64,
    model: CoincidenceModel,
) -> Result<GainBreakdown> {
    check_inputs(y0, eta_a, mu)?;
    check_inputs(y0, eta_b, mu)?;
    let sa = model.arm_click(eta_a, mu);
    let sb = model.arm_click(eta_b, mu);
    Ok(GainBreakdown::new(y0 * (sa + sb) + y0 * y0, sa * sb))
}

pub fn qber_bb84(y0: f64, eta_b: f64, mu: f64, e_det: f64) -> Result<QberResult> {
    check_e_det(e_det)?;
    let gain = gain_bb84(y0, eta_b, mu)?;
    QberResult::from_errors(E0 * y0 + e_det * gain.signal, gain)
}

pub fn qber_sarg04(y0: f64, eta_b: f64, mu: f64, e_det: f64) -> Result<QberResult> {
    let gain = gain_sarg04(y0, eta_b, mu, e_det)?;
    let errors = gain.noise + e_det / 2.0 * signal_click(eta_b, mu);
    QberResult::from_errors(errors, gain)
}

/// QBER over coincidences when true coincidences err with probability
/// `e_signal` and false ones with probability ½.
pub fn qber_from_coincidences(e_signal: f64, gain: GainBreakdown) -> Result<QberResult> {
    QberResult::from_errors(e_signal * gain.p_true() + E0 * gain.p_false(), gain)
}

/// BBM92 QBER with detector-limited true coincidences (no channel decoherence).
pub fn qber_bbm92_simple(
    x: f64,
    length: f64,
    water: &WaterProfile,
    sys: &SystemConfig,
) -> Result<QberResult> {
    check_e_det(sys.e_det)?;
    let link = link_budget(x, length, water, sys)?;
    let gain = gain_bbm92(link.y0, link.eta_a, link.eta_b, sys.mu, sys.coincidence)?;
    qber_from_coincidences(sys.e_det, gain)
}

fn check_interior(x: f64, length: f64) -> Result<()> {
    if x > 0.0 && x < length {
        Ok(())
    } else {
        Err(Error::domain(format!("source position {x} must lie strictly inside (0, {length})")))
    }
}

/// Rate of false coincidences as a function of the source position,
/// `y0 η_Alice A(x) + y0 η_Bob A(L-x) + y0²`.
pub fn false_coincidence_rate(
    x: f64,
    length: f64,
    water: &WaterProfile,
    sys: &SystemConfig,
) -> Result<f64> {
    check_interior(x, length)?;
    let y0 = noise_probability(sys)?.total();
    Ok(y0 * sys.eta_alice * attenuation(x, water, sys)?
        + y0 * sys.eta_bob * attenuation(length - x, water, sys)?
        + y0 * y0)
}

/// Analytic derivative of [`false_coincidence_rate`] with respect to `x`.
pub fn false_coincidence_slope(
    x: f64,
    length: f64,
    water: &WaterProfile,
    sys: &SystemConfig,
) -> Result<f64> {
    check_interior(x, length)?;
    let y0 = noise_probability(sys)?.total();
    let t = sys.t_corr;
    let k = water.alpha * (sys.tx_pupil / sys.divergence).powf(t) * (1.0 - t);
    let alice = sys.eta_alice * k * x.powf(-t) * attenuation(x, water, sys)?;
    let bob = sys.eta_bob * k * (length - x).powf(-t) * attenuation(length - x, water, sys)?;
    Ok(y0 * (bob - alice))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourcePlacement {
    pub x: f64,
    /// False when the minimum sits on the boundary (no stationary point).
    pub interior: bool,
}

/// Source position minimizing the false-coincidence rate.
///
/// Bisects on the sign change of the derivative to `1e-6 L`; without a sign
/// change, falls back to golden-section search on the rate itself.
pub fn optimal_source_position(
    length: f64,
    water: &WaterProfile,
    sys: &SystemConfig,
) -> Result<SourcePlacement> {
    if !(length > 0.0) {
        return Err(Error::domain(format!("link length must be > 0, got {length}")));
    }
    if sys.eta_alice == sys.eta_bob {
        return Ok(SourcePlacement { x: length / 2.0, interior: true });
    }
    let tol = 1e-6 * length;
    let slope = |x: f64| false_coincidence_slope(x, length, water, sys);
    let (mut lo, mut hi) = (tol * 1e-3, length - tol * 1e-3);
    let (s_lo, s_hi) = (slope(lo)?, slope(hi)?);
    if s_lo < 0.0 && s_hi > 0.0 {
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let s = slope(mid)?;
            if s == 0.0 {
                return Ok(SourcePlacement { x: mid, interior: true });
            }
            if s < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Ok(SourcePlacement { x: 0.5 * (lo + hi), interior: true });
    }

    // Endpoints are excluded from the rate's domain; evaluate the closure of
    // the search interval through the attenuation directly.
    let rate = |x: f64| -> Result<f64> {
        let y0 = noise_probability(sys)?.total();
        Ok(y0 * sys.eta_alice * attenuation(x, water, sys)?
            + y0 * sys.eta_bob * attenuation(length - x, water, sys)?)
    };
    let x = golden_section_min(rate, 0.0, length, tol)?;
    let interior = x > tol && x < length - tol;
    Ok(SourcePlacement { x, interior })
}

fn golden_section_min<F>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    // The bracket may have collapsed onto an endpoint; prefer it when lower.
    let mid = 0.5 * (a + b);
    let mut best = (mid, f(mid)?);
    for edge in [a, b] {
        let v = f(edge)?;
        if v < best.1 {
            best = (edge, v);
        }
    }
    Ok(best.0)
}
