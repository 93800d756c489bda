//! Pulse-level Monte Carlo of BB84, SARG04 and BBM92.
//!
//! Every pulse is one Bernoulli experiment on the aggregate click
//! probabilities, so the estimators target the same quantities as the closed
//! forms in [`crate::protocol_analytics`] without sharing any code with them.
//! Packets are independent work units: packet `i` draws from ChaCha8 stream
//! `i` of the master seed and tallies are summed as integers, so a result is
//! bit-identical regardless of how packets are scheduled.

use std::ops::Add;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_model::LinkBudget;
use crate::error::{Error, Result};
use crate::protocol_analytics::{signal_click, CoincidenceModel};
use crate::quantum_channel::{Basis, DensityMatrix4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McProtocol {
    Bb84,
    Sarg04,
    Bbm92,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_packets: u64,
    pub photons_per_packet: u64,
    pub seed: u64,
    pub protocol: McProtocol,
    /// BBM92 only: draw entangled outcomes from a propagated state instead
    /// of the ideal Bell state.
    pub use_kraus_channel: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_packets: 10_000,
            photons_per_packet: 1_000,
            seed: 0,
            protocol: McProtocol::Bb84,
            use_kraus_channel: false,
        }
    }
}

impl McConfig {
    pub fn new(protocol: McProtocol, seed: u64) -> Self {
        Self { protocol, seed, ..Default::default() }
    }

    pub fn pulses(&self) -> u64 {
        self.n_packets * self.photons_per_packet
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_packets == 0 || self.photons_per_packet == 0 {
            return Err(Error::domain("packet count and packet size must be >= 1"));
        }
        if self.n_packets.checked_mul(self.photons_per_packet).is_none() {
            return Err(Error::domain("total pulse count overflows u64"));
        }
        if self.use_kraus_channel && self.protocol != McProtocol::Bbm92 {
            return Err(Error::domain("the Kraus channel applies to BBM92 only"));
        }
        Ok(())
    }
}

/// Retained and erroneous counts for one measurement basis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BasisTally {
    pub retained: u64,
    pub erroneous: u64,
}

impl Add for BasisTally {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { retained: self.retained + o.retained, erroneous: self.erroneous + o.erroneous }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    retained: u64,
    erroneous: u64,
    discarded: u64,
    no_click: u64,
    rectilinear: BasisTally,
    diagonal: BasisTally,
    /// Diagonal-basis signal pairs before detector errors, and how many agreed.
    parity_samples: u64,
    parity_agree: u64,
}

impl Add for Tally {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            retained: self.retained + o.retained,
            erroneous: self.erroneous + o.erroneous,
            discarded: self.discarded + o.discarded,
            no_click: self.no_click + o.no_click,
            rectilinear: self.rectilinear + o.rectilinear,
            diagonal: self.diagonal + o.diagonal,
            parity_samples: self.parity_samples + o.parity_samples,
            parity_agree: self.parity_agree + o.parity_agree,
        }
    }
}

impl Tally {
    fn basis_mut(&mut self, basis: Basis) -> &mut BasisTally {
        match basis {
            Basis::Rectilinear => &mut self.rectilinear,
            Basis::Diagonal => &mut self.diagonal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McResult {
    pub pulses: u64,
    /// Sifted (BB84), conclusive (SARG04) or sifted coincident (BBM92) bits
    /// entering the QBER estimate.
    pub retained: u64,
    pub erroneous: u64,
    /// Clicks removed by sifting, inconclusive results, or lone clicks
    /// without a partner.
    pub discarded: u64,
    pub no_click: u64,
    pub qber_hat: f64,
    pub std_err: f64,
    pub corr_xx_hat: Option<f64>,
    pub corr_xx_std_err: Option<f64>,
    pub rectilinear: BasisTally,
    pub diagonal: BasisTally,
}

impl McResult {
    fn from_tally(pulses: u64, t: Tally, with_parity: bool) -> Result<Self> {
        debug_assert_eq!(t.retained + t.discarded + t.no_click, pulses);
        if t.retained == 0 {
            return Err(Error::Degenerate(format!("no retained bits in {pulses} pulses")));
        }
        let n = t.retained as f64;
        let qber_hat = t.erroneous as f64 / n;
        let (corr_xx_hat, corr_xx_std_err) = if with_parity && t.parity_samples > 0 {
            let m = t.parity_samples as f64;
            let c = (2.0 * t.parity_agree as f64 - m) / m;
            (Some(c), Some(((1.0 - c * c) / m).sqrt()))
        } else {
            (None, None)
        };
        Ok(Self {
            pulses,
            retained: t.retained,
            erroneous: t.erroneous,
            discarded: t.discarded,
            no_click: t.no_click,
            qber_hat,
            std_err: (qber_hat * (1.0 - qber_hat) / n).sqrt(),
            corr_xx_hat,
            corr_xx_std_err,
            rectilinear: t.rectilinear,
            diagonal: t.diagonal,
        })
    }
}

fn packet_rng(seed: u64, packet: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(packet);
    rng
}

fn run_packets<F>(mc: &McConfig, per_packet: F) -> Tally
where
    F: Fn(&mut ChaCha8Rng, u64) -> Tally + Sync,
{
    (0..mc.n_packets)
        .into_par_iter()
        .map(|p| per_packet(&mut packet_rng(mc.seed, p), mc.photons_per_packet))
        .reduce(Tally::default, |a, b| a + b)
}

fn check_common(mc: &McConfig, expected: McProtocol, e_det: f64, mu: f64) -> Result<()> {
    mc.validate()?;
    if mc.protocol != expected {
        return Err(Error::Precondition(format!(
            "config is for {:?}, simulator is {expected:?}",
            mc.protocol
        )));
    }
    if !(0.0..0.5).contains(&e_det) {
        return Err(Error::domain(format!("e_det must lie in [0, 0.5), got {e_det}")));
    }
    if !(mu > 0.0) {
        return Err(Error::domain(format!("mean photon number must be > 0, got {mu}")));
    }
    Ok(())
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in [0, 1], got {p}")))
    }
}

fn random_basis<R: Rng>(rng: &mut R) -> Basis {
    if rng.gen::<bool>() {
        Basis::Diagonal
    } else {
        Basis::Rectilinear
    }
}

/// BB84 with a weak coherent source: a pulse gives a signal click with
/// probability `1 - exp(-η_B μ)` or a noise click with probability `y0`
/// (mutually exclusive). Sifting keeps matching bases; signal bits flip with
/// probability `e_det` and noise bits are random.
pub fn simulate_bb84(mc: &McConfig, link: &LinkBudget, e_det: f64, mu: f64) -> Result<McResult> {
    check_common(mc, McProtocol::Bb84, e_det, mu)?;
    let s = signal_click(link.eta_b, mu);
    let y0 = link.y0;
    check_probability("signal plus noise click probability", s + y0)?;

    let tally = run_packets(mc, |rng, n| {
        let mut t = Tally::default();
        for _ in 0..n {
            let u: f64 = rng.gen();
            let signal = u < s;
            if !signal && u >= s + y0 {
                t.no_click += 1;
                continue;
            }
            let (alice, bob) = (random_basis(rng), random_basis(rng));
            if alice != bob {
                t.discarded += 1;
                continue;
            }
            let error = if signal { rng.gen::<f64>() < e_det } else { rng.gen::<bool>() };
            t.retained += 1;
            t.erroneous += error as u64;
            let b = t.basis_mut(alice);
            b.retained += 1;
            b.erroneous += error as u64;
        }
        t
    });
    McResult::from_tally(mc.pulses(), tally, false)
}

/// SARG04 at the level of conclusive-event fractions. A signal click is
/// conclusive with probability `1/4 + e_det/2`, erroneous with `e_det/2`.
/// A pulse without a signal click yields a noise click with probability
/// `y0`; such a click is conclusive with probability `1/4` and then always
/// wrong.
pub fn simulate_sarg04(mc: &McConfig, link: &LinkBudget, e_det: f64, mu: f64) -> Result<McResult> {
    check_common(mc, McProtocol::Sarg04, e_det, mu)?;
    let s = signal_click(link.eta_b, mu);
    let y0 = link.y0;
    check_probability("noise click probability", y0)?;
    let wrong = e_det / 2.0;
    let conclusive = 0.25 + e_det / 2.0;

    let tally = run_packets(mc, |rng, n| {
        let mut t = Tally::default();
        for _ in 0..n {
            if rng.gen::<f64>() < s {
                let v: f64 = rng.gen();
                if v < wrong {
                    t.retained += 1;
                    t.erroneous += 1;
                } else if v < conclusive {
                    t.retained += 1;
                } else {
                    t.discarded += 1;
                }
            } else if rng.gen::<f64>() < y0 {
                if rng.gen::<f64>() < 0.25 {
                    t.retained += 1;
                    t.erroneous += 1;
                } else {
                    t.discarded += 1;
                }
            } else {
                t.no_click += 1;
            }
        }
        t
    });
    McResult::from_tally(mc.pulses(), tally, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arm {
    Signal,
    Noise,
    Silent,
}

fn draw_arm<R: Rng>(rng: &mut R, s: f64, y0: f64) -> Arm {
    let u: f64 = rng.gen();
    if u < s {
        Arm::Signal
    } else if u < s + y0 {
        Arm::Noise
    } else {
        Arm::Silent
    }
}

/// Cumulative joint-outcome distribution, index `2a + b`.
fn cumulative(p: [f64; 4]) -> [f64; 4] {
    let total: f64 = p.iter().sum();
    let mut acc = 0.0;
    p.map(|v| {
        acc += v / total;
        acc
    })
}

fn draw_outcome<R: Rng>(rng: &mut R, cdf: &[f64; 4]) -> (bool, bool) {
    let u: f64 = rng.gen();
    let i = cdf.iter().position(|&c| u < c).unwrap_or(3);
    (i & 2 != 0, i & 1 != 0)
}

/// BBM92 with a source between Alice and Bob. Each arm clicks from the
/// signal (probability given by `model`) or from noise (`y0`); only
/// coincidences in matching bases are kept.
///
/// Two signal clicks produce outcomes drawn from `rho_out` (or the ideal
/// Bell state), after which Bob's bit flips with probability `e_det`.
/// Coincidences involving a noise click carry random bits. With
/// `use_kraus_channel` the QBER is estimated on diagonal-basis coincidences,
/// where the channel's effect is set by `⟨σx⊗σx⟩`; rectilinear coincidences
/// are then counted as discarded but still reported in their own tally.
pub fn simulate_bbm92(
    mc: &McConfig,
    link: &LinkBudget,
    e_det: f64,
    mu: f64,
    model: CoincidenceModel,
    rho_out: Option<&DensityMatrix4>,
) -> Result<McResult> {
    check_common(mc, McProtocol::Bbm92, e_det, mu)?;
    if mc.use_kraus_channel != rho_out.is_some() {
        return Err(Error::Precondition(
            "a propagated state must be supplied exactly when the Kraus channel is enabled".into(),
        ));
    }
    let rho = match rho_out {
        Some(r) => DensityMatrix4::new(*r.matrix())?,
        None => DensityMatrix4::bell_phi_plus(),
    };
    let sa = model.arm_click(link.eta_a, mu);
    let sb = model.arm_click(link.eta_b, mu);
    let y0 = link.y0;
    check_probability("Alice click probability", sa + y0)?;
    check_probability("Bob click probability", sb + y0)?;
    let cdf_rect = cumulative(rho.outcome_probabilities(Basis::Rectilinear));
    let cdf_diag = cumulative(rho.outcome_probabilities(Basis::Diagonal));
    let diagonal_only = mc.use_kraus_channel;

    let tally = run_packets(mc, |rng, n| {
        let mut t = Tally::default();
        for _ in 0..n {
            let (a, b) = (draw_arm(rng, sa, y0), draw_arm(rng, sb, y0));
            if a == Arm::Silent || b == Arm::Silent {
                if a == Arm::Silent && b == Arm::Silent {
                    t.no_click += 1;
                } else {
                    t.discarded += 1;
                }
                continue;
            }
            let (alice, bob) = (random_basis(rng), random_basis(rng));
            if alice != bob {
                t.discarded += 1;
                continue;
            }
            let error = if a == Arm::Signal && b == Arm::Signal {
                let cdf = match alice {
                    Basis::Rectilinear => &cdf_rect,
                    Basis::Diagonal => &cdf_diag,
                };
                let (bit_a, bit_b) = draw_outcome(rng, cdf);
                if alice == Basis::Diagonal {
                    t.parity_samples += 1;
                    t.parity_agree += (bit_a == bit_b) as u64;
                }
                let flipped = rng.gen::<f64>() < e_det;
                (bit_a != bit_b) != flipped
            } else {
                rng.gen::<bool>()
            };
            let b = t.basis_mut(alice);
            b.retained += 1;
            b.erroneous += error as u64;
            if diagonal_only && alice == Basis::Rectilinear {
                t.discarded += 1;
            } else {
                t.retained += 1;
                t.erroneous += error as u64;
            }
        }
        t
    });
    McResult::from_tally(mc.pulses(), tally, true)
}
