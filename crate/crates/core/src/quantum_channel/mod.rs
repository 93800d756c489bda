//! Entangled-pair propagation through amplitude-damping and depolarizing
//! channels, and the BBM92 QBER driven by the surviving σx⊗σx correlation.
//!
//! Each photon of |Φ+⟩ crosses its own arm of the link. An arm applies
//! amplitude damping (photon loss) first and depolarization second; the two
//! maps do not commute, so this order is fixed.

mod density;
mod kraus;

pub use density::{
    identity2, kron, sigma_x, sigma_y, sigma_z, Basis, DensityMatrix4, Mat2, Mat4, EIGEN_TOL,
    HERMITIAN_TOL, IMAG_TOL, TRACE_TOL,
};
pub use kraus::{
    apply_bipartite, damping_kraus_single, depolarizing_kraus_single, KrausLabel, KrausSet,
    COMPLETENESS_TOL,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel_model::{attenuation, link_budget, SystemConfig, WaterProfile, BOLTZMANN, PLANCK, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::protocol_analytics::{gain_bbm92, qber_from_coincidences, QberResult};

/// Thermal occupancies below this are treated as exactly zero, which selects
/// the two-operator damping set.
pub const THERMAL_CUTOFF: f64 = 1e-20;

/// How an arm's transmittance becomes its damping probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DampingMapping {
    /// `p = 1 - A`: the damping probability is the photon loss.
    #[default]
    OneMinusTransmittance,
    /// `p = 1 - exp(-A)`, kept for comparison. Gives `p ≈ 0.63` at zero
    /// distance and no loss at infinite distance.
    LiteralExponent,
}

impl DampingMapping {
    pub fn damping_probability(self, transmittance: f64) -> f64 {
        match self {
            DampingMapping::OneMinusTransmittance => 1.0 - transmittance,
            DampingMapping::LiteralExponent => -(-transmittance).exp_m1(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingParams {
    pub p_a: f64,
    pub p_b: f64,
    pub xi: f64,
}

impl DampingParams {
    pub fn new(p_a: f64, p_b: f64, xi: f64) -> Result<Self> {
        for (name, v) in [("p_a", p_a), ("p_b", p_b)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(0.0..=0.5).contains(&xi) {
            return Err(Error::domain(format!("xi must lie in [0, 1/2], got {xi}")));
        }
        Ok(Self { p_a, p_b, xi })
    }

    /// Amplitude transmission `√(1 - p_A)`.
    pub fn t_a(&self) -> f64 {
        (1.0 - self.p_a).sqrt()
    }

    pub fn t_b(&self) -> f64 {
        (1.0 - self.p_b).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepolarizingParams {
    pub q_a: f64,
    pub q_b: f64,
}

impl DepolarizingParams {
    pub fn new(q_a: f64, q_b: f64) -> Result<Self> {
        for (name, v) in [("q_a", q_a), ("q_b", q_b)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(Self { q_a, q_b })
    }

    /// `q = 1 - exp(-γ d)` on each arm.
    pub fn from_distances(gamma_dep: f64, d_a: f64, d_b: f64) -> Result<Self> {
        Self::new(-(-gamma_dep * d_a).exp_m1(), -(-gamma_dep * d_b).exp_m1())
    }
}

pub fn bell_phi_plus() -> DensityMatrix4 {
    DensityMatrix4::bell_phi_plus()
}

/// Bose–Einstein occupancy at frequency `c/λ`.
pub fn thermal_photon_number(temperature: f64, wavelength: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::domain(format!("temperature must be > 0 K, got {temperature}")));
    }
    if !(wavelength > 0.0) {
        return Err(Error::domain(format!("wavelength must be > 0, got {wavelength}")));
    }
    let energy_ratio = PLANCK * SPEED_OF_LIGHT / (wavelength * BOLTZMANN * temperature);
    Ok(1.0 / energy_ratio.exp_m1())
}

/// Thermal parameter used by the damping channel: the occupancy, with
/// anything below [`THERMAL_CUTOFF`] snapped to zero.
pub fn effective_thermal_parameter(temperature: f64, wavelength: f64) -> Result<f64> {
    let xi = thermal_photon_number(temperature, wavelength)?;
    Ok(if xi < THERMAL_CUTOFF { 0.0 } else { xi })
}

/// Coefficients of a state with support on the X pattern
/// `[[a,0,0,f],[0,b,0,0],[0,0,c,0],[f,0,0,d]]`, with `f` real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XState {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub f: f64,
}

impl XState {
    pub fn matrix(&self) -> Mat4 {
        let r = |v: f64| Complex64::new(v, 0.0);
        let mut m = Mat4::zeros();
        m[(0, 0)] = r(self.a);
        m[(1, 1)] = r(self.b);
        m[(2, 2)] = r(self.c);
        m[(3, 3)] = r(self.d);
        m[(0, 3)] = r(self.f);
        m[(3, 0)] = r(self.f);
        m
    }

    pub fn to_density(&self) -> Result<DensityMatrix4> {
        DensityMatrix4::new(self.matrix())
    }

    /// Reads the X-pattern coefficients of `rho`; fails if other entries are
    /// populated.
    pub fn from_density(rho: &DensityMatrix4) -> Result<Self> {
        let m = rho.matrix();
        for r in 0..4 {
            for col in 0..4 {
                let on_pattern = r == col || (r, col) == (0, 3) || (r, col) == (3, 0);
                if !on_pattern && m[(r, col)].norm() > HERMITIAN_TOL {
                    return Err(Error::InvalidState(format!("entry ({r},{col}) breaks the X pattern")));
                }
            }
        }
        if m[(0, 3)].im.abs() > HERMITIAN_TOL {
            return Err(Error::InvalidState("complex coherence".into()));
        }
        Ok(Self {
            a: m[(0, 0)].re,
            b: m[(1, 1)].re,
            c: m[(2, 2)].re,
            d: m[(3, 3)].re,
            f: m[(0, 3)].re,
        })
    }

    /// Two-arm mixing of populations with per-arm keep/flip factors and
    /// scaling of the coherence by the product of coherence factors.
    fn mix(&self, keep: (f64, f64), flip: (f64, f64), coherence: (f64, f64)) -> Self {
        let ((na, nb), (sa, sb)) = (keep, flip);
        Self {
            a: na * nb * self.a + na * sb * self.b + sa * nb * self.c + sa * sb * self.d,
            b: na * sb * self.a + na * nb * self.b + sa * sb * self.c + sa * nb * self.d,
            c: sa * nb * self.a + sa * sb * self.b + na * nb * self.c + na * sb * self.d,
            d: sa * sb * self.a + sa * nb * self.b + na * sb * self.c + na * nb * self.d,
            f: coherence.0 * coherence.1 * self.f,
        }
    }

    /// Depolarized coefficients: populations keep with `1 - 2q/3` and flip
    /// with `2q/3` per arm; the coherence shrinks by `1 - 4q/3` per arm.
    pub fn depolarized(&self, qp: &DepolarizingParams) -> Self {
        let keep = |q: f64| 1.0 - 2.0 * q / 3.0;
        let flip = |q: f64| 2.0 * q / 3.0;
        let coh = |q: f64| 1.0 - 4.0 * q / 3.0;
        self.mix(
            (keep(qp.q_a), keep(qp.q_b)),
            (flip(qp.q_a), flip(qp.q_b)),
            (coh(qp.q_a), coh(qp.q_b)),
        )
    }

    /// The tabulated variant whose population keep-factor is `1 - 4q/3`.
    /// It loses trace for `q > 0`; used only for diagnostics.
    pub fn depolarized_as_printed(&self, qp: &DepolarizingParams) -> Self {
        let n = |q: f64| 1.0 - 4.0 * q / 3.0;
        let s = |q: f64| 2.0 * q / 3.0;
        self.mix((n(qp.q_a), n(qp.q_b)), (s(qp.q_a), s(qp.q_b)), (n(qp.q_a), n(qp.q_b)))
    }
}

/// Φ+ after zero-temperature damping on both arms, in closed form.
pub fn damped_state_closed_form(dp: &DampingParams) -> Result<DensityMatrix4> {
    damped_coefficients(dp)?.to_density()
}

pub fn damped_coefficients(dp: &DampingParams) -> Result<XState> {
    if dp.xi != 0.0 {
        return Err(Error::Precondition(format!(
            "closed form needs xi = 0, got {}",
            dp.xi
        )));
    }
    let (ta2, tb2) = (1.0 - dp.p_a, 1.0 - dp.p_b);
    Ok(XState {
        a: 0.5 * (1.0 + dp.p_a * dp.p_b),
        b: 0.5 * dp.p_a * tb2,
        c: 0.5 * dp.p_b * ta2,
        d: 0.5 * ta2 * tb2,
        f: 0.5 * dp.t_a() * dp.t_b(),
    })
}

/// Applies both arms' damping channels to `rho` through the Kraus sum.
pub fn damped_state(rho: &DensityMatrix4, dp: &DampingParams) -> Result<DensityMatrix4> {
    let a = damping_kraus_single(dp.p_a, dp.xi)?;
    let b = damping_kraus_single(dp.p_b, dp.xi)?;
    apply_bipartite(rho, &a, &b)
}

/// Applies both arms' depolarizing channels through the 16-operator sum.
pub fn depolarized_state(rho: &DensityMatrix4, qp: &DepolarizingParams) -> Result<DensityMatrix4> {
    let a = depolarizing_kraus_single(qp.q_a)?;
    let b = depolarizing_kraus_single(qp.q_b)?;
    apply_bipartite(rho, &a, &b)
}

/// Largest entrywise gap between the tabulated depolarized coefficients and
/// the Kraus sum, for an X-pattern input.
pub fn printed_closed_form_deviation(rho: &DensityMatrix4, qp: &DepolarizingParams) -> Result<f64> {
    let reference = depolarized_state(rho, qp)?;
    let printed = XState::from_density(rho)?.depolarized_as_printed(qp).matrix();
    Ok((printed - reference.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Channel parameters for a source at `x` on a link of length `L`.
pub fn pipeline_params(
    x: f64,
    length: f64,
    water: &WaterProfile,
    sys: &SystemConfig,
) -> Result<(DampingParams, DepolarizingParams)> {
    if !(x >= 0.0 && x <= length) {
        return Err(Error::domain(format!("source position {x} outside [0, {length}]")));
    }
    let map = sys.damping_mapping;
    let xi = effective_thermal_parameter(sys.water_temperature, sys.wavelength)?;
    let dp = DampingParams::new(
        map.damping_probability(attenuation(x, water, sys)?),
        map.damping_probability(attenuation(length - x, water, sys)?),
        xi,
    )?;
    let qp = DepolarizingParams::from_distances(water.gamma_dep, x, length - x)?;
    Ok((dp, qp))
}

/// State shared by Alice and Bob: Φ+, damped, then depolarized.
pub fn channel_pipeline(
    x: f64,
    length: f64,
    water: &WaterProfile,
    sys: &SystemConfig,
) -> Result<DensityMatrix4> {
    let (dp, qp) = pipeline_params(x, length, water, sys)?;
    let damped = damped_state(&bell_phi_plus(), &dp)?;
    depolarized_state(&damped, &qp)
}

pub fn correlation_xx(rho: &DensityMatrix4) -> Result<f64> {
    rho.correlation_xx()
}

pub fn correlation_zz(rho: &DensityMatrix4) -> Result<f64> {
    rho.correlation_zz()
}

/// Probability that the channel flips the diagonal-basis parity.
pub fn p_kraus(corr_xx: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&corr_xx) {
        return Err(Error::domain(format!("correlation must lie in [-1, 1], got {corr_xx}")));
    }
    Ok((1.0 - corr_xx) / 2.0)
}

/// Error probability of a true coincidence: exactly one of the channel flip
/// and the detector flip occurs.
pub fn e_sig(e_det: f64, p_kraus: f64) -> f64 {
    e_det + (1.0 - 2.0 * e_det) * p_kraus
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrausQber {
    pub result: QberResult,
    pub corr_xx: f64,
    pub p_kraus: f64,
    pub e_sig: f64,
}

pub fn bbm92_kraus_analysis(
    x: f64,
    length: f64,
    water: &WaterProfile,
    sys: &SystemConfig,
) -> Result<KrausQber> {
    let rho = channel_pipeline(x, length, water, sys)?;
    let corr_xx = rho.correlation_xx()?.clamp(-1.0, 1.0);
    let pk = p_kraus(corr_xx)?;
    let es = e_sig(sys.e_det, pk);
    let link = link_budget(x, length, water, sys)?;
    let gain = gain_bbm92(link.y0, link.eta_a, link.eta_b, sys.mu, sys.coincidence)?;
    Ok(KrausQber { result: qber_from_coincidences(es, gain)?, corr_xx, p_kraus: pk, e_sig: es })
}

/// BBM92 QBER with true coincidences degraded by the channel's loss of σx⊗σx
/// correlation.
pub fn qber_bbm92_kraus(
    x: f64,
    length: f64,
    water: &WaterProfile,
    sys: &SystemConfig,
) -> Result<QberResult> {
    bbm92_kraus_analysis(x, length, water, sys).map(|k| k.result)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityEstimate {
    pub ratio: f64,
    pub q: f64,
    pub gamma_dep: f64,
}

/// Depolarization coefficient from visibilities measured before and after a
/// path of length `L` through which one photon travels.
pub fn depolarization_coefficient_from_visibility(
    v_in: f64,
    v_out: f64,
    length: f64,
) -> Result<VisibilityEstimate> {
    if !(v_out > 0.0 && v_in > 0.0) {
        return Err(Error::domain("visibilities must be > 0"));
    }
    if v_out > v_in {
        return Err(Error::domain(format!("V_out = {v_out} exceeds V_in = {v_in}")));
    }
    if !(length > 0.0) {
        return Err(Error::domain(format!("path length must be > 0, got {length}")));
    }
    let ratio = v_out / v_in;
    let q = 0.75 * (1.0 - ratio);
    let gamma_dep = -(-q).ln_1p() / length;
    Ok(VisibilityEstimate { ratio, q, gamma_dep })
}
