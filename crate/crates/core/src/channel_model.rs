//! Classical optics of the underwater link.
//!
//! Beam attenuation follows a Beer–Lambert law corrected for the launch
//! geometry, `A(L) = exp(-α L (d1 / (θ L))^T)`. Ambient light decays with
//! depth as `R0 exp(-K∞ z)` and enters the receiver through its pupil area and
//! field-of-view solid angle; together with detector dark counts it sets the
//! per-pulse noise-click probability `y0`.
//!
//! All angles are radians here. Degrees only exist in configuration files.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol_analytics::CoincidenceModel;
use crate::quantum_channel::DampingMapping;

/// Planck constant, J·s (exact SI value).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s (exact SI value).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Boltzmann constant, J/K (exact SI value).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Surface irradiance R0 in W/m² for scenarios 1 through 5: full moon,
/// overcast dusk, hazy dusk, overcast noon, clear noon.
pub const SCENARIO_IRRADIANCE: [f64; 5] = [1e-3, 10.0, 50.0, 125.0, 500.0];

/// Tabulated (pupil diameter in m, correction factor T) pairs.
pub const PUPIL_CORRECTION_TABLE: [(f64, f64); 4] =
    [(0.05, 0.13), (0.10, 0.16), (0.20, 0.21), (0.30, 0.26)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaterKind {
    Clear,
    Coastal,
    Turbid,
}

impl WaterKind {
    pub const ALL: [WaterKind; 3] = [WaterKind::Clear, WaterKind::Coastal, WaterKind::Turbid];

    pub fn as_str(self) -> &'static str {
        match self {
            WaterKind::Clear => "clear",
            WaterKind::Coastal => "coastal",
            WaterKind::Turbid => "turbid",
        }
    }
}

impl fmt::Display for WaterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WaterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clear" => Ok(WaterKind::Clear),
            "coastal" => Ok(WaterKind::Coastal),
            "turbid" => Ok(WaterKind::Turbid),
            other => Err(Error::Config(format!("unknown water type `{other}`"))),
        }
    }
}

/// Optical constants of one water type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterProfile {
    pub kind: WaterKind,
    /// Extinction coefficient α, 1/m.
    pub alpha: f64,
    /// Linear depolarization coefficient γ_dep, 1/m.
    pub gamma_dep: f64,
}

impl WaterProfile {
    pub fn new(kind: WaterKind, alpha: f64, gamma_dep: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::domain(format!("extinction coefficient must be > 0, got {alpha}")));
        }
        if !(gamma_dep >= 0.0 && gamma_dep.is_finite()) {
            return Err(Error::domain(format!(
                "depolarization coefficient must be >= 0, got {gamma_dep}"
            )));
        }
        Ok(Self { kind, alpha, gamma_dep })
    }

    /// Tabulated constants at 530 nm.
    pub fn standard(kind: WaterKind) -> Self {
        let (alpha, gamma_dep) = match kind {
            WaterKind::Clear => (0.151, 2.4e-6),
            WaterKind::Coastal => (0.339, 3.7e-6),
            WaterKind::Turbid => (2.195, 7.5e-6),
        };
        Self { kind, alpha, gamma_dep }
    }
}

/// Ambient-light scenario, numbered 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scenario(u8);

impl Scenario {
    pub const ALL: [Scenario; 5] = [Scenario(1), Scenario(2), Scenario(3), Scenario(4), Scenario(5)];

    pub fn new(number: u8) -> Result<Self> {
        if (1..=5).contains(&number) {
            Ok(Scenario(number))
        } else {
            Err(Error::Config(format!("scenario must be 1..=5, got {number}")))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn surface_irradiance(self) -> f64 {
        SCENARIO_IRRADIANCE[usize::from(self.0 - 1)]
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scenario{}", self.0)
    }
}

/// Exact lookup of the Beer–Lambert correction factor for a tabulated pupil
/// diameter. Any other diameter has no factor.
pub fn correction_factor_for_pupil(diameter: f64) -> Option<f64> {
    PUPIL_CORRECTION_TABLE
        .iter()
        .find(|(d, _)| (d - diameter).abs() <= 1e-12)
        .map(|&(_, t)| t)
}

/// Transmitter, receiver and environment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Wavelength λ, m.
    pub wavelength: f64,
    /// Full beam divergence angle θ, rad.
    pub divergence: f64,
    /// Detector field-of-view angle δ, rad.
    pub field_of_view: f64,
    /// Transmitter pupil diameter d1, m.
    pub tx_pupil: f64,
    /// Receiver pupil diameter d2, m.
    pub rx_pupil: f64,
    /// Filter spectral width Δλ, m.
    pub filter_width: f64,
    /// Bit period Δt, s.
    pub bit_period: f64,
    /// Receiver gate time Δt', s.
    pub gate_time: f64,
    pub eta_alice: f64,
    pub eta_bob: f64,
    /// Mean photon number per pulse μ.
    pub mu: f64,
    /// Dark count rate I_dc, Hz.
    pub dark_count_rate: f64,
    /// Asymptotic diffuse attenuation coefficient K∞, 1/m.
    pub k_inf: f64,
    /// Depth z, m.
    pub depth: f64,
    /// Surface irradiance R0, W/m².
    pub surface_irradiance: f64,
    /// Detector error probability e_det.
    pub e_det: f64,
    /// Beer–Lambert correction factor T.
    pub t_corr: f64,
    /// Water temperature, K.
    pub water_temperature: f64,
    pub coincidence: CoincidenceModel,
    pub damping_mapping: DampingMapping,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            wavelength: 530e-9,
            divergence: 6f64.to_radians(),
            field_of_view: 180f64.to_radians(),
            tx_pupil: 0.30,
            rx_pupil: 0.30,
            filter_width: 0.2e-9,
            bit_period: 40e-9,
            gate_time: 200e-12,
            eta_alice: 0.5,
            eta_bob: 0.5,
            mu: 1.0,
            dark_count_rate: 60.0,
            k_inf: 0.08,
            depth: 80.0,
            surface_irradiance: SCENARIO_IRRADIANCE[0],
            e_det: 0.033,
            t_corr: 0.26,
            water_temperature: 293.15,
            coincidence: CoincidenceModel::default(),
            damping_mapping: DampingMapping::default(),
        }
    }
}

impl SystemConfig {
    /// Sets `d1 = d2 = diameter` and picks the tabulated correction factor.
    pub fn with_pupil_diameter(self, diameter: f64) -> Result<Self> {
        self.with_pupils(diameter, diameter, None)
    }

    /// Sets both pupils. Without an explicit `t_corr` the transmitter pupil
    /// must be one of the tabulated diameters.
    pub fn with_pupils(mut self, d1: f64, d2: f64, t_corr: Option<f64>) -> Result<Self> {
        let t = match t_corr {
            Some(t) => t,
            None => correction_factor_for_pupil(d1).ok_or_else(|| {
                Error::Config(format!(
                    "no tabulated correction factor for d1 = {d1} m; supply one explicitly"
                ))
            })?,
        };
        self.tx_pupil = d1;
        self.rx_pupil = d2;
        self.t_corr = t;
        Ok(self)
    }

    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.surface_irradiance = scenario.surface_irradiance();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wavelength", self.wavelength),
            ("divergence", self.divergence),
            ("field_of_view", self.field_of_view),
            ("tx_pupil", self.tx_pupil),
            ("rx_pupil", self.rx_pupil),
            ("filter_width", self.filter_width),
            ("bit_period", self.bit_period),
            ("gate_time", self.gate_time),
            ("mu", self.mu),
            ("water_temperature", self.water_temperature),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be > 0, got {v}")));
            }
        }
        let non_negative = [
            ("dark_count_rate", self.dark_count_rate),
            ("k_inf", self.k_inf),
            ("depth", self.depth),
            ("surface_irradiance", self.surface_irradiance),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("eta_alice", self.eta_alice), ("eta_bob", self.eta_bob)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(0.0..0.5).contains(&self.e_det) {
            return Err(Error::domain(format!("e_det must lie in [0, 0.5), got {}", self.e_det)));
        }
        if self.field_of_view > 2.0 * PI {
            return Err(Error::domain("field_of_view exceeds 2π"));
        }
        check_correction_factor(self.t_corr)
    }
}

fn check_correction_factor(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("correction factor T must lie in (0, 1), got {t}")))
    }
}

/// Exponent of the corrected Beer–Lambert law, `α L (d1/(θL))^T`.
/// Zero at `L = 0` since it scales as `L^(1-T)`.
pub fn optical_depth(distance: f64, water: &WaterProfile, sys: &SystemConfig) -> Result<f64> {
    check_correction_factor(sys.t_corr)?;
    if !(distance >= 0.0) {
        return Err(Error::domain(format!("distance must be >= 0, got {distance}")));
    }
    if !(sys.divergence > 0.0 && sys.tx_pupil > 0.0) {
        return Err(Error::domain("divergence and transmitter pupil must be > 0"));
    }
    if distance == 0.0 {
        return Ok(0.0);
    }
    let geometric = sys.tx_pupil / (sys.divergence * distance);
    Ok(water.alpha * distance * geometric.powf(sys.t_corr))
}

/// Channel transmittance `A(L)` in `[0, 1]`; exactly 1 at `L = 0`.
pub fn attenuation(distance: f64, water: &WaterProfile, sys: &SystemConfig) -> Result<f64> {
    optical_depth(distance, water, sys).map(|tau| (-tau).exp())
}

/// Irradiance at depth `z`, `R0 exp(-K∞ z)`.
pub fn irradiance(depth: f64, surface: f64, k_inf: f64) -> f64 {
    surface * (-k_inf * depth).exp()
}

/// Solid angle of a cone with full opening angle `delta`.
pub fn solid_angle(delta: f64) -> Result<f64> {
    if !(0.0..=2.0 * PI).contains(&delta) {
        return Err(Error::domain(format!("field-of-view angle must lie in [0, 2π], got {delta}")));
    }
    Ok(2.0 * PI * (1.0 - (delta / 2.0).cos()))
}

/// The two additive contributions to `y0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBreakdown {
    /// `4 I_dc Δt`
    pub dark: f64,
    /// Ambient photons collected in one gate.
    pub background: f64,
}

impl NoiseBreakdown {
    pub fn total(&self) -> f64 {
        self.dark + self.background
    }
}

/// Per-pulse noise-click probability `y0`, reported term by term.
///
/// The model treats `y0` as a probability; values at or above 1 are logged
/// as a warning and returned unchanged.
pub fn noise_probability(sys: &SystemConfig) -> Result<NoiseBreakdown> {
    let omega = solid_angle(sys.field_of_view)?;
    let area = PI * (sys.rx_pupil / 2.0).powi(2);
    let r = irradiance(sys.depth, sys.surface_irradiance, sys.k_inf);
    let noise = NoiseBreakdown {
        dark: 4.0 * sys.dark_count_rate * sys.bit_period,
        background: r * area * sys.gate_time * sys.wavelength * sys.filter_width * omega
            / (PLANCK * SPEED_OF_LIGHT),
    };
    if noise.total() >= 1.0 {
        log::warn!("noise probability y0 = {} is not below 1", noise.total());
    }
    Ok(noise)
}

/// Derived per-link quantities for a source at distance `x` from Alice on a
/// link of total length `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub transmittance_alice: f64,
    pub transmittance_bob: f64,
    /// `η_Alice · A(x)`
    pub eta_a: f64,
    /// `η_Bob · A(L - x)`
    pub eta_b: f64,
    pub y0: f64,
    pub noise: NoiseBreakdown,
}

/// Prepare-and-measure links use `x = 0`.
pub fn link_budget(
    x: f64,
    length: f64,
    water: &WaterProfile,
    sys: &SystemConfig,
) -> Result<LinkBudget> {
    if !(x >= 0.0 && x <= length) {
        return Err(Error::domain(format!("source position {x} outside [0, {length}]")));
    }
    let transmittance_alice = attenuation(x, water, sys)?;
    let transmittance_bob = attenuation(length - x, water, sys)?;
    let noise = noise_probability(sys)?;
    Ok(LinkBudget {
        transmittance_alice,
        transmittance_bob,
        eta_a: sys.eta_alice * transmittance_alice,
        eta_b: sys.eta_bob * transmittance_bob,
        y0: noise.total(),
        noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn clear() -> WaterProfile {
        WaterProfile::standard(WaterKind::Clear)
    }

    #[test]
    fn attenuation_is_one_at_origin() {
        for kind in WaterKind::ALL {
            let w = WaterProfile::standard(kind);
            assert_eq!(attenuation(0.0, &w, &SystemConfig::default()).unwrap(), 1.0);
        }
    }

    #[test]
    fn attenuation_clear_100m() {
        // 40-digit evaluation of exp(-0.151·100·(0.3/(θ·100))^0.26), θ = 6°.
        let a = attenuation(100.0, &clear(), &SystemConfig::default()).unwrap();
        assert_relative_eq!(a, 2.490_082_067_757_338_5e-3, max_relative = 1e-12);
        let a50 = attenuation(50.0, &clear(), &SystemConfig::default()).unwrap();
        assert_relative_eq!(a50, 2.760_645_576_813_883e-2, max_relative = 1e-12);
        assert!(a50 > a);
    }

    #[test]
    fn attenuation_rejects_bad_correction_factor() {
        let mut sys = SystemConfig { t_corr: 1.0, ..SystemConfig::default() };
        assert!(matches!(attenuation(10.0, &clear(), &sys), Err(Error::Domain(_))));
        sys.t_corr = 0.0;
        assert!(attenuation(10.0, &clear(), &sys).is_err());
        assert!(attenuation(-1.0, &clear(), &SystemConfig::default()).is_err());
    }

    #[test]
    fn irradiance_examples() {
        assert_eq!(irradiance(0.0, 7.5, 0.08), 7.5);
        assert_relative_eq!(
            irradiance(80.0, 1e-3, 0.08),
            1.661_557_273_173_934_5e-6,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            irradiance(80.0, 500.0, 0.08),
            0.830_778_636_586_967_2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn solid_angle_examples() {
        assert_relative_eq!(solid_angle(PI).unwrap(), 2.0 * PI, max_relative = 1e-15);
        assert_eq!(solid_angle(0.0).unwrap(), 0.0);
        assert_relative_eq!(
            solid_angle(60f64.to_radians()).unwrap(),
            0.841_787_214_476_932_9,
            max_relative = 1e-12
        );
        assert!(solid_angle(-0.1).is_err());
        assert!(solid_angle(2.0 * PI + 1e-9).is_err());
    }

    #[test]
    fn noise_dark_term_and_scenario1() {
        let sys = SystemConfig::default();
        let n = noise_probability(&sys).unwrap();
        assert_relative_eq!(n.dark, 9.6e-6, max_relative = 1e-12);
        // term-by-term 40-digit evaluation
        assert_relative_eq!(n.background, 7.875_655_368_497_43e-8, max_relative = 1e-10);
        assert_relative_eq!(n.total(), 9.678_756_553_684_974e-6, max_relative = 1e-12);
        assert!(n.dark > n.background);
    }

    #[test]
    fn noise_vanishes_without_sources() {
        let sys = SystemConfig { surface_irradiance: 0.0, dark_count_rate: 0.0, ..Default::default() };
        assert_eq!(noise_probability(&sys).unwrap().total(), 0.0);
    }

    #[test]
    fn link_budget_examples() {
        let sys = SystemConfig::default();
        let lb = link_budget(0.0, 100.0, &clear(), &sys).unwrap();
        assert_eq!(lb.transmittance_alice, 1.0);
        assert_eq!(lb.eta_a, sys.eta_alice);
        assert_relative_eq!(lb.eta_b, 0.5 * 2.490_082_067_757_338_5e-3, max_relative = 1e-12);

        let sys = SystemConfig { eta_alice: 0.8, eta_bob: 0.4, ..Default::default() };
        let mid = link_budget(30.0, 60.0, &clear(), &sys).unwrap();
        assert_relative_eq!(mid.eta_a / mid.eta_b, 2.0, max_relative = 1e-15);

        assert!(link_budget(-0.1, 10.0, &clear(), &sys).is_err());
        assert!(link_budget(10.5, 10.0, &clear(), &sys).is_err());
    }

    #[test]
    fn pupil_table_lookup_is_exact() {
        assert_eq!(correction_factor_for_pupil(0.05), Some(0.13));
        assert_eq!(correction_factor_for_pupil(0.30), Some(0.26));
        assert_eq!(correction_factor_for_pupil(0.25), None);
        assert!(SystemConfig::default().with_pupil_diameter(0.25).is_err());
        let sys = SystemConfig::default().with_pupils(0.25, 0.25, Some(0.24)).unwrap();
        assert_eq!(sys.t_corr, 0.24);
    }

    #[test]
    fn scenarios_map_to_irradiance() {
        let r: Vec<f64> = Scenario::ALL.iter().map(|s| s.surface_irradiance()).collect();
        assert_eq!(r, vec![1e-3, 10.0, 50.0, 125.0, 500.0]);
        assert!(Scenario::new(0).is_err());
        assert!(Scenario::new(6).is_err());
    }

    #[test]
    fn default_config_validates() {
        SystemConfig::default().validate().unwrap();
        let bad = SystemConfig { e_det: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
