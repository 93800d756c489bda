//! QBER-versus-distance curves, maximum secure distances, source-position
//! sweeps, correlation curves and the analytic-versus-Monte-Carlo grid.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_model::{link_budget, Scenario, SystemConfig, WaterKind, WaterProfile};
use crate::error::{Error, Result};
use crate::montecarlo::{simulate_bb84, simulate_bbm92, simulate_sarg04, McConfig, McProtocol, McResult};
use crate::protocol_analytics::{
    qber_bb84, qber_bbm92_simple, qber_sarg04, BB84_THRESHOLD, BBM92_THRESHOLD, SARG04_THRESHOLD,
};
use crate::quantum_channel::{bbm92_kraus_analysis, channel_pipeline};

/// Largest accepted `|QBER(L_max) - threshold|`.
pub const CROSSING_TOL: f64 = 5e-4;
pub const MAX_BISECTIONS: u32 = 60;
/// Smallest lower bracket tried when the QBER is already above threshold at
/// the default lower bracket.
pub const MIN_LOWER_BRACKET: f64 = 1e-6;
/// Absolute QBER floor of the Monte Carlo acceptance band.
pub const MC_ABS_TOL: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Bb84,
    Sarg04,
    /// BBM92 limited by detector errors only.
    Bbm92,
    /// BBM92 with the entangled state propagated through the Kraus channels.
    Bbm92Kraus,
}

impl Protocol {
    pub const ALL: [Protocol; 4] =
        [Protocol::Bb84, Protocol::Sarg04, Protocol::Bbm92, Protocol::Bbm92Kraus];

    pub fn threshold(self) -> f64 {
        match self {
            Protocol::Bb84 => BB84_THRESHOLD,
            Protocol::Sarg04 => SARG04_THRESHOLD,
            Protocol::Bbm92 | Protocol::Bbm92Kraus => BBM92_THRESHOLD,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Bb84 => "bb84",
            Protocol::Sarg04 => "sarg04",
            Protocol::Bbm92 => "bbm92",
            Protocol::Bbm92Kraus => "bbm92-kraus",
        }
    }

    pub fn is_entanglement_based(self) -> bool {
        matches!(self, Protocol::Bbm92 | Protocol::Bbm92Kraus)
    }

    fn mc_protocol(self) -> McProtocol {
        match self {
            Protocol::Bb84 => McProtocol::Bb84,
            Protocol::Sarg04 => McProtocol::Sarg04,
            Protocol::Bbm92 | Protocol::Bbm92Kraus => McProtocol::Bbm92,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown protocol `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    /// Link length, or source position for sweeps, m.
    pub x_value: f64,
    pub qber: f64,
    /// Analytic gain, or the retained fraction of pulses for Monte Carlo.
    pub gain: f64,
    pub corr_xx: Option<f64>,
    pub method: Method,
    pub std_err: Option<f64>,
}

/// Everything that fixes a QBER-versus-length function.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub protocol: Protocol,
    pub water: WaterProfile,
    pub sys: SystemConfig,
    /// Source position as a fraction of the link length; prepare-and-measure
    /// protocols ignore it.
    pub x_fraction: f64,
}

impl Setup {
    /// Applies the scenario's surface irradiance to `sys`.
    pub fn new(
        protocol: Protocol,
        water: WaterProfile,
        scenario: Scenario,
        sys: SystemConfig,
        x_fraction: f64,
    ) -> Result<Self> {
        Self::with_config(protocol, water, sys.with_scenario(scenario), x_fraction)
    }

    /// Uses `sys` as given, irradiance included.
    pub fn with_config(
        protocol: Protocol,
        water: WaterProfile,
        sys: SystemConfig,
        x_fraction: f64,
    ) -> Result<Self> {
        sys.validate()?;
        if !(0.0..=1.0).contains(&x_fraction) {
            return Err(Error::domain(format!("x/L must lie in [0, 1], got {x_fraction}")));
        }
        Ok(Self { protocol, water, sys, x_fraction })
    }

    /// Standard water profile, Table defaults, pupil diameter `d` for both
    /// ends, source at the midpoint for entanglement-based protocols.
    pub fn standard(protocol: Protocol, water: WaterKind, scenario: Scenario, d: f64) -> Result<Self> {
        let sys = SystemConfig::default().with_pupil_diameter(d)?;
        let x = if protocol.is_entanglement_based() { 0.5 } else { 0.0 };
        Self::new(protocol, WaterProfile::standard(water), scenario, sys, x)
    }

    fn source_position(&self, length: f64) -> f64 {
        if self.protocol.is_entanglement_based() {
            (self.x_fraction * length).clamp(0.0, length)
        } else {
            0.0
        }
    }

    /// Analytic QBER, gain and (Kraus only) correlation at link length `L`.
    pub fn analytic_point(&self, length: f64) -> Result<CurvePoint> {
        if !(length >= 0.0 && length.is_finite()) {
            return Err(Error::domain(format!("link length must be >= 0, got {length}")));
        }
        let (w, s) = (&self.water, &self.sys);
        let x = self.source_position(length);
        let (result, corr_xx) = match self.protocol {
            Protocol::Bb84 | Protocol::Sarg04 => {
                let link = link_budget(0.0, length, w, s)?;
                let r = if self.protocol == Protocol::Bb84 {
                    qber_bb84(link.y0, link.eta_b, s.mu, s.e_det)?
                } else {
                    qber_sarg04(link.y0, link.eta_b, s.mu, s.e_det)?
                };
                (r, None)
            }
            Protocol::Bbm92 => (qber_bbm92_simple(x, length, w, s)?, None),
            Protocol::Bbm92Kraus => {
                let k = bbm92_kraus_analysis(x, length, w, s)?;
                (k.result, Some(k.corr_xx))
            }
        };
        Ok(CurvePoint {
            x_value: length,
            qber: result.qber,
            gain: result.gain.total,
            corr_xx,
            method: Method::Analytic,
            std_err: None,
        })
    }

    pub fn qber(&self, length: f64) -> Result<f64> {
        self.analytic_point(length).map(|p| p.qber)
    }

    /// Monte Carlo estimate at link length `L`. `mc.protocol` and
    /// `mc.use_kraus_channel` are set from the setup.
    pub fn mc_point(&self, length: f64, mc: &McConfig) -> Result<(CurvePoint, McResult)> {
        let (w, s) = (&self.water, &self.sys);
        let x = self.source_position(length);
        let link = link_budget(x, length, w, s)?;
        let kraus = self.protocol == Protocol::Bbm92Kraus;
        let cfg = McConfig { protocol: self.protocol.mc_protocol(), use_kraus_channel: kraus, ..*mc };
        let r = match self.protocol {
            Protocol::Bb84 => simulate_bb84(&cfg, &link, s.e_det, s.mu)?,
            Protocol::Sarg04 => simulate_sarg04(&cfg, &link, s.e_det, s.mu)?,
            Protocol::Bbm92 => simulate_bbm92(&cfg, &link, s.e_det, s.mu, s.coincidence, None)?,
            Protocol::Bbm92Kraus => {
                let rho = channel_pipeline(x, length, w, s)?;
                simulate_bbm92(&cfg, &link, s.e_det, s.mu, s.coincidence, Some(&rho))?
            }
        };
        let point = CurvePoint {
            x_value: length,
            qber: r.qber_hat,
            gain: r.retained as f64 / r.pulses as f64,
            corr_xx: r.corr_xx_hat,
            method: Method::MonteCarlo,
            std_err: Some(r.std_err),
        };
        Ok((point, r))
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::domain("grid is empty"));
    }
    if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::domain("grid values must be finite and >= 0"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("grid must be strictly increasing"));
    }
    Ok(())
}

/// `n` evenly spaced points on `[start, end]`; a single point sits at `start`.
pub fn linear_grid(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n).map(|i| start + (end - start) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Analytic QBER at every grid length.
pub fn qber_curve(setup: &Setup, grid: &[f64]) -> Result<Vec<CurvePoint>> {
    check_grid(grid)?;
    grid.par_iter().map(|&l| setup.analytic_point(l)).collect()
}

/// Monte Carlo overlay on the same grid. Point `i` uses seed `mc.seed + i`.
pub fn mc_curve(setup: &Setup, grid: &[f64], mc: &McConfig) -> Result<Vec<CurvePoint>> {
    check_grid(grid)?;
    grid.iter()
        .enumerate()
        .map(|(i, &l)| {
            let cfg = McConfig { seed: mc.seed.wrapping_add(i as u64), ..*mc };
            setup.mc_point(l, &cfg).map(|(p, _)| p)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub l_lo: f64,
    pub l_hi: f64,
    /// Absolute tolerance on the crossing distance, m.
    pub tol: f64,
    /// Samples used to check monotonicity over the bracket.
    pub monotone_samples: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { l_lo: 0.01, l_hi: 500.0, tol: 1e-3, monotone_samples: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecureDistanceResult {
    pub l_max: f64,
    pub threshold: f64,
    pub qber_at_l_max: f64,
    pub iterations: u32,
    pub bracket: (f64, f64),
    /// Whether the QBER was non-decreasing across the sampled bracket.
    pub monotone: bool,
}

/// Distance where the analytic QBER first rises through `threshold`.
///
/// The lower bracket starts at `opts.l_lo` and is shrunk by decades down to
/// [`MIN_LOWER_BRACKET`] if the QBER already exceeds the threshold there; the
/// upper bracket doubles from the lower one until it crosses or reaches
/// `opts.l_hi`. Bisection stops once the bracket is narrower than `opts.tol`
/// and the QBER at the midpoint is within a tenth of [`CROSSING_TOL`].
pub fn max_secure_distance(setup: &Setup, threshold: f64, opts: &SolverOptions) -> Result<SecureDistanceResult> {
    if !(threshold > 0.0 && threshold < 0.5) {
        return Err(Error::domain(format!("threshold must lie in (0, 0.5), got {threshold}")));
    }
    if !(opts.l_lo > 0.0 && opts.l_hi > opts.l_lo && opts.tol > 0.0) {
        return Err(Error::domain("solver needs 0 < l_lo < l_hi and tol > 0"));
    }
    let f = |l: f64| setup.qber(l).map(|q| q - threshold);

    let mut lo = opts.l_lo;
    while f(lo)? >= 0.0 {
        if lo / 10.0 < MIN_LOWER_BRACKET {
            return Err(Error::NoCrossing(format!(
                "QBER is already above {threshold} at {lo:e} m"
            )));
        }
        lo /= 10.0;
    }
    let mut hi = (2.0 * lo).min(opts.l_hi);
    while f(hi)? < 0.0 {
        if hi >= opts.l_hi {
            return Err(Error::NoCrossing(format!(
                "QBER stays below {threshold} up to {} m",
                opts.l_hi
            )));
        }
        lo = hi;
        hi = (2.0 * hi).min(opts.l_hi);
    }

    // Check monotonicity on a log grid and narrow to the first upward crossing.
    let n = opts.monotone_samples.max(2);
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    let mut monotone = true;
    let (mut prev_l, mut prev_q) = (lo, f(lo)?);
    for i in 1..n {
        let l = if i == n - 1 { hi } else { lo * ratio.powi(i as i32) };
        let q = f(l)?;
        if q < prev_q - 1e-12 {
            monotone = false;
        }
        if q >= 0.0 {
            lo = prev_l;
            hi = l;
            break;
        }
        (prev_l, prev_q) = (l, q);
    }
    if !monotone {
        log::warn!("QBER is not monotone below the crossing; using the first upward crossing");
    }

    let mut iterations = 0;
    let mut mid = 0.5 * (lo + hi);
    let mut q_mid = f(mid)?;
    while iterations < MAX_BISECTIONS && (hi - lo > opts.tol || q_mid.abs() > 0.1 * CROSSING_TOL) {
        if q_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        q_mid = f(mid)?;
        iterations += 1;
    }
    Ok(SecureDistanceResult {
        l_max: mid,
        threshold,
        qber_at_l_max: q_mid + threshold,
        iterations,
        bracket: (lo, hi),
        monotone,
    })
}

/// Default Fig.-style sweep fractions `{0, 0.05, …, 0.5}`.
pub fn default_sweep_fractions() -> Vec<f64> {
    (0..=10).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub x_fraction: f64,
    pub result: SecureDistanceResult,
}

/// Maximum secure BBM92 (Kraus) distance for each source fraction `x/L`.
pub fn source_position_sweep(
    water: &WaterProfile,
    sys: &SystemConfig,
    fractions: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<SweepPoint>> {
    if let Some(f) = fractions.iter().find(|f| !(0.0..=0.5).contains(*f)) {
        return Err(Error::domain(format!("sweep fractions must lie in [0, 0.5], got {f}")));
    }
    fractions
        .par_iter()
        .map(|&fr| {
            let setup = Setup::with_config(Protocol::Bbm92Kraus, *water, sys.clone(), fr)?;
            let result = max_secure_distance(&setup, BBM92_THRESHOLD, opts)?;
            Ok(SweepPoint { x_fraction: fr, result })
        })
        .collect()
}

/// `⟨σx⊗σx⟩` of the propagated pair, with the Kraus QBER and gain, per length.
pub fn correlation_curve(
    water: &WaterProfile,
    sys: &SystemConfig,
    x_fraction: f64,
    grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    let setup = Setup::with_config(Protocol::Bbm92Kraus, *water, sys.clone(), x_fraction)?;
    qber_curve(&setup, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationCell {
    pub protocol: Protocol,
    pub water: WaterKind,
    pub scenario: u8,
    pub length: f64,
    pub analytic: f64,
    pub mc: McResult,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationPlan {
    pub protocols: Vec<Protocol>,
    pub waters: Vec<WaterKind>,
    pub scenarios: Vec<Scenario>,
    /// Lengths as fractions of each cell's analytic maximum secure distance.
    pub length_fractions: Vec<f64>,
    pub pupil_diameter: f64,
}

impl Default for ValidationPlan {
    fn default() -> Self {
        Self {
            protocols: vec![Protocol::Bb84, Protocol::Sarg04, Protocol::Bbm92Kraus],
            waters: WaterKind::ALL.to_vec(),
            scenarios: vec![Scenario::new(1).expect("valid"), Scenario::new(5).expect("valid")],
            length_fractions: vec![0.25, 0.5, 0.75, 1.0],
            pupil_diameter: 0.30,
        }
    }
}

/// Compares Monte Carlo against the closed forms on every cell of `plan`.
/// A cell passes when `|qber_hat - analytic| <= max(3σ, 0.002)`. Cell `i`
/// runs with seed `mc.seed + i`.
pub fn validate_against_mc(plan: &ValidationPlan, mc: &McConfig) -> Result<Vec<ValidationCell>> {
    let mut cells = Vec::new();
    for &protocol in &plan.protocols {
        for &water in &plan.waters {
            for &scenario in &plan.scenarios {
                let setup = Setup::standard(protocol, water, scenario, plan.pupil_diameter)?;
                let l_max = max_secure_distance(&setup, protocol.threshold(), &SolverOptions::default())?.l_max;
                for &frac in &plan.length_fractions {
                    let length = frac * l_max;
                    let cfg = McConfig { seed: mc.seed.wrapping_add(cells.len() as u64), ..*mc };
                    let analytic = setup.qber(length)?;
                    let (_, r) = setup.mc_point(length, &cfg)?;
                    let tolerance = (3.0 * r.std_err).max(MC_ABS_TOL);
                    let passed = (r.qber_hat - analytic).abs() <= tolerance;
                    cells.push(ValidationCell {
                        protocol,
                        water,
                        scenario: scenario.number(),
                        length,
                        analytic,
                        mc: r,
                        tolerance,
                        passed,
                    });
                }
            }
        }
    }
    Ok(cells)
}
