//! Command-line front end: flag and config-file resolution, subcommands and
//! CSV output.
//!
//! Every CSV starts with `# `-prefixed manifest lines recording the command,
//! the resolved parameters and the seed. Numbers carry 9 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    default_sweep_fractions, linear_grid, max_secure_distance, mc_curve, qber_curve, source_position_sweep,
    validate_against_mc, CurvePoint, Protocol, Setup, SolverOptions, ValidationPlan,
};
use crate::channel_model::{
    correction_factor_for_pupil, Scenario, SystemConfig, WaterKind, WaterProfile,
};
use crate::error::Error;
use crate::montecarlo::McConfig;
use crate::protocol_analytics::CoincidenceModel;
use crate::quantum_channel::DampingMapping;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_NO_CROSSING: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] Error),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("{failed} of {total} validation cells failed")]
    ValidationFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Model(Error::Config(_)) => EXIT_USAGE,
            CliError::Model(Error::NoCrossing(_)) => EXIT_NO_CROSSING,
            CliError::Model(_) | CliError::Io(_) => EXIT_DOMAIN,
            CliError::ValidationFailed { .. } => EXIT_VALIDATION,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "uwqkd", version, about = "Underwater QKD link analysis")]
pub struct Cli {
    /// TOML file overriding the default system parameters.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Write CSV here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// QBER versus link length.
    QberCurve(CurveArgs),
    /// Maximum secure distance for one configuration.
    MaxDistance(MaxDistanceArgs),
    /// BBM92 maximum secure distance versus source position x/L.
    SourceSweep(SweepArgs),
    /// Surviving ⟨σx⊗σx⟩ correlation versus link length.
    Correlation(CorrelationArgs),
    /// Monte Carlo against closed forms on the protocol × water × scenario grid.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LinkArgs {
    /// bb84, sarg04, bbm92 or bbm92-kraus.
    #[arg(long, default_value = "bb84")]
    pub protocol: String,
    /// clear, coastal or turbid.
    #[arg(long, default_value = "clear")]
    pub water: String,
    /// Ambient-light scenario 1–5; defaults to 1 unless the config file sets
    /// the surface irradiance.
    #[arg(long)]
    pub scenario: Option<u8>,
    /// Transmitter pupil diameter, m.
    #[arg(long)]
    pub d1: Option<f64>,
    /// Receiver pupil diameter, m; defaults to d1.
    #[arg(long)]
    pub d2: Option<f64>,
    /// Source position x/L for BBM92.
    #[arg(long, default_value_t = 0.5)]
    pub x_fraction: f64,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub packets: u64,
    #[arg(long, default_value_t = 1_000)]
    pub photons_per_packet: u64,
}

impl McArgs {
    fn config(&self) -> McConfig {
        McConfig {
            n_packets: self.packets,
            photons_per_packet: self.photons_per_packet,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub link: LinkArgs,
    #[arg(long = "L-min", default_value_t = 0.0)]
    pub l_min: f64,
    #[arg(long = "L-max", default_value_t = 200.0)]
    pub l_max: f64,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
    /// Add Monte Carlo columns.
    #[arg(long)]
    pub with_mc: bool,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MaxDistanceArgs {
    #[command(flatten)]
    pub link: LinkArgs,
    /// Defaults to the protocol's security threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long = "L-hi", default_value_t = 500.0)]
    pub l_hi: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, default_value = "clear")]
    pub water: String,
    #[arg(long)]
    pub scenario: Option<u8>,
    #[arg(long)]
    pub d1: Option<f64>,
    #[arg(long)]
    pub d2: Option<f64>,
    /// Comma-separated x/L values in [0, 0.5]; defaults to 0, 0.05, …, 0.5.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    #[arg(long = "L-hi", default_value_t = 500.0)]
    pub l_hi: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CorrelationArgs {
    #[arg(long, default_value = "clear")]
    pub water: String,
    #[arg(long)]
    pub scenario: Option<u8>,
    #[arg(long)]
    pub d1: Option<f64>,
    #[arg(long)]
    pub d2: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub x_fraction: f64,
    #[arg(long = "L-max", default_value_t = 100.0)]
    pub l_max: f64,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub mc: McArgs,
    /// Pupil diameter used for every cell, m.
    #[arg(long, default_value_t = 0.30)]
    pub d: f64,
}

/// Optional overrides read from the config file. Angles are in degrees.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub system: SystemOverrides,
    #[serde(default)]
    pub water: Option<WaterOverrides>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemOverrides {
    pub wavelength: Option<f64>,
    pub divergence_deg: Option<f64>,
    pub field_of_view_deg: Option<f64>,
    pub tx_pupil: Option<f64>,
    pub rx_pupil: Option<f64>,
    pub filter_width: Option<f64>,
    pub bit_period: Option<f64>,
    pub gate_time: Option<f64>,
    pub eta_alice: Option<f64>,
    pub eta_bob: Option<f64>,
    pub mu: Option<f64>,
    pub dark_count_rate: Option<f64>,
    pub k_inf: Option<f64>,
    pub depth: Option<f64>,
    pub surface_irradiance: Option<f64>,
    pub e_det: Option<f64>,
    pub t_corr: Option<f64>,
    pub water_temperature: Option<f64>,
    pub coincidence: Option<CoincidenceModel>,
    pub damping_mapping: Option<DampingMapping>,
}

/// Replaces the standard coefficients of whichever water type is selected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaterOverrides {
    pub alpha: Option<f64>,
    pub gamma_dep: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn apply(&self, mut sys: SystemConfig) -> SystemConfig {
        let o = &self.system;
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = o.$field { sys.$field = v; } )* };
        }
        set!(
            wavelength, tx_pupil, rx_pupil, filter_width, bit_period, gate_time, eta_alice, eta_bob, mu,
            dark_count_rate, k_inf, depth, surface_irradiance, e_det, t_corr, water_temperature,
            coincidence, damping_mapping
        );
        if let Some(d) = o.divergence_deg {
            sys.divergence = d.to_radians();
        }
        if let Some(d) = o.field_of_view_deg {
            sys.field_of_view = d.to_radians();
        }
        sys
    }

    pub fn water(&self, kind: WaterKind) -> Result<WaterProfile, CliError> {
        let base = WaterProfile::standard(kind);
        match &self.water {
            None => Ok(base),
            Some(w) => Ok(WaterProfile::new(
                kind,
                w.alpha.unwrap_or(base.alpha),
                w.gamma_dep.unwrap_or(base.gamma_dep),
            )?),
        }
    }
}

/// Parameters after merging defaults, the config file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub water: WaterProfile,
    pub scenario: Option<Scenario>,
    pub sys: SystemConfig,
}

fn resolve(
    config: &ConfigFile,
    water: &str,
    scenario: Option<u8>,
    d1: Option<f64>,
    d2: Option<f64>,
) -> Result<Resolved, CliError> {
    let kind: WaterKind = water.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
    let water = config.water(kind)?;
    let mut sys = config.apply(SystemConfig::default());

    let scenario = match scenario {
        Some(n) => Some(Scenario::new(n).map_err(|e| CliError::Usage(e.to_string()))?),
        None if config.system.surface_irradiance.is_some() => None,
        None => Some(Scenario::new(1)?),
    };
    if let Some(s) = scenario {
        sys = sys.with_scenario(s);
    }

    if d1.is_some() || d2.is_some() {
        let d1 = d1.unwrap_or(sys.tx_pupil);
        let d2 = d2.unwrap_or(d1);
        let t = match (config.system.t_corr, correction_factor_for_pupil(d1)) {
            (Some(t), _) => t,
            (None, Some(t)) => t,
            (None, None) => {
                return Err(CliError::Usage(format!(
                    "d1 = {d1} m has no tabulated correction factor; set t_corr in the config file"
                )))
            }
        };
        sys = sys.with_pupils(d1, d2, Some(t))?;
    }
    sys.validate()?;
    Ok(Resolved { water, scenario, sys })
}

fn parse_protocol(s: &str) -> Result<Protocol, CliError> {
    s.parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

/// Formats with 9 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.8e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// Provenance recorded as comment lines at the top of every CSV.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub entries: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub sys: Option<SystemConfig>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        Self { command: command.to_string(), entries: Vec::new(), seed: None, sys: None }
    }

    fn entry(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    fn link(self, r: &Resolved) -> Self {
        let scenario = r.scenario.map(|s| s.to_string()).unwrap_or_else(|| "custom".into());
        let mut m = self
            .entry("water", r.water.kind)
            .entry("alpha", fmt_num(r.water.alpha))
            .entry("gamma_dep", fmt_num(r.water.gamma_dep))
            .entry("scenario", scenario);
        m.sys = Some(r.sys.clone());
        m
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let _ = writeln!(out, "# command: {}", self.command);
        let _ = writeln!(out, "# version: {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "# timestamp_unix: {timestamp}");
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "# seed: {seed}");
        }
        for (k, v) in &self.entries {
            let _ = writeln!(out, "# {k}: {v}");
        }
        if let Some(sys) = &self.sys {
            let _ = writeln!(out, "# [system]");
            let body = toml::to_string(sys).unwrap_or_default();
            for line in body.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        out
    }
}

const CURVE_HEADER: &str = "L_m,qber_analytic,gain,corr_xx,qber_mc,mc_stderr";

fn curve_csv(analytic: &[CurvePoint], mc: Option<&[CurvePoint]>) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for (i, p) in analytic.iter().enumerate() {
        let m = mc.map(|m| &m[i]);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_num(p.x_value),
            fmt_num(p.qber),
            fmt_num(p.gain),
            fmt_opt(p.corr_xx),
            fmt_opt(m.map(|m| m.qber)),
            fmt_opt(m.and_then(|m| m.std_err)),
        );
    }
    out
}

fn emit(out_path: Option<&Path>, stdout: &mut dyn Write, manifest: &RunManifest, body: &str) -> Result<(), CliError> {
    let text = format!("{}{}", manifest.render(), body);
    match out_path {
        Some(p) => fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Runs a parsed command, writing CSV to `stdout` unless `--out` is given.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let out = cli.out.as_deref();
    match &cli.command {
        Command::QberCurve(a) => {
            let protocol = parse_protocol(&a.link.protocol)?;
            let r = resolve(&config, &a.link.water, a.link.scenario, a.link.d1, a.link.d2)?;
            if a.points == 0 || !(a.l_max >= a.l_min) {
                return Err(CliError::Usage("need points >= 1 and L-max >= L-min".into()));
            }
            let setup = Setup::with_config(protocol, r.water, r.sys.clone(), a.link.x_fraction)?;
            let grid = linear_grid(a.l_min, a.l_max, a.points);
            let analytic = qber_curve(&setup, &grid)?;
            let mut manifest = RunManifest::new("qber-curve")
                .entry("protocol", protocol)
                .entry("x_fraction", fmt_num(a.link.x_fraction))
                .link(&r);
            let mc = if a.with_mc {
                let cfg = a.mc.config();
                manifest = manifest
                    .entry("mc_packets", cfg.n_packets)
                    .entry("mc_photons_per_packet", cfg.photons_per_packet);
                manifest.seed = Some(cfg.seed);
                Some(mc_curve(&setup, &grid, &cfg)?)
            } else {
                None
            };
            emit(out, stdout, &manifest, &curve_csv(&analytic, mc.as_deref()))
        }
        Command::MaxDistance(a) => {
            let protocol = parse_protocol(&a.link.protocol)?;
            let r = resolve(&config, &a.link.water, a.link.scenario, a.link.d1, a.link.d2)?;
            let threshold = a.threshold.unwrap_or(protocol.threshold());
            let setup = Setup::with_config(protocol, r.water, r.sys.clone(), a.link.x_fraction)?;
            let opts = SolverOptions { l_hi: a.l_hi, ..Default::default() };
            let res = max_secure_distance(&setup, threshold, &opts)?;
            let manifest = RunManifest::new("max-distance")
                .entry("protocol", protocol)
                .entry("x_fraction", fmt_num(a.link.x_fraction))
                .link(&r);
            let body = format!(
                "L_max_m,threshold,qber_at_L_max,iterations,bracket_lo_m,bracket_hi_m\n{},{},{},{},{},{}\n",
                fmt_num(res.l_max),
                fmt_num(res.threshold),
                fmt_num(res.qber_at_l_max),
                res.iterations,
                fmt_num(res.bracket.0),
                fmt_num(res.bracket.1),
            );
            emit(out, stdout, &manifest, &body)
        }
        Command::SourceSweep(a) => {
            let r = resolve(&config, &a.water, a.scenario, a.d1, a.d2)?;
            let fractions = a.fractions.clone().unwrap_or_else(default_sweep_fractions);
            let opts = SolverOptions { l_hi: a.l_hi, ..Default::default() };
            let sweep = source_position_sweep(&r.water, &r.sys, &fractions, &opts)?;
            let manifest = RunManifest::new("source-sweep").entry("protocol", Protocol::Bbm92Kraus).link(&r);
            let mut body = String::from("x_fraction,L_max_m,qber_at_L_max,iterations\n");
            for p in &sweep {
                let _ = writeln!(
                    body,
                    "{},{},{},{}",
                    fmt_num(p.x_fraction),
                    fmt_num(p.result.l_max),
                    fmt_num(p.result.qber_at_l_max),
                    p.result.iterations
                );
            }
            emit(out, stdout, &manifest, &body)
        }
        Command::Correlation(a) => {
            let r = resolve(&config, &a.water, a.scenario, a.d1, a.d2)?;
            if a.points == 0 || !(a.l_max >= 0.0) {
                return Err(CliError::Usage("need points >= 1 and L-max >= 0".into()));
            }
            let setup = Setup::with_config(Protocol::Bbm92Kraus, r.water, r.sys.clone(), a.x_fraction)?;
            let curve = qber_curve(&setup, &linear_grid(0.0, a.l_max, a.points))?;
            let manifest = RunManifest::new("correlation")
                .entry("protocol", Protocol::Bbm92Kraus)
                .entry("x_fraction", fmt_num(a.x_fraction))
                .link(&r);
            emit(out, stdout, &manifest, &curve_csv(&curve, None))
        }
        Command::Validate(a) => {
            let plan = ValidationPlan { pupil_diameter: a.d, ..Default::default() };
            let cfg = a.mc.config();
            let cells = validate_against_mc(&plan, &cfg)?;
            let mut manifest = RunManifest::new("validate")
                .entry("mc_packets", cfg.n_packets)
                .entry("mc_photons_per_packet", cfg.photons_per_packet)
                .entry("pupil_diameter", fmt_num(a.d));
            manifest.seed = Some(cfg.seed);
            let mut body =
                String::from("protocol,water,scenario,L_m,qber_analytic,qber_mc,mc_stderr,tolerance,status\n");
            for c in &cells {
                let _ = writeln!(
                    body,
                    "{},{},{},{},{},{},{},{},{}",
                    c.protocol,
                    c.water,
                    c.scenario,
                    fmt_num(c.length),
                    fmt_num(c.analytic),
                    fmt_num(c.mc.qber_hat),
                    fmt_num(c.mc.std_err),
                    fmt_num(c.tolerance),
                    if c.passed { "PASS" } else { "FAIL" }
                );
            }
            emit(out, stdout, &manifest, &body)?;
            let failed = cells.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::ValidationFailed { failed, total: cells.len() });
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_num(179.05), "1.79050000e2");
        assert_eq!(fmt_num(0.033), "3.30000000e-2");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn config_converts_degrees_and_overrides() {
        let cfg = ConfigFile::parse(
            "[system]\ndivergence_deg = 10.0\nmu = 0.5\ncoincidence = \"exact\"\n[water]\nalpha = 0.2\n",
        )
        .unwrap();
        let sys = cfg.apply(SystemConfig::default());
        assert!((sys.divergence - 10f64.to_radians()).abs() < 1e-15);
        assert_eq!(sys.mu, 0.5);
        assert_eq!(sys.coincidence, CoincidenceModel::Exact);
        assert_eq!(sys.e_det, 0.033);
        assert_eq!(cfg.water(WaterKind::Coastal).unwrap().alpha, 0.2);
        assert!(ConfigFile::parse("[system]\nbogus = 1\n").is_err());
    }

    #[test]
    fn resolution_order() {
        let none = ConfigFile::default();
        let r = resolve(&none, "coastal", None, None, None).unwrap();
        assert_eq!(r.sys.surface_irradiance, 1e-3);
        assert_eq!(r.water.kind, WaterKind::Coastal);

        let r = resolve(&none, "clear", Some(5), Some(0.05), None).unwrap();
        assert_eq!(r.sys.surface_irradiance, 500.0);
        assert_eq!((r.sys.tx_pupil, r.sys.rx_pupil, r.sys.t_corr), (0.05, 0.05, 0.13));

        assert!(matches!(resolve(&none, "clear", None, Some(0.07), None), Err(CliError::Usage(_))));
        assert!(matches!(resolve(&none, "muddy", None, None, None), Err(CliError::Usage(_))));
        assert!(matches!(resolve(&none, "clear", Some(6), None, None), Err(CliError::Usage(_))));

        let irr = ConfigFile::parse("[system]\nsurface_irradiance = 42.0\n").unwrap();
        let r = resolve(&irr, "clear", None, None, None).unwrap();
        assert_eq!((r.scenario, r.sys.surface_irradiance), (None, 42.0));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::Model(Error::NoCrossing(String::new())).exit_code(), EXIT_NO_CROSSING);
        assert_eq!(CliError::Model(Error::Domain(String::new())).exit_code(), EXIT_DOMAIN);
        assert_eq!(CliError::ValidationFailed { failed: 1, total: 2 }.exit_code(), EXIT_VALIDATION);
    }
}
