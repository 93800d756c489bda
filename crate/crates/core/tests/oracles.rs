//! End-to-end checks of the analysis layer and Monte Carlo against
//! independently derived values.

use uwqkd::analysis::{
    correlation_curve, default_sweep_fractions, linear_grid, max_secure_distance, qber_curve,
    source_position_sweep, Protocol, Setup, SolverOptions,
};
use uwqkd::channel_model::{link_budget, Scenario, SystemConfig, WaterKind, WaterProfile};
use uwqkd::montecarlo::{simulate_bb84, simulate_bbm92, simulate_sarg04, McConfig, McProtocol};
use uwqkd::protocol_analytics::{qber_bb84, qber_sarg04};
use uwqkd::quantum_channel::{channel_pipeline, qber_bbm92_kraus};

fn s(n: u8) -> Scenario {
    Scenario::new(n).unwrap()
}

fn l_max_with(p: Protocol, w: WaterKind, scenario: u8, d: f64, opts: &SolverOptions) -> f64 {
    let setup = Setup::standard(p, w, s(scenario), d).unwrap();
    max_secure_distance(&setup, p.threshold(), opts).unwrap().l_max
}

fn l_max(p: Protocol, w: WaterKind, scenario: u8, d: f64) -> f64 {
    l_max_with(p, w, scenario, d, &SolverOptions::default())
}

fn sys(d: f64, scenario: u8) -> SystemConfig {
    SystemConfig::default().with_pupil_diameter(d).unwrap().with_scenario(s(scenario))
}

#[test]
fn frozen_secure_distances() {
    let cases = [
        (Protocol::Bb84, WaterKind::Clear, 1, 179.151_808_067),
        (Protocol::Sarg04, WaterKind::Clear, 1, 163.771_115_620),
        (Protocol::Bb84, WaterKind::Turbid, 5, 0.179_495_178),
        (Protocol::Bbm92Kraus, WaterKind::Clear, 1, 1.753_708_827),
    ];
    let tight = SolverOptions { tol: 1e-10, ..Default::default() };
    for (p, w, n, want) in cases {
        let got = l_max_with(p, w, n, 0.3, &tight);
        assert!(((got - want) / want).abs() < 1e-7, "{p} {w} S{n}: {got}");
    }
}

#[test]
fn pupil_ordering_follows_noise_regime() {
    let pupils = [0.05, 0.10, 0.20, 0.30];
    for p in [Protocol::Bb84, Protocol::Sarg04] {
        for (w, n, grows) in [
            (WaterKind::Clear, 1, true),
            (WaterKind::Coastal, 1, true),
            (WaterKind::Clear, 5, false),
            (WaterKind::Coastal, 5, false),
            (WaterKind::Turbid, 1, false),
            (WaterKind::Turbid, 5, false),
        ] {
            let l: Vec<f64> = pupils.iter().map(|&d| l_max(p, w, n, d)).collect();
            let ordered = l.windows(2).all(|x| if grows { x[1] > x[0] } else { x[1] < x[0] });
            assert!(ordered, "{p} {w} S{n}: {l:?}");
        }
    }
}

#[test]
fn turbid_source_sweep_is_nearly_flat() {
    let sweep = source_position_sweep(
        &WaterProfile::standard(WaterKind::Turbid),
        &sys(0.3, 1),
        &default_sweep_fractions(),
        &SolverOptions::default(),
    )
    .unwrap();
    let (first, last) = (sweep[0].result.l_max, sweep[10].result.l_max);
    assert!((first - last) / first < 0.25);
}

#[test]
fn correlation_thresholds() {
    let base = SystemConfig::default();
    let clear = correlation_curve(&WaterProfile::standard(WaterKind::Clear), &base, 0.5, &[0.0, 100.0]).unwrap();
    assert_eq!(clear[0].corr_xx, Some(1.0));
    assert!(clear[1].corr_xx.unwrap() > 0.01);
    let turbid = correlation_curve(&WaterProfile::standard(WaterKind::Turbid), &base, 0.5, &[10.0]).unwrap();
    assert!(turbid[0].corr_xx.unwrap() < 0.05);
}

#[test]
fn solver_agrees_with_curve() {
    let setup = Setup::standard(Protocol::Bb84, WaterKind::Clear, s(1), 0.3).unwrap();
    let r = max_secure_distance(&setup, 0.11, &SolverOptions::default()).unwrap();
    let grid = linear_grid(r.l_max - 1.0, r.l_max + 1.0, 3);
    let curve = qber_curve(&setup, &grid).unwrap();
    assert!(curve[0].qber < 0.11 && curve[2].qber > 0.11);
    assert!((curve[1].qber - 0.11).abs() < 5e-4);
}

#[test]
fn mc_bb84_clear_100m() {
    let s1 = sys(0.3, 1);
    let w = WaterProfile::standard(WaterKind::Clear);
    let link = link_budget(0.0, 100.0, &w, &s1).unwrap();
    let analytic = qber_bb84(link.y0, link.eta_b, s1.mu, s1.e_det).unwrap().qber;
    let mc = McConfig { n_packets: 1000, ..McConfig::new(McProtocol::Bb84, 11) };
    let r = simulate_bb84(&mc, &link, s1.e_det, s1.mu).unwrap();
    assert!((r.qber_hat - analytic).abs() <= 3.0 * r.std_err, "{} vs {analytic}", r.qber_hat);
    assert_eq!(r.retained + r.discarded + r.no_click, r.pulses);
}

#[test]
fn mc_sarg04_coastal_short_links() {
    let s1 = sys(0.3, 1);
    let w = WaterProfile::standard(WaterKind::Coastal);
    for (i, l) in [10.0, 30.0, 60.0].into_iter().enumerate() {
        let link = link_budget(0.0, l, &w, &s1).unwrap();
        let analytic = qber_sarg04(link.y0, link.eta_b, s1.mu, s1.e_det).unwrap().qber;
        let mc = McConfig { n_packets: 1000, ..McConfig::new(McProtocol::Sarg04, 20 + i as u64) };
        let r = simulate_sarg04(&mc, &link, s1.e_det, s1.mu).unwrap();
        assert!((r.qber_hat - analytic).abs() <= 3.0 * r.std_err, "L={l}: {} vs {analytic}", r.qber_hat);
    }
}

#[test]
fn mc_bbm92_kraus_clear_one_metre() {
    let s1 = sys(0.3, 1);
    let w = WaterProfile::standard(WaterKind::Clear);
    let link = link_budget(0.5, 1.0, &w, &s1).unwrap();
    let rho = channel_pipeline(0.5, 1.0, &w, &s1).unwrap();
    let analytic = qber_bbm92_kraus(0.5, 1.0, &w, &s1).unwrap().qber;
    let mc = McConfig { n_packets: 1000, use_kraus_channel: true, ..McConfig::new(McProtocol::Bbm92, 5) };
    let r = simulate_bbm92(&mc, &link, s1.e_det, s1.mu, s1.coincidence, Some(&rho)).unwrap();
    assert!((r.qber_hat - analytic).abs() <= 3.0 * r.std_err, "{} vs {analytic}", r.qber_hat);
    let corr = rho.correlation_xx().unwrap();
    assert!((r.corr_xx_hat.unwrap() - corr).abs() <= 3.0 * r.corr_xx_std_err.unwrap());
}
