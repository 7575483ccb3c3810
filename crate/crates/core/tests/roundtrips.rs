//! Cross-module generate-then-fit round trips at realistic statistics.

use spdc_core::biphoton::{BiphotonModel, TimeGrid};
use spdc_core::counting::{
    DetectionChain, JitterModel, SourceModel, histogram_coincidences, simulate_timetags,
};
use spdc_core::fitting::{G2FitPriors, Weighting, fit_g2_histogram};

#[test]
fn simulated_histogram_recovers_damping_rates() {
    let gamma_signal = 546e6;
    let gamma_idler = 735e6;
    let detector_gamma = 4.611253e10;
    let model = BiphotonModel::single_mode(gamma_signal, gamma_idler, 1.93414489e14, 1.93414489e14)
        .unwrap();
    let source = SourceModel {
        pair_rate_per_mw_hz: 2000.0,
        pump_power_mw: 300.0,
        correlation: model,
        grid: TimeGrid::default(),
    };
    let signal_chain = DetectionChain {
        fiber_efficiency: 0.74989,
        filter_transmittance: 0.97,
        detector_efficiency: 0.60,
        duty_cycle: 1.0,
        dark_rate_hz: 300.0,
        jitter: JitterModel::None,
    };
    let idler_chain = DetectionChain {
        filter_transmittance: 0.99,
        jitter: JitterModel::DetectorShaped {
            gamma_hz: detector_gamma,
        },
        ..signal_chain
    };

    let (signal, idler) = simulate_timetags(&source, &signal_chain, &idler_chain, 10.0, 7).unwrap();
    let histogram = histogram_coincidences(&signal, &idler, 25e-12, 5e-9, 10.0).unwrap();
    assert!(histogram.total() > 1_000_000, "need peak statistics");

    let times: Vec<f64> = (0..histogram.counts.len())
        .map(|i| histogram.bin_center_s(i))
        .collect();
    let counts: Vec<f64> = histogram.counts.iter().map(|&c| c as f64).collect();
    let priors = G2FitPriors {
        gamma_signal_hz: 450e6,
        gamma_idler_hz: 850e6,
        detector_gamma_hz: 3e10,
        fix_detector: false,
        weighting: Weighting::Unweighted,
    };
    let fit = fit_g2_histogram(&times, &counts, &priors).unwrap();
    assert!(fit.converged, "{:?}", fit.reason);
    let gs = fit.value("gamma_signal_hz").unwrap();
    let gi = fit.value("gamma_idler_hz").unwrap();
    assert!(
        (gs - gamma_signal).abs() / gamma_signal < 0.10,
        "γ_s {gs} vs {gamma_signal}"
    );
    assert!(
        (gi - gamma_idler).abs() / gamma_idler < 0.10,
        "γ_i {gi} vs {gamma_idler}"
    );
}
