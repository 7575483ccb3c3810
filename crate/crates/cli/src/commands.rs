//! Subcommand implementations. Human-readable reports go to standard
//! output; machine artifacts (CSV, JSON, time-tag binaries) go to the
//! output directory.

use crate::config::RunConfig;
use serde_json::json;
use spdc_core::biphoton::{
    DetectorResponse, TimeGrid, convolve_g2, fwhm, g2_curve, rebin, t_fwhm_analytic,
};
use spdc_core::clustering::ClusterAnalysis;
use spdc_core::counting::{
    CarEstimate, SourceModel, car, car_from_histogram, expected_counts, histogram_coincidences,
    simulate_timetags,
};
use spdc_core::fitting::{G2FitPriors, Weighting, fit_g2_histogram, fit_visibility_decay};
use spdc_core::interference::{MichelsonModel, michelson_visibility};
use spdc_core::qpm::{GainSpectrum, QpmError, SpdcProcess, gain_spectrum, solve_poling_period};
use std::fmt;
use std::fs;
use std::path::Path;

const SPEED_OF_LIGHT: f64 = spdc_core::constants::SPEED_OF_LIGHT;

#[derive(Debug)]
pub enum CliError {
    /// Configuration or validation problem (exit code 2).
    Config(String),
    /// Computational non-convergence or no-solution (exit code 3).
    Computation(String),
    /// Unexpected internal error (exit code 1).
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Computation(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Computation(m) => write!(f, "computation error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

fn write_artifact(out_dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = out_dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut x = seed ^ salt.wrapping_mul(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

pub fn cmd_cluster(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let cavity = config.cavity_section().map_err(CliError::Config)?;
    let analysis = ClusterAnalysis::compute(
        cavity.signal.fsr_hz,
        cavity.idler.fsr_hz,
        cavity.signal.linewidth_hz,
        cavity.idler.linewidth_hz,
    )
    .map_err(|e| CliError::Config(format!("cavity: {e}")))?;

    let report = json!({
        "cluster_spacing_hz": analysis.cluster_spacing_hz,
        "n_signal": analysis.n_signal,
        "n_idler": analysis.n_idler,
        "delta_nu_hz": analysis.orthogonal_offset_hz,
        "single_mode": analysis.single_mode,
    });
    write_artifact(
        out_dir,
        "cluster.json",
        &serde_json::to_string_pretty(&report).expect("serializable"),
    )?;

    println!("cluster analysis");
    println!(
        "  FSR signal / idler : {:.4} / {:.4} GHz",
        analysis.fsr_signal_hz / 1e9,
        analysis.fsr_idler_hz / 1e9
    );
    println!(
        "  cluster spacing    : {:.4} GHz",
        analysis.cluster_spacing_hz / 1e9
    );
    println!(
        "  modes per cluster  : N_s = {:.4}, N_i = {:.4}",
        analysis.n_signal, analysis.n_idler
    );
    println!(
        "  orthogonal offset  : {:.4} GHz",
        analysis.orthogonal_offset_hz / 1e9
    );
    println!("  single mode        : {}", analysis.single_mode);
    Ok(())
}

pub enum G2Mode {
    Analytic,
    Simulate,
}

pub fn cmd_g2(
    config: &RunConfig,
    out_dir: &Path,
    mode: G2Mode,
    fit: bool,
    seed: u64,
) -> Result<(), CliError> {
    let cavity = config.cavity_section().map_err(CliError::Config)?;
    let model = config.biphoton_model().map_err(CliError::Config)?;
    let grid = TimeGrid {
        step_s: config.biphoton.grid_step_s,
        half_span_s: config.biphoton.grid_half_span_s,
    };
    let response = DetectorResponse::new(config.biphoton.detector_gamma_hz, 1.0)
        .map_err(|e| CliError::Config(format!("biphoton: {e}")))?;

    let curve = g2_curve(&model, &grid).map_err(|e| CliError::Computation(e.to_string()))?;
    let convolved =
        convolve_g2(&curve, &response).map_err(|e| CliError::Computation(e.to_string()))?;
    write_artifact(out_dir, "g2_analytic.csv", &curve.to_csv())?;
    write_artifact(out_dir, "g2_convolved.csv", &convolved.to_csv())?;

    let t_analytic = t_fwhm_analytic(cavity.signal.linewidth_hz, cavity.idler.linewidth_hz);
    let raw_fwhm = fwhm(&curve).map_err(|e| CliError::Computation(e.to_string()))?;
    let conv_fwhm = fwhm(&convolved).map_err(|e| CliError::Computation(e.to_string()))?;

    println!("two-photon correlation");
    println!("  analytic T_FWHM    : {:.4} ns", t_analytic * 1e9);
    println!("  curve FWHM         : {:.4} ns", raw_fwhm * 1e9);
    println!("  convolved FWHM     : {:.4} ns", conv_fwhm * 1e9);

    let report = json!({
        "t_fwhm_analytic_s": t_analytic,
        "curve_fwhm_s": raw_fwhm,
        "convolved_fwhm_s": conv_fwhm,
    });
    write_artifact(
        out_dir,
        "g2_report.json",
        &serde_json::to_string_pretty(&report).expect("serializable"),
    )?;

    let priors = G2FitPriors {
        gamma_signal_hz: cavity.signal.linewidth_hz,
        gamma_idler_hz: cavity.idler.linewidth_hz,
        detector_gamma_hz: config.biphoton.detector_gamma_hz,
        fix_detector: false,
        weighting: Weighting::Unweighted,
    };

    let fit_data: Option<(Vec<f64>, Vec<f64>)> = match mode {
        G2Mode::Analytic => {
            if fit {
                let binned = rebin(&convolved, config.simulation.bin_width_s)
                    .map_err(|e| CliError::Computation(e.to_string()))?;
                let counts: Vec<f64> = binned.values.iter().map(|v| 1e4 * v).collect();
                Some((binned.times_s.clone(), counts))
            } else {
                None
            }
        }
        G2Mode::Simulate => {
            let source_cfg = config.source_section().map_err(CliError::Config)?;
            let detection = config.detection_section().map_err(CliError::Config)?;
            let source = SourceModel {
                pair_rate_per_mw_hz: source_cfg.pair_rate_per_mw_hz,
                pump_power_mw: source_cfg.pump_power_mw,
                correlation: model.clone(),
                grid,
            };
            let (signal, idler) = simulate_timetags(
                &source,
                &detection.signal,
                &detection.idler,
                config.simulation.duration_s,
                seed,
            )
            .map_err(|e| CliError::Computation(e.to_string()))?;
            let mut buf = Vec::new();
            signal
                .write_binary(&mut buf)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            fs::write(out_dir.join("signal.ttag"), &buf)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            buf.clear();
            idler
                .write_binary(&mut buf)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            fs::write(out_dir.join("idler.ttag"), &buf)
                .map_err(|e| CliError::Internal(e.to_string()))?;

            let histogram = histogram_coincidences(
                &signal,
                &idler,
                config.simulation.bin_width_s,
                config.simulation.delay_range_s,
                config.simulation.duration_s,
            )
            .map_err(|e| CliError::Computation(e.to_string()))?;
            write_artifact(out_dir, "histogram.csv", &histogram.to_csv())?;
            println!(
                "  singles            : {} / {}",
                signal.tags_ps.len(),
                idler.tags_ps.len()
            );
            println!("  histogram total    : {}", histogram.total());
            if fit {
                let times: Vec<f64> = (0..histogram.counts.len())
                    .map(|i| histogram.bin_center_s(i))
                    .collect();
                let counts: Vec<f64> = histogram.counts.iter().map(|&c| c as f64).collect();
                Some((times, counts))
            } else {
                None
            }
        }
    };

    if let Some((times, counts)) = fit_data {
        let result = fit_g2_histogram(&times, &counts, &priors)
            .map_err(|e| CliError::Computation(e.to_string()))?;
        write_artifact(out_dir, "g2_fit.json", &result.to_json())?;
        println!(
            "  fitted γ_s / γ_i   : {:.2} / {:.2} MHz",
            result.value("gamma_signal_hz").unwrap() / 1e6,
            result.value("gamma_idler_hz").unwrap() / 1e6
        );
        if !result.converged {
            return Err(CliError::Computation(format!(
                "correlation fit did not converge ({})",
                result.reason.as_str()
            )));
        }
    }
    Ok(())
}

pub enum CountsMode {
    Sampled,
    Expected,
}

pub fn cmd_counts(
    config: &RunConfig,
    out_dir: &Path,
    powers_mw: &[f64],
    mode: CountsMode,
    seed: u64,
) -> Result<(), CliError> {
    let cavity = config.cavity_section().map_err(CliError::Config)?;
    let source_cfg = config.source_section().map_err(CliError::Config)?;
    let detection = config.detection_section().map_err(CliError::Config)?;
    let model = config.biphoton_model().map_err(CliError::Config)?;
    if powers_mw.is_empty() {
        return Err(CliError::Config("counts: empty power list".into()));
    }
    let duration = config.simulation.duration_s;
    let t_fwhm = t_fwhm_analytic(cavity.signal.linewidth_hz, cavity.idler.linewidth_hz);

    let mut rows = String::from("power_mw,singles_s,singles_i,coincidences,car\n");
    println!("counting sweep ({} s per point)", duration);
    for (index, &power) in powers_mw.iter().enumerate() {
        let source = SourceModel {
            pair_rate_per_mw_hz: source_cfg.pair_rate_per_mw_hz,
            pump_power_mw: power,
            correlation: model.clone(),
            grid: TimeGrid {
                step_s: config.biphoton.grid_step_s,
                half_span_s: config.biphoton.grid_half_span_s,
            },
        };
        let (singles_s, singles_i, coincidences, car_estimate) = match mode {
            CountsMode::Expected => {
                let window = 10.0 * t_fwhm;
                let e = expected_counts(&source, &detection.signal, &detection.idler, window)
                    .map_err(|e| CliError::Computation(e.to_string()))?;
                (
                    e.singles_signal_hz * duration,
                    e.singles_idler_hz * duration,
                    e.coincidences_hz * duration,
                    car(e.coincidences_hz * duration, e.accidentals_hz * duration)
                        .map_err(|e| CliError::Computation(e.to_string()))?,
                )
            }
            CountsMode::Sampled => {
                let (signal, idler) = simulate_timetags(
                    &source,
                    &detection.signal,
                    &detection.idler,
                    duration,
                    mix_seed(seed, index as u64),
                )
                .map_err(|e| CliError::Computation(e.to_string()))?;
                let histogram = histogram_coincidences(
                    &signal,
                    &idler,
                    config.simulation.bin_width_s,
                    config.simulation.delay_range_s,
                    duration,
                )
                .map_err(|e| CliError::Computation(e.to_string()))?;
                let (net, _accidentals, estimate) = car_from_histogram(&histogram, t_fwhm)
                    .map_err(|e| CliError::Computation(e.to_string()))?;
                (
                    signal.tags_ps.len() as f64,
                    idler.tags_ps.len() as f64,
                    net,
                    estimate,
                )
            }
        };
        let car_field = match car_estimate {
            CarEstimate::Exact(v) => format!("{v}"),
            CarEstimate::LowerBound(v) => {
                eprintln!(
                    "warning: no accidental coincidences at {power} mW; CAR is undefined (≥ {v})"
                );
                String::new()
            }
        };
        println!(
            "  {:>7.1} mW: singles {:.0}/{:.0}, coincidences {:.0}, CAR {}",
            power,
            singles_s,
            singles_i,
            coincidences,
            if car_field.is_empty() {
                "—"
            } else {
                &car_field
            }
        );
        rows.push_str(&format!(
            "{power},{singles_s},{singles_i},{coincidences},{car_field}\n"
        ));
    }
    write_artifact(out_dir, "counts.csv", &rows)
}

pub fn cmd_michelson(
    config: &RunConfig,
    out_dir: &Path,
    path_diffs_m: &[f64],
    fit: bool,
    noise: f64,
    seed: u64,
) -> Result<(), CliError> {
    let section = config.michelson_section().map_err(CliError::Config)?;
    let model = MichelsonModel::new(
        section.linewidth_hz,
        section.center_hz,
        section.background_r,
    )
    .map_err(|e| CliError::Config(format!("michelson: {e}")))?;
    if path_diffs_m.is_empty() {
        return Err(CliError::Config(
            "michelson: empty path-difference list".into(),
        ));
    }

    let mut noise_state = mix_seed(seed, 0x4d49);
    let mut next_noise = || {
        // small deterministic multiplicative perturbation, uniform ±√3·noise
        noise_state = mix_seed(noise_state, 0x9e37);
        let u = (noise_state >> 11) as f64 / (1u64 << 53) as f64;
        1.0 + noise * (2.0 * u - 1.0) * 3f64.sqrt()
    };
    let series: Vec<(f64, f64)> = path_diffs_m
        .iter()
        .map(|&l| {
            let v = michelson_visibility(&model, l);
            (l, if noise > 0.0 { v * next_noise() } else { v })
        })
        .collect();
    write_artifact(
        out_dir,
        "michelson_visibility.csv",
        &spdc_core::interference::visibility_csv(series.iter().copied()),
    )?;

    println!("single-photon interference visibility");
    println!(
        "  model linewidth    : {:.2} MHz, R = {:.5}",
        section.linewidth_hz / 1e6,
        section.background_r
    );
    println!("  points             : {}", series.len());

    if fit {
        let ls: Vec<f64> = series.iter().map(|p| p.0).collect();
        let vs: Vec<f64> = series.iter().map(|p| p.1).collect();
        let result =
            fit_visibility_decay(&ls, &vs).map_err(|e| CliError::Computation(e.to_string()))?;
        let mut report: serde_json::Value =
            serde_json::from_str(&result.result.to_json()).expect("valid json");
        println!(
            "  fitted linewidth   : {:.2} MHz (R = {:.5})",
            result.linewidth_hz / 1e6,
            result.background_r
        );
        if let Some(cavity) = &config.cavity {
            let reference = cavity.signal.linewidth_hz;
            let deviation = (result.linewidth_hz - reference) / reference * 100.0;
            println!(
                "  deviation vs cavity: {:.2}% (reference {:.2} MHz)",
                deviation,
                reference / 1e6
            );
            report["deviation_vs_cavity_percent"] = json!(deviation);
            report["cavity_reference_hz"] = json!(reference);
        }
        write_artifact(
            out_dir,
            "michelson_fit.json",
            &serde_json::to_string_pretty(&report).expect("serializable"),
        )?;
        if !result.result.converged {
            return Err(CliError::Computation(format!(
                "visibility fit did not converge ({})",
                result.result.reason.as_str()
            )));
        }
    }
    Ok(())
}

pub fn cmd_qpm(config: &RunConfig, out_dir: &Path, order: i32) -> Result<(), CliError> {
    let crystal = config.crystal_spec().map_err(CliError::Config)?;
    let signal_center_hz = config
        .cavity
        .as_ref()
        .map(|c| c.signal.center_hz)
        .unwrap_or(SPEED_OF_LIGHT / 1550e-9);
    let pump_wavelength = SPEED_OF_LIGHT / (2.0 * signal_center_hz);
    let process = SpdcProcess::degenerate(pump_wavelength, order)
        .map_err(|e| CliError::Config(format!("qpm: {e}")))?;

    let solved = match solve_poling_period(&process, &crystal) {
        Ok(v) => v,
        Err(e @ QpmError::NoSolution { .. }) => {
            return Err(CliError::Computation(e.to_string()));
        }
        Err(e) => return Err(CliError::Config(format!("qpm: {e}"))),
    };
    let configured = crystal.poling_period_m;
    let deviation = (solved - configured) / configured * 100.0;

    let mut tuned = crystal.clone();
    tuned.poling_period_m = solved;
    let grid: Vec<f64> = (-1000..=1000).map(|i| i as f64 * 4e9).collect();
    let spectrum: GainSpectrum =
        gain_spectrum(&process, &tuned, &grid).map_err(|e| CliError::Computation(e.to_string()))?;
    write_artifact(out_dir, "qpm_gain.csv", &spectrum.to_csv())?;

    println!("quasi-phase matching");
    println!(
        "  pump / signal      : {:.2} nm → {:.2} nm (degenerate, order {order})",
        pump_wavelength * 1e9,
        2.0 * pump_wavelength * 1e9
    );
    println!("  solved period      : {:.4} um", solved * 1e6);
    println!(
        "  configured period  : {:.4} um ({deviation:+.2}% solved vs configured)",
        configured * 1e6
    );

    let report = json!({
        "solved_poling_period_m": solved,
        "configured_poling_period_m": configured,
        "deviation_percent": deviation,
        "order": order,
    });
    write_artifact(
        out_dir,
        "qpm_report.json",
        &serde_json::to_string_pretty(&report).expect("serializable"),
    )
}
