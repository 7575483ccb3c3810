//! Model-specific fitters: Lorentzian cavity scans, the convolved two-photon
//! correlation, Michelson visibility decay and sinusoidal fringes.

use super::{FitError, FitProblem, FitResult, StopReason, least_squares};
use crate::biphoton::convolved_single_mode;
use crate::constants::SPEED_OF_LIGHT;
use std::f64::consts::PI;

/// Residual weighting. Counting data may be weighted by √counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Divide residuals by √max(counts, 1).
    PoissonCounts,
}

impl Weighting {
    fn apply(&self, data: &[f64], residuals: &mut [f64]) {
        if let Weighting::PoissonCounts = self {
            for (r, y) in residuals.iter_mut().zip(data) {
                *r /= y.max(1.0).sqrt();
            }
        }
    }
}

/// Recovered Lorentzian line parameters.
#[derive(Debug, Clone)]
pub struct LorentzianFit {
    pub center_hz: f64,
    pub fwhm_hz: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub result: FitResult,
}

fn lorentzian_model(p: &[f64], nu: f64) -> f64 {
    // p = [center, fwhm, amplitude, offset]; unit-peak line scaled by amplitude
    let u = nu - p[0];
    let half = p[1] / 2.0;
    let q = u * u + half * half;
    p[3] + p[2] * half * half / q
}

/// Fits `offset + amplitude·(w/2)²/((ν−ν₀)² + (w/2)²)` to a scan series.
/// Initial guesses come from the data extremes unless `init` is given as
/// `(center, fwhm)`. A constant series yields a non-converged result.
pub fn fit_lorentzian_scan(
    freq_hz: &[f64],
    transmission: &[f64],
    init: Option<(f64, f64)>,
) -> Result<LorentzianFit, FitError> {
    if freq_hz.len() != transmission.len() || freq_hz.len() < 5 {
        return Err(FitError::InsufficientData(
            "scan needs at least 5 samples".into(),
        ));
    }
    let ymax = transmission.iter().cloned().fold(f64::MIN, f64::max);
    let ymin = transmission.iter().cloned().fold(f64::MAX, f64::min);
    let names = ["center_hz", "fwhm_hz", "amplitude", "offset"];
    if ymax == ymin {
        // degenerate series: nothing to fit
        let result = FitResult {
            names: names.iter().map(|s| s.to_string()).collect(),
            params: vec![freq_hz[0], 0.0, 0.0, ymin],
            stderr: vec![0.0; 4],
            covariance: vec![vec![0.0; 4]; 4],
            cost: 0.0,
            iterations: 0,
            converged: false,
            reason: StopReason::DegenerateInput,
            cost_history: vec![0.0],
        };
        return Ok(LorentzianFit {
            center_hz: freq_hz[0],
            fwhm_hz: 0.0,
            amplitude: 0.0,
            offset: ymin,
            result,
        });
    }

    let (center0, fwhm0) = init.unwrap_or_else(|| {
        let imax = transmission
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let half_level = ymin + (ymax - ymin) / 2.0;
        let above = transmission.iter().filter(|&&y| y > half_level).count();
        let step = ((freq_hz[freq_hz.len() - 1] - freq_hz[0]) / (freq_hz.len() - 1) as f64).abs();
        (freq_hz[imax], (above.max(3) as f64) * step)
    });
    let span = (freq_hz[freq_hz.len() - 1] - freq_hz[0]).abs();
    let init_p = [center0, fwhm0, ymax - ymin, ymin];
    let lower = [
        freq_hz[0].min(freq_hz[freq_hz.len() - 1]),
        span * 1e-9,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    ];
    let upper = [
        freq_hz[0].max(freq_hz[freq_hz.len() - 1]),
        span * 10.0,
        f64::INFINITY,
        f64::INFINITY,
    ];

    let residual = |p: &[f64]| -> Vec<f64> {
        freq_hz
            .iter()
            .zip(transmission)
            .map(|(&nu, &y)| lorentzian_model(p, nu) - y)
            .collect()
    };
    let jacobian = |p: &[f64]| -> Vec<Vec<f64>> {
        freq_hz
            .iter()
            .map(|&nu| {
                let u = nu - p[0];
                let half = p[1] / 2.0;
                let s = half * half;
                let q = u * u + s;
                vec![
                    p[2] * s * 2.0 * u / (q * q),
                    p[2] * (p[1] / 2.0) * u * u / (q * q),
                    s / q,
                    1.0,
                ]
            })
            .collect()
    };

    let problem = FitProblem::new(&names, &init_p, residual)
        .with_bounds(&lower, &upper)
        .with_jacobian(jacobian);
    let result = least_squares(&problem)?;
    Ok(LorentzianFit {
        center_hz: result.params[0],
        fwhm_hz: result.params[1],
        amplitude: result.params[2],
        offset: result.params[3],
        result,
    })
}

/// Priors and options of the correlation-histogram fit.
#[derive(Debug, Clone)]
pub struct G2FitPriors {
    pub gamma_signal_hz: f64,
    pub gamma_idler_hz: f64,
    pub detector_gamma_hz: f64,
    /// Hold the detector rate at its prior instead of fitting it.
    pub fix_detector: bool,
    pub weighting: Weighting,
}

/// Fits the convolved single-mode correlation model
/// `amplitude·Γ(t; γ_s, γ_i, γ_det) + background` to a coincidence histogram.
pub fn fit_g2_histogram(
    delay_s: &[f64],
    counts: &[f64],
    priors: &G2FitPriors,
) -> Result<FitResult, FitError> {
    if delay_s.len() != counts.len() || delay_s.len() < 10 {
        return Err(FitError::InsufficientData(
            "histogram needs at least 10 bins".into(),
        ));
    }
    let ymax = counts.iter().cloned().fold(f64::MIN, f64::max);
    let ymin = counts.iter().cloned().fold(f64::MAX, f64::min);
    let names = [
        "gamma_signal_hz",
        "gamma_idler_hz",
        "detector_gamma_hz",
        "amplitude",
        "background",
    ];
    let init = [
        priors.gamma_signal_hz,
        priors.gamma_idler_hz,
        priors.detector_gamma_hz,
        (ymax - ymin).max(1e-12),
        ymin,
    ];
    let lower = [1e6, 1e6, 1e7, 0.0, 0.0];
    let upper = [1e11, 1e11, 1e14, f64::INFINITY, f64::INFINITY];
    let fixed = [false, false, priors.fix_detector, false, false];

    let residual = |p: &[f64]| -> Vec<f64> {
        let mut r: Vec<f64> = delay_s
            .iter()
            .zip(counts)
            .map(|(&t, &y)| p[3] * convolved_single_mode(p[0], p[1], p[2], t) + p[4] - y)
            .collect();
        priors.weighting.apply(counts, &mut r);
        r
    };
    let problem = FitProblem::new(&names, &init, residual)
        .with_bounds(&lower, &upper)
        .with_fixed(&fixed);
    least_squares(&problem)
}

/// Recovered Michelson visibility-decay parameters.
#[derive(Debug, Clone)]
pub struct VisibilityDecayFit {
    pub linewidth_hz: f64,
    pub background_r: f64,
    pub result: FitResult,
}

/// Fits `V(L) = exp(−π·|Δν·L/c|)/(1 + R/2)` to a visibility-versus-path
/// series. Needs at least 4 points spanning a factor ≥ 2 in visibility.
pub fn fit_visibility_decay(
    path_diff_m: &[f64],
    visibility: &[f64],
) -> Result<VisibilityDecayFit, FitError> {
    if path_diff_m.len() != visibility.len() || path_diff_m.len() < 4 {
        return Err(FitError::InsufficientData(
            "visibility decay needs at least 4 points".into(),
        ));
    }
    let vmax = visibility.iter().cloned().fold(f64::MIN, f64::max);
    let vmin = visibility.iter().cloned().fold(f64::MAX, f64::min);
    if !(vmin > 0.0) || vmax / vmin < 2.0 {
        return Err(FitError::InsufficientData(
            "visibility series must span a factor ≥ 2".into(),
        ));
    }

    // R from the largest visibility, Δν from the log slope
    let r0 = (2.0 * (1.0 / vmax - 1.0)).max(0.0);
    let mut num = 0.0;
    let mut den = 0.0;
    for (&l, &v) in path_diff_m.iter().zip(visibility) {
        let y = (v * (1.0 + r0 / 2.0)).clamp(1e-12, 1.0).ln();
        num += l.abs() * y;
        den += l * l;
    }
    let slope = if den > 0.0 { num / den } else { -1.0 };
    let linewidth0 = (-slope * SPEED_OF_LIGHT / PI).max(1e6);

    let residual = |p: &[f64]| -> Vec<f64> {
        path_diff_m
            .iter()
            .zip(visibility)
            .map(|(&l, &v)| {
                (-PI * (p[0] * l / SPEED_OF_LIGHT).abs()).exp() / (1.0 + p[1] / 2.0) - v
            })
            .collect()
    };
    let problem = FitProblem::new(
        &["linewidth_hz", "background_r"],
        &[linewidth0, r0.max(1e-6)],
        residual,
    )
    .with_bounds(&[1e3, 0.0], &[1e13, 100.0]);
    let result = least_squares(&problem)?;
    Ok(VisibilityDecayFit {
        linewidth_hz: result.params[0],
        background_r: result.params[1],
        result,
    })
}

/// Recovered fringe parameters.
#[derive(Debug, Clone)]
pub struct FringeFit {
    pub amplitude: f64,
    pub visibility: f64,
    pub visibility_stderr: f64,
    pub phase_offset_rad: f64,
    pub background: f64,
    pub result: FitResult,
}

/// Fits `C(φ) = background + amplitude·(1 + V·cos(φ + offset))/2` to a fringe.
///
/// The mean level, cosine amplitude and phase are the only three observables
/// of a sinusoid, so the constant `background` is degenerate with `amplitude`
/// and `V`; it is taken as a known input (0 for raw fringes, the measured
/// accidental level for net ones) and held fixed. Internally a well-posed
/// three-parameter sinusoid is fitted (initialized from the discrete Fourier
/// component at the fringe frequency) and the quoted visibility error is
/// propagated from its covariance.
pub fn fit_fringe(
    phase_rad: &[f64],
    counts: &[f64],
    background: f64,
    weighting: Weighting,
) -> Result<FringeFit, FitError> {
    if phase_rad.len() != counts.len() || phase_rad.len() < 5 {
        return Err(FitError::InsufficientData(
            "fringe needs at least 5 samples".into(),
        ));
    }
    let span = phase_rad.iter().cloned().fold(f64::MIN, f64::max)
        - phase_rad.iter().cloned().fold(f64::MAX, f64::min);
    if span < 2.0 * PI * 0.99 {
        return Err(FitError::InsufficientData(
            "fringe must span at least one period".into(),
        ));
    }

    let n = phase_rad.len() as f64;
    let mean0 = counts.iter().sum::<f64>() / n;
    let a: f64 = phase_rad
        .iter()
        .zip(counts)
        .map(|(p, y)| y * p.cos())
        .sum::<f64>()
        * 2.0
        / n;
    let b: f64 = phase_rad
        .iter()
        .zip(counts)
        .map(|(p, y)| y * p.sin())
        .sum::<f64>()
        * 2.0
        / n;
    let cosamp0 = (a * a + b * b).sqrt();
    let phase0 = (-b).atan2(a);

    let residual = |p: &[f64]| -> Vec<f64> {
        let mut r: Vec<f64> = phase_rad
            .iter()
            .zip(counts)
            .map(|(&phi, &y)| p[0] + p[1] * (phi + p[2]).cos() - y)
            .collect();
        weighting.apply(counts, &mut r);
        r
    };
    let jacobian = |p: &[f64]| -> Vec<Vec<f64>> {
        phase_rad
            .iter()
            .zip(counts)
            .map(|(&phi, &y)| {
                let w = match weighting {
                    Weighting::Unweighted => 1.0,
                    Weighting::PoissonCounts => 1.0 / y.max(1.0).sqrt(),
                };
                vec![w, w * (phi + p[2]).cos(), -w * p[1] * (phi + p[2]).sin()]
            })
            .collect()
    };
    let problem = FitProblem::new(
        &["mean", "cos_amplitude", "phase"],
        &[mean0, cosamp0, phase0],
        residual,
    )
    .with_jacobian(jacobian);
    let inner = least_squares(&problem)?;

    let (mean, mut cosamp, mut phase) = (inner.params[0], inner.params[1], inner.params[2]);
    if cosamp < 0.0 {
        cosamp = -cosamp;
        phase += PI;
    }
    phase = phase.rem_euclid(2.0 * PI);
    if phase > PI {
        phase -= 2.0 * PI;
    }

    // C = b + A/2 + (A·V/2)·cos ⟹ A = 2(mean − b), V = cosamp/(mean − b)
    let level = mean - background;
    let amplitude = 2.0 * level;
    let visibility = cosamp / level;
    let dv_dc = 1.0 / level;
    let dv_dm = -cosamp / (level * level);
    let var_v = dv_dc * dv_dc * inner.covariance[1][1]
        + dv_dm * dv_dm * inner.covariance[0][0]
        + 2.0 * dv_dc * dv_dm * inner.covariance[0][1];
    let visibility_stderr = var_v.max(0.0).sqrt();
    let amp_stderr = 2.0 * inner.stderr[0];

    let result = FitResult {
        names: vec![
            "amplitude".into(),
            "visibility".into(),
            "phase_offset_rad".into(),
            "background".into(),
        ],
        params: vec![amplitude, visibility, phase, background],
        stderr: vec![amp_stderr, visibility_stderr, inner.stderr[2], 0.0],
        covariance: vec![vec![0.0; 4]; 4],
        cost: inner.cost,
        iterations: inner.iterations,
        converged: inner.converged,
        reason: inner.reason,
        cost_history: inner.cost_history.clone(),
    };
    Ok(FringeFit {
        amplitude,
        visibility,
        visibility_stderr,
        phase_offset_rad: phase,
        background,
        result,
    })
}
