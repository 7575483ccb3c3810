//! Closed-form two-photon time correlation for the doubly resonant type-II
//! source: the mode-sum G²(τ), the single-photon-detector response model,
//! their convolution, and width measures.
//!
//! Conventions: all cavity damping rates γ are FWHM linewidths in ordinary
//! Hz. The per-mode complex rate is `Γ = γ/2 + i·m·Δω`, so a single-mode
//! intensity envelope decays as `e^{−2πγ|τ|}` and the analytic width
//! `T = 1.39/(2π√(γ_s γ_i))` is reproduced. The detector response
//! `φ(t) = α·e^{γ_det·t/2}·Θ(−t)` uses a plain rate γ_det in 1/s.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BiphotonError {
    #[error("damping rates must be > 0, got γ_s = {gamma_signal_hz}, γ_i = {gamma_idler_hz}")]
    NonPositiveDamping {
        gamma_signal_hz: f64,
        gamma_idler_hz: f64,
    },
    #[error("propagation delay must be ≥ 0, got {0}")]
    NegativeDelay(f64),
    #[error("mode weights must hold 2·M+1 = {expected} values, got {got}")]
    WeightLength { expected: usize, got: usize },
    #[error("curve grid step {step_s} s too coarse; need ≤ {max_step_s} s")]
    GridTooCoarse { step_s: f64, max_step_s: f64 },
    #[error("time grid must be uniform, ascending and non-empty")]
    BadGrid,
    #[error("curve maximum sits at the grid edge; width is ill-posed")]
    EdgeMaximum,
    #[error("detector response rate must be > 0, got {0}")]
    NonPositiveResponseRate(f64),
    #[error("no detector rate in the search bracket reproduces the target width {0} s")]
    NoDetectorRate(f64),
}

/// Maximum grid step accepted by [`convolve_g2`] (resolve sub-25 ps structure
/// before any rebinning).
pub const MAX_CONV_STEP_S: f64 = 1e-12;

/// Hard cap of the automatic mode-truncation rule.
pub const MODE_BOUND_CAP: usize = 512;

/// Two-photon correlation model of the doubly resonant cavity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiphotonModel {
    /// Signal cavity damping rate (FWHM linewidth, Hz).
    pub gamma_signal_hz: f64,
    /// Idler cavity damping rate (FWHM linewidth, Hz).
    pub gamma_idler_hz: f64,
    /// Signal free spectral range (Hz).
    pub fsr_signal_hz: f64,
    /// Idler free spectral range (Hz).
    pub fsr_idler_hz: f64,
    /// Signal central frequency (Hz).
    pub center_signal_hz: f64,
    /// Idler central frequency (Hz).
    pub center_idler_hz: f64,
    /// Signal–idler propagation delay inside the crystal, τ₀ (s).
    pub delay_s: f64,
    /// Mode truncation bound M: mode indices run over [−M, M].
    /// A single-mode source is M = 0.
    pub mode_bound: usize,
    /// Relative signal mode amplitudes (2M+1 entries); `None` is uniform.
    #[serde(default)]
    pub weights_signal: Option<Vec<f64>>,
    /// Relative idler mode amplitudes (2M+1 entries); `None` is uniform.
    #[serde(default)]
    pub weights_idler: Option<Vec<f64>>,
}

impl BiphotonModel {
    /// Single-mode model (M = 0, τ₀ = 0). FSRs enter the correlation only
    /// when `mode_bound > 0`, so they are left at zero here.
    pub fn single_mode(
        gamma_signal_hz: f64,
        gamma_idler_hz: f64,
        center_signal_hz: f64,
        center_idler_hz: f64,
    ) -> Result<Self, BiphotonError> {
        Self::new(
            gamma_signal_hz,
            gamma_idler_hz,
            0.0,
            0.0,
            center_signal_hz,
            center_idler_hz,
            0.0,
            0,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gamma_signal_hz: f64,
        gamma_idler_hz: f64,
        fsr_signal_hz: f64,
        fsr_idler_hz: f64,
        center_signal_hz: f64,
        center_idler_hz: f64,
        delay_s: f64,
        mode_bound: usize,
    ) -> Result<Self, BiphotonError> {
        let model = Self {
            gamma_signal_hz,
            gamma_idler_hz,
            fsr_signal_hz,
            fsr_idler_hz,
            center_signal_hz,
            center_idler_hz,
            delay_s,
            mode_bound,
            weights_signal: None,
            weights_idler: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_weights(
        mut self,
        weights_signal: Vec<f64>,
        weights_idler: Vec<f64>,
    ) -> Result<Self, BiphotonError> {
        let expected = 2 * self.mode_bound + 1;
        for w in [&weights_signal, &weights_idler] {
            if w.len() != expected {
                return Err(BiphotonError::WeightLength {
                    expected,
                    got: w.len(),
                });
            }
        }
        self.weights_signal = Some(weights_signal);
        self.weights_idler = Some(weights_idler);
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), BiphotonError> {
        if !(self.gamma_signal_hz > 0.0) || !(self.gamma_idler_hz > 0.0) {
            return Err(BiphotonError::NonPositiveDamping {
                gamma_signal_hz: self.gamma_signal_hz,
                gamma_idler_hz: self.gamma_idler_hz,
            });
        }
        if !(self.delay_s >= 0.0) {
            return Err(BiphotonError::NegativeDelay(self.delay_s));
        }
        let expected = 2 * self.mode_bound + 1;
        for w in [&self.weights_signal, &self.weights_idler]
            .into_iter()
            .flatten()
        {
            if w.len() != expected {
                return Err(BiphotonError::WeightLength {
                    expected,
                    got: w.len(),
                });
            }
        }
        Ok(())
    }

    fn weight(of: &Option<Vec<f64>>, mode_bound: usize, m: i64) -> f64 {
        match of {
            Some(w) => w[(m + mode_bound as i64) as usize],
            None => 1.0,
        }
    }
}

/// complex sinc(z) = sin(z)/z with sinc(0) = 1.
fn csinc(z: Complex64) -> Complex64 {
    if z.norm_sqr() < 1e-12 {
        Complex64::new(1.0, 0.0) - z * z / 6.0
    } else {
        z.sin() / z
    }
}

/// Precomputed mode-sum coefficients; evaluating G² at one delay is then
/// O(M) instead of O(M²).
pub struct G2Evaluator {
    prefactor: f64,
    half_delay_s: f64,
    /// (coefficient, Γ_s) per signal mode; the τ ≥ τ₀/2 branch.
    right: Vec<(Complex64, Complex64)>,
    /// (coefficient, Γ_i) per idler mode; the τ < τ₀/2 branch.
    left: Vec<(Complex64, Complex64)>,
}

impl G2Evaluator {
    pub fn new(model: &BiphotonModel) -> Result<Self, BiphotonError> {
        model.validate()?;
        let mb = model.mode_bound as i64;
        let gs = model.gamma_signal_hz;
        let gi = model.gamma_idler_hz;
        let gamma_s = |m: i64| {
            Complex64::new(
                gs / 2.0,
                if mb == 0 {
                    0.0
                } else {
                    m as f64 * model.fsr_signal_hz
                },
            )
        };
        let gamma_i = |m: i64| {
            Complex64::new(
                gi / 2.0,
                if mb == 0 {
                    0.0
                } else {
                    m as f64 * model.fsr_idler_hz
                },
            )
        };
        let tau0 = model.delay_s;
        let mut right = Vec::with_capacity(2 * model.mode_bound + 1);
        let mut left = Vec::with_capacity(2 * model.mode_bound + 1);
        for m in -mb..=mb {
            let g_s = gamma_s(m);
            let inner: Complex64 = (-mb..=mb)
                .map(|mi| {
                    BiphotonModel::weight(&model.weights_idler, model.mode_bound, mi)
                        / (g_s + gamma_i(mi))
                })
                .sum();
            let coef = BiphotonModel::weight(&model.weights_signal, model.mode_bound, m)
                * csinc(Complex64::i() * PI * tau0 * g_s)
                * inner;
            right.push((coef, g_s));

            let g_i = gamma_i(m);
            let inner: Complex64 = (-mb..=mb)
                .map(|ms| {
                    BiphotonModel::weight(&model.weights_signal, model.mode_bound, ms)
                        / (gamma_s(ms) + g_i)
                })
                .sum();
            let coef = BiphotonModel::weight(&model.weights_idler, model.mode_bound, m)
                * csinc(Complex64::i() * PI * tau0 * g_i)
                * inner;
            left.push((coef, g_i));
        }
        Ok(Self {
            prefactor: (gs * gi * model.center_signal_hz * model.center_idler_hz).sqrt(),
            half_delay_s: tau0 / 2.0,
            right,
            left,
        })
    }

    /// G²(τ): squared modulus of the branch-wise mode sum.
    pub fn eval(&self, tau_s: f64) -> f64 {
        let t = tau_s - self.half_delay_s;
        let mut amp = Complex64::new(0.0, 0.0);
        if tau_s >= self.half_delay_s {
            for (coef, gamma) in &self.right {
                amp += coef * (-2.0 * PI * t * gamma).exp();
            }
        } else {
            for (coef, gamma) in &self.left {
                amp += coef * (2.0 * PI * t * gamma).exp();
            }
        }
        (self.prefactor * amp).norm_sqr()
    }
}

/// G²(τ) at a single delay. Building a [`G2Evaluator`] once is cheaper when
/// evaluating a whole grid.
pub fn g2(model: &BiphotonModel, tau_s: f64) -> Result<f64, BiphotonError> {
    Ok(G2Evaluator::new(model)?.eval(tau_s))
}

/// Uniform symmetric time grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub step_s: f64,
    pub half_span_s: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            step_s: 0.5e-12,
            half_span_s: 5e-9,
        }
    }
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        let half = (self.half_span_s / self.step_s).round() as i64;
        (-half..=half).map(|i| i as f64 * self.step_s).collect()
    }
}

/// A sampled, peak-normalized correlation curve on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Curve {
    pub times_s: Vec<f64>,
    pub values: Vec<f64>,
    pub step_s: f64,
    /// Mode truncation the curve was computed with.
    pub mode_bound: usize,
    /// Comb period expected in the curve, when the model is multi-mode.
    pub comb_period_s: Option<f64>,
}

impl G2Curve {
    /// Wraps externally computed samples; the grid must be uniform and
    /// ascending and the values nonnegative.
    pub fn from_samples(times_s: Vec<f64>, values: Vec<f64>) -> Result<Self, BiphotonError> {
        if times_s.len() < 3 || times_s.len() != values.len() {
            return Err(BiphotonError::BadGrid);
        }
        let step = times_s[1] - times_s[0];
        if !(step > 0.0) {
            return Err(BiphotonError::BadGrid);
        }
        for w in times_s.windows(2) {
            if ((w[1] - w[0]) - step).abs() > 1e-6 * step {
                return Err(BiphotonError::BadGrid);
            }
        }
        if values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(BiphotonError::BadGrid);
        }
        Ok(Self {
            times_s,
            values,
            step_s: step,
            mode_bound: 0,
            comb_period_s: None,
        })
    }

    /// CSV with header `tau_s,value`, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau_s,value\n");
        for (t, v) in self.times_s.iter().zip(&self.values) {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }

    fn normalized(mut self) -> Self {
        let max = self.values.iter().cloned().fold(0.0f64, f64::max);
        if max > 0.0 {
            for v in &mut self.values {
                *v /= max;
            }
        }
        self
    }
}

/// Evaluates the model on a grid, peak-normalized.
pub fn g2_curve(model: &BiphotonModel, grid: &TimeGrid) -> Result<G2Curve, BiphotonError> {
    let eval = G2Evaluator::new(model)?;
    let times = grid.times();
    let values: Vec<f64> = times.iter().map(|&t| eval.eval(t)).collect();
    let comb_period_s = if model.mode_bound > 0 {
        Some(1.0 / model.fsr_signal_hz.max(model.fsr_idler_hz))
    } else {
        None
    };
    Ok(G2Curve {
        times_s: times,
        values,
        step_s: grid.step_s,
        mode_bound: model.mode_bound,
        comb_period_s,
    }
    .normalized())
}

/// One-sided exponential detector response `φ(t) = α·e^{γ·t/2}` for t ≤ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorResponse {
    /// Response damping rate (1/s).
    pub gamma_hz: f64,
    /// Peak amplitude α; normalized away by the convolution.
    pub amplitude: f64,
}

impl DetectorResponse {
    pub fn new(gamma_hz: f64, amplitude: f64) -> Result<Self, BiphotonError> {
        if !(gamma_hz > 0.0) {
            return Err(BiphotonError::NonPositiveResponseRate(gamma_hz));
        }
        Ok(Self {
            gamma_hz,
            amplitude,
        })
    }
}

/// φ(t): `α·e^{γ·t/2}` for t ≤ 0, zero for t > 0.
pub fn detector_response(resp: &DetectorResponse, t_s: f64) -> f64 {
    if t_s > 0.0 {
        0.0
    } else {
        resp.amplitude * (resp.gamma_hz * t_s / 2.0).exp()
    }
}

/// Raw discrete convolution of curve samples with a one-sided response
/// kernel sampled on the same step. `kernel[k]` is φ(−k·step).
pub(crate) fn convolve_samples(values: &[f64], kernel: &[f64], step_s: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let kmax = (n - 1 - i).min(kernel.len() - 1);
        let mut acc = 0.0;
        for (k, kv) in kernel.iter().take(kmax + 1).enumerate() {
            acc += values[i + k] * kv;
        }
        *o = acc * step_s;
    }
    out
}

/// The measured coincidence curve: discrete convolution `Γ = G² * φ` on the
/// curve's grid, peak-normalized. The grid must resolve the response
/// (step ≤ [`MAX_CONV_STEP_S`]).
pub fn convolve_g2(curve: &G2Curve, resp: &DetectorResponse) -> Result<G2Curve, BiphotonError> {
    if curve.step_s > MAX_CONV_STEP_S {
        return Err(BiphotonError::GridTooCoarse {
            step_s: curve.step_s,
            max_step_s: MAX_CONV_STEP_S,
        });
    }
    if !(resp.gamma_hz > 0.0) {
        return Err(BiphotonError::NonPositiveResponseRate(resp.gamma_hz));
    }
    // sample φ until it has decayed to 1e-12 of its peak
    let t_cut = 2.0 * 27.631 / resp.gamma_hz;
    let k = ((t_cut / curve.step_s).ceil() as usize).clamp(1, curve.values.len() - 1);
    let kernel: Vec<f64> = (0..=k)
        .map(|j| detector_response(resp, -(j as f64) * curve.step_s))
        .collect();
    let values = convolve_samples(&curve.values, &kernel, curve.step_s);
    Ok(G2Curve {
        times_s: curve.times_s.clone(),
        values,
        step_s: curve.step_s,
        mode_bound: curve.mode_bound,
        comb_period_s: curve.comb_period_s,
    }
    .normalized())
}

/// Averages consecutive samples into coarser bins (default use: 25 ps bins
/// matching coincidence-counter resolution).
pub fn rebin(curve: &G2Curve, bin_width_s: f64) -> Result<G2Curve, BiphotonError> {
    let per = (bin_width_s / curve.step_s).round() as usize;
    if per < 1 {
        return Err(BiphotonError::BadGrid);
    }
    if per == 1 {
        return Ok(curve.clone());
    }
    let n = curve.values.len() / per;
    if n < 3 {
        return Err(BiphotonError::BadGrid);
    }
    let mut times = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for b in 0..n {
        let lo = b * per;
        let hi = lo + per;
        times.push(curve.times_s[lo..hi].iter().sum::<f64>() / per as f64);
        values.push(curve.values[lo..hi].iter().sum::<f64>() / per as f64);
    }
    Ok(G2Curve {
        times_s: times,
        values,
        step_s: curve.step_s * per as f64,
        mode_bound: curve.mode_bound,
        comb_period_s: curve.comb_period_s,
    })
}

fn local_maxima(values: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 1..values.len() - 1 {
        if values[i] > values[i - 1] && values[i] >= values[i + 1] {
            out.push(i);
        }
    }
    out
}

fn interp_crossing(t0: f64, v0: f64, t1: f64, v1: f64, level: f64) -> f64 {
    if (v1 - v0).abs() < f64::MIN_POSITIVE {
        return t0;
    }
    t0 + (level - v0) / (v1 - v0) * (t1 - t0)
}

/// Full width at half maximum of a curve, measured between the outermost
/// half-maximum crossings with linear interpolation. Comb-shaped curves are
/// measured on their peak envelope: one maximum per comb period, joined by a
/// piecewise-linear envelope.
pub fn fwhm(curve: &G2Curve) -> Result<f64, BiphotonError> {
    let values = &curve.values;
    let times = &curve.times_s;
    if values.len() < 3 {
        return Err(BiphotonError::BadGrid);
    }
    let (imax, _) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    if imax == 0 || imax == values.len() - 1 {
        return Err(BiphotonError::EdgeMaximum);
    }

    let maxima = local_maxima(values);
    let comb_mode = curve.comb_period_s.is_some() && maxima.len() >= 5;
    let (ts, vs): (Vec<f64>, Vec<f64>) = if comb_mode {
        let period = curve.comb_period_s.unwrap();
        let half_w = ((period / 2.0) / curve.step_s).round() as usize;
        // keep only maxima that dominate a window of one comb period
        let pts: Vec<(f64, f64)> = maxima
            .iter()
            .filter(|&&i| {
                let lo = i.saturating_sub(half_w);
                let hi = (i + half_w).min(values.len() - 1);
                values[lo..=hi].iter().all(|&v| v <= values[i])
            })
            .map(|&i| (times[i], values[i]))
            .collect();
        if pts.len() < 3 {
            return Err(BiphotonError::EdgeMaximum);
        }
        pts.into_iter().unzip()
    } else {
        (times.clone(), values.clone())
    };

    let peak = vs.iter().cloned().fold(0.0f64, f64::max);
    let half = peak / 2.0;
    let first_above = vs.iter().position(|&v| v >= half).unwrap();
    let last_above = vs.len() - 1 - vs.iter().rev().position(|&v| v >= half).unwrap();
    if first_above == 0 || last_above == vs.len() - 1 {
        return Err(BiphotonError::EdgeMaximum);
    }
    let left = interp_crossing(
        ts[first_above - 1],
        vs[first_above - 1],
        ts[first_above],
        vs[first_above],
        half,
    );
    let right = interp_crossing(
        ts[last_above],
        vs[last_above],
        ts[last_above + 1],
        vs[last_above + 1],
        half,
    );
    Ok(right - left)
}

/// Analytic correlation width `T = 1.39 / (2π·√(γ_s·γ_i))`.
pub fn t_fwhm_analytic(gamma_signal_hz: f64, gamma_idler_hz: f64) -> f64 {
    1.39 / (2.0 * PI * (gamma_signal_hz * gamma_idler_hz).sqrt())
}

/// Peak-normalized closed form of the single-mode (M = 0, τ₀ = 0) curve
/// convolved with the detector response: two-sided exponential of intensity
/// rates `a = 2πγ_s`, `b = 2πγ_i` smoothed by `e^{d·t}Θ(−t)`, `d = γ_det/2`.
pub fn convolved_single_mode(
    gamma_signal_hz: f64,
    gamma_idler_hz: f64,
    detector_gamma_hz: f64,
    t_s: f64,
) -> f64 {
    let a = 2.0 * PI * gamma_signal_hz;
    let b = 2.0 * PI * gamma_idler_hz;
    let d = detector_gamma_hz / 2.0;
    let raw = |t: f64| -> f64 {
        if t >= 0.0 {
            (-a * t).exp() / (a + d)
        } else if (b - d).abs() > 1e-9 * b.max(d) {
            let p = 1.0 / (b - d) + 1.0 / (a + d);
            let q = 1.0 / (b - d);
            p * (d * t).exp() - q * (b * t).exp()
        } else {
            (d * t).exp() * (1.0 / (a + d) - t)
        }
    };
    raw(t_s) / raw(single_mode_peak_time(a, b, d))
}

fn single_mode_peak_time(a: f64, b: f64, d: f64) -> f64 {
    if (b - d).abs() > 1e-9 * b.max(d) {
        // Γ'(t) = 0 on the t < 0 branch
        let arg = d * (a + b) / (b * (a + d));
        let t = arg.ln() / (b - d);
        if t < 0.0 { t } else { 0.0 }
    } else {
        let t = 1.0 / d - 1.0 / (a + d);
        if t > 0.0 { -t } else { 0.0 }
    }
}

/// FWHM of [`convolved_single_mode`], from the analytic peak position and
/// bisected half-maximum crossings.
pub fn convolved_single_mode_fwhm(
    gamma_signal_hz: f64,
    gamma_idler_hz: f64,
    detector_gamma_hz: f64,
) -> f64 {
    let f = |t: f64| convolved_single_mode(gamma_signal_hz, gamma_idler_hz, detector_gamma_hz, t);
    let a = 2.0 * PI * gamma_signal_hz;
    let b = 2.0 * PI * gamma_idler_hz;
    let tpk = single_mode_peak_time(a, b, detector_gamma_hz / 2.0);
    let scale = 1.0 / a + 1.0 / b + 2.0 / detector_gamma_hz;
    let bisect = |mut lo: f64, mut hi: f64| -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mut hi = tpk + scale;
    while f(hi) > 0.5 {
        hi += scale;
    }
    let right = bisect(tpk, hi);
    let mut lo = tpk - scale;
    while f(lo) > 0.5 {
        lo -= scale;
    }
    // mirror bisection for the rising side
    let left = {
        let (mut l, mut h) = (lo, tpk);
        for _ in 0..200 {
            let mid = 0.5 * (l + h);
            if f(mid) > 0.5 {
                h = mid;
            } else {
                l = mid;
            }
        }
        0.5 * (l + h)
    };
    right - left
}

/// Solves for the detector rate that broadens the single-mode curve to the
/// target measured width; the width is monotone decreasing in the rate.
pub fn solve_detector_gamma(
    gamma_signal_hz: f64,
    gamma_idler_hz: f64,
    target_fwhm_s: f64,
) -> Result<f64, BiphotonError> {
    let width = |g: f64| convolved_single_mode_fwhm(gamma_signal_hz, gamma_idler_hz, g);
    let (mut lo, mut hi) = (1e6, 1e15);
    if width(lo) < target_fwhm_s || width(hi) > target_fwhm_s {
        return Err(BiphotonError::NoDetectorRate(target_fwhm_s));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if width(mid) > target_fwhm_s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Smallest truncation bound M for which the diagonal mode weight
/// `w(m) / |Γ_s(m)+Γ_i(m)|` drops below 1e-6 of the m = 0 term, capped at
/// [`MODE_BOUND_CAP`]. `envelope_weight` is the relative gain amplitude per
/// mode index (1.0 for a uniform comb).
pub fn auto_mode_bound(
    gamma_signal_hz: f64,
    gamma_idler_hz: f64,
    fsr_signal_hz: f64,
    fsr_idler_hz: f64,
    envelope_weight: impl Fn(i64) -> f64,
) -> usize {
    let gamma_sum = (gamma_signal_hz + gamma_idler_hz) / 2.0;
    let denom = |m: i64| {
        let im = m as f64 * (fsr_signal_hz + fsr_idler_hz);
        (gamma_sum * gamma_sum + im * im).sqrt()
    };
    let w0 = envelope_weight(0) / denom(0);
    for m in 1..=(MODE_BOUND_CAP as i64) {
        let w = envelope_weight(m).max(envelope_weight(-m)) / denom(m);
        if w < 1e-6 * w0 {
            return m as usize;
        }
    }
    MODE_BOUND_CAP
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NU_TELECOM: f64 = 1.93414489e14; // c / 1550 nm

    fn reference_single_mode() -> BiphotonModel {
        BiphotonModel::single_mode(546e6, 735e6, NU_TELECOM, NU_TELECOM).unwrap()
    }

    fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
        let slope = sxy / sxx;
        let r2 = sxy * sxy / (sxx * syy);
        (slope, my - slope * mx, r2)
    }

    #[test]
    fn single_mode_is_piecewise_exponential() {
        let eval = G2Evaluator::new(&reference_single_mode()).unwrap();
        let right: Vec<f64> = (1..200).map(|i| i as f64 * 1e-12).collect();
        let logs: Vec<f64> = right.iter().map(|&t| eval.eval(t).ln()).collect();
        let (slope, _, r2) = linear_regression(&right, &logs);
        // intensity decays at 2πγ_s on the signal side
        let expected = -2.0 * PI * 546e6;
        assert!(
            (slope - expected).abs() / expected.abs() < 1e-9,
            "slope {slope}"
        );
        assert!(r2 > 1.0 - 1e-9);

        let left: Vec<f64> = (1..200).map(|i| -(i as f64) * 1e-12).collect();
        let logs: Vec<f64> = left.iter().map(|&t| eval.eval(t).ln()).collect();
        let (slope, _, r2) = linear_regression(&left, &logs);
        let expected = 2.0 * PI * 735e6;
        assert!((slope - expected).abs() / expected < 1e-9, "slope {slope}");
        assert!(r2 > 1.0 - 1e-9);
    }

    /// Parabolic refinement of a sampled local maximum: (position, height).
    fn refine_peak(times: &[f64], values: &[f64], i: usize) -> (f64, f64) {
        let (ym, y0, yp) = (values[i - 1], values[i], values[i + 1]);
        let denom = ym - 2.0 * y0 + yp;
        if denom.abs() < f64::MIN_POSITIVE {
            return (times[i], y0);
        }
        let delta = 0.5 * (ym - yp) / denom;
        let step = times[i] - times[i - 1];
        (times[i] + delta * step, y0 - 0.25 * (ym - yp) * delta)
    }

    #[test]
    fn multimode_peaks_at_inverse_fsr() {
        // the comb of one cavity: equal mode spacings for both fields
        let model = BiphotonModel::new(
            546e6, 735e6, 93.61e9, 93.61e9, NU_TELECOM, NU_TELECOM, 0.0, 12,
        )
        .unwrap();
        let grid = TimeGrid {
            step_s: 0.1e-12,
            half_span_s: 0.2e-9,
        };
        let curve = g2_curve(&model, &grid).unwrap();
        // positive-delay teeth every 1/Δω = 10.68 ps; the 0.2 level sits
        // between the teeth (≥ 0.5 here) and the truncation sidelobes (≤ 0.05)
        let mut peaks = Vec::new();
        for i in 1..curve.values.len() - 1 {
            if curve.times_s[i] > 1e-12
                && curve.values[i] > curve.values[i - 1]
                && curve.values[i] >= curve.values[i + 1]
                && curve.values[i] > 0.2
            {
                peaks.push(refine_peak(&curve.times_s, &curve.values, i).0);
            }
        }
        assert!(peaks.len() >= 5, "found {} peaks", peaks.len());
        let expected = 1.0 / 93.61e9;
        for pair in peaks.windows(2) {
            let gap = pair[1] - pair[0];
            assert!((gap - expected).abs() < 0.2e-12, "gap {gap}");
        }
    }

    #[test]
    fn multimode_envelope_decay_rate() {
        let model = BiphotonModel::new(
            546e6, 735e6, 93.61e9, 89.42e9, NU_TELECOM, NU_TELECOM, 0.0, 12,
        )
        .unwrap();
        let eval = G2Evaluator::new(&model).unwrap();
        // sample exactly on the signal comb teeth where all modes rephase
        let teeth: Vec<f64> = (0..40).map(|k| k as f64 / 93.61e9).collect();
        let logs: Vec<f64> = teeth.iter().map(|&t| eval.eval(t).ln()).collect();
        let (slope, _, r2) = linear_regression(&teeth, &logs);
        let expected = -2.0 * PI * 546e6;
        assert!(
            (slope - expected).abs() / expected.abs() < 1e-6,
            "slope {slope} vs {expected}"
        );
        assert!(r2 > 1.0 - 1e-9);
    }

    #[test]
    fn detector_response_shape() {
        let resp = DetectorResponse::new(4.6e10, 2.0).unwrap();
        assert_eq!(detector_response(&resp, 0.0), 2.0);
        assert_eq!(detector_response(&resp, 1e-12), 0.0);
        let v = detector_response(&resp, -2.0 / resp.gamma_hz);
        assert!((v - 2.0 * (-1.0f64).exp()).abs() < 1e-12);
        assert!(DetectorResponse::new(0.0, 1.0).is_err());
    }

    #[test]
    fn delta_like_response_preserves_width() {
        let curve = g2_curve(&reference_single_mode(), &TimeGrid::default()).unwrap();
        let resp = DetectorResponse::new(1e6 * 546e6, 1.0).unwrap();
        let conv = convolve_g2(&curve, &resp).unwrap();
        let w0 = fwhm(&curve).unwrap();
        let w1 = fwhm(&conv).unwrap();
        assert!((w1 - w0).abs() / w0 < 0.01, "w0 {w0} w1 {w1}");
    }

    #[test]
    fn frozen_detector_rate_reproduces_measured_width() {
        // rate frozen from solve_detector_gamma(546 MHz, 735 MHz, 0.412 ns)
        let curve = g2_curve(&reference_single_mode(), &TimeGrid::default()).unwrap();
        let resp = DetectorResponse::new(4.611253e10, 1.0).unwrap();
        let conv = convolve_g2(&curve, &resp).unwrap();
        let w = fwhm(&conv).unwrap();
        assert!((w - 0.412e-9).abs() < 0.005e-9, "fwhm {w}");
    }

    #[test]
    fn solve_detector_gamma_round_trip() {
        let g = solve_detector_gamma(546e6, 735e6, 0.412e-9).unwrap();
        assert!((g - 4.611253e10).abs() / g < 1e-4, "γ_det {g}");
        let w = convolved_single_mode_fwhm(546e6, 735e6, g);
        assert!((w - 0.412e-9).abs() < 1e-15);
        assert!(solve_detector_gamma(546e6, 735e6, 1e-15).is_err());
    }

    #[test]
    fn convolution_conserves_mass() {
        let curve = g2_curve(&reference_single_mode(), &TimeGrid::default()).unwrap();
        let resp = DetectorResponse::new(4.6e10, 1.3).unwrap();
        let kernel: Vec<f64> = (0..=2400)
            .map(|j| detector_response(&resp, -(j as f64) * curve.step_s))
            .collect();
        let conv = convolve_samples(&curve.values, &kernel, curve.step_s);
        let sum_in: f64 = curve.values.iter().sum();
        let sum_k: f64 = kernel.iter().sum();
        let sum_out: f64 = conv.iter().sum();
        let expected = sum_in * sum_k * curve.step_s;
        assert!(
            (sum_out - expected).abs() / expected < 1e-6,
            "out {sum_out} vs {expected}"
        );
        assert!(conv.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn grid_too_coarse_rejected() {
        let times: Vec<f64> = (-100..=100).map(|i| i as f64 * 10e-12).collect();
        let values: Vec<f64> = times.iter().map(|t| (-t.abs() * 1e9).exp()).collect();
        let curve = G2Curve::from_samples(times, values).unwrap();
        let resp = DetectorResponse::new(4.6e10, 1.0).unwrap();
        assert!(matches!(
            convolve_g2(&curve, &resp),
            Err(BiphotonError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn fwhm_of_two_sided_exponential() {
        let gamma = 546e6;
        let times: Vec<f64> = (-8000..=8000).map(|i| i as f64 * 0.5e-12).collect();
        let values: Vec<f64> = times
            .iter()
            .map(|t| (-2.0 * PI * gamma * t.abs()).exp())
            .collect();
        let curve = G2Curve::from_samples(times, values).unwrap();
        let w = fwhm(&curve).unwrap();
        let expected = (2.0f64).ln() / (PI * gamma);
        assert!(
            (w - expected).abs() / expected < 1e-3,
            "w {w} vs {expected}"
        );
    }

    #[test]
    fn fwhm_of_geometric_mean_curve() {
        let model = BiphotonModel::single_mode(633.5e6, 633.5e6, NU_TELECOM, NU_TELECOM).unwrap();
        let curve = g2_curve(&model, &TimeGrid::default()).unwrap();
        let w = fwhm(&curve).unwrap();
        assert!((w - 0.349e-9).abs() < 0.002e-9, "w {w}");
    }

    #[test]
    fn fwhm_of_lorentzian_test_input() {
        let w_in = 0.3e-9;
        let times: Vec<f64> = (-8000..=8000).map(|i| i as f64 * 0.5e-12).collect();
        let half = w_in / 2.0;
        let values: Vec<f64> = times
            .iter()
            .map(|t| half * half / (t * t + half * half))
            .collect();
        let curve = G2Curve::from_samples(times, values).unwrap();
        let w = fwhm(&curve).unwrap();
        assert!((w - w_in).abs() <= 0.5e-12, "w {w}");
    }

    #[test]
    fn fwhm_edge_maximum_is_an_error() {
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 1e-12).collect();
        let values: Vec<f64> = times.iter().map(|t| (-t * 1e9).exp()).collect();
        let curve = G2Curve::from_samples(times, values).unwrap();
        assert!(matches!(fwhm(&curve), Err(BiphotonError::EdgeMaximum)));
    }

    #[test]
    fn t_fwhm_analytic_values() {
        let t = t_fwhm_analytic(546e6, 735e6);
        assert!((t - 0.349e-9).abs() < 0.002e-9);
        let g = 700e6;
        assert!((t_fwhm_analytic(g, g) - 1.39 / (2.0 * PI * g)).abs() < 1e-18);
        let t5 = t_fwhm_analytic(500e6, 500e6);
        assert!((t5 - 0.4425e-9).abs() < 0.0005e-9, "t {t5}");
    }

    #[test]
    fn truncation_convergence_with_central_lobe_weights() {
        // Mode amplitudes from the gain envelope's central lobe (zero beyond
        // the first zeros). With a |sinc| tail instead, the tooth values of
        // the comb converge only harmonically in M and no finite truncation
        // is pointwise stable, so the convergence contract applies to
        // compactly supported weights.
        let fsr = 93.61e9;
        let half_width = 1.76e12; // gain half-max detuning
        let weight = |m: i64| {
            let x = 1.39156 * m as f64 * fsr / half_width;
            if x.abs() < 1e-9 {
                1.0
            } else if x.abs() >= PI {
                0.0
            } else {
                (x.sin() / x).abs()
            }
        };
        let m_auto = auto_mode_bound(546e6, 735e6, fsr, 89.42e9, weight);
        assert!(m_auto < MODE_BOUND_CAP, "m_auto {m_auto}");
        let m_support = (1..MODE_BOUND_CAP as i64)
            .find(|&m| weight(m) == 0.0)
            .unwrap() as usize;

        let build = |m: usize| {
            let ws: Vec<f64> = (-(m as i64)..=m as i64).map(weight).collect();
            BiphotonModel::new(546e6, 735e6, fsr, 89.42e9, NU_TELECOM, NU_TELECOM, 0.0, m)
                .unwrap()
                .with_weights(ws.clone(), ws)
                .unwrap()
        };
        // the 1e-6 amplitude cutoff lands at the edge of the lobe support
        assert!(
            m_auto + 1 >= m_support,
            "m_auto {m_auto}, support {m_support}"
        );

        let auto = G2Evaluator::new(&build(m_auto)).unwrap();
        let more = G2Evaluator::new(&build(m_support + 64)).unwrap();
        for &t in &[0.0, 3e-12, 10.683e-12, 0.1e-9, 0.35e-9] {
            let a = auto.eval(t);
            let b = more.eval(t);
            assert!(
                (a - b).abs() <= 1e-6 * b.abs().max(f64::MIN_POSITIVE),
                "t={t}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn uniform_comb_hits_the_cap() {
        let m = auto_mode_bound(546e6, 735e6, 93.61e9, 89.42e9, |_| 1.0);
        assert_eq!(m, MODE_BOUND_CAP);
    }

    #[test]
    fn broadening_is_monotone() {
        let curve = g2_curve(&reference_single_mode(), &TimeGrid::default()).unwrap();
        let w0 = fwhm(&curve).unwrap();
        let mut last = w0;
        for gamma in [4e11, 2e11, 1e11, 5e10, 2.5e10] {
            let resp = DetectorResponse::new(gamma, 1.0).unwrap();
            let w = fwhm(&convolve_g2(&curve, &resp).unwrap()).unwrap();
            assert!(w >= w0 * 0.999, "w {w} vs w0 {w0}");
            assert!(w >= last * 0.999, "slower detectors broaden more");
            last = w;
        }
    }

    #[test]
    fn model_json_round_trip() {
        let model = BiphotonModel::new(
            546e6, 735e6, 93.61e9, 89.42e9, NU_TELECOM, NU_TELECOM, 0.25e-12, 3,
        )
        .unwrap()
        .with_weights(vec![1.0; 7], vec![0.5; 7])
        .unwrap();
        let text = serde_json::to_string(&model).unwrap();
        let back: BiphotonModel = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.mode_bound, 3);
        assert_eq!(back.weights_idler, Some(vec![0.5; 7]));
    }

    #[test]
    fn curve_csv_shape() {
        let curve = g2_curve(
            &reference_single_mode(),
            &TimeGrid {
                step_s: 0.5e-12,
                half_span_s: 5e-12,
            },
        )
        .unwrap();
        let csv = curve.to_csv();
        assert!(csv.starts_with("tau_s,value\n"));
        assert_eq!(csv.lines().count(), 22);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn g2_is_nonnegative(
            gs in 1e8f64..2e9,
            gi in 1e8f64..2e9,
            tau_ps in -500.0f64..500.0,
            m in 0usize..6,
        ) {
            let model = BiphotonModel::new(
                gs, gi, 93.61e9, 89.42e9, NU_TELECOM, NU_TELECOM, 0.0, m,
            ).unwrap();
            let v = g2(&model, tau_ps * 1e-12).unwrap();
            prop_assert!(v >= 0.0);
        }

        #[test]
        fn exact_width_consistency(gs_mhz in 300.0f64..900.0, ratio in 1.0f64..2.0) {
            // numeric grid FWHM against the exact two-sided-exponential width
            let gs = gs_mhz * 1e6;
            let gi = gs * ratio;
            let model = BiphotonModel::single_mode(gs, gi, NU_TELECOM, NU_TELECOM).unwrap();
            let curve = g2_curve(&model, &TimeGrid::default()).unwrap();
            let w = fwhm(&curve).unwrap();
            let exact = (2.0f64).ln() / (2.0 * PI) * (1.0 / gs + 1.0 / gi);
            prop_assert!((w - exact).abs() / exact < 5e-3, "w {} vs {}", w, exact);
        }

        #[test]
        fn geometric_mean_width_near_unity_ratio(gs_mhz in 300.0f64..900.0, ratio in 1.0f64..1.25) {
            // T = 1.39/(2π·√(γsγi)) agrees with the true width to 0.5 % only
            // for nearly balanced linewidths; see the exact-width check above
            let gs = gs_mhz * 1e6;
            let gi = gs * ratio;
            let model = BiphotonModel::single_mode(gs, gi, NU_TELECOM, NU_TELECOM).unwrap();
            let curve = g2_curve(&model, &TimeGrid::default()).unwrap();
            let w = fwhm(&curve).unwrap();
            let t = t_fwhm_analytic(gs, gi);
            prop_assert!((w - t).abs() / t < 5e-3, "w {} vs analytic {}", w, t);
        }
    }
}
