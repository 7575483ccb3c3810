//! Interference observables: Franson coincidence fringes, single-photon
//! Michelson visibility decay, and the thermal phase-tuning model of the
//! fiber unbalanced Michelson interferometers.

use crate::constants::SPEED_OF_LIGHT;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InterferenceError {
    #[error("fringe visibility must lie in [0, 1], got {0}")]
    BadVisibility(f64),
    #[error("extrema must satisfy C_max ≥ C_min ≥ 0 and C_max > 0, got max {cmax}, min {cmin}")]
    ExtremaOrder { cmax: f64, cmin: f64 },
    #[error("spectral FWHM must be > 0, got {0}")]
    NonPositiveLinewidth(f64),
    #[error("background ratio must be ≥ 0, got {0}")]
    NegativeBackground(f64),
    #[error("interferometer field {name} must be > 0, got {value}")]
    NonPositiveField { name: &'static str, value: f64 },
    #[error("inconsistent interferometer: L_d = {length_diff_m} m but c·Δt/(2n) = {expected_m} m")]
    InconsistentArm { length_diff_m: f64, expected_m: f64 },
}

/// Two-photon Franson fringe configuration: fringe visibility, the fixed
/// idler analysis phase, and a constant accidental background per point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FransonConfig {
    pub visibility: f64,
    pub idler_phase_rad: f64,
    pub background: f64,
}

impl FransonConfig {
    pub fn new(
        visibility: f64,
        idler_phase_rad: f64,
        background: f64,
    ) -> Result<Self, InterferenceError> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(InterferenceError::BadVisibility(visibility));
        }
        Ok(Self {
            visibility,
            idler_phase_rad,
            background,
        })
    }
}

/// Expected coincidences at one signal phase:
/// `background + amplitude·(1 + V·cos(φ_s + φ_i))/2`.
pub fn franson_coincidence(cfg: &FransonConfig, signal_phase_rad: f64, amplitude: f64) -> f64 {
    cfg.background
        + amplitude * (1.0 + cfg.visibility * (signal_phase_rad + cfg.idler_phase_rad).cos()) / 2.0
}

/// `(C_max − C_min)/(C_max + C_min)`.
pub fn visibility_from_extrema(cmax: f64, cmin: f64) -> Result<f64, InterferenceError> {
    if !(cmax >= cmin && cmin >= 0.0 && cmax > 0.0) {
        return Err(InterferenceError::ExtremaOrder { cmax, cmin });
    }
    Ok((cmax - cmin) / (cmax + cmin))
}

/// Lorentzian-spectrum Michelson interference model: spectral FWHM, central
/// frequency and the constant coincidence-background ratio R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MichelsonModel {
    pub linewidth_hz: f64,
    pub center_hz: f64,
    pub background_r: f64,
}

impl MichelsonModel {
    pub fn new(
        linewidth_hz: f64,
        center_hz: f64,
        background_r: f64,
    ) -> Result<Self, InterferenceError> {
        if !(linewidth_hz > 0.0) {
            return Err(InterferenceError::NonPositiveLinewidth(linewidth_hz));
        }
        if !(background_r >= 0.0) {
            return Err(InterferenceError::NegativeBackground(background_r));
        }
        Ok(Self {
            linewidth_hz,
            center_hz,
            background_r,
        })
    }
}

/// Interference intensity at path difference L:
/// `2I₀ + 2I₀·exp(−π|Δν·L/c|)·cos(2πν₀L/c)`.
pub fn michelson_intensity(model: &MichelsonModel, path_diff_m: f64, i0: f64) -> f64 {
    let envelope = (-PI * (model.linewidth_hz * path_diff_m / SPEED_OF_LIGHT).abs()).exp();
    2.0 * i0
        + 2.0 * i0 * envelope * (2.0 * PI * model.center_hz * path_diff_m / SPEED_OF_LIGHT).cos()
}

/// Fringe visibility at path difference L:
/// `exp(−π|Δν·L/c|)/(1 + R/2)`.
pub fn michelson_visibility(model: &MichelsonModel, path_diff_m: f64) -> f64 {
    michelson_visibility_raw(model.linewidth_hz, model.background_r, path_diff_m)
}

/// [`michelson_visibility`] without the model struct.
pub fn michelson_visibility_raw(linewidth_hz: f64, background_r: f64, path_diff_m: f64) -> f64 {
    (-PI * (linewidth_hz * path_diff_m / SPEED_OF_LIGHT).abs()).exp() / (1.0 + background_r / 2.0)
}

/// Thermally tuned fiber unbalanced Michelson interferometer. The arm
/// length difference and the round-trip time delay are tied by
/// `L_d = c·Δt/(2n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UmiThermal {
    /// Fiber refractive index.
    pub fiber_index: f64,
    /// Fiber thermo-optic coefficient (1/°C).
    pub dn_dt: f64,
    /// Arm time delay Δt (s).
    pub delay_s: f64,
    /// Arm length difference L_d (m).
    pub length_diff_m: f64,
    /// Operating wavelength (m).
    pub wavelength_m: f64,
}

impl UmiThermal {
    /// Builds from the time delay, deriving `L_d = c·Δt/(2n)`.
    pub fn from_delay(
        fiber_index: f64,
        dn_dt: f64,
        delay_s: f64,
        wavelength_m: f64,
    ) -> Result<Self, InterferenceError> {
        for (name, value) in [
            ("fiber_index", fiber_index),
            ("dn_dt", dn_dt),
            ("delay_s", delay_s),
            ("wavelength_m", wavelength_m),
        ] {
            if !(value > 0.0) {
                return Err(InterferenceError::NonPositiveField { name, value });
            }
        }
        Ok(Self {
            fiber_index,
            dn_dt,
            delay_s,
            length_diff_m: SPEED_OF_LIGHT * delay_s / (2.0 * fiber_index),
            wavelength_m,
        })
    }

    /// Builds from explicit fields, enforcing `L_d = c·Δt/(2n)` to 1e-6
    /// relative.
    pub fn new(
        fiber_index: f64,
        dn_dt: f64,
        delay_s: f64,
        length_diff_m: f64,
        wavelength_m: f64,
    ) -> Result<Self, InterferenceError> {
        let base = Self::from_delay(fiber_index, dn_dt, delay_s, wavelength_m)?;
        if (length_diff_m - base.length_diff_m).abs() / base.length_diff_m > 1e-6 {
            return Err(InterferenceError::InconsistentArm {
                length_diff_m,
                expected_m: base.length_diff_m,
            });
        }
        Ok(Self {
            length_diff_m,
            ..base
        })
    }
}

/// Fringe series as CSV, `phase_rad,counts`.
pub fn fringe_csv(series: impl IntoIterator<Item = (f64, f64)>) -> String {
    crate::io::two_column_csv("phase_rad,counts", series)
}

/// Visibility-versus-path series as CSV, `delta_x_m,visibility`.
pub fn visibility_csv(series: impl IntoIterator<Item = (f64, f64)>) -> String {
    crate::io::two_column_csv("delta_x_m,visibility", series)
}

/// Temperature change for one full fringe period,
/// `ΔT = λ/(2·L_d·dn/dT)`.
pub fn umi_tuning_period(umi: &UmiThermal) -> Result<f64, InterferenceError> {
    for (name, value) in [("length_diff_m", umi.length_diff_m), ("dn_dt", umi.dn_dt)] {
        if !(value > 0.0) {
            return Err(InterferenceError::NonPositiveField { name, value });
        }
    }
    Ok(umi.wavelength_m / (2.0 * umi.length_diff_m * umi.dn_dt))
}
