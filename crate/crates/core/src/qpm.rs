//! Quasi-phase-matching calculator: energy/momentum conservation, the
//! poling-period solver and the single-pass parametric gain envelope.
//!
//! The collinear momentum balance is `Δk = k_p − k_s − k_i + 2π·m/Λ` with
//! `k = 2π·n(λ,T)/λ` on the axis each field propagates on. For this type-II
//! process in KTP the material mismatch `k_p − k_s − k_i` is negative, so the
//! grating vector enters with the sign that can close the balance for a
//! positive period.

use crate::constants::SPEED_OF_LIGHT;
use crate::dispersion::{self, Axis, CrystalSpec, DispersionError};
use std::f64::consts::PI;

/// Relative tolerance of the energy-conservation invariant `1/λp = 1/λs + 1/λi`.
pub const ENERGY_TOL: f64 = 1e-9;

/// Mismatch tolerance of the poling-period solver (1/m).
pub const SOLVER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpmError {
    #[error(
        "energy conservation violated: 1/λp − 1/λs − 1/λi = {residual:.3e} m⁻¹ (relative {relative:.3e})"
    )]
    EnergyConservation { residual: f64, relative: f64 },
    #[error("QPM order must be a positive odd integer, got {0}")]
    BadOrder(i32),
    #[error("wavelengths must be positive")]
    NonPositiveWavelength,
    #[error(
        "no poling period in [{lo_um} um, {hi_um} um] phase-matches the process (no sign change of Δk)"
    )]
    NoSolution { lo_um: f64, hi_um: f64 },
    #[error(transparent)]
    Dispersion(#[from] DispersionError),
}

/// A collinear SPDC process: pump → signal + idler with per-field axes.
/// Construction enforces energy conservation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdcProcess {
    pump_wavelength_m: f64,
    signal_wavelength_m: f64,
    idler_wavelength_m: f64,
    pub pump_axis: Axis,
    pub signal_axis: Axis,
    pub idler_axis: Axis,
    /// QPM order, a positive odd integer.
    pub order: i32,
}

impl SpdcProcess {
    pub fn new(
        pump_wavelength_m: f64,
        signal_wavelength_m: f64,
        idler_wavelength_m: f64,
        order: i32,
    ) -> Result<Self, QpmError> {
        if pump_wavelength_m <= 0.0 || signal_wavelength_m <= 0.0 || idler_wavelength_m <= 0.0 {
            return Err(QpmError::NonPositiveWavelength);
        }
        if order < 1 || order % 2 == 0 {
            return Err(QpmError::BadOrder(order));
        }
        let residual =
            1.0 / pump_wavelength_m - 1.0 / signal_wavelength_m - 1.0 / idler_wavelength_m;
        let relative = residual * pump_wavelength_m;
        if relative.abs() > ENERGY_TOL {
            return Err(QpmError::EnergyConservation { residual, relative });
        }
        Ok(Self {
            pump_wavelength_m,
            signal_wavelength_m,
            idler_wavelength_m,
            pump_axis: Axis::Y,
            signal_axis: Axis::Y,
            idler_axis: Axis::Z,
            order,
        })
    }

    /// Pump and signal given, idler slaved by energy conservation.
    pub fn from_pump_signal(
        pump_wavelength_m: f64,
        signal_wavelength_m: f64,
        order: i32,
    ) -> Result<Self, QpmError> {
        if pump_wavelength_m <= 0.0 || signal_wavelength_m <= pump_wavelength_m {
            return Err(QpmError::NonPositiveWavelength);
        }
        let idler = 1.0 / (1.0 / pump_wavelength_m - 1.0 / signal_wavelength_m);
        Self::new(pump_wavelength_m, signal_wavelength_m, idler, order)
    }

    /// Degenerate process: signal and idler both at twice the pump wavelength.
    pub fn degenerate(pump_wavelength_m: f64, order: i32) -> Result<Self, QpmError> {
        Self::new(
            pump_wavelength_m,
            2.0 * pump_wavelength_m,
            2.0 * pump_wavelength_m,
            order,
        )
    }

    pub fn pump_wavelength_m(&self) -> f64 {
        self.pump_wavelength_m
    }
    pub fn signal_wavelength_m(&self) -> f64 {
        self.signal_wavelength_m
    }
    pub fn idler_wavelength_m(&self) -> f64 {
        self.idler_wavelength_m
    }

    /// The same process with the signal shifted by `detuning_hz` and the
    /// idler re-slaved by energy conservation.
    pub fn detuned(&self, detuning_hz: f64) -> Result<Self, QpmError> {
        let nu_s = SPEED_OF_LIGHT / self.signal_wavelength_m + detuning_hz;
        let nu_p = SPEED_OF_LIGHT / self.pump_wavelength_m;
        let nu_i = nu_p - nu_s;
        if nu_s <= 0.0 || nu_i <= 0.0 {
            return Err(QpmError::NonPositiveWavelength);
        }
        Self::new(
            self.pump_wavelength_m,
            SPEED_OF_LIGHT / nu_s,
            SPEED_OF_LIGHT / nu_i,
            self.order,
        )
    }
}

fn wavevector(
    crystal: &CrystalSpec,
    axis: Axis,
    wavelength_m: f64,
) -> Result<f64, DispersionError> {
    let n = dispersion::refractive_index(crystal.set(axis), wavelength_m, crystal.temperature_c)?;
    Ok(2.0 * PI * n / wavelength_m)
}

fn mismatch_with_period(
    proc: &SpdcProcess,
    crystal: &CrystalSpec,
    poling_period_m: f64,
) -> Result<f64, QpmError> {
    let kp = wavevector(crystal, proc.pump_axis, proc.pump_wavelength_m)?;
    let ks = wavevector(crystal, proc.signal_axis, proc.signal_wavelength_m)?;
    let ki = wavevector(crystal, proc.idler_axis, proc.idler_wavelength_m)?;
    Ok(kp - ks - ki + 2.0 * PI * proc.order as f64 / poling_period_m)
}

/// Phase mismatch Δk (1/m) of the process in the crystal, using the
/// crystal's configured poling period.
pub fn phase_mismatch(proc: &SpdcProcess, crystal: &CrystalSpec) -> Result<f64, QpmError> {
    mismatch_with_period(proc, crystal, crystal.poling_period_m)
}

/// Solves for the poling period Λ with Δk = 0 by bisection. The bracket is
/// `[10·m, 100·m]` µm so that higher odd orders (period m× the first-order
/// one) stay solvable.
pub fn solve_poling_period(proc: &SpdcProcess, crystal: &CrystalSpec) -> Result<f64, QpmError> {
    let lo_um = 10.0 * proc.order as f64;
    let hi_um = 100.0 * proc.order as f64;
    let mut lo = lo_um * 1e-6;
    let mut hi = hi_um * 1e-6;
    let mut f_lo = mismatch_with_period(proc, crystal, lo)?;
    let f_hi = mismatch_with_period(proc, crystal, hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo * f_hi > 0.0 {
        return Err(QpmError::NoSolution { lo_um, hi_um });
    }
    // Δk is monotone in 1/Λ; bisect until the mismatch is inside tolerance.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = mismatch_with_period(proc, crystal, mid)?;
        if f_mid.abs() < SOLVER_TOL {
            return Ok(mid);
        }
        if f_lo * f_mid <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A sampled gain spectrum over signal detuning.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSpectrum {
    pub detuning_hz: Vec<f64>,
    pub intensity: Vec<f64>,
}

impl GainSpectrum {
    /// CSV with header `detuning_hz,intensity`, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("detuning_hz,intensity\n");
        for (d, i) in self.detuning_hz.iter().zip(&self.intensity) {
            out.push_str(&format!("{d},{i}\n"));
        }
        out
    }
}

fn sinc2(x: f64) -> f64 {
    if x.abs() < 1e-9 {
        let x2 = x * x;
        let s = 1.0 - x2 / 6.0;
        s * s
    } else {
        let s = x.sin() / x;
        s * s
    }
}

/// Relative single-pass intensity `sinc²(Δk(δ)·L/2)` at one signal detuning,
/// idler slaved by energy conservation.
pub fn gain_at(
    proc: &SpdcProcess,
    crystal: &CrystalSpec,
    detuning_hz: f64,
) -> Result<f64, QpmError> {
    let shifted = proc.detuned(detuning_hz)?;
    let dk = phase_mismatch(&shifted, crystal)?;
    Ok(sinc2(dk * crystal.length_m / 2.0))
}

/// Gain envelope sampled on a signal-detuning grid. Values lie in [0, 1]
/// and reach 1 exactly where Δk = 0.
pub fn gain_spectrum(
    proc: &SpdcProcess,
    crystal: &CrystalSpec,
    detuning_grid_hz: &[f64],
) -> Result<GainSpectrum, QpmError> {
    let mut intensity = Vec::with_capacity(detuning_grid_hz.len());
    for &d in detuning_grid_hz {
        intensity.push(gain_at(proc, crystal, d)?);
    }
    Ok(GainSpectrum {
        detuning_hz: detuning_grid_hz.to_vec(),
        intensity,
    })
}

/// Relative mode amplitudes `|sinc(Δk·L/2)|` at comb detunings `m·fsr_hz`
/// for `m ∈ [−m_max, m_max]`; used to weight the biphoton mode sum.
pub fn mode_amplitudes(
    proc: &SpdcProcess,
    crystal: &CrystalSpec,
    fsr_hz: f64,
    m_max: usize,
) -> Result<Vec<f64>, QpmError> {
    let mut weights = Vec::with_capacity(2 * m_max + 1);
    for m in -(m_max as i64)..=(m_max as i64) {
        weights.push(gain_at(proc, crystal, m as f64 * fsr_hz)?.sqrt());
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::builtin_ktp;

    fn crystal() -> CrystalSpec {
        let (y, z) = builtin_ktp();
        CrystalSpec::new(0.85e-3, 1e-3, 2e-3, 46.2e-6, 25.0, y, z).unwrap()
    }

    fn reference_process() -> SpdcProcess {
        SpdcProcess::degenerate(775e-9, 1).unwrap()
    }

    #[test]
    fn energy_conservation_enforced() {
        assert!(SpdcProcess::new(775e-9, 1550e-9, 1550e-9, 1).is_ok());
        let err = SpdcProcess::new(775e-9, 1540e-9, 1550e-9, 1).unwrap_err();
        assert!(matches!(err, QpmError::EnergyConservation { .. }));
        let p = SpdcProcess::from_pump_signal(775e-9, 1540e-9, 1).unwrap();
        let res = 1.0 / p.pump_wavelength_m()
            - 1.0 / p.signal_wavelength_m()
            - 1.0 / p.idler_wavelength_m();
        assert!((res * p.pump_wavelength_m()).abs() < 1e-12);
    }

    #[test]
    fn order_must_be_positive_odd() {
        assert!(SpdcProcess::degenerate(775e-9, 2).is_err());
        assert!(SpdcProcess::degenerate(775e-9, 0).is_err());
        assert!(SpdcProcess::degenerate(775e-9, 3).is_ok());
    }

    #[test]
    fn solved_period_near_the_poled_one() {
        let lam = solve_poling_period(&reference_process(), &crystal()).unwrap();
        let rel = (lam - 46.2e-6).abs() / 46.2e-6;
        assert!(rel < 0.03, "Λ = {} um, rel = {rel}", lam * 1e6);
        // golden value from the shipped Sellmeier set
        assert!((lam - 45.035584e-6).abs() < 1e-9, "Λ = {} um", lam * 1e6);
    }

    #[test]
    fn third_order_triples_the_period() {
        let c = crystal();
        let lam1 = solve_poling_period(&reference_process(), &c).unwrap();
        let p3 = SpdcProcess::degenerate(775e-9, 3).unwrap();
        let lam3 = solve_poling_period(&p3, &c).unwrap();
        assert!((lam3 - 3.0 * lam1).abs() / (3.0 * lam1) < 1e-9);
    }

    #[test]
    fn solver_round_trip() {
        let c = crystal();
        let lam = solve_poling_period(&reference_process(), &c).unwrap();
        let mut tuned = c.clone();
        tuned.poling_period_m = lam;
        let dk = phase_mismatch(&reference_process(), &tuned).unwrap();
        assert!(dk.abs() < SOLVER_TOL, "residual Δk = {dk}");
    }

    #[test]
    fn poled_period_inside_central_lobe() {
        let c = crystal();
        let dk = phase_mismatch(&reference_process(), &c).unwrap();
        assert!((dk * c.length_m / 2.0).abs() < PI);
    }

    #[test]
    fn detuning_sign_flip() {
        let c = crystal();
        let mut tuned = c.clone();
        tuned.poling_period_m = solve_poling_period(&reference_process(), &c).unwrap();
        let plus = phase_mismatch(&reference_process().detuned(5e12).unwrap(), &tuned).unwrap();
        let minus = phase_mismatch(&reference_process().detuned(-5e12).unwrap(), &tuned).unwrap();
        assert!(plus != 0.0 && minus != 0.0);
        assert!(plus * minus < 0.0, "plus = {plus}, minus = {minus}");
    }

    #[test]
    fn gain_peak_and_zeros() {
        let c = crystal();
        let mut tuned = c.clone();
        tuned.poling_period_m = solve_poling_period(&reference_process(), &c).unwrap();
        let g0 = gain_at(&reference_process(), &tuned, 0.0).unwrap();
        assert!((g0 - 1.0).abs() < 1e-9);

        // first zero: find detuning where Δk·L/2 = ±π by scanning
        let mut prev = g0;
        let mut d = 0.0;
        let mut first_zero = None;
        while d < 2e13 {
            d += 1e9;
            let g = gain_at(&reference_process(), &tuned, d).unwrap();
            if g < 1e-7 && prev >= g {
                first_zero = Some(d);
                break;
            }
            prev = g;
        }
        let z = first_zero.expect("found a zero");
        let dk = phase_mismatch(&reference_process().detuned(z).unwrap(), &tuned).unwrap();
        assert!(
            ((dk * tuned.length_m / 2.0).abs() - PI).abs() < 0.01,
            "Δk·L/2 = {}",
            dk * tuned.length_m / 2.0
        );
    }

    #[test]
    fn gain_envelope_fwhm_golden() {
        let c = crystal();
        let mut tuned = c.clone();
        tuned.poling_period_m = solve_poling_period(&reference_process(), &c).unwrap();
        let half = |sign: f64| {
            let mut lo = 0.0f64;
            let mut hi = 0.0f64;
            while gain_at(&reference_process(), &tuned, sign * hi).unwrap() > 0.5 {
                lo = hi;
                hi += 1e10;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if gain_at(&reference_process(), &tuned, sign * mid).unwrap() > 0.5 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let fwhm = half(1.0) + half(-1.0);
        // golden value from a numerical half-max scan of the shipped set;
        // broad compared to the ~2 THz cluster spacing
        assert!((fwhm - 3.5259e12).abs() < 0.01e12, "fwhm = {fwhm}");
        assert!(fwhm > 1997.75e9);
    }

    #[test]
    fn gain_values_bounded() {
        let c = crystal();
        let grid: Vec<f64> = (-400..=400).map(|i| i as f64 * 2.5e10).collect();
        let spec = gain_spectrum(&reference_process(), &c, &grid).unwrap();
        for (&d, &g) in spec.detuning_hz.iter().zip(&spec.intensity) {
            assert!((0.0..=1.0).contains(&g), "g({d}) = {g}");
            if g == 1.0 {
                let dk = phase_mismatch(&reference_process().detuned(d).unwrap(), &c).unwrap();
                assert_eq!(dk, 0.0);
            }
        }
    }

    #[test]
    fn period_moves_smoothly_with_temperature() {
        let c25 = crystal();
        let mut c30 = crystal();
        c30.temperature_c = 30.0;
        let lam25 = solve_poling_period(&reference_process(), &c25).unwrap();
        let lam30 = solve_poling_period(&reference_process(), &c30).unwrap();
        let rel = (lam30 - lam25).abs() / lam25;
        assert!(rel < 0.01, "rel = {rel}");
        // no discontinuity across intermediate temperatures
        let mut prev = lam25;
        for i in 1..=10 {
            let mut c = crystal();
            c.temperature_c = 25.0 + 0.5 * i as f64;
            let lam = solve_poling_period(&reference_process(), &c).unwrap();
            assert!((lam - prev).abs() / prev < 2e-3);
            prev = lam;
        }
    }

    #[test]
    fn csv_shape() {
        let c = crystal();
        let spec = gain_spectrum(&reference_process(), &c, &[-1e12, 0.0, 1e12]).unwrap();
        let csv = spec.to_csv();
        assert!(csv.starts_with("detuning_hz,intensity\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
