//! Fabry-Pérot cavity model per polarization: free spectral range, linewidth,
//! Lorentzian lineshape and mode-comb generation.
//!
//! The comb spacing of a linear cavity of geometric length L is implemented
//! as `c / (2·n_g·L)` — round trip 2L, group index because a measured comb
//! spacing reflects group delay. Measured-override structures bypass the
//! dispersion model entirely and return the configured values verbatim, which
//! is the recommended way to reproduce characterization data.

use crate::constants::SPEED_OF_LIGHT;
use crate::dispersion::{self, Axis, CrystalSpec, DispersionError};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CavityError {
    #[error("Lorentzian FWHM must be > 0, got {0}")]
    NonPositiveFwhm(f64),
    #[error(
        "mode structure needs 0 < linewidth < FSR, got linewidth {linewidth_hz} Hz, FSR {fsr_hz} Hz"
    )]
    UnresolvableModes { fsr_hz: f64, linewidth_hz: f64 },
    #[error("mode comb half-width must be > 0, got {0}")]
    NonPositiveHalfWidth(f64),
    #[error("transmission scan needs at least one mode structure")]
    EmptyStructures,
    #[error("scan span {span_hz} Hz must cover at least one FSR ({fsr_hz} Hz)")]
    ScanTooNarrow { span_hz: f64, fsr_hz: f64 },
    #[error(transparent)]
    Dispersion(#[from] DispersionError),
}

/// Which down-converted field a cavity mode structure belongs to.
/// Signal is the horizontally polarized (y-axis) photon, idler the
/// vertically polarized (z-axis) one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    Signal,
    Idler,
}

impl Polarization {
    pub fn axis(self) -> Axis {
        match self {
            Polarization::Signal => Axis::Y,
            Polarization::Idler => Axis::Z,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::Signal => write!(f, "signal (horizontal, y)"),
            Polarization::Idler => write!(f, "idler (vertical, z)"),
        }
    }
}

/// Whether the numbers in a [`CavityModeStructure`] came from the dispersion
/// model or from a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureSource {
    DerivedFromDispersion,
    MeasuredOverride,
}

/// Per-polarization longitudinal mode structure of the cavity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CavityModeStructure {
    pub polarization: Polarization,
    fsr_hz: f64,
    linewidth_hz: f64,
    pub center_hz: f64,
    pub source: StructureSource,
}

impl CavityModeStructure {
    /// Builds a structure from measured FSR and linewidth; both are returned
    /// verbatim by the accessors.
    pub fn from_measurement(
        polarization: Polarization,
        fsr_hz: f64,
        linewidth_hz: f64,
        center_hz: f64,
    ) -> Result<Self, CavityError> {
        Self::build(
            polarization,
            fsr_hz,
            linewidth_hz,
            center_hz,
            StructureSource::MeasuredOverride,
        )
    }

    /// Builds a structure with the FSR derived from the crystal dispersion at
    /// the given wavelength. The linewidth is set by the mirror coatings, not
    /// by dispersion, so it must still be supplied.
    pub fn from_dispersion(
        crystal: &CrystalSpec,
        polarization: Polarization,
        wavelength_m: f64,
        linewidth_hz: f64,
    ) -> Result<Self, CavityError> {
        let fsr_hz = derived_fsr(crystal, polarization.axis(), wavelength_m)?;
        Self::build(
            polarization,
            fsr_hz,
            linewidth_hz,
            SPEED_OF_LIGHT / wavelength_m,
            StructureSource::DerivedFromDispersion,
        )
    }

    fn build(
        polarization: Polarization,
        fsr_hz: f64,
        linewidth_hz: f64,
        center_hz: f64,
        source: StructureSource,
    ) -> Result<Self, CavityError> {
        if !(fsr_hz > 0.0) || !(linewidth_hz > 0.0) || !(linewidth_hz < fsr_hz) {
            return Err(CavityError::UnresolvableModes {
                fsr_hz,
                linewidth_hz,
            });
        }
        Ok(Self {
            polarization,
            fsr_hz,
            linewidth_hz,
            center_hz,
            source,
        })
    }

    pub fn fsr_hz(&self) -> f64 {
        self.fsr_hz
    }

    pub fn linewidth_hz(&self) -> f64 {
        self.linewidth_hz
    }

    pub fn finesse(&self) -> f64 {
        self.fsr_hz / self.linewidth_hz
    }

    pub fn line(&self) -> LorentzianLine {
        LorentzianLine {
            center_hz: self.center_hz,
            fwhm_hz: self.linewidth_hz,
        }
    }
}

/// FSR of the linear cavity formed by the crystal end faces, `c/(2·n_g·L)`.
pub fn derived_fsr(
    crystal: &CrystalSpec,
    axis: Axis,
    wavelength_m: f64,
) -> Result<f64, CavityError> {
    let ng = dispersion::group_index(crystal.set(axis), wavelength_m, crystal.temperature_c)?;
    Ok(SPEED_OF_LIGHT / (2.0 * ng * crystal.length_m))
}

/// Unit-area Lorentzian line, `φ(ν) = (Δν/2π) / ((ν−ν₀)² + (Δν/2)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianLine {
    pub center_hz: f64,
    pub fwhm_hz: f64,
}

impl LorentzianLine {
    pub fn new(center_hz: f64, fwhm_hz: f64) -> Result<Self, CavityError> {
        if !(fwhm_hz > 0.0) {
            return Err(CavityError::NonPositiveFwhm(fwhm_hz));
        }
        Ok(Self { center_hz, fwhm_hz })
    }

    /// Spectral density at ν (1/Hz); integrates to 1 over the real line.
    pub fn density(&self, nu_hz: f64) -> f64 {
        let d = nu_hz - self.center_hz;
        let half = self.fwhm_hz / 2.0;
        self.fwhm_hz / (2.0 * std::f64::consts::PI) / (d * d + half * half)
    }

    /// Same shape normalized to unit peak; the transmission-peak profile.
    pub fn peak_normalized(&self, nu_hz: f64) -> f64 {
        let d = nu_hz - self.center_hz;
        let half = self.fwhm_hz / 2.0;
        half * half / (d * d + half * half)
    }
}

/// One longitudinal mode of a comb: index m relative to the structure's
/// central frequency, and its absolute frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombMode {
    pub index: i64,
    pub freq_hz: f64,
}

/// All comb frequencies `ν₀ + m·FSR` inside the closed interval
/// `[center − half_width, center + half_width]`, ascending.
pub fn mode_comb(
    structure: &CavityModeStructure,
    center_hz: f64,
    half_width_hz: f64,
) -> Result<Vec<CombMode>, CavityError> {
    if !(half_width_hz > 0.0) {
        return Err(CavityError::NonPositiveHalfWidth(half_width_hz));
    }
    let fsr = structure.fsr_hz;
    let lo = center_hz - half_width_hz;
    let hi = center_hz + half_width_hz;
    let mut m = ((lo - structure.center_hz) / fsr).ceil() as i64;
    // guard the closed lower edge against the ceil of an exact integer ratio
    while structure.center_hz + (m - 1) as f64 * fsr >= lo {
        m -= 1;
    }
    let mut modes = Vec::new();
    loop {
        let freq = structure.center_hz + m as f64 * fsr;
        if freq > hi {
            break;
        }
        if freq >= lo {
            modes.push(CombMode {
                index: m,
                freq_hz: freq,
            });
        }
        m += 1;
    }
    Ok(modes)
}

/// A sampled `(ν, transmission)` series.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSeries {
    pub freq_hz: Vec<f64>,
    pub transmission: Vec<f64>,
}

impl ScanSeries {
    /// CSV with header `freq_hz,transmission`, one row per sample, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_hz,transmission\n");
        for (f, t) in self.freq_hz.iter().zip(&self.transmission) {
            out.push_str(&format!("{f},{t}\n"));
        }
        out
    }
}

/// Synthesizes a cavity transmission scan: the sum of unit-peak Lorentzian
/// lines at every comb frequency of every structure, plus seeded Gaussian
/// noise of standard deviation `noise_level` (relative to unit peak height).
/// Deterministic for a fixed seed.
pub fn synth_transmission_scan(
    structures: &[CavityModeStructure],
    start_hz: f64,
    stop_hz: f64,
    samples: usize,
    noise_level: f64,
    seed: u64,
) -> Result<ScanSeries, CavityError> {
    if structures.is_empty() {
        return Err(CavityError::EmptyStructures);
    }
    let span = stop_hz - start_hz;
    let min_fsr = structures
        .iter()
        .map(|s| s.fsr_hz)
        .fold(f64::INFINITY, f64::min);
    if !(span >= min_fsr) {
        return Err(CavityError::ScanTooNarrow {
            span_hz: span,
            fsr_hz: min_fsr,
        });
    }
    let center = (start_hz + stop_hz) / 2.0;
    let mut lines = Vec::new();
    for s in structures {
        for mode in mode_comb(s, center, span / 2.0 + s.linewidth_hz * 50.0)? {
            lines.push(LorentzianLine {
                center_hz: mode.freq_hz,
                fwhm_hz: s.linewidth_hz,
            });
        }
    }
    let step = span / (samples.max(2) - 1) as f64;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_level.max(0.0)).expect("finite noise level");
    let mut freq_hz = Vec::with_capacity(samples);
    let mut transmission = Vec::with_capacity(samples);
    for i in 0..samples {
        let nu = start_hz + i as f64 * step;
        let mut t: f64 = lines.iter().map(|l| l.peak_normalized(nu)).sum();
        if noise_level > 0.0 {
            t += noise.sample(&mut rng);
        }
        freq_hz.push(nu);
        transmission.push(t);
    }
    Ok(ScanSeries {
        freq_hz,
        transmission,
    })
}
