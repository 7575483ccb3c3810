//! Axis-resolved refractive-index and group-index model for the nonlinear
//! crystal (KTP), parameterized by wavelength and temperature.
//!
//! Coefficient sets follow the two-pole Sellmeier form
//! `n² = A + B/(λ² − C) + D/(λ² − E)` with λ in micrometers, plus an additive
//! thermo-optic correction `n(λ,T) = n(λ,T₀) + dn/dT·(T − T₀)` referenced to
//! T₀ = 25 °C. The crate ships coefficients for flux-grown KTP (see
//! `data/ktp_sellmeier.json` for the citations); other sets can be loaded
//! from a JSON file with the same schema.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// Reference temperature of the thermo-optic correction (°C).
pub const REFERENCE_TEMP_C: f64 = 25.0;

/// Central-difference step used by [`group_index`], in micrometers (0.1 nm).
pub const GROUP_INDEX_STEP_UM: f64 = 1e-4;

const BUILTIN_KTP: &str = include_str!("../data/ktp_sellmeier.json");

/// Dielectric axis of the crystal frame relevant to type-II phase matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Y,
    Z,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Y => write!(f, "y"),
            Axis::Z => write!(f, "z"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DispersionError {
    #[error(
        "wavelength {wavelength_um} um outside validity range [{lo} um, {hi} um] of the {axis}-axis set"
    )]
    WavelengthOutOfRange {
        axis: Axis,
        wavelength_um: f64,
        lo: f64,
        hi: f64,
    },
    #[error(
        "temperature {temperature_c} C outside validity range [{lo} C, {hi} C] of the {axis}-axis set"
    )]
    TemperatureOutOfRange {
        axis: Axis,
        temperature_c: f64,
        lo: f64,
        hi: f64,
    },
    #[error(
        "group index at {wavelength_um} um needs a ±{step_um} um margin inside the validity range"
    )]
    GroupIndexMargin { wavelength_um: f64, step_um: f64 },
    #[error("bad coefficient data: {0}")]
    BadData(String),
}

/// One published Sellmeier coefficient set for a single dielectric axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SellmeierSet {
    pub axis: Axis,
    /// `[A, B, C, D, E]` of `n² = A + B/(λ² − C) + D/(λ² − E)`, λ in µm.
    pub coefficients: Vec<f64>,
    /// Wavelength validity `[lo, hi]` in micrometers.
    pub valid_wavelength_um: [f64; 2],
    /// Temperature validity `[lo, hi]` in °C.
    pub valid_temp_c: [f64; 2],
    /// Thermo-optic coefficient (1/°C) of the additive correction.
    #[serde(rename = "dn_dT")]
    pub dn_dt: f64,
    /// Source of the coefficients.
    pub citation: String,
}

impl SellmeierSet {
    fn validate(&self) -> Result<(), DispersionError> {
        if self.coefficients.len() != 5 {
            return Err(DispersionError::BadData(format!(
                "expected 5 coefficients [A, B, C, D, E], got {}",
                self.coefficients.len()
            )));
        }
        if !(self.valid_wavelength_um[0] < self.valid_wavelength_um[1])
            || !(self.valid_temp_c[0] < self.valid_temp_c[1])
        {
            return Err(DispersionError::BadData(
                "validity ranges must satisfy lo < hi".into(),
            ));
        }
        Ok(())
    }

    fn check_domain(&self, wavelength_um: f64, temperature_c: f64) -> Result<(), DispersionError> {
        let [lo, hi] = self.valid_wavelength_um;
        if !(wavelength_um >= lo && wavelength_um <= hi) {
            return Err(DispersionError::WavelengthOutOfRange {
                axis: self.axis,
                wavelength_um,
                lo,
                hi,
            });
        }
        let [tlo, thi] = self.valid_temp_c;
        if !(temperature_c >= tlo && temperature_c <= thi) {
            return Err(DispersionError::TemperatureOutOfRange {
                axis: self.axis,
                temperature_c,
                lo: tlo,
                hi: thi,
            });
        }
        Ok(())
    }

    /// Sellmeier evaluation without domain checks, λ in micrometers.
    fn n_unchecked(&self, wavelength_um: f64, temperature_c: f64) -> f64 {
        let c = &self.coefficients;
        let l2 = wavelength_um * wavelength_um;
        let n2 = c[0] + c[1] / (l2 - c[2]) + c[3] / (l2 - c[4]);
        n2.sqrt() + self.dn_dt * (temperature_c - REFERENCE_TEMP_C)
    }
}

/// Loads the coefficient sets shipped with the crate (flux-grown KTP, y and z).
pub fn builtin_ktp() -> (SellmeierSet, SellmeierSet) {
    parse_sets(BUILTIN_KTP).expect("embedded KTP data is valid")
}

/// Loads `(y, z)` coefficient sets from a JSON file holding an array of
/// per-axis documents.
pub fn load_sets(path: &Path) -> Result<(SellmeierSet, SellmeierSet), DispersionError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| DispersionError::BadData(format!("{}: {e}", path.display())))?;
    parse_sets(&text)
}

fn parse_sets(text: &str) -> Result<(SellmeierSet, SellmeierSet), DispersionError> {
    let sets: Vec<SellmeierSet> =
        serde_json::from_str(text).map_err(|e| DispersionError::BadData(e.to_string()))?;
    let mut y = None;
    let mut z = None;
    for s in sets {
        s.validate()?;
        match s.axis {
            Axis::Y if y.is_none() => y = Some(s),
            Axis::Z if z.is_none() => z = Some(s),
            axis => {
                return Err(DispersionError::BadData(format!(
                    "duplicate coefficient set for axis {axis}"
                )));
            }
        }
    }
    match (y, z) {
        (Some(y), Some(z)) => Ok((y, z)),
        _ => Err(DispersionError::BadData(
            "need exactly one coefficient set per axis y and z".into(),
        )),
    }
}

/// Crystal geometry, poling and operating point. Exactly one Sellmeier set
/// per axis; propagation is along the length.
#[derive(Debug, Clone)]
pub struct CrystalSpec {
    /// Length along the propagation direction (m).
    pub length_m: f64,
    /// Transverse dimensions (m), informational.
    pub width_m: f64,
    pub height_m: f64,
    /// Poling period Λ (m).
    pub poling_period_m: f64,
    /// Operating temperature (°C).
    pub temperature_c: f64,
    pub sellmeier_y: SellmeierSet,
    pub sellmeier_z: SellmeierSet,
}

impl CrystalSpec {
    pub fn new(
        length_m: f64,
        width_m: f64,
        height_m: f64,
        poling_period_m: f64,
        temperature_c: f64,
        sellmeier_y: SellmeierSet,
        sellmeier_z: SellmeierSet,
    ) -> Result<Self, DispersionError> {
        if !(length_m > 0.0) {
            return Err(DispersionError::BadData(
                "crystal length must be > 0".into(),
            ));
        }
        if !(poling_period_m > 0.0) {
            return Err(DispersionError::BadData("poling period must be > 0".into()));
        }
        if sellmeier_y.axis != Axis::Y || sellmeier_z.axis != Axis::Z {
            return Err(DispersionError::BadData(
                "crystal needs a y-axis set and a z-axis set".into(),
            ));
        }
        sellmeier_y.validate()?;
        sellmeier_z.validate()?;
        Ok(Self {
            length_m,
            width_m,
            height_m,
            poling_period_m,
            temperature_c,
            sellmeier_y,
            sellmeier_z,
        })
    }

    pub fn set(&self, axis: Axis) -> &SellmeierSet {
        match axis {
            Axis::Y => &self.sellmeier_y,
            Axis::Z => &self.sellmeier_z,
        }
    }
}

/// Refractive index n(λ, T).
pub fn refractive_index(
    set: &SellmeierSet,
    wavelength_m: f64,
    temperature_c: f64,
) -> Result<f64, DispersionError> {
    set.validate()?;
    let wavelength_um = wavelength_m * 1e6;
    set.check_domain(wavelength_um, temperature_c)?;
    Ok(set.n_unchecked(wavelength_um, temperature_c))
}

/// Group index n_g = n − λ·dn/dλ, with dn/dλ by central finite difference
/// of step [`GROUP_INDEX_STEP_UM`].
pub fn group_index(
    set: &SellmeierSet,
    wavelength_m: f64,
    temperature_c: f64,
) -> Result<f64, DispersionError> {
    group_index_with_step(set, wavelength_m, temperature_c, GROUP_INDEX_STEP_UM)
}

/// [`group_index`] with an explicit finite-difference step (µm); used by the
/// step-halving convergence checks.
pub fn group_index_with_step(
    set: &SellmeierSet,
    wavelength_m: f64,
    temperature_c: f64,
    step_um: f64,
) -> Result<f64, DispersionError> {
    set.validate()?;
    let wavelength_um = wavelength_m * 1e6;
    set.check_domain(wavelength_um, temperature_c)?;
    let [lo, hi] = set.valid_wavelength_um;
    if wavelength_um - step_um < lo || wavelength_um + step_um > hi {
        return Err(DispersionError::GroupIndexMargin {
            wavelength_um,
            step_um,
        });
    }
    let dn = (set.n_unchecked(wavelength_um + step_um, temperature_c)
        - set.n_unchecked(wavelength_um - step_um, temperature_c))
        / (2.0 * step_um);
    Ok(set.n_unchecked(wavelength_um, temperature_c) - wavelength_um * dn)
}
