//! Physical constants shared across the crate.

/// Speed of light in vacuum (m/s, exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
