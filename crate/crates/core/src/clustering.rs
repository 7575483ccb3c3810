//! The cluster-effect calculus for doubly resonant type-II cavity SPDC.
//!
//! Signal and idler see different refractive indices, so their mode combs
//! have slightly different spacings and realign only every cluster spacing
//! `ΔΩ_c = Δω_s·Δω_i / (Δω_s − Δω_i)`. Between realignments the orthogonal
//! combs are offset by `Δν`; when the summed linewidths fit inside that
//! offset only one doubly resonant pair survives and the source is single
//! longitudinal mode.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("degenerate birefringence: equal FSRs ({0} Hz) give an infinite cluster spacing")]
    DegenerateBirefringence(f64),
    #[error(
        "argument order: expected Δω_s > Δω_i > 0, got Δω_s = {fsr_signal_hz} Hz, Δω_i = {fsr_idler_hz} Hz"
    )]
    ArgumentOrder {
        fsr_signal_hz: f64,
        fsr_idler_hz: f64,
    },
}

fn check_fsr_pair(fsr_signal_hz: f64, fsr_idler_hz: f64) -> Result<(), ClusterError> {
    if fsr_signal_hz == fsr_idler_hz {
        return Err(ClusterError::DegenerateBirefringence(fsr_signal_hz));
    }
    if !(fsr_signal_hz > fsr_idler_hz && fsr_idler_hz > 0.0) {
        return Err(ClusterError::ArgumentOrder {
            fsr_signal_hz,
            fsr_idler_hz,
        });
    }
    Ok(())
}

/// Cluster spacing `ΔΩ_c = Δω_s·Δω_i / (Δω_s − Δω_i)`.
pub fn cluster_spacing(fsr_signal_hz: f64, fsr_idler_hz: f64) -> Result<f64, ClusterError> {
    check_fsr_pair(fsr_signal_hz, fsr_idler_hz)?;
    Ok(fsr_signal_hz * fsr_idler_hz / (fsr_signal_hz - fsr_idler_hz))
}

/// Modes per cluster, `(N_s, N_i) = (Δω_i, Δω_s) / (Δω_s − Δω_i)`.
///
/// Because the mode spacing scales as 1/n at fixed cavity length, this is the
/// refractive-index form `N_s = n_y/(n_z − n_y)`, `N_i = n_z/(n_z − n_y)`
/// expressed through measurable FSRs. `N_i − N_s = 1` identically.
pub fn mode_counts(fsr_signal_hz: f64, fsr_idler_hz: f64) -> Result<(f64, f64), ClusterError> {
    check_fsr_pair(fsr_signal_hz, fsr_idler_hz)?;
    let gap = fsr_signal_hz - fsr_idler_hz;
    Ok((fsr_idler_hz / gap, fsr_signal_hz / gap))
}

/// Frequency offset between the orthogonal combs at the neighbouring cluster
/// positions: `frac·(Δω_s − Δω_i)` for `frac = Mod(N,1) < 1/2`, otherwise
/// `(1 − frac)·(Δω_s − Δω_i)`. The two branches coincide at `frac = 1/2`,
/// and N may be either N_s or N_i since they differ by exactly 1.
pub fn orthogonal_offset(
    mode_count: f64,
    fsr_signal_hz: f64,
    fsr_idler_hz: f64,
) -> Result<f64, ClusterError> {
    check_fsr_pair(fsr_signal_hz, fsr_idler_hz)?;
    if !(mode_count > 0.0) {
        return Err(ClusterError::ArgumentOrder {
            fsr_signal_hz,
            fsr_idler_hz,
        });
    }
    let frac = mode_count.fract();
    let gap = fsr_signal_hz - fsr_idler_hz;
    Ok(if frac < 0.5 { frac } else { 1.0 - frac } * gap)
}

/// Single-longitudinal-mode criterion: both linewidths must fit strictly
/// inside the orthogonal-mode offset, `Δν_s + Δν_i < Δν`.
pub fn is_single_mode(offset_hz: f64, linewidth_signal_hz: f64, linewidth_idler_hz: f64) -> bool {
    linewidth_signal_hz + linewidth_idler_hz < offset_hz
}

/// Full cluster analysis of an FSR/linewidth quadruple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterAnalysis {
    pub fsr_signal_hz: f64,
    pub fsr_idler_hz: f64,
    pub cluster_spacing_hz: f64,
    pub n_signal: f64,
    pub n_idler: f64,
    pub orthogonal_offset_hz: f64,
    pub single_mode: bool,
}

impl ClusterAnalysis {
    pub fn compute(
        fsr_signal_hz: f64,
        fsr_idler_hz: f64,
        linewidth_signal_hz: f64,
        linewidth_idler_hz: f64,
    ) -> Result<Self, ClusterError> {
        let cluster_spacing_hz = cluster_spacing(fsr_signal_hz, fsr_idler_hz)?;
        let (n_signal, n_idler) = mode_counts(fsr_signal_hz, fsr_idler_hz)?;
        let orthogonal_offset_hz = orthogonal_offset(n_signal, fsr_signal_hz, fsr_idler_hz)?;
        Ok(Self {
            fsr_signal_hz,
            fsr_idler_hz,
            cluster_spacing_hz,
            n_signal,
            n_idler,
            orthogonal_offset_hz,
            single_mode: is_single_mode(
                orthogonal_offset_hz,
                linewidth_signal_hz,
                linewidth_idler_hz,
            ),
        })
    }
}
