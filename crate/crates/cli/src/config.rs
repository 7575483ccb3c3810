//! Run configuration: a single JSON document with per-subsystem sections.
//! Every section is validated up front with path-qualified messages.

use serde::{Deserialize, Serialize};
use spdc_core::biphoton::BiphotonModel;
use spdc_core::counting::{DetectionChain, JitterModel};
use spdc_core::dispersion::{self, CrystalSpec};
use std::path::{Path, PathBuf};

pub const PAPER_PRESET: &str = include_str!("../assets/paper.json");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrystalSection {
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub poling_period_m: f64,
    pub temperature_c: f64,
    #[serde(default)]
    pub sellmeier_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CavityArm {
    pub fsr_hz: f64,
    pub linewidth_hz: f64,
    pub center_hz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CavitySection {
    pub signal: CavityArm,
    pub idler: CavityArm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSection {
    pub pair_rate_per_mw_hz: f64,
    pub pump_power_mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiphotonSection {
    pub tau0_s: f64,
    pub mode_bound: usize,
    pub detector_gamma_hz: f64,
    pub grid_step_s: f64,
    pub grid_half_span_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionSection {
    pub signal: DetectionChain,
    pub idler: DetectionChain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSection {
    pub duration_s: f64,
    pub seed: u64,
    pub bin_width_s: f64,
    pub delay_range_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MichelsonSection {
    pub linewidth_hz: f64,
    pub background_r: f64,
    pub center_hz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub crystal: CrystalSection,
    #[serde(default)]
    pub cavity: Option<CavitySection>,
    #[serde(default)]
    pub source: Option<SourceSection>,
    pub biphoton: BiphotonSection,
    #[serde(default)]
    pub detection: Option<DetectionSection>,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub michelson: Option<MichelsonSection>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn paper_preset() -> Result<Self, String> {
        Self::from_str(PAPER_PRESET)
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, String> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.crystal.length_m > 0.0) {
            return Err("crystal.length_m: must be > 0".into());
        }
        if !(self.crystal.poling_period_m > 0.0) {
            return Err("crystal.poling_period_m: must be > 0".into());
        }
        if let Some(path) = &self.crystal.sellmeier_file
            && !path.exists()
        {
            return Err(format!(
                "crystal.sellmeier_file: {} does not exist",
                path.display()
            ));
        }
        if let Some(cavity) = &self.cavity {
            for (name, arm) in [("signal", &cavity.signal), ("idler", &cavity.idler)] {
                if !(arm.fsr_hz > 0.0)
                    || !(arm.linewidth_hz > 0.0)
                    || arm.linewidth_hz >= arm.fsr_hz
                {
                    return Err(format!(
                        "cavity.{name}: needs 0 < linewidth_hz < fsr_hz, got {} and {}",
                        arm.linewidth_hz, arm.fsr_hz
                    ));
                }
            }
        }
        if let Some(source) = &self.source
            && (!(source.pair_rate_per_mw_hz >= 0.0) || !(source.pump_power_mw >= 0.0))
        {
            return Err("source: rates and powers must be ≥ 0".into());
        }
        if !(self.biphoton.grid_step_s > 0.0) || !(self.biphoton.grid_half_span_s > 0.0) {
            return Err("biphoton: grid_step_s and grid_half_span_s must be > 0".into());
        }
        if !(self.biphoton.detector_gamma_hz > 0.0) {
            return Err("biphoton.detector_gamma_hz: must be > 0".into());
        }
        if !(self.biphoton.tau0_s >= 0.0) {
            return Err("biphoton.tau0_s: must be ≥ 0".into());
        }
        if let Some(detection) = &self.detection {
            for (name, chain) in [("signal", &detection.signal), ("idler", &detection.idler)] {
                chain
                    .validate()
                    .map_err(|e| format!("detection.{name}: {e}"))?;
                if let JitterModel::Gaussian { sigma_s } = chain.jitter
                    && !(sigma_s >= 0.0)
                {
                    return Err(format!("detection.{name}.jitter.sigma_s: must be ≥ 0"));
                }
            }
        }
        if !(self.simulation.duration_s > 0.0)
            || !(self.simulation.bin_width_s > 0.0)
            || !(self.simulation.delay_range_s > 0.0)
        {
            return Err("simulation: duration_s, bin_width_s, delay_range_s must be > 0".into());
        }
        if let Some(michelson) = &self.michelson
            && (!(michelson.linewidth_hz > 0.0) || !(michelson.background_r >= 0.0))
        {
            return Err("michelson: linewidth_hz must be > 0 and background_r ≥ 0".into());
        }
        Ok(())
    }

    pub fn crystal_spec(&self) -> Result<CrystalSpec, String> {
        let (y, z) = match &self.crystal.sellmeier_file {
            Some(path) => {
                dispersion::load_sets(path).map_err(|e| format!("crystal.sellmeier_file: {e}"))?
            }
            None => dispersion::builtin_ktp(),
        };
        CrystalSpec::new(
            self.crystal.length_m,
            self.crystal.width_m,
            self.crystal.height_m,
            self.crystal.poling_period_m,
            self.crystal.temperature_c,
            y,
            z,
        )
        .map_err(|e| format!("crystal: {e}"))
    }

    pub fn cavity_section(&self) -> Result<&CavitySection, String> {
        self.cavity
            .as_ref()
            .ok_or_else(|| "cavity: section required by this command".to_string())
    }

    pub fn source_section(&self) -> Result<&SourceSection, String> {
        self.source
            .as_ref()
            .ok_or_else(|| "source: section required by this command".to_string())
    }

    pub fn detection_section(&self) -> Result<&DetectionSection, String> {
        self.detection
            .as_ref()
            .ok_or_else(|| "detection: section required by this command".to_string())
    }

    pub fn michelson_section(&self) -> Result<&MichelsonSection, String> {
        self.michelson
            .as_ref()
            .ok_or_else(|| "michelson: section required by this command".to_string())
    }

    pub fn biphoton_model(&self) -> Result<BiphotonModel, String> {
        let cavity = self.cavity_section()?;
        BiphotonModel::new(
            cavity.signal.linewidth_hz,
            cavity.idler.linewidth_hz,
            cavity.signal.fsr_hz,
            cavity.idler.fsr_hz,
            cavity.signal.center_hz,
            cavity.idler.center_hz,
            self.biphoton.tau0_s,
            self.biphoton.mode_bound,
        )
        .map_err(|e| format!("biphoton: {e}"))
    }
}
