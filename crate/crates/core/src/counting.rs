//! Stochastic photon-counting simulator and counting statistics: seeded
//! time-tag generation for the signal/idler detectors, coincidence
//! histogramming, and the CAR, brightness and heralded-efficiency estimators.
//!
//! Determinism contract: streams and histograms depend only on the
//! configuration and the seed. Generation walks fixed-length time slabs, each
//! with its own counter-derived generator, so slabs are independent and the
//! result does not depend on how they would be scheduled.

use crate::biphoton::{BiphotonError, BiphotonModel, G2Curve, TimeGrid, g2_curve};
use crate::io;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CountingError {
    #[error("detection-chain efficiencies must lie in (0, 1], got {name} = {value}")]
    BadEfficiency { name: &'static str, value: f64 },
    #[error("{name} must be {requirement}, got {value}")]
    BadParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("time-tag streams must be sorted by time")]
    UnsortedStream,
    #[error("accidental count must be ≥ 0, got {0}")]
    NegativeAccidentals(f64),
    #[error("coincidence count must be ≥ 0, got {0}")]
    NegativeCoincidences(f64),
    #[error("heralding singles must be > 0")]
    ZeroSingles,
    #[error(transparent)]
    Biphoton(#[from] BiphotonError),
}

/// Detector timing-jitter model. The default mirrors the one-sided
/// exponential detector response used by the analytic correlation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum JitterModel {
    None,
    Gaussian { sigma_s: f64 },
    DetectorShaped { gamma_hz: f64 },
}

impl JitterModel {
    fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        match self {
            JitterModel::None => 0.0,
            JitterModel::Gaussian { sigma_s } => Normal::new(0.0, *sigma_s)
                .expect("finite sigma")
                .sample(rng),
            // density ∝ e^{γt/2} for t ≤ 0: a negated exponential draw
            JitterModel::DetectorShaped { gamma_hz } => {
                let u: f64 = rng.random();
                (2.0 / gamma_hz) * (1.0 - u).max(f64::MIN_POSITIVE).ln()
            }
        }
    }
}

/// One detection arm: collection, filtering, detector efficiency, duty
/// cycle, dark counts and timing jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionChain {
    pub fiber_efficiency: f64,
    pub filter_transmittance: f64,
    pub detector_efficiency: f64,
    /// 1.0 for a free-running detector.
    pub duty_cycle: f64,
    pub dark_rate_hz: f64,
    pub jitter: JitterModel,
}

impl DetectionChain {
    pub fn validate(&self) -> Result<(), CountingError> {
        for (name, value) in [
            ("fiber_efficiency", self.fiber_efficiency),
            ("filter_transmittance", self.filter_transmittance),
            ("detector_efficiency", self.detector_efficiency),
            ("duty_cycle", self.duty_cycle),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(CountingError::BadEfficiency { name, value });
            }
        }
        if !(self.dark_rate_hz >= 0.0) {
            return Err(CountingError::BadParameter {
                name: "dark_rate_hz",
                requirement: "≥ 0",
                value: self.dark_rate_hz,
            });
        }
        Ok(())
    }

    /// Probability that a photon entering this arm is detected.
    pub fn survival(&self) -> f64 {
        self.fiber_efficiency
            * self.filter_transmittance
            * self.detector_efficiency
            * self.duty_cycle
    }
}

/// Pair source: emission rate coefficient, pump power, and the correlation
/// model the signal–idler delay is drawn from.
#[derive(Debug, Clone)]
pub struct SourceModel {
    /// Pair rate coefficient b (pairs/s/mW).
    pub pair_rate_per_mw_hz: f64,
    /// Pump power P (mW).
    pub pump_power_mw: f64,
    pub correlation: BiphotonModel,
    /// Grid the delay-sampling density is tabulated on.
    pub grid: TimeGrid,
}

impl SourceModel {
    pub fn pair_rate_hz(&self) -> f64 {
        self.pair_rate_per_mw_hz * self.pump_power_mw
    }

    pub fn validate(&self) -> Result<(), CountingError> {
        for (name, value) in [
            ("pair_rate_per_mw_hz", self.pair_rate_per_mw_hz),
            ("pump_power_mw", self.pump_power_mw),
        ] {
            if !(value >= 0.0) {
                return Err(CountingError::BadParameter {
                    name,
                    requirement: "≥ 0",
                    value,
                });
            }
        }
        self.correlation.validate()?;
        Ok(())
    }
}

/// Detector click record: channel label plus sorted timestamps in
/// picoseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    pub channel: u16,
    pub tags_ps: Vec<u64>,
}

impl TimeTagStream {
    pub fn is_sorted(&self) -> bool {
        self.tags_ps.windows(2).all(|w| w[0] <= w[1])
    }

    /// CSV with header `time_ps`, one tag per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_ps\n");
        for t in &self.tags_ps {
            out.push_str(&format!("{t}\n"));
        }
        out
    }

    pub fn write_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        io::write_timetags(w, self.channel, &self.tags_ps)
    }

    pub fn read_binary(r: &mut impl Read) -> std::io::Result<Self> {
        let (channel, tags_ps) = io::read_timetags(r)?;
        Ok(Self { channel, tags_ps })
    }
}

/// Inverse-CDF sampler over the piecewise-linear density defined by curve
/// samples: segment masses are trapezoids, within-segment draws invert the
/// linear density exactly.
struct DelaySampler {
    times: Vec<f64>,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DelaySampler {
    fn new(curve: &G2Curve) -> Self {
        let n = curve.values.len();
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 1..n {
            acc += (curve.values[i - 1] + curve.values[i]) / 2.0;
            cumulative.push(acc);
        }
        Self {
            times: curve.times_s.clone(),
            values: curve.values.clone(),
            cumulative,
        }
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        let total = *self.cumulative.last().unwrap();
        let target = rng.random::<f64>() * total;
        let seg = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&target).unwrap())
        {
            Ok(i) => i.min(self.times.len() - 2),
            Err(i) => (i - 1).min(self.times.len() - 2),
        };
        let mass = self.cumulative[seg + 1] - self.cumulative[seg];
        let u = if mass > 0.0 {
            (target - self.cumulative[seg]) / mass
        } else {
            0.5
        };
        let v0 = self.values[seg];
        let dv = self.values[seg + 1] - v0;
        let m = v0 + dv / 2.0;
        let x = if dv.abs() < 1e-12 * m.abs().max(f64::MIN_POSITIVE) {
            u
        } else {
            let disc = (v0 * v0 + 2.0 * dv * u * m).max(0.0);
            (disc.sqrt() - v0) / dv
        };
        let step = self.times[seg + 1] - self.times[seg];
        self.times[seg] + x.clamp(0.0, 1.0) * step
    }
}

const SLAB_SECONDS: f64 = 64.0;
const SLAB_PS: u64 = 64_000_000_000_000;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn slab_rng(master_seed: u64, purpose: u64, slab: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(splitmix64(splitmix64(master_seed ^ purpose) ^ slab))
}

fn push_tag(stream: &mut Vec<u64>, slab_offset_ps: u64, rel_s: f64, duration_ps: u64) {
    let rel_ps = (rel_s * 1e12).round() as i64;
    let abs = slab_offset_ps as i64 + rel_ps;
    if abs >= 0 && (abs as u64) < duration_ps {
        stream.push(abs as u64);
    }
}

/// Simulates detector click streams for both arms over `duration_s`.
///
/// Pairs arrive as a Poisson process at rate b·P; each photon independently
/// survives its chain with probability α·t·η·d; the idler is delayed by a
/// draw from the normalized correlation curve; surviving tags are jittered
/// per chain; dark counts are independent Poisson processes. Streams come
/// back time-sorted. Bit-identical for identical configuration and seed.
pub fn simulate_timetags(
    source: &SourceModel,
    chain_signal: &DetectionChain,
    chain_idler: &DetectionChain,
    duration_s: f64,
    seed: u64,
) -> Result<(TimeTagStream, TimeTagStream), CountingError> {
    if !(duration_s > 0.0) {
        return Err(CountingError::BadParameter {
            name: "duration_s",
            requirement: "> 0",
            value: duration_s,
        });
    }
    source.validate()?;
    chain_signal.validate()?;
    chain_idler.validate()?;

    let curve = g2_curve(&source.correlation, &source.grid)?;
    let sampler = DelaySampler::new(&curve);
    let duration_ps = (duration_s * 1e12).round() as u64;
    let slabs = (duration_s / SLAB_SECONDS).ceil().max(1.0) as u64;
    let q_signal = chain_signal.survival();
    let q_idler = chain_idler.survival();
    let pair_rate = source.pair_rate_hz();

    let mut signal = Vec::new();
    let mut idler = Vec::new();

    for slab in 0..slabs {
        let slab_offset_ps = slab * SLAB_PS;
        let slab_len = SLAB_SECONDS.min(duration_s - slab as f64 * SLAB_SECONDS);
        if pair_rate > 0.0 {
            let mut rng = slab_rng(seed, 1, slab);
            let mut t = 0.0f64;
            loop {
                let u: f64 = rng.random();
                t += -(1.0 - u).max(f64::MIN_POSITIVE).ln() / pair_rate;
                if t >= slab_len {
                    break;
                }
                let delay = sampler.sample(&mut rng);
                let survive_s = rng.random::<f64>() < q_signal;
                let survive_i = rng.random::<f64>() < q_idler;
                if survive_s {
                    let j = chain_signal.jitter.sample(&mut rng);
                    push_tag(&mut signal, slab_offset_ps, t + j, duration_ps);
                }
                if survive_i {
                    let j = chain_idler.jitter.sample(&mut rng);
                    push_tag(&mut idler, slab_offset_ps, t + delay + j, duration_ps);
                }
            }
        }
        for (purpose, rate, stream) in [
            (2u64, chain_signal.dark_rate_hz, &mut signal),
            (3u64, chain_idler.dark_rate_hz, &mut idler),
        ] {
            if rate > 0.0 {
                let mut rng = slab_rng(seed, purpose, slab);
                let mut t = 0.0f64;
                loop {
                    let u: f64 = rng.random();
                    t += -(1.0 - u).max(f64::MIN_POSITIVE).ln() / rate;
                    if t >= slab_len {
                        break;
                    }
                    push_tag(stream, slab_offset_ps, t, duration_ps);
                }
            }
        }
    }

    signal.sort_unstable();
    idler.sort_unstable();
    Ok((
        TimeTagStream {
            channel: 0,
            tags_ps: signal,
        },
        TimeTagStream {
            channel: 1,
            tags_ps: idler,
        },
    ))
}

/// Binned cross-correlation of two tag streams.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub bin_width_s: f64,
    /// Delays are histogrammed over `[-half_range, half_range)`.
    pub half_range_s: f64,
    pub counts: Vec<u64>,
    pub acquisition_s: f64,
}

impl CoincidenceHistogram {
    pub fn bin_width_ps(&self) -> i64 {
        (self.bin_width_s * 1e12).round() as i64
    }

    pub fn bin_center_s(&self, index: usize) -> f64 {
        -self.half_range_s + (index as f64 + 0.5) * self.bin_width_s
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CSV with header `delay_ps,counts`; delays are bin centers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delay_ps,counts\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{c}\n", self.bin_center_s(i) * 1e12));
        }
        out
    }
}

/// Histograms the delays `idler − signal` of every tag pair inside
/// `[-half_range, half_range)` — all pairs, not nearest neighbours, which is
/// what a hardware correlator records. Two-pointer sweep, O(N + M + matches).
pub fn histogram_coincidences(
    signal: &TimeTagStream,
    idler: &TimeTagStream,
    bin_width_s: f64,
    half_range_s: f64,
    acquisition_s: f64,
) -> Result<CoincidenceHistogram, CountingError> {
    if !signal.is_sorted() || !idler.is_sorted() {
        return Err(CountingError::UnsortedStream);
    }
    let bin_ps = (bin_width_s * 1e12).round() as i64;
    if bin_ps < 1 {
        return Err(CountingError::BadParameter {
            name: "bin_width_s",
            requirement: "≥ 1 ps",
            value: bin_width_s,
        });
    }
    let half_ps = (half_range_s * 1e12).round() as i64;
    let nbins = (2 * half_ps / bin_ps).max(1) as usize;
    let hi_ps = -half_ps + nbins as i64 * bin_ps;
    let mut counts = vec![0u64; nbins];

    let mut start = 0usize;
    for &s in &signal.tags_ps {
        let s = s as i64;
        // idler window [s - half, s + hi)
        while start < idler.tags_ps.len() && (idler.tags_ps[start] as i64) < s - half_ps {
            start += 1;
        }
        for &i in &idler.tags_ps[start..] {
            let d = i as i64 - s;
            if d >= hi_ps {
                break;
            }
            counts[((d + half_ps) / bin_ps) as usize] += 1;
        }
    }
    Ok(CoincidenceHistogram {
        bin_width_s,
        half_range_s,
        counts,
        acquisition_s,
    })
}

/// Coincidence-to-accidental ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CarEstimate {
    Exact(f64),
    /// No accidentals observed: the CAR is at least this value.
    LowerBound(f64),
}

impl CarEstimate {
    pub fn value(&self) -> f64 {
        match self {
            CarEstimate::Exact(v) | CarEstimate::LowerBound(v) => *v,
        }
    }
}

/// `CAR = (R_c + R_ac)/R_ac`; a zero accidental count yields the
/// lower-bound variant `≥ R_c + 1`.
pub fn car(coincidences: f64, accidentals: f64) -> Result<CarEstimate, CountingError> {
    if coincidences < 0.0 {
        return Err(CountingError::NegativeCoincidences(coincidences));
    }
    if accidentals < 0.0 {
        return Err(CountingError::NegativeAccidentals(accidentals));
    }
    if accidentals == 0.0 {
        return Ok(CarEstimate::LowerBound(coincidences + 1.0));
    }
    Ok(CarEstimate::Exact(
        (coincidences + accidentals) / accidentals,
    ))
}

/// CAR measured from a histogram: the accidental level is the mean bin
/// content far from the peak (|τ| > 10·T_FWHM), the net coincidence count is
/// the peak-window total (|τ| ≤ 5·T_FWHM) minus the expected accidentals.
pub fn car_from_histogram(
    hist: &CoincidenceHistogram,
    t_fwhm_s: f64,
) -> Result<(f64, f64, CarEstimate), CountingError> {
    let mut peak_total = 0u64;
    let mut peak_bins = 0usize;
    let mut far_total = 0u64;
    let mut far_bins = 0usize;
    for (i, &c) in hist.counts.iter().enumerate() {
        let t = hist.bin_center_s(i).abs();
        if t <= 5.0 * t_fwhm_s {
            peak_total += c;
            peak_bins += 1;
        } else if t > 10.0 * t_fwhm_s {
            far_total += c;
            far_bins += 1;
        }
    }
    let accidental = if far_bins > 0 {
        far_total as f64 / far_bins as f64 * peak_bins as f64
    } else {
        0.0
    };
    let net = (peak_total as f64 - accidental).max(0.0);
    Ok((net, accidental, car(net, accidental)?))
}

/// Estimated spectral brightness in pairs/(s·mW·MHz):
/// `R_detected / (d·α₁α₂·t₁t₂·η²)` divided by pump power and linewidth in
/// MHz. Per-arm duty cycles generalize the single duty factor d.
pub fn estimate_brightness(
    detected_pairs_hz: f64,
    chain_signal: &DetectionChain,
    chain_idler: &DetectionChain,
    linewidth_hz: f64,
    pump_mw: f64,
) -> Result<f64, CountingError> {
    chain_signal.validate()?;
    chain_idler.validate()?;
    for (name, value) in [("linewidth_hz", linewidth_hz), ("pump_mw", pump_mw)] {
        if !(value > 0.0) {
            return Err(CountingError::BadParameter {
                name,
                requirement: "> 0",
                value,
            });
        }
    }
    let denom = chain_signal.duty_cycle
        * chain_idler.duty_cycle
        * chain_signal.fiber_efficiency
        * chain_idler.fiber_efficiency
        * chain_signal.filter_transmittance
        * chain_idler.filter_transmittance
        * chain_signal.detector_efficiency
        * chain_idler.detector_efficiency;
    let produced = detected_pairs_hz / denom;
    Ok(produced / pump_mw / (linewidth_hz / 1e6))
}

/// Heralded efficiency: coincidences over heralding singles.
pub fn heralded_efficiency(
    coincidences: f64,
    heralding_singles: f64,
) -> Result<f64, CountingError> {
    if !(heralding_singles > 0.0) {
        return Err(CountingError::ZeroSingles);
    }
    if coincidences < 0.0 {
        return Err(CountingError::NegativeCoincidences(coincidences));
    }
    Ok(coincidences / heralding_singles)
}

/// Noise-free expectations of the counting experiment, for linearity and
/// trend checks without sampling error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountsExpectation {
    pub singles_signal_hz: f64,
    pub singles_idler_hz: f64,
    pub coincidences_hz: f64,
    pub accidentals_hz: f64,
}

/// Expected rates for a source/chain configuration with a coincidence window
/// of `window_s`: singles are pair rate × survival + darks, true coincidences
/// are pair rate × both survivals, accidentals are singles_s·singles_i·window.
pub fn expected_counts(
    source: &SourceModel,
    chain_signal: &DetectionChain,
    chain_idler: &DetectionChain,
    window_s: f64,
) -> Result<CountsExpectation, CountingError> {
    source.validate()?;
    chain_signal.validate()?;
    chain_idler.validate()?;
    let rate = source.pair_rate_hz();
    let singles_signal_hz = rate * chain_signal.survival() + chain_signal.dark_rate_hz;
    let singles_idler_hz = rate * chain_idler.survival() + chain_idler.dark_rate_hz;
    Ok(CountsExpectation {
        singles_signal_hz,
        singles_idler_hz,
        coincidences_hz: rate * chain_signal.survival() * chain_idler.survival(),
        accidentals_hz: singles_signal_hz * singles_idler_hz * window_s,
    })
}
