//! Simulation and analysis toolkit for single-longitudinal-mode
//! cavity-enhanced SPDC photon-pair sources.
//!
//! The crate models a periodically poled KTP crystal whose coated end faces
//! form a monolithic Fabry-Pérot cavity, and provides the analysis chain used
//! to characterize such a source:
//!
//! * [`dispersion`] — axis-resolved Sellmeier refractive/group indices for KTP;
//! * [`cavity`] — per-polarization free spectral range, Lorentzian lineshape,
//!   mode combs and synthetic transmission scans;
//! * [`clustering`] — the doubly-resonant cluster calculus and the
//!   single-longitudinal-mode criterion;
//! * [`qpm`] — quasi-phase-matching mismatch, poling-period solver and the
//!   single-pass parametric gain envelope;
//! * [`biphoton`] — the closed-form two-photon time correlation, detector
//!   response and their convolution;
//! * [`counting`] — seeded time-tag simulation, coincidence histogramming and
//!   counting-statistics estimators (CAR, brightness, heralded efficiency);
//! * [`interference`] — Franson fringes, Michelson visibility decay and the
//!   thermally tuned unbalanced-interferometer phase model;
//! * [`fitting`] — a damped Gauss–Newton least-squares engine plus the
//!   model-specific fitters used to recover source parameters.

// Validation guards are written `!(x > 0.0)` so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod biphoton;
pub mod cavity;
pub mod clustering;
pub mod constants;
pub mod counting;
pub mod dispersion;
pub mod fitting;
pub mod interference;
pub mod io;
pub mod qpm;
