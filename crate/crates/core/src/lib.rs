//! Photophysics toolkit for three-level single-photon emitters.
//!
//! The crate covers the full characterization loop on synthetic or measured
//! data:
//!
//! * [`kinetics`]: closed-form solutions of the ground/excited/metastable rate
//!   equations, the bi-exponential g²(τ) parameters they imply, and
//!   zero-power extrapolation of power series.
//! * [`simulate`]: kinetic Monte Carlo photon streams (CW or pulsed), a
//!   detector model and a 50/50 HBT beamsplitter.
//! * [`correlate`]: g²(τ) coincidence histograms and pulsed decay histograms.
//! * [`fitters`]: a damped least-squares engine and the model library
//!   (g², lifetime, saturation, polarization, linewidth).
//! * [`spectra`]: multi-peak spectral decomposition, Debye-Waller factor and
//!   polarization-state classification.
//! * [`io`] and [`pipeline`]: PTAG time-tag files, CSV/JSON reports and the
//!   command orchestration used by the `spekit` binary.
//!
//! Units are fixed throughout: rates in 1/ns, times in ns (timestamps in
//! integer ps), optical power in mW, count rates in cps, wavelengths in nm.

pub mod correlate;
pub mod error;
pub mod fitters;
pub mod io;
pub mod kinetics;
pub mod pipeline;
pub mod rng;
pub mod simulate;
pub mod spectra;

pub use error::{Error, Result};
