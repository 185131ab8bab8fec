//! Dynamic-decoupling toolkit for a single dephasing qubit.
//!
//! * [`sequences`]: UDD/CPMG timings and the polynomial-cancellation system.
//! * [`dephasing`]: filter functions, the spectral dephasing integral and
//!   coherence-time extraction.
//! * [`noise`]: noise spectra, Gaussian trajectory synthesis, Welch estimates.
//! * [`montecarlo`]: Bloch-sphere emulation of phase-scanned Ramsey fringes.
//! * [`spectroscopy`]: fitting a noise spectrum to coherence curves.

pub mod dephasing;
pub mod error;
pub mod montecarlo;
pub mod noise;
pub mod optim;
pub mod quadrature;
pub mod sequences;
pub mod spectroscopy;

pub use dephasing::{
    chi, coherence, coherence_time, filter_function, filter_function_finite, CoherenceModel,
};
pub use error::{Error, Result};
pub use montecarlo::{ContrastEstimate, FringeDataset, PulseParams};
pub use noise::{NoiseSpectrum, NoiseTrajectory};
pub use sequences::{DriftPolynomial, PulseSequence};
pub use spectroscopy::{CoherenceCurve, SpectrumFit};
