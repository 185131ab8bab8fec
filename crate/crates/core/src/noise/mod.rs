//! Noise spectra and Gaussian trajectory synthesis.
//!
//! Spectra follow one convention throughout the crate: `S(w)` is the
//! one-sided PSD of the frequency offset `delta(t)` with
//! `<delta(t) delta(t+u)> = (1/pi) int_0^inf S(w) cos(w u) dw`.

mod psd;
mod spectrum;
mod spline;
mod synth;

pub use psd::{estimate_psd, estimate_psd_with, integrated_mass, MIN_PSD_SAMPLES};
pub use spectrum::{NoiseSpectrum, WeightedSpectrum};
pub use spline::LogLogSpline;
pub use synth::{synthesize_trajectory, NoiseTrajectory, SynthesisOptions, TrajectorySynthesizer};

/// `S(omega)`; see [`NoiseSpectrum::eval`].
pub fn spectrum_eval(spectrum: &NoiseSpectrum, omega: f64) -> f64 {
    spectrum.eval(omega)
}
