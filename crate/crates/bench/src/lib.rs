//! Shared fixtures for the benchmarks in `benches/`.

use std::f64::consts::PI;

use decouple_core::{NoiseSpectrum, PulseSequence};

/// `w^-4` noise between 10 Hz and 100 kHz, scaled so Ramsey reaches
/// `chi = 1` near 1 ms.
pub fn power_law_spectrum() -> NoiseSpectrum {
    NoiseSpectrum::power_law(3.0e13, 4.0, 2.0 * PI * 10.0, 2.0 * PI * 1e5).expect("valid power law")
}

pub fn white_spectrum() -> NoiseSpectrum {
    NoiseSpectrum::White {
        s0: 2000.0,
        omega_max: Some(2.0 * PI * 1e5),
    }
}

pub fn udd(n: usize, tau: f64) -> PulseSequence {
    PulseSequence::udd(n, tau, 0.0).expect("valid sequence")
}

pub fn cpmg(n: usize, tau: f64) -> PulseSequence {
    PulseSequence::cpmg(n, tau, 0.0).expect("valid sequence")
}
