use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::spectrum::NoiseSpectrum;
use super::synth::NoiseTrajectory;
use crate::error::{Error, Result};

pub const MIN_PSD_SAMPLES: usize = 1024;
const TARGET_SEGMENTS: usize = 32;

/// Welch estimate with Hann windows, 50% overlap and a segment length
/// chosen so that at least 32 segments are averaged.
pub fn estimate_psd(trajectory: &NoiseTrajectory) -> Result<NoiseSpectrum> {
    let n = trajectory.len();
    if n < MIN_PSD_SAMPLES {
        return Err(Error::invalid(format!(
            "PSD estimation needs at least {MIN_PSD_SAMPLES} samples, got {n}"
        )));
    }
    // 2n/L - 1 >= TARGET_SEGMENTS
    let max_len = 2 * n / (TARGET_SEGMENTS + 1);
    let seg = if max_len.is_power_of_two() {
        max_len
    } else {
        max_len.next_power_of_two() / 2
    };
    estimate_psd_with(trajectory, seg.max(16))
}

/// Welch estimate with an explicit segment length. The result follows the
/// crate's one-sided convention: `(1/pi) int S dw` equals the variance.
pub fn estimate_psd_with(
    trajectory: &NoiseTrajectory,
    segment_len: usize,
) -> Result<NoiseSpectrum> {
    let n = trajectory.len();
    if segment_len < 16 || segment_len > n {
        return Err(Error::invalid(format!(
            "segment length {segment_len} must lie in [16, {n}]"
        )));
    }
    let window: Vec<f64> = (0..segment_len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / segment_len as f64).cos())
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fs = 1.0 / trajectory.dt;

    let fft = FftPlanner::new().plan_fft_forward(segment_len);
    let hop = segment_len / 2;
    let bins = segment_len / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut segments = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_len];
    let mut start = 0;
    while start + segment_len <= n {
        for (b, (x, w)) in buf.iter_mut().zip(
            trajectory.samples[start..start + segment_len]
                .iter()
                .zip(&window),
        ) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, z) in acc.iter_mut().zip(&buf) {
            *a += z.norm_sqr();
        }
        segments += 1;
        start += hop;
    }

    let scale = 1.0 / (fs * window_power * segments as f64);
    let omega: Vec<f64> = (0..bins)
        .map(|k| 2.0 * PI * k as f64 * fs / segment_len as f64)
        .collect();
    let s: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let edge = k == 0 || k == bins - 1;
            p * scale * if edge { 0.5 } else { 1.0 }
        })
        .collect();
    Ok(NoiseSpectrum::Tabulated { omega, s })
}

/// `(1/pi) sum S_k dw` over the bins of a tabulated estimate.
pub fn integrated_mass(spectrum: &NoiseSpectrum) -> f64 {
    match spectrum {
        NoiseSpectrum::Tabulated { omega, s } => {
            let dw = omega[1] - omega[0];
            s.iter().sum::<f64>() * dw / PI
        }
        other => other.variance(),
    }
}
