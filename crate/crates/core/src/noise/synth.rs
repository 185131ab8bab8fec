use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use super::spectrum::NoiseSpectrum;
use crate::error::{Error, Result};

/// Sampled frequency-offset record. Sample `j` holds `delta` (rad/s) over
/// `[j dt, (j + 1) dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrajectory {
    pub dt: f64,
    pub samples: Vec<f64>,
    pub seed: u64,
}

impl NoiseTrajectory {
    pub fn new(dt: f64, samples: Vec<f64>, seed: u64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("trajectory dt must be positive"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trajectory samples must be finite"));
        }
        Ok(NoiseTrajectory { dt, samples, seed })
    }

    /// Constant offset held for `duration`.
    pub fn constant(delta: f64, dt: f64, duration: f64) -> Result<Self> {
        let n = sample_count(duration, dt);
        Self::new(dt, vec![delta; n], 0)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Running phase `int_0^{j dt} delta`, one entry per sample boundary.
    pub fn cumulative_phase(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.samples.len() + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for v in &self.samples {
            acc += v * self.dt;
            out.push(acc);
        }
        out
    }

    /// CSV with columns `t_s, delta_rad_per_s`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_s", "delta_rad_per_s"])?;
        for (j, v) in self.samples.iter().enumerate() {
            w.write_record([(j as f64 * self.dt).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn sample_count(duration: f64, dt: f64) -> usize {
    ((duration / dt) - 1e-9).ceil().max(1.0) as usize
}

/// Tunables for [`TrajectorySynthesizer`].
#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    /// Length of the periodic synthesis window relative to the requested duration.
    pub extension_factor: f64,
    /// Log-spaced components carrying spectral mass below the first grid harmonic.
    pub low_band_components: usize,
    /// RMS above which a warning is logged, rad/s.
    pub rms_warning: f64,
    /// Drop spectral content above the Nyquist frequency instead of failing.
    pub truncate_above_nyquist: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            extension_factor: 4.0,
            low_band_components: 24,
            rms_warning: 2.0 * PI * 1e4,
            truncate_above_nyquist: false,
        }
    }
}

const MIN_HARMONICS: usize = 16;

/// Gaussian stationary noise by harmonic superposition.
///
/// Harmonics sit on a linear grid `k dw`, `dw = 2 pi / T_ext`, up to the
/// Nyquist frequency. Each carries independent Gaussian cosine and sine
/// quadratures whose variance is the spectral mass `(1/pi) int S dw` of its
/// frequency bin, so every realization is exactly Gaussian. Mass below half
/// the grid spacing, invisible to the grid, is carried by a few extra
/// log-spaced components summed directly in the time domain.
///
/// Construction does the spectral work once; [`generate`](Self::generate)
/// is cheap and deterministic per seed.
pub struct TrajectorySynthesizer {
    dt: f64,
    n_samples: usize,
    grid_std: Vec<f64>,
    low: Vec<(f64, f64)>,
    fft: Arc<dyn Fft<f64>>,
    fft_len: usize,
    rms_warning: f64,
}

impl std::fmt::Debug for TrajectorySynthesizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrajectorySynthesizer")
            .field("dt", &self.dt)
            .field("n_samples", &self.n_samples)
            .field("fft_len", &self.fft_len)
            .field("low_components", &self.low.len())
            .finish()
    }
}

impl TrajectorySynthesizer {
    pub fn new(spectrum: &NoiseSpectrum, dt: f64, duration: f64) -> Result<Self> {
        Self::with_options(spectrum, dt, duration, &SynthesisOptions::default())
    }

    pub fn with_options(
        spectrum: &NoiseSpectrum,
        dt: f64,
        duration: f64,
        opts: &SynthesisOptions,
    ) -> Result<Self> {
        spectrum.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if !(duration >= dt) {
            return Err(Error::invalid(format!(
                "duration {duration} s is shorter than dt {dt} s"
            )));
        }
        let nyquist = PI / dt;
        let (lo, hi) = spectrum.support();
        if !opts.truncate_above_nyquist
            && hi.is_finite()
            && hi > nyquist * (1.0 + 1e-9)
            && spectrum.band_variance(nyquist, hi) > 0.0
        {
            return Err(Error::invalid(format!(
                "dt = {dt} s does not resolve spectral content up to {hi} rad/s (Nyquist {nyquist} rad/s)"
            )));
        }

        let n_samples = sample_count(duration, dt);
        let fft_len = ((opts.extension_factor * n_samples as f64).ceil() as usize)
            .max(2)
            .next_power_of_two();
        let harmonics = fft_len / 2 - 1;
        if harmonics < MIN_HARMONICS {
            return Err(Error::invalid(format!(
                "synthesis grid has {harmonics} harmonics; at least {MIN_HARMONICS} are required"
            )));
        }
        let dw = 2.0 * PI / (fft_len as f64 * dt);

        let mut grid_std = vec![0.0; harmonics + 1];
        for (k, std) in grid_std.iter_mut().enumerate().skip(1) {
            let a = (k as f64 - 0.5) * dw;
            let b = (k as f64 + 0.5) * dw;
            if b < lo || a > hi {
                continue;
            }
            *std = spectrum.band_variance(a, b).sqrt();
        }

        let mut low = Vec::new();
        let edge = 0.5 * dw;
        if lo < edge && opts.low_band_components > 0 {
            let count = opts.low_band_components;
            let floor = if lo > 0.0 { lo } else { edge * 1e-4 };
            let ratio = (edge / floor).powf(1.0 / count as f64);
            let mut a = floor;
            for c in 0..count {
                let b = if c + 1 == count { edge } else { a * ratio };
                // the first component also absorbs everything below the floor
                let mass = spectrum.band_variance(if c == 0 { 0.0 } else { a }, b);
                if mass > 0.0 {
                    low.push(((a * b).sqrt(), mass.sqrt()));
                }
                a = b;
            }
        }

        let fft = FftPlanner::new().plan_fft_inverse(fft_len);
        Ok(TrajectorySynthesizer {
            dt,
            n_samples,
            grid_std,
            low,
            fft,
            fft_len,
            rms_warning: opts.rms_warning,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn generate(&self, seed: u64) -> NoiseTrajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = vec![0.0; self.n_samples];

        if self.grid_std.iter().any(|&s| s > 0.0) {
            FFT_BUFFERS.with(|cell| {
                let (buf, scratch) = &mut *cell.borrow_mut();
                buf.clear();
                buf.resize(self.fft_len, Complex64::new(0.0, 0.0));
                for (k, &std) in self.grid_std.iter().enumerate().skip(1) {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    let h: f64 = StandardNormal.sample(&mut rng);
                    buf[k] = Complex64::new(std * g, -std * h);
                }
                scratch.resize(self.fft.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
                self.fft.process_with_scratch(buf, scratch);
                for (s, z) in samples.iter_mut().zip(buf.iter()) {
                    *s = z.re;
                }
            });
        }

        for &(omega, std) in &self.low {
            let g: f64 = StandardNormal.sample(&mut rng);
            let h: f64 = StandardNormal.sample(&mut rng);
            let amp = Complex64::new(std * g, -std * h);
            let step = Complex64::from_polar(1.0, omega * self.dt);
            let mut phasor = Complex64::new(1.0, 0.0);
            for (j, s) in samples.iter_mut().enumerate() {
                if j % 4096 == 0 {
                    // re-anchor the rotation to bound drift on long records
                    phasor = Complex64::from_polar(1.0, omega * self.dt * j as f64);
                }
                *s += (amp * phasor).re;
                phasor *= step;
            }
        }

        let traj = NoiseTrajectory {
            dt: self.dt,
            samples,
            seed,
        };
        let rms = traj.rms();
        if rms > self.rms_warning {
            log::warn!(
                "synthesized trajectory rms {:.3e} rad/s exceeds the {:.3e} rad/s sanity bound",
                rms,
                self.rms_warning
            );
        }
        traj
    }
}

thread_local! {
    // FFT buffer and scratch reused across draws on the same thread
    static FFT_BUFFERS: RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// One-off synthesis; build a [`TrajectorySynthesizer`] to draw many.
pub fn synthesize_trajectory(
    spectrum: &NoiseSpectrum,
    dt: f64,
    duration: f64,
    seed: u64,
) -> Result<NoiseTrajectory> {
    Ok(TrajectorySynthesizer::new(spectrum, dt, duration)?.generate(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spectrum_gives_zero_samples() {
        let t = synthesize_trajectory(&NoiseSpectrum::zero(), 1e-4, 0.1, 7).unwrap();
        assert!(t.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let s = NoiseSpectrum::lorentzian(1e4, 300.0).unwrap();
        let a = synthesize_trajectory(&s, 1e-4, 0.05, 11).unwrap();
        let b = synthesize_trajectory(&s, 1e-4, 0.05, 11).unwrap();
        let c = synthesize_trajectory(&s, 1e-4, 0.05, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn rejects_under_resolved_inputs() {
        let s = NoiseSpectrum::power_law(1.0, 2.0, 10.0, 1e5).unwrap();
        assert!(synthesize_trajectory(&s, 1e-3, 1.0, 0).is_err());
        let w = NoiseSpectrum::White {
            s0: 1.0,
            omega_max: Some(100.0),
        };
        // too few harmonics
        assert!(synthesize_trajectory(&w, 1e-2, 0.02, 0).is_err());
        assert!(synthesize_trajectory(&w, 0.0, 1.0, 0).is_err());
        assert!(synthesize_trajectory(&w, 1e-2, 1e-3, 0).is_err());
    }

    #[test]
    fn cumulative_phase_of_constant() {
        let t = NoiseTrajectory::constant(2.0, 0.5, 3.0).unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(*t.cumulative_phase().last().unwrap(), 6.0);
    }

    #[test]
    fn csv_header() {
        let t = NoiseTrajectory::constant(1.5, 0.25, 0.5).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t_s,delta_rad_per_s\n0,1.5\n0.25,1.5\n");
    }
}
