//! Shot-by-shot emulation of a phase-scanned Ramsey experiment with a
//! decoupling sequence in the gap.
//!
//! Timeline of one shot (time origin at the start of the first π/2 pulse):
//!
//! ```text
//! [π/2 about x] [free evolution of length tau, π-pulses centred at h + alpha_i tau] [π/2 about phi]
//! 0             h                                                                 h + tau       2h + tau
//! ```
//!
//! `h` is the π/2 duration (zero for instantaneous pulses). The Bloch vector
//! starts at `(0, 0, -1)`; the returned probability is `(1 + z) / 2`, so two
//! in-phase π/2 pulses give 1.
//!
//! Every source of randomness derives from an explicit master seed through
//! [`derive_seed`], so results do not depend on thread count.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dephasing::min_feasible_tau;
use crate::error::{Error, Result};
use crate::noise::{NoiseSpectrum, NoiseTrajectory, SynthesisOptions, TrajectorySynthesizer};
use crate::sequences::PulseSequence;
use crate::spectroscopy::{CoherenceCurve, CurveSource};

/// Axis of the π-pulses relative to the first π/2 pulse (about x).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiPulseAxis {
    /// Same axis as the π/2 pulses (CP).
    FixedX,
    /// 90° shifted (CPMG phase convention).
    QuadratureY,
}

impl PiPulseAxis {
    fn offset(self) -> f64 {
        match self {
            PiPulseAxis::FixedX => 0.0,
            PiPulseAxis::QuadratureY => FRAC_PI_2,
        }
    }
}

/// Drive and readout parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    /// Rabi frequency, rad/s.
    pub rabi_frequency: f64,
    pub pi_pulse_phase_mode: PiPulseAxis,
    /// Symmetric bit-flip probability at readout.
    pub readout_error: f64,
    /// Treat every pulse as an instantaneous ideal rotation.
    pub instantaneous: bool,
}

impl Default for PulseParams {
    /// 2π × 18 kHz Rabi frequency, CPMG phases, 0.2% readout error.
    fn default() -> Self {
        PulseParams {
            rabi_frequency: 2.0 * PI * 18e3,
            pi_pulse_phase_mode: PiPulseAxis::QuadratureY,
            readout_error: 0.002,
            instantaneous: false,
        }
    }
}

impl PulseParams {
    /// Instantaneous ideal pulses with perfect readout.
    pub fn ideal() -> Self {
        PulseParams {
            instantaneous: true,
            readout_error: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.instantaneous && !(self.rabi_frequency > 0.0 && self.rabi_frequency.is_finite()) {
            return Err(Error::invalid(
                "Rabi frequency must be positive for finite pulses",
            ));
        }
        if !(0.0..0.5).contains(&self.readout_error) {
            return Err(Error::invalid(format!(
                "readout error must lie in [0, 0.5), got {}",
                self.readout_error
            )));
        }
        Ok(())
    }

    pub fn pi_duration(&self) -> f64 {
        if self.instantaneous {
            0.0
        } else {
            PI / self.rabi_frequency
        }
    }

    pub fn half_pi_duration(&self) -> f64 {
        0.5 * self.pi_duration()
    }

    /// Trajectory length needed for one shot of `sequence`.
    pub fn shot_duration(&self, tau: f64) -> f64 {
        tau + 2.0 * self.half_pi_duration()
    }
}

/// `p (1 - eps) + (1 - p) eps`.
pub fn apply_readout_error(p: f64, readout_error: f64) -> f64 {
    p * (1.0 - readout_error) + (1.0 - p) * readout_error
}

type Vec3 = [f64; 3];

/// Rotation of `r` by `angle` about the unit vector `k` (right-handed).
fn rotate(r: Vec3, k: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    let kxr = [
        k[1] * r[2] - k[2] * r[1],
        k[2] * r[0] - k[0] * r[2],
        k[0] * r[1] - k[1] * r[0],
    ];
    let kdr = k[0] * r[0] + k[1] * r[1] + k[2] * r[2];
    [
        r[0] * c + kxr[0] * s + k[0] * kdr * (1.0 - c),
        r[1] * c + kxr[1] * s + k[1] * kdr * (1.0 - c),
        r[2] * c + kxr[2] * s + k[2] * kdr * (1.0 - c),
    ]
}

fn rotate_z(r: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    [r[0] * c - r[1] * s, r[0] * s + r[1] * c, r[2]]
}

const MAX_STEP_PHASE: f64 = 0.05;

/// Piecewise-constant view of a trajectory with O(1) phase integrals.
struct Track<'a> {
    traj: &'a NoiseTrajectory,
    cumulative: Vec<f64>,
}

impl<'a> Track<'a> {
    fn new(traj: &'a NoiseTrajectory) -> Self {
        Track {
            cumulative: traj.cumulative_phase(),
            traj,
        }
    }

    fn phase_at(&self, t: f64) -> f64 {
        let pos = t / self.traj.dt;
        let j = (pos.floor() as usize).min(self.traj.len() - 1);
        self.cumulative[j] + (t - j as f64 * self.traj.dt) * self.traj.samples[j]
    }

    fn phase(&self, a: f64, b: f64) -> f64 {
        self.phase_at(b) - self.phase_at(a)
    }

    /// Driven rotation over `[a, b]`, exact for each constant-detuning piece.
    fn drive(&self, mut r: Vec3, a: f64, b: f64, rabi: f64, drive_phase: f64) -> Result<Vec3> {
        let dt = self.traj.dt;
        let (sp, cp) = drive_phase.sin_cos();
        let mut t = a;
        while t < b {
            let j = ((t / dt).floor() as usize).min(self.traj.len() - 1);
            let end = (((j + 1) as f64) * dt).min(b);
            let end = if end <= t { b } else { end };
            let delta = self.traj.samples[j];
            if (delta * dt).abs() > MAX_STEP_PHASE {
                return Err(Error::invalid(format!(
                    "trajectory step too coarse during a pulse: |delta| dt = {:.3} rad exceeds {MAX_STEP_PHASE}",
                    (delta * dt).abs()
                )));
            }
            let w = (rabi * rabi + delta * delta).sqrt();
            let axis = [rabi * cp / w, rabi * sp / w, delta / w];
            r = rotate(r, axis, w * (end - t));
            t = end;
        }
        Ok(r)
    }
}

/// Final Bloch vector of one shot.
pub fn evolve_bloch_vector(
    sequence: &PulseSequence,
    params: &PulseParams,
    trajectory: &NoiseTrajectory,
    ramsey_phase: f64,
) -> Result<[f64; 3]> {
    params.validate()?;
    let tau = sequence.tau;
    let d = params.pi_duration();
    let h = params.half_pi_duration();
    if min_feasible_tau(&sequence.alphas, d) > tau {
        return Err(Error::invalid(format!(
            "π-pulses of {d} s do not fit between the pulse times at tau = {tau} s"
        )));
    }
    let needed = params.shot_duration(tau);
    if trajectory.duration() < needed * (1.0 - 1e-12) {
        return Err(Error::invalid(format!(
            "trajectory covers {} s but the shot needs {} s",
            trajectory.duration(),
            needed
        )));
    }
    let track = Track::new(trajectory);
    let offset = params.pi_pulse_phase_mode.offset();

    let mut r: Vec3 = [0.0, 0.0, -1.0];
    if params.instantaneous {
        r = rotate(r, [1.0, 0.0, 0.0], FRAC_PI_2);
        let mut t = 0.0;
        for (alpha, phase) in sequence.alphas.iter().zip(&sequence.pulse_phases) {
            let tp = alpha * tau;
            r = rotate_z(r, track.phase(t, tp));
            let (s, c) = (phase + offset).sin_cos();
            r = rotate(r, [c, s, 0.0], PI);
            t = tp;
        }
        r = rotate_z(r, track.phase(t, tau));
        let (s, c) = ramsey_phase.sin_cos();
        r = rotate(r, [c, s, 0.0], FRAC_PI_2);
    } else {
        let rabi = params.rabi_frequency;
        r = track.drive(r, 0.0, h, rabi, 0.0)?;
        let mut t = h;
        for (alpha, phase) in sequence.alphas.iter().zip(&sequence.pulse_phases) {
            let start = h + alpha * tau - 0.5 * d;
            r = rotate_z(r, track.phase(t, start));
            r = track.drive(r, start, start + d, rabi, phase + offset)?;
            t = start + d;
        }
        r = rotate_z(r, track.phase(t, h + tau));
        r = track.drive(r, h + tau, 2.0 * h + tau, rabi, ramsey_phase)?;
    }
    Ok(r)
}

/// Probability of measuring the upper state, before readout error.
pub fn evolve_bloch(
    sequence: &PulseSequence,
    params: &PulseParams,
    trajectory: &NoiseTrajectory,
    ramsey_phase: f64,
) -> Result<f64> {
    let r = evolve_bloch_vector(sequence, params, trajectory, ramsey_phase)?;
    Ok((0.5 * (1.0 + r[2])).clamp(0.0, 1.0))
}

/// SplitMix64 mixing of `(master, tau index, shot index)` into a stream seed.
pub fn derive_seed(master: u64, tau_index: u64, shot_index: u64) -> u64 {
    let mut z = master
        ^ tau_index.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ shot_index
            .wrapping_mul(0xD1B5_4A32_D192_ED03)
            .rotate_left(17);
    for _ in 0..2 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// One phase point of a fringe scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    /// Phase of the second π/2 pulse, radians.
    pub phase: f64,
    pub successes: u64,
    pub trials: u64,
}

/// Outcomes of a phase scan at one `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeDataset {
    pub points: Vec<FringePoint>,
    pub tau: f64,
    pub sequence_label: String,
}

pub const MIN_FRINGE_PHASES: usize = 6;

impl FringeDataset {
    pub fn new(
        points: Vec<FringePoint>,
        tau: f64,
        sequence_label: impl Into<String>,
    ) -> Result<Self> {
        let ds = FringeDataset {
            points,
            tau,
            sequence_label: sequence_label.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if p.trials == 0 || p.successes > p.trials || !p.phase.is_finite() {
                return Err(Error::invalid(format!(
                    "fringe point at phase {} has {} successes of {} trials",
                    p.phase, p.successes, p.trials
                )));
            }
        }
        let mut phases: Vec<f64> = self.points.iter().map(|p| p.phase).collect();
        phases.sort_by(f64::total_cmp);
        phases.dedup();
        if phases.len() < MIN_FRINGE_PHASES {
            return Err(Error::invalid(format!(
                "a fringe needs at least {MIN_FRINGE_PHASES} distinct phases, got {}",
                phases.len()
            )));
        }
        Ok(())
    }

    /// CSV with columns `phase_deg, successes, trials`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["phase_deg", "successes", "trials"])?;
        for p in &self.points {
            w.write_record([
                p.phase.to_degrees().to_string(),
                p.successes.to_string(),
                p.trials.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, tau: f64, label: impl Into<String>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            phase_deg: f64,
            successes: u64,
            trials: u64,
        }
        let mut rd = csv::Reader::from_reader(input);
        let mut points = Vec::new();
        for row in rd.deserialize() {
            let row: Row = row?;
            points.push(FringePoint {
                phase: row.phase_deg.to_radians(),
                successes: row.successes,
                trials: row.trials,
            });
        }
        Self::new(points, tau, label)
    }
}

/// `n` phases from -450° to +450° inclusive.
pub fn default_phases(n: usize) -> Vec<f64> {
    let (lo, hi) = (-450f64.to_radians(), 450f64.to_radians());
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

pub const DEFAULT_PHASE_COUNT: usize = 20;
pub const DEFAULT_SHOTS_PER_PHASE: u64 = 200;

/// Settings shared by the fringe and coherence-curve simulators.
#[derive(Debug, Clone)]
pub struct SimulationOptions {
    /// Trajectory sample interval; chosen automatically when `None`.
    pub dt: Option<f64>,
    /// Samples per Nyquist period of the highest synthesized frequency.
    pub oversample: f64,
    /// Minimum number of samples across one shot.
    pub min_samples: usize,
    /// Spectral content above the frequency holding this fraction of the
    /// variance is not synthesized.
    pub variance_tail: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            dt: None,
            oversample: 2.0,
            min_samples: 256,
            variance_tail: 1e-7,
        }
    }
}

/// Highest frequency worth synthesizing.
fn synthesis_cutoff(spectrum: &NoiseSpectrum, variance_tail: f64) -> Option<f64> {
    let (lo, hi) = spectrum.support();
    if !hi.is_finite() {
        return None;
    }
    let total = spectrum.band_variance(lo, hi);
    if !(total > 0.0) {
        return Some(hi);
    }
    // bisection in log frequency for the tail fraction
    let (mut a, mut b) = (lo.max(hi * 1e-12), hi);
    if spectrum.band_variance(a, hi) <= variance_tail * total {
        return Some(hi);
    }
    for _ in 0..60 {
        let mid = (a * b).sqrt();
        if spectrum.band_variance(mid, hi) > variance_tail * total {
            a = mid;
        } else {
            b = mid;
        }
    }
    Some(b)
}

/// Builds the per-`tau` trajectory generator. Content above the frequency
/// that holds all but `variance_tail` of the variance is not synthesized;
/// spectra without a finite cutoff are truncated at the Nyquist frequency
/// of the chosen step.
pub fn shot_synthesizer(
    spectrum: &NoiseSpectrum,
    params: &PulseParams,
    tau: f64,
    opts: &SimulationOptions,
) -> Result<TrajectorySynthesizer> {
    let duration = params.shot_duration(tau);
    let cutoff = synthesis_cutoff(spectrum, opts.variance_tail);
    let mut dt = opts.dt.unwrap_or_else(|| {
        let by_samples = duration / opts.min_samples as f64;
        match cutoff {
            Some(w) if w > 0.0 => by_samples.min(PI / (opts.oversample * w)),
            _ => by_samples,
        }
    });
    if !params.instantaneous {
        // pulses are exact per constant-detuning step; only keep |delta| dt
        // below the per-step bound out to eight standard deviations
        let sd = spectrum.variance().sqrt();
        if sd.is_finite() && sd > 0.0 {
            dt = dt.min(MAX_STEP_PHASE / (8.0 * sd));
        }
    }
    let synth_opts = SynthesisOptions {
        truncate_above_nyquist: true,
        ..Default::default()
    };
    TrajectorySynthesizer::with_options(spectrum, dt, duration, &synth_opts)
}

/// Simulates a phase scan at the sequence's own `tau`.
pub fn ramsey_fringe(
    sequence: &PulseSequence,
    params: &PulseParams,
    spectrum: &NoiseSpectrum,
    phases: &[f64],
    shots_per_phase: u64,
    seed: u64,
) -> Result<FringeDataset> {
    let synth = shot_synthesizer(
        spectrum,
        params,
        sequence.tau,
        &SimulationOptions::default(),
    )?;
    ramsey_fringe_with(sequence, params, &synth, phases, shots_per_phase, seed, 0)
}

/// Phase scan with an explicit synthesizer; `tau_index` feeds seed derivation.
pub fn ramsey_fringe_with(
    sequence: &PulseSequence,
    params: &PulseParams,
    synth: &TrajectorySynthesizer,
    phases: &[f64],
    shots_per_phase: u64,
    seed: u64,
    tau_index: u64,
) -> Result<FringeDataset> {
    params.validate()?;
    sequence.validate()?;
    if shots_per_phase == 0 {
        return Err(Error::invalid("shots per phase must be at least 1"));
    }
    let mut points = Vec::with_capacity(phases.len());
    for (pi, &phase) in phases.iter().enumerate() {
        let base = pi as u64 * shots_per_phase;
        let successes = (0..shots_per_phase)
            .into_par_iter()
            .map(|k| -> Result<u64> {
                let shot_seed = derive_seed(seed, tau_index, base + k);
                let traj = synth.generate(shot_seed);
                let p = evolve_bloch(sequence, params, &traj, phase)?;
                let p = apply_readout_error(p, params.readout_error);
                let mut rng = ChaCha8Rng::seed_from_u64(shot_seed ^ 0x5DEE_CE66_D1CE_5EED);
                Ok(u64::from(rng.gen::<f64>() < p))
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        points.push(FringePoint {
            phase,
            successes,
            trials: shots_per_phase,
        });
    }
    FringeDataset::new(points, sequence.tau, sequence.label.clone())
}

/// Fitted fringe contrast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastEstimate {
    pub contrast: f64,
    pub phase_offset: f64,
    pub uncertainty: f64,
    pub n_bootstrap: usize,
    /// The unconstrained fit exceeded 1 and was pinned to the bound.
    pub at_bound: bool,
}

#[derive(Debug, Clone)]
pub struct FringeFitOptions {
    pub n_bootstrap: usize,
    pub seed: u64,
}

impl Default for FringeFitOptions {
    fn default() -> Self {
        FringeFitOptions {
            n_bootstrap: 500,
            seed: 0,
        }
    }
}

/// Least squares of `rate - 1/2 = a cos(phi) + b sin(phi)` weighted by
/// trials; returns `(C, phi0, pinned)`.
fn sine_fit(phases: &[f64], rates: &[f64], weights: &[f64]) -> Result<(f64, f64, bool)> {
    let (mut scc, mut sss, mut scs, mut syc, mut sys) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&phi, &y), &w) in phases.iter().zip(rates).zip(weights) {
        let (s, c) = phi.sin_cos();
        let y = y - 0.5;
        scc += w * c * c;
        sss += w * s * s;
        scs += w * c * s;
        syc += w * y * c;
        sys += w * y * s;
    }
    let det = scc * sss - scs * scs;
    if !(det.abs() > 1e-12 * (scc * sss).max(1e-300)) {
        return Err(Error::Singular("fringe fit normal equations"));
    }
    let a = (syc * sss - sys * scs) / det;
    let b = (sys * scc - syc * scs) / det;
    let c = 2.0 * a.hypot(b);
    let phi0 = b.atan2(a);
    Ok(if c > 1.0 {
        (1.0, phi0, true)
    } else {
        (c, phi0, false)
    })
}

pub fn fit_fringe(dataset: &FringeDataset) -> Result<ContrastEstimate> {
    fit_fringe_with(dataset, &FringeFitOptions::default())
}

/// Sine fit of `1/2 (1 + C cos(phi - phi0))` plus a parametric bootstrap
/// that redraws each point's successes from `Binomial(trials, rate)`.
pub fn fit_fringe_with(
    dataset: &FringeDataset,
    opts: &FringeFitOptions,
) -> Result<ContrastEstimate> {
    dataset.validate()?;
    let phases: Vec<f64> = dataset.points.iter().map(|p| p.phase).collect();
    let span = phases.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - phases.iter().cloned().fold(f64::INFINITY, f64::min);
    if span < 3.0 * PI * (1.0 - 1e-9) {
        return Err(Error::invalid(format!(
            "phase scan spans {:.1}°, need at least 1.5 fringe periods (540°)",
            span.to_degrees()
        )));
    }
    let weights: Vec<f64> = dataset.points.iter().map(|p| p.trials as f64).collect();
    let rates: Vec<f64> = dataset
        .points
        .iter()
        .map(|p| p.successes as f64 / p.trials as f64)
        .collect();
    let (contrast, phase_offset, at_bound) = sine_fit(&phases, &rates, &weights)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut samples = Vec::with_capacity(opts.n_bootstrap);
    let mut resampled = vec![0.0; rates.len()];
    for _ in 0..opts.n_bootstrap {
        for ((r, p), &rate) in resampled.iter_mut().zip(&dataset.points).zip(&rates) {
            let k = Binomial::new(p.trials, rate)
                .map_err(|e| Error::invalid(format!("bootstrap binomial: {e}")))?
                .sample(&mut rng);
            *r = k as f64 / p.trials as f64;
        }
        samples.push(sine_fit(&phases, &resampled, &weights)?.0);
    }
    let uncertainty = if samples.len() > 1 {
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        (samples.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64)
            .sqrt()
    } else {
        0.0
    };
    Ok(ContrastEstimate {
        contrast,
        phase_offset,
        uncertainty,
        n_bootstrap: opts.n_bootstrap,
        at_bound,
    })
}

/// Settings for [`coherence_curve_mc`].
#[derive(Debug, Clone)]
pub struct CurveSimulation {
    pub phases: Vec<f64>,
    pub shots_per_phase: u64,
    pub seed: u64,
    pub simulation: SimulationOptions,
    pub fit: FringeFitOptions,
}

impl Default for CurveSimulation {
    fn default() -> Self {
        CurveSimulation {
            phases: default_phases(DEFAULT_PHASE_COUNT),
            shots_per_phase: DEFAULT_SHOTS_PER_PHASE,
            seed: 0,
            simulation: SimulationOptions::default(),
            fit: FringeFitOptions::default(),
        }
    }
}

/// Fringes and their fits for one `tau`.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub tau: f64,
    pub fringe: FringeDataset,
    pub estimate: ContrastEstimate,
}

/// Runs a fringe scan at each `tau` with the sequence timings rescaled to it
/// and the π-pulse length set by `params`.
pub fn coherence_curve_mc(
    family: &PulseSequence,
    params: &PulseParams,
    spectrum: &NoiseSpectrum,
    taus: &[f64],
    sim: &CurveSimulation,
) -> Result<(CoherenceCurve, Vec<CurvePoint>)> {
    if taus.is_empty() || taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(
            "taus must be non-empty and strictly increasing",
        ));
    }
    let mut points = Vec::with_capacity(taus.len());
    for (i, &tau) in taus.iter().enumerate() {
        let seq = family
            .with_tau(tau)?
            .with_pulse_duration(params.pi_duration())?;
        let synth = shot_synthesizer(spectrum, params, tau, &sim.simulation)?;
        let fringe = ramsey_fringe_with(
            &seq,
            params,
            &synth,
            &sim.phases,
            sim.shots_per_phase,
            sim.seed,
            i as u64,
        )?;
        let fit_opts = FringeFitOptions {
            seed: derive_seed(sim.fit.seed ^ sim.seed, i as u64, u64::MAX),
            ..sim.fit.clone()
        };
        let estimate = fit_fringe_with(&fringe, &fit_opts)?;
        points.push(CurvePoint {
            tau,
            fringe,
            estimate,
        });
    }
    let curve = CoherenceCurve::new(
        points
            .iter()
            .map(|p| (p.tau, p.estimate.contrast, p.estimate.uncertainty))
            .collect(),
        family
            .clone()
            .with_pulse_duration(params.pi_duration())
            .unwrap_or_else(|_| family.clone()),
        CurveSource::Simulated,
    )?;
    Ok((curve, points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quiet(duration: f64) -> NoiseTrajectory {
        NoiseTrajectory::constant(0.0, 1e-6, duration).unwrap()
    }

    #[test]
    fn noiseless_fringe_extremes() {
        let params = PulseParams::ideal();
        for n in 0..6 {
            let seq = if n == 0 {
                PulseSequence::ramsey(1e-3).unwrap()
            } else {
                PulseSequence::udd(n, 1e-3, 0.0).unwrap()
            };
            let traj = quiet(1.1e-3);
            assert_abs_diff_eq!(
                evolve_bloch(&seq, &params, &traj, 0.0).unwrap(),
                1.0,
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                evolve_bloch(&seq, &params, &traj, PI).unwrap(),
                0.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn hahn_cancels_constant_offset() {
        let params = PulseParams::ideal();
        let seq = PulseSequence::udd(1, 1e-3, 0.0).unwrap();
        let reference = evolve_bloch(&seq, &params, &quiet(1e-3), 0.7).unwrap();
        for delta in [-3e4, -10.0, 55.5, 2e3] {
            let traj = NoiseTrajectory::constant(delta, 1e-6, 1e-3).unwrap();
            let p = evolve_bloch(&seq, &params, &traj, 0.7).unwrap();
            assert_abs_diff_eq!(p, reference, epsilon = 1e-10);
        }
    }

    #[test]
    fn ramsey_constant_offset_closed_form() {
        let params = PulseParams::ideal();
        let tau = 2e-3;
        let seq = PulseSequence::ramsey(tau).unwrap();
        let p0 = 1234.5;
        let traj = NoiseTrajectory::constant(p0, 1e-6, tau).unwrap();
        for phi in [0.0, 0.4, 2.0, -1.3] {
            let p = evolve_bloch(&seq, &params, &traj, phi).unwrap();
            assert_abs_diff_eq!(p, 0.5 * (1.0 + (phi - p0 * tau).cos()), epsilon = 1e-10);
        }
    }

    #[test]
    fn finite_pulses_need_fine_steps_and_room() {
        let params = PulseParams {
            readout_error: 0.0,
            ..Default::default()
        };
        let seq = PulseSequence::cpmg(4, 1e-3, 0.0).unwrap();
        let coarse = NoiseTrajectory::constant(5e3, 2e-5, 1.2e-3).unwrap();
        assert!(evolve_bloch(&seq, &params, &coarse, 0.0).is_err());
        let tight = PulseSequence::cpmg(20, 5e-4, 0.0).unwrap();
        assert!(evolve_bloch(&tight, &params, &quiet(1e-3), 0.0).is_err());
        let short = quiet(1e-3);
        assert!(evolve_bloch(&seq, &params, &short, 0.0).is_err());
        // resonant finite pulses are still ideal rotations
        let traj = quiet(1.1e-3);
        assert_abs_diff_eq!(
            evolve_bloch(&seq, &params, &traj, 0.0).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn readout_map() {
        assert_abs_diff_eq!(apply_readout_error(1.0, 0.02), 0.98);
        assert_abs_diff_eq!(apply_readout_error(0.0, 0.02), 0.02);
        assert!(PulseParams {
            readout_error: 0.5,
            ..PulseParams::ideal()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn seeds_are_distinct() {
        let a = derive_seed(1, 0, 0);
        assert_ne!(a, derive_seed(1, 0, 1));
        assert_ne!(a, derive_seed(1, 1, 0));
        assert_ne!(a, derive_seed(2, 0, 0));
        assert_eq!(a, derive_seed(1, 0, 0));
    }

    fn exact_fringe(c: f64, phi0: f64, trials: u64) -> FringeDataset {
        let points = default_phases(20)
            .into_iter()
            .map(|phi| FringePoint {
                phase: phi,
                successes: (0.5 * (1.0 + c * (phi - phi0).cos()) * trials as f64).round() as u64,
                trials,
            })
            .collect();
        FringeDataset::new(points, 1e-3, "test").unwrap()
    }

    #[test]
    fn fit_exact_sinusoid() {
        let est = fit_fringe(&exact_fringe(0.8, 0.3, 1_000_000_000)).unwrap();
        assert_abs_diff_eq!(est.contrast, 0.8, epsilon = 1e-6);
        assert_abs_diff_eq!(est.phase_offset, 0.3, epsilon = 1e-6);
        assert!(est.uncertainty < 1e-4);
        assert!(!est.at_bound);
    }

    #[test]
    fn fit_flat_fringe() {
        let trials = 200;
        let est = fit_fringe(&exact_fringe(0.0, 0.0, trials)).unwrap();
        assert!(est.contrast < 1e-12);
        let scale = (1.0 / (2.0 * trials as f64)).sqrt();
        assert!(
            est.uncertainty > 0.2 * scale && est.uncertainty < 3.0 * scale,
            "{}",
            est.uncertainty
        );
    }

    #[test]
    fn fit_rejects_narrow_scan() {
        let points = (0..8)
            .map(|i| FringePoint {
                phase: i as f64 * 0.3,
                successes: 5,
                trials: 10,
            })
            .collect();
        let ds = FringeDataset::new(points, 1e-3, "x").unwrap();
        assert!(fit_fringe(&ds).is_err());
        assert!(FringeDataset::new(
            vec![
                FringePoint {
                    phase: 0.0,
                    successes: 3,
                    trials: 2
                };
                6
            ],
            1.0,
            "x"
        )
        .is_err());
    }

    #[test]
    fn fringe_csv_round_trip() {
        let ds = exact_fringe(0.5, 0.0, 200);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("phase_deg,successes,trials\n-450,"));
        let back = FringeDataset::read_csv(buf.as_slice(), 1e-3, "test").unwrap();
        for (a, b) in back.points.iter().zip(&ds.points) {
            assert_abs_diff_eq!(a.phase, b.phase, epsilon = 1e-12);
            assert_eq!(a.successes, b.successes);
        }
    }

    #[test]
    fn noiseless_simulation_contrast() {
        let seq = PulseSequence::udd(3, 1e-3, 0.0).unwrap();
        let ds = ramsey_fringe(
            &seq,
            &PulseParams::ideal(),
            &NoiseSpectrum::zero(),
            &default_phases(20),
            1000,
            3,
        )
        .unwrap();
        let est = fit_fringe(&ds).unwrap();
        assert!(
            (est.contrast - 1.0).abs() < 3.0 * est.uncertainty + 1e-3,
            "{est:?}"
        );
        let lossy = PulseParams {
            readout_error: 0.02,
            ..PulseParams::ideal()
        };
        let ds = ramsey_fringe(
            &seq,
            &lossy,
            &NoiseSpectrum::zero(),
            &default_phases(20),
            2000,
            3,
        )
        .unwrap();
        let est = fit_fringe(&ds).unwrap();
        assert!(
            (est.contrast - 0.96).abs() < 3.0 * est.uncertainty + 1e-3,
            "{est:?}"
        );
    }
}
