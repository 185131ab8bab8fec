//! Filter-function dephasing.
//!
//! A sequence's sensitivity to noise at angular frequency `w` is the filter
//! function `F(w tau)`. Under the crate's PSD convention the accumulated
//! phase variance is `(1/pi) int S F / w^2 dw`, and for Gaussian noise
//!
//! ```text
//! chi(tau) = int_0^inf S(w) F(w tau) / (2 pi w^2) dw,   C(tau) = N exp(-chi(tau)).
//! ```
//!
//! Finite pulses are modelled as dead time: the qubit is insensitive to
//! `delta` for `pulse_duration` centred on each pulse time.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::noise::NoiseSpectrum;
use crate::quadrature::{self, gk15};
use crate::sequences::{validate_alphas, PulseSequence};

/// `F` evaluated at one dimensionless frequency `x = w tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterEvaluation {
    pub x: f64,
    pub value: f64,
}

/// The filter as a sum of phasors, `F(x) = |sum_k c_k exp(i x t_k)|^2`, where
/// `t_k` are the edges of the sensitive segments in normalized time.
#[derive(Debug, Clone)]
pub struct FilterKernel {
    points: Vec<(f64, f64)>,
}

impl FilterKernel {
    /// Instantaneous pulses at `alphas`.
    pub fn instantaneous(alphas: &[f64]) -> Result<Self> {
        validate_alphas(alphas)?;
        let n = alphas.len();
        let mut points = Vec::with_capacity(n + 2);
        points.push((0.0, -1.0));
        for (k, &a) in alphas.iter().enumerate() {
            // pulse k+1: ends segment k (sign (-1)^k) and starts segment k+1
            points.push((a, if k % 2 == 0 { 2.0 } else { -2.0 }));
        }
        points.push((1.0, if n.is_multiple_of(2) { 1.0 } else { -1.0 }));
        Ok(FilterKernel { points })
    }

    /// Pulses of width `fraction` (in units of tau) centred on `alphas`.
    pub fn finite(alphas: &[f64], fraction: f64) -> Result<Self> {
        if fraction == 0.0 {
            return Self::instantaneous(alphas);
        }
        validate_alphas(alphas)?;
        if !(fraction > 0.0 && fraction.is_finite()) {
            return Err(Error::invalid(format!(
                "pulse fraction must be non-negative, got {fraction}"
            )));
        }
        let half = 0.5 * fraction;
        let n = alphas.len();
        let mut edges = Vec::with_capacity(2 * n + 2);
        edges.push(0.0);
        for &a in alphas {
            edges.push(a - half);
            edges.push(a + half);
        }
        edges.push(1.0);
        if edges.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid(format!(
                "pulse windows of width {fraction} tau overlap each other or the sequence ends"
            )));
        }
        let mut points = Vec::with_capacity(2 * n + 2);
        for (i, seg) in edges.chunks(2).enumerate() {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            points.push((seg[0], -sign));
            points.push((seg[1], sign));
        }
        Ok(FilterKernel { points })
    }

    pub fn for_sequence(seq: &PulseSequence, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        Self::finite(&seq.alphas, seq.pulse_duration / tau)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(t, c) in &self.points {
            let (s, co) = (x * t).sin_cos();
            acc += Complex64::new(c * co, c * s);
        }
        acc.norm_sqr()
    }

    /// Large-`x` average of `F`.
    pub fn mean(&self) -> f64 {
        // coincident edges (zero-length segments) add coherently
        let mut total = 0.0;
        let mut i = 0;
        while i < self.points.len() {
            let mut c = self.points[i].1;
            let mut j = i + 1;
            while j < self.points.len() && self.points[j].0 == self.points[i].0 {
                c += self.points[j].1;
                j += 1;
            }
            total += c * c;
            i = j;
        }
        total
    }

    /// Smallest non-zero separation between phasor times; sets the slowest
    /// beat in `F`.
    pub fn min_gap(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1].0 - w[0].0)
            .filter(|&g| g > 0.0)
            .fold(1.0, f64::min)
    }

    /// Leading small-`x` power: `F ~ x^(2k)` with `k` the first order whose
    /// time moment fails to cancel (relative to `tol`).
    pub fn low_frequency_order(&self, tol: f64) -> usize {
        for j in 1..64 {
            let moment: f64 = self.points.iter().map(|&(t, c)| c * t.powi(j as i32)).sum();
            if moment.abs() > tol {
                return j;
            }
        }
        64
    }
}

/// Filter function for instantaneous pulses at `alphas`, evaluated at `x = w tau`.
pub fn filter_function(alphas: &[f64], x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::invalid(format!(
            "filter argument must be non-negative, got {x}"
        )));
    }
    Ok(FilterKernel::instantaneous(alphas)?.eval(x))
}

/// Filter function including dead time for each finite pulse of the sequence.
pub fn filter_function_finite(sequence: &PulseSequence, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::invalid(format!(
            "filter argument must be non-negative, got {x}"
        )));
    }
    Ok(FilterKernel::for_sequence(sequence, sequence.tau)?.eval(x))
}

/// Absolute `chi` error that is always accepted.
pub const CHI_ABS_TOL: f64 = 1e-14;

/// Tunables for [`chi_with`].
#[derive(Debug, Clone)]
pub struct ChiOptions {
    /// Relative accuracy target.
    pub rel_tol: f64,
    /// Lobe-resolved integration stops by this `x`, scaled by the filter's
    /// slowest beat; beyond it `F` is replaced by its mean.
    pub tail_start_beats: f64,
    pub max_tail_start: f64,
}

impl Default for ChiOptions {
    fn default() -> Self {
        ChiOptions {
            rel_tol: 1e-6,
            tail_start_beats: 40.0,
            max_tail_start: 2e4,
        }
    }
}

/// Dephasing exponent `chi(tau)` for `sequence` rescaled to `tau`.
pub fn chi(sequence: &PulseSequence, tau: f64, spectrum: &NoiseSpectrum) -> Result<f64> {
    chi_with(sequence, tau, spectrum, &ChiOptions::default())
}

pub fn chi_with(
    sequence: &PulseSequence,
    tau: f64,
    spectrum: &NoiseSpectrum,
    opts: &ChiOptions,
) -> Result<f64> {
    let kernel = FilterKernel::for_sequence(sequence, tau)?;
    chi_kernel(&kernel, tau, spectrum, opts)
}

/// `chi` for an explicit filter kernel.
///
/// The integral runs in `x = w tau`: geometric panels up to `x = pi`, then
/// panels of width `pi/2` (the fastest oscillation of `F` has period
/// `2 pi`), each refined adaptively, and finally a tail where `F` is
/// replaced by its mean and the integral is taken in `u = 1/x`.
pub fn chi_kernel(
    kernel: &FilterKernel,
    tau: f64,
    spectrum: &NoiseSpectrum,
    opts: &ChiOptions,
) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if spectrum.is_zero() {
        return Ok(0.0);
    }
    let (w_lo, w_hi) = spectrum.support();
    let x_lo = w_lo * tau;
    let x_hi = w_hi * tau;
    let integrand = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        spectrum.eval(x / tau) * kernel.eval(x) / (x * x)
    };
    let tail_start = (opts.tail_start_beats / kernel.min_gap())
        .max(400.0)
        .min(opts.max_tail_start);

    // panel edges over [x_lo, x_end]
    let x_end = x_hi.min(tail_start).max(x_lo);
    let mut edges = vec![x_lo, x_end];
    let mut x = if x_lo > 0.0 {
        x_lo
    } else {
        PI * 2f64.powi(-40)
    };
    while x < PI {
        edges.push(x);
        x *= 2.0;
    }
    let mut k = 2.0;
    while k * 0.5 * PI < x_end {
        edges.push(k * 0.5 * PI);
        k += 1.0;
    }
    edges.extend(spectrum.breakpoints().into_iter().map(|w| w * tau));
    edges.retain(|&e| e >= x_lo && e <= x_end);
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let mut value = 0.0;
    let mut error = 0.0;
    let mut quiet = 0usize;
    let mut reached = x_end;
    for w in edges.windows(2) {
        let est = quadrature::integrate(&integrand, w[0], w[1], opts.rel_tol * 1e-2, 1e-300, 200);
        value += est.value;
        error += est.error;
        // fast-decaying integrands: stop resolving lobes once they no longer matter
        if w[1] > 100.0 && est.value.abs() < 1e-13 * value.abs() {
            quiet += 1;
            if quiet >= 50 {
                reached = w[1];
                break;
            }
        } else {
            quiet = 0;
        }
    }

    if x_hi > reached {
        let mean = kernel.mean();
        let tail = |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            spectrum.eval(1.0 / (u * tau)) * mean
        };
        let (u_lo, u_hi) = (
            if x_hi.is_finite() { 1.0 / x_hi } else { 0.0 },
            1.0 / reached,
        );
        let mut u_edges = vec![u_lo, u_hi];
        u_edges.extend(
            spectrum
                .breakpoints()
                .into_iter()
                .map(|w| 1.0 / (w * tau))
                .filter(|&u| u > u_lo && u < u_hi),
        );
        u_edges.sort_by(f64::total_cmp);
        for w in u_edges.windows(2) {
            let est = quadrature::integrate(&tail, w[0], w[1], opts.rel_tol * 1e-2, 1e-300, 200);
            value += est.value;
            error += est.error;
        }
    }

    // chi below ~1e-14 is invisible in exp(-chi); only the relative test matters above it
    if error > opts.rel_tol * value.abs() && tau * error / (2.0 * PI) > CHI_ABS_TOL {
        return Err(Error::Quadrature {
            value: tau * value / (2.0 * PI),
            estimate: tau * error / (2.0 * PI),
        });
    }
    Ok((tau * value / (2.0 * PI)).max(0.0))
}

/// Precomputed linear map from spectrum samples to `chi`.
///
/// With `S` linear between `nodes` (ascending, rad/s), flat below the first
/// node and zero above the last, `chi(tau) = sum_m weights[m] S(nodes[m])`.
/// Used where `chi` must be re-evaluated for many candidate spectra.
pub fn chi_weights(kernel: &FilterKernel, tau: f64, nodes: &[f64]) -> Result<Vec<f64>> {
    if nodes.len() < 2 || nodes.windows(2).any(|w| !(w[1] > w[0])) || !(nodes[0] > 0.0) {
        return Err(Error::invalid(
            "chi weight nodes must be positive and increasing",
        ));
    }
    let k = |w: f64| {
        if w <= 0.0 {
            return 0.0;
        }
        kernel.eval(w * tau) / (2.0 * PI * w * w)
    };
    let mut weights = vec![0.0; nodes.len()];
    // flat extension below the first node
    weights[0] += quadrature::integrate(&k, 0.0, nodes[0], 1e-9, 1e-300, 200).value;
    let panel = 0.5 * PI / tau;
    for m in 0..nodes.len() - 1 {
        let (a, b) = (nodes[m], nodes[m + 1]);
        let pieces = ((b - a) / panel).ceil().max(1.0) as usize;
        let h = (b - a) / pieces as f64;
        let (mut left, mut right) = (0.0, 0.0);
        for p in 0..pieces {
            let lo = a + h * p as f64;
            let hi = lo + h;
            left += gk15(&|w: f64| k(w) * (b - w) / (b - a), lo, hi).value;
            right += gk15(&|w: f64| k(w) * (w - a) / (b - a), lo, hi).value;
        }
        weights[m] += left;
        weights[m + 1] += right;
    }
    Ok(weights)
}

/// `N exp(-chi)` for one sequence family under one spectrum.
#[derive(Debug, Clone)]
pub struct CoherenceModel {
    pub normalization: f64,
    pub sequence: PulseSequence,
    pub spectrum: NoiseSpectrum,
}

impl CoherenceModel {
    pub fn new(
        normalization: f64,
        sequence: PulseSequence,
        spectrum: NoiseSpectrum,
    ) -> Result<Self> {
        if !(normalization > 0.0 && normalization <= 1.0) {
            return Err(Error::invalid(format!(
                "normalization must lie in (0, 1], got {normalization}"
            )));
        }
        sequence.validate()?;
        spectrum.validate()?;
        Ok(CoherenceModel {
            normalization,
            sequence,
            spectrum,
        })
    }

    pub fn chi(&self, tau: f64) -> Result<f64> {
        chi(&self.sequence, tau, &self.spectrum)
    }

    /// Shortest `tau` for which the finite pulse windows still fit.
    pub fn min_tau(&self) -> f64 {
        min_feasible_tau(&self.sequence.alphas, self.sequence.pulse_duration)
    }
}

/// Shortest total time at which pulses of `pulse_duration` centred on
/// `alphas` neither overlap nor spill outside the sequence.
pub fn min_feasible_tau(alphas: &[f64], pulse_duration: f64) -> f64 {
    if pulse_duration == 0.0 || alphas.is_empty() {
        return 0.0;
    }
    let mut need: f64 = pulse_duration / (2.0 * alphas[0]);
    need = need.max(pulse_duration / (2.0 * (1.0 - alphas[alphas.len() - 1])));
    for w in alphas.windows(2) {
        need = need.max(pulse_duration / (w[1] - w[0]));
    }
    need
}

pub fn coherence(model: &CoherenceModel, tau: f64) -> Result<f64> {
    Ok(model.normalization * (-model.chi(tau)?).exp())
}

/// Options for [`coherence_time_with`].
#[derive(Debug, Clone)]
pub struct CoherenceTimeOptions {
    pub initial_tau: Option<f64>,
    pub tau_min: f64,
    pub tau_max: f64,
    pub rel_tol: f64,
}

impl Default for CoherenceTimeOptions {
    fn default() -> Self {
        CoherenceTimeOptions {
            initial_tau: None,
            tau_min: 1e-12,
            tau_max: 1e6,
            rel_tol: 1e-4,
        }
    }
}

/// Time at which coherence falls to `N/e`, i.e. `chi(tau_c) = 1`.
pub fn coherence_time(model: &CoherenceModel) -> Result<f64> {
    coherence_time_with(model, &CoherenceTimeOptions::default())
}

/// Geometric bracketing (factor 2) from the initial guess, then bisection
/// in `log tau`.
pub fn coherence_time_with(model: &CoherenceModel, opts: &CoherenceTimeOptions) -> Result<f64> {
    let floor = opts.tau_min.max(model.min_tau() * (1.0 + 1e-9));
    let mut tau = opts.initial_tau.unwrap_or(model.sequence.tau).max(floor);
    let mut chi_tau = model.chi(tau)?;
    let (mut lo, mut hi);
    if chi_tau < 1.0 {
        lo = tau;
        loop {
            tau *= 2.0;
            if tau > opts.tau_max {
                return Err(Error::NoBracket(format!(
                    "chi stays below 1 up to tau = {} s",
                    opts.tau_max
                )));
            }
            chi_tau = model.chi(tau)?;
            if chi_tau >= 1.0 {
                hi = tau;
                break;
            }
            lo = tau;
        }
    } else {
        hi = tau;
        loop {
            tau *= 0.5;
            if tau < floor {
                if model.chi(floor)? < 1.0 {
                    lo = floor;
                    break;
                }
                return Err(Error::NoBracket(format!(
                    "chi already exceeds 1 at the shortest feasible tau = {floor} s"
                )));
            }
            chi_tau = model.chi(tau)?;
            if chi_tau < 1.0 {
                lo = tau;
                break;
            }
            hi = tau;
        }
    }
    while hi / lo - 1.0 > opts.rel_tol * 0.5 {
        let mid = (lo * hi).sqrt();
        if model.chi(mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Coherence curve CSV: `tau_s, contrast, chi`.
pub fn write_coherence_csv<W: Write>(out: W, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau_s", "contrast", "chi"])?;
    for (tau, c, chi) in rows {
        w.write_record([tau.to_string(), c.to_string(), chi.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Filter dump CSV: `x, F`.
pub fn write_filter_csv<W: Write>(out: W, rows: &[FilterEvaluation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "F"])?;
    for r in rows {
        w.write_record([r.x.to_string(), r.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
