//! Inverse problem: coherence curves to a log-log spline noise spectrum,
//! plus 1/e coherence-time extraction and τ_c-versus-n line fits.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dephasing::{chi_weights, FilterKernel};
use crate::error::{Error, Result};
use crate::noise::{LogLogSpline, NoiseSpectrum};
use crate::optim::{levenberg_marquardt, lm_minimize, nelder_mead, NelderMeadOptions};
use crate::sequences::PulseSequence;

/// Contrast uncertainties below this are raised to it before fitting.
pub const SIGMA_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSource {
    Simulated,
    Ingested,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    #[serde(rename = "tau_s")]
    pub tau: f64,
    pub contrast: f64,
    pub uncertainty: f64,
}

/// Contrast versus `tau` for one sequence family. `sequence` carries the
/// normalized pulse times; its own `tau` is irrelevant here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCurve {
    pub points: Vec<CurveSample>,
    pub sequence: PulseSequence,
    pub source: CurveSource,
}

impl CoherenceCurve {
    pub fn new(
        points: Vec<(f64, f64, f64)>,
        sequence: PulseSequence,
        source: CurveSource,
    ) -> Result<Self> {
        let curve = CoherenceCurve {
            points: points
                .into_iter()
                .map(|(tau, contrast, uncertainty)| CurveSample {
                    tau,
                    contrast,
                    uncertainty,
                })
                .collect(),
            sequence,
            source,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::invalid("coherence curve has no points"));
        }
        for p in &self.points {
            if !(p.tau > 0.0 && p.tau.is_finite())
                || !p.contrast.is_finite()
                || !(p.uncertainty >= 0.0)
            {
                return Err(Error::invalid(format!(
                    "bad coherence sample (tau {}, contrast {}, uncertainty {})",
                    p.tau, p.contrast, p.uncertainty
                )));
            }
        }
        if self.points.windows(2).any(|w| !(w[1].tau > w[0].tau)) {
            return Err(Error::invalid(
                "coherence curve taus must be strictly increasing",
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.sequence.n
    }

    pub fn label(&self) -> &str {
        &self.sequence.label
    }

    pub fn taus(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.tau).collect()
    }

    /// Uncertainty with [`SIGMA_FLOOR`] applied.
    pub fn sigma(&self, i: usize) -> f64 {
        self.points[i].uncertainty.max(SIGMA_FLOOR)
    }

    /// CSV with columns `tau_s, contrast, uncertainty`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau_s", "contrast", "uncertainty"])?;
        for p in &self.points {
            w.write_record([
                p.tau.to_string(),
                p.contrast.to_string(),
                p.uncertainty.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(
        input: R,
        sequence: PulseSequence,
        source: CurveSource,
    ) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let mut points = Vec::new();
        for row in rd.deserialize() {
            let s: CurveSample = row?;
            points.push((s.tau, s.contrast, s.uncertainty));
        }
        Self::new(points, sequence, source)
    }
}

/// Stretched-exponential fit of one curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceTimeFit {
    pub tau_c: f64,
    pub uncertainty: f64,
    pub normalization: f64,
    pub stretch: f64,
    pub chi2: f64,
}

/// Fits `N exp(-(tau / tau_c)^p)` and returns `(tau_c, standard error)`.
pub fn fit_coherence_time(curve: &CoherenceCurve) -> Result<(f64, f64)> {
    let f = fit_coherence_time_full(curve)?;
    Ok((f.tau_c, f.uncertainty))
}

pub fn fit_coherence_time_full(curve: &CoherenceCurve) -> Result<CoherenceTimeFit> {
    curve.validate()?;
    let pts = &curve.points;
    if pts.len() < 4 {
        return Err(Error::invalid("coherence-time fit needs at least 4 points"));
    }
    let top = pts
        .iter()
        .map(|p| p.contrast)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return Err(Error::InsufficientDecay(
            "contrast never rises above zero".into(),
        ));
    }
    let crossing = pts
        .iter()
        .position(|p| p.contrast < top / std::f64::consts::E);
    let Some(k) = crossing else {
        return Err(Error::InsufficientDecay(format!(
            "{}: contrast never falls below 1/e of its plateau {top:.3}",
            curve.label()
        )));
    };
    if k == 0 {
        return Err(Error::InsufficientDecay(format!(
            "{}: contrast is already below 1/e at the first point",
            curve.label()
        )));
    }
    // log-linear interpolation of the first crossing as a start value
    let (a, b) = (&pts[k - 1], &pts[k]);
    let target = top / std::f64::consts::E;
    let t = ((a.contrast - target) / (a.contrast - b.contrast).max(1e-300)).clamp(0.0, 1.0);
    let tau0 = (a.tau.ln() + t * (b.tau.ln() - a.tau.ln())).exp();

    let sig: Vec<f64> = (0..pts.len()).map(|i| curve.sigma(i)).collect();
    let residuals = |p: &[f64]| -> Vec<f64> {
        let (n, tc, s) = (p[0], p[1].exp(), p[2]);
        pts.iter()
            .zip(&sig)
            .map(|(q, sg)| (n * (-(q.tau / tc).powf(s)).exp() - q.contrast) / sg)
            .collect()
    };
    let lower = [1e-6, (pts[0].tau * 1e-3).ln(), 0.2];
    let upper = [1.0, (pts[pts.len() - 1].tau * 1e3).ln(), 8.0];
    let mut best: Option<crate::optim::LeastSquaresFit> = None;
    for p0 in [1.0, 2.0, 3.0] {
        let start = [top.min(1.0), tau0.ln(), p0];
        if let Ok(fit) = levenberg_marquardt(residuals, &start, &lower, &upper, 500) {
            if best.as_ref().is_none_or(|b| fit.chi2 < b.chi2) {
                best = Some(fit);
            }
        }
    }
    let fit = best.ok_or(Error::NonConvergence {
        what: "coherence-time fit",
        residual: f64::NAN,
    })?;
    let tau_c = fit.params[1].exp();
    let dof = pts.len().saturating_sub(3).max(1) as f64;
    let scale = (fit.chi2 / dof).max(1.0);
    let var = fit.covariance[(1, 1)] * scale;
    Ok(CoherenceTimeFit {
        tau_c,
        uncertainty: tau_c * var.max(0.0).sqrt(),
        normalization: fit.params[0],
        stretch: fit.params[2],
        chi2: fit.chi2,
    })
}

/// Weighted straight-line fit of `tau_c` against pulse count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Weighted least squares through `(n, tau_c)` with weights `1/σ²`
/// (uniform when every σ is zero).
pub fn linear_scaling_report(tau_cs: &[(usize, f64, f64)]) -> Result<ScalingReport> {
    if tau_cs.len() < 3 {
        return Err(Error::invalid("a scaling report needs at least 3 points"));
    }
    let uniform = tau_cs.iter().all(|p| p.2 <= 0.0);
    let w: Vec<f64> = tau_cs
        .iter()
        .map(|p| {
            if uniform {
                1.0
            } else {
                1.0 / p.2.max(1e-300).powi(2)
            }
        })
        .collect();
    let sw: f64 = w.iter().sum();
    let mx = tau_cs
        .iter()
        .zip(&w)
        .map(|(p, w)| w * p.0 as f64)
        .sum::<f64>()
        / sw;
    let my = tau_cs.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (p, w) in tau_cs.iter().zip(&w) {
        let (dx, dy) = (p.0 as f64 - mx, p.1 - my);
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    if !(sxx > 0.0) {
        return Err(Error::Singular("all pulse counts are equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    Ok(ScalingReport {
        slope,
        intercept,
        r_squared,
    })
}

/// Settings for [`fit_spectrum_with`].
#[derive(Debug, Clone)]
pub struct SpectrumFitOptions {
    pub knots: usize,
    pub omega_range: (f64, f64),
    pub seed: u64,
    /// Power-law starts plus seeded perturbations of the best of them.
    pub starts: usize,
    pub max_evals: usize,
    /// Quadrature nodes per decade for the linearized `chi` map.
    pub nodes_per_decade: usize,
    /// Weight of the squared second differences of the knot log-ordinates.
    pub smoothness: f64,
}

impl Default for SpectrumFitOptions {
    fn default() -> Self {
        SpectrumFitOptions {
            knots: 8,
            omega_range: (2.0 * PI * 50.0, 2.0 * PI * 5e5),
            seed: 0,
            starts: 8,
            max_evals: 6000,
            nodes_per_decade: 60,
            smoothness: 1e-3,
        }
    }
}

const START_EXPONENTS: [f64; 5] = [2.0, 3.0, 4.0, 5.0, 6.0];
const LOG_S_BOUNDS: (f64, f64) = (-80.0, 100.0);

/// Best-fit spline spectrum shared by all curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFit {
    pub spline: LogLogSpline,
    pub normalizations: Vec<f64>,
    pub curve_labels: Vec<String>,
    pub residual: f64,
    pub dof: usize,
    pub knot_frequencies: Vec<f64>,
    /// False when the data carry no decay and so say nothing about `S`.
    pub spectrum_constrained: bool,
    /// Frequency band holding the central 80% of the fitted data's
    /// sensitivity, rad/s.
    pub sensitive_band: (f64, f64),
    pub start_index: usize,
    pub converged: bool,
}

impl SpectrumFit {
    pub fn spectrum(&self) -> NoiseSpectrum {
        NoiseSpectrum::LoglogSpline(self.spline.clone())
    }

    /// Least-squares log-log slope of the spline over the sensitive band.
    pub fn mid_band_slope(&self) -> f64 {
        let (lo, hi) = self.sensitive_band;
        let count = 64;
        let xs: Vec<f64> = (0..count)
            .map(|i| lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64)
            .collect();
        let ys: Vec<f64> = xs.iter().map(|&x| self.spline.eval_log(x)).collect();
        let mx = xs.iter().sum::<f64>() / count as f64;
        let my = ys.iter().sum::<f64>() / count as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `omega_rad_s, S` on a log grid spanning the knots.
    pub fn write_spectrum_csv<W: Write>(&self, out: W, samples: usize) -> Result<()> {
        let f = &self.knot_frequencies;
        let (lo, hi) = (f[0], f[f.len() - 1]);
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["omega_rad_s", "S"])?;
        let samples = samples.max(2);
        for i in 0..samples {
            let omega = lo * (hi / lo).powf(i as f64 / (samples - 1) as f64);
            w.write_record([omega.to_string(), self.spline.eval(omega).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Design {
    nodes_log: Vec<f64>,
    /// One row per data point: weights over nodes.
    rows: Vec<Vec<f64>>,
    obs: Vec<f64>,
    sigma: Vec<f64>,
    /// `[start, end)` row ranges per curve.
    spans: Vec<(usize, usize)>,
}

impl Design {
    fn build(curves: &[CoherenceCurve], opts: &SpectrumFitOptions) -> Result<Self> {
        let (lo, hi) = opts.omega_range;
        let decades = (hi / lo).log10();
        let count = ((decades * opts.nodes_per_decade as f64).ceil() as usize).max(8) + 1;
        let nodes: Vec<f64> = (0..count)
            .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
            .collect();
        let mut jobs = Vec::new();
        let mut spans = Vec::new();
        for curve in curves {
            let kernel = FilterKernel::instantaneous(&curve.sequence.alphas)?;
            let start = jobs.len();
            for (i, p) in curve.points.iter().enumerate() {
                let kernel = if curve.sequence.pulse_duration > 0.0 && curve.sequence.n > 0 {
                    let frac = curve.sequence.pulse_duration / p.tau;
                    FilterKernel::finite(&curve.sequence.alphas, frac)?
                } else {
                    kernel.clone()
                };
                jobs.push((kernel, p.tau, p.contrast, curve.sigma(i)));
            }
            spans.push((start, jobs.len()));
        }
        let rows = jobs
            .par_iter()
            .map(|(k, tau, _, _)| chi_weights(k, *tau, &nodes))
            .collect::<Result<Vec<_>>>()?;
        Ok(Design {
            nodes_log: nodes.iter().map(|w| w.ln()).collect(),
            rows,
            obs: jobs.iter().map(|j| j.2).collect(),
            sigma: jobs.iter().map(|j| j.3).collect(),
            spans,
        })
    }

    fn chis(&self, s_nodes: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(s_nodes).map(|(w, s)| w * s).sum())
            .collect()
    }

    /// Per-curve N in closed form and the weighted residual.
    fn profile(&self, chis: &[f64]) -> (Vec<f64>, f64) {
        let (ns, r) = self.residuals(chis);
        (ns, r.iter().map(|v| v * v).sum())
    }

    fn residuals(&self, chis: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut ns = Vec::with_capacity(self.spans.len());
        let mut out = Vec::with_capacity(chis.len());
        for &(a, b) in &self.spans {
            let (mut smc, mut smm) = (0.0, 0.0);
            for i in a..b {
                let m = (-chis[i]).exp();
                let w = 1.0 / (self.sigma[i] * self.sigma[i]);
                smc += w * m * self.obs[i];
                smm += w * m * m;
            }
            let n = if smm > 0.0 {
                (smc / smm).clamp(1e-6, 1.0)
            } else {
                1e-6
            };
            for i in a..b {
                out.push((n * (-chis[i]).exp() - self.obs[i]) / self.sigma[i]);
            }
            ns.push(n);
        }
        (ns, out)
    }
}

fn spline_from(knots_log: &[f64], log_s: &[f64], omega_max: f64) -> Result<LogLogSpline> {
    LogLogSpline::new(knots_log.to_vec(), log_s.to_vec(), omega_max)
}

fn node_values(spline: &LogLogSpline, nodes_log: &[f64]) -> Vec<f64> {
    nodes_log
        .iter()
        .map(|&x| spline.eval_log(x).exp())
        .collect()
}

pub fn fit_spectrum(
    curves: &[CoherenceCurve],
    knots: usize,
    omega_range: (f64, f64),
) -> Result<SpectrumFit> {
    fit_spectrum_with(
        curves,
        &SpectrumFitOptions {
            knots,
            omega_range,
            ..Default::default()
        },
    )
}

/// Multi-start bounded simplex over the knot log-ordinates with per-curve
/// normalizations profiled out.
pub fn fit_spectrum_with(
    curves: &[CoherenceCurve],
    opts: &SpectrumFitOptions,
) -> Result<SpectrumFit> {
    if opts.knots < 4 {
        return Err(Error::invalid("a spline spectrum needs at least 4 knots"));
    }
    let (lo, hi) = opts.omega_range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::invalid(format!("bad omega range ({lo}, {hi})")));
    }
    if curves.is_empty() {
        return Err(Error::invalid("no coherence curves to fit"));
    }
    for c in curves {
        c.validate()?;
    }
    let n_points: usize = curves.iter().map(|c| c.points.len()).sum();
    let n_params = opts.knots + curves.len();
    let knots_log: Vec<f64> = (0..opts.knots)
        .map(|i| lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (opts.knots - 1) as f64)
        .collect();
    let knot_frequencies: Vec<f64> = knots_log.iter().map(|x| x.exp()).collect();
    let labels: Vec<String> = curves.iter().map(|c| c.label().to_string()).collect();

    if let Some(fit) = flat_fit(curves, &knots_log, hi, n_points, &labels)? {
        return Ok(fit);
    }
    let mut counts: Vec<usize> = curves.iter().map(|c| c.n()).collect();
    counts.sort_unstable();
    counts.dedup();
    if counts.len() < 2 {
        return Err(Error::invalid(
            "spectrum fitting needs curves with at least two distinct pulse counts",
        ));
    }
    if n_points < n_params {
        return Err(Error::invalid(format!(
            "{n_points} data points cannot constrain {n_params} parameters"
        )));
    }

    let design = Design::build(curves, opts)?;
    let residual_vec = |log_s: &[f64]| -> Vec<f64> {
        let Ok(spline) = spline_from(&knots_log, log_s, hi) else {
            return vec![f64::INFINITY];
        };
        let chis = design.chis(&node_values(&spline, &design.nodes_log));
        let mut r = design.residuals(&chis).1;
        let weight = opts.smoothness.sqrt();
        r.extend(
            log_s
                .windows(3)
                .map(|w| weight * (w[0] - 2.0 * w[1] + w[2])),
        );
        r
    };
    let objective = |log_s: &[f64]| -> f64 { residual_vec(log_s).iter().map(|v| v * v).sum() };

    // power-law starts, amplitude chosen by a 1-D scan
    let reference = curves
        .iter()
        .enumerate()
        .min_by_key(|(_, c)| c.n())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let (ra, rb) = design.spans[reference];
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for &e in &START_EXPONENTS {
        let shape: Vec<f64> = knots_log.iter().map(|x| -e * x).collect();
        let spline = spline_from(&knots_log, &shape, hi)?;
        let chis = design.chis(&node_values(&spline, &design.nodes_log));
        let mut unit: Vec<f64> = chis[ra..rb].iter().cloned().filter(|c| *c > 0.0).collect();
        unit.sort_by(f64::total_cmp);
        let median = unit.get(unit.len() / 2).copied().unwrap_or(1.0);
        let base = -median.max(1e-300).ln();
        let mut best = (f64::INFINITY, base);
        for k in 0..=80 {
            let shift = base - 10.0 + 0.25 * k as f64;
            let cand: Vec<f64> = shape.iter().map(|v| v + shift).collect();
            let val = objective(&cand);
            if val < best.0 {
                best = (val, shift);
            }
        }
        starts.push(
            shape
                .iter()
                .map(|v| (v + best.1).clamp(LOG_S_BOUNDS.0, LOG_S_BOUNDS.1))
                .collect(),
        );
    }
    starts.truncate(opts.starts.max(1));
    if opts.starts > starts.len() {
        let anchor = starts
            .iter()
            .min_by(|a, b| objective(a).total_cmp(&objective(b)))
            .cloned()
            .unwrap_or_default();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        while starts.len() < opts.starts {
            let perturbed: Vec<f64> = anchor
                .iter()
                .map(|v| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    (v + g).clamp(LOG_S_BOUNDS.0, LOG_S_BOUNDS.1)
                })
                .collect();
            starts.push(perturbed);
        }
    }

    let lower = vec![LOG_S_BOUNDS.0; opts.knots];
    let upper = vec![LOG_S_BOUNDS.1; opts.knots];
    let nm = NelderMeadOptions {
        max_evals: opts.max_evals,
        f_tol: 1e-10,
        x_tol: 1e-5,
        initial_step: vec![1.0; opts.knots],
    };
    let results: Vec<_> = starts
        .par_iter()
        .map(|s| {
            // simplex for the global search, then Levenberg-Marquardt to
            // finish in the smooth valley, then one more simplex pass
            let first = nelder_mead(objective, s, &lower, &upper, &nm);
            let polished = lm_minimize(residual_vec, &first.x, &lower, &upper, 200);
            let mut best = first;
            if polished.cost < best.value {
                best.x = polished.params;
                best.value = polished.cost;
            }
            let second = nelder_mead(objective, &best.x, &lower, &upper, &nm);
            if second.value <= best.value {
                second
            } else {
                best
            }
        })
        .collect();
    let (start_index, best) = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .expect("at least one start");
    if !best.value.is_finite() {
        return Err(Error::NonConvergence {
            what: "spectrum fit",
            residual: best.value,
        });
    }
    let spline = spline_from(&knots_log, &best.x, hi)?;
    let s_nodes = node_values(&spline, &design.nodes_log);
    let chis = design.chis(&s_nodes);
    let (normalizations, residual) = design.profile(&chis);
    let sensitive_band = sensitive_band(&design, &s_nodes, &chis);
    Ok(SpectrumFit {
        spline,
        normalizations,
        curve_labels: labels,
        residual,
        dof: n_points - n_params,
        knot_frequencies,
        spectrum_constrained: true,
        sensitive_band,
        start_index,
        converged: results.iter().any(|r| r.converged),
    })
}

/// Degenerate input: every curve is flat within its errors.
fn flat_fit(
    curves: &[CoherenceCurve],
    knots_log: &[f64],
    omega_max: f64,
    n_points: usize,
    labels: &[String],
) -> Result<Option<SpectrumFit>> {
    let mut normalizations = Vec::new();
    let mut residual = 0.0;
    for c in curves {
        let (mut sw, mut swc) = (0.0, 0.0);
        for i in 0..c.points.len() {
            let w = c.sigma(i).powi(-2);
            sw += w;
            swc += w * c.points[i].contrast;
        }
        let mean = swc / sw;
        for i in 0..c.points.len() {
            let z = (c.points[i].contrast - mean) / c.sigma(i);
            if z.abs() > 3.0 {
                return Ok(None);
            }
            residual += z * z;
        }
        normalizations.push(mean.clamp(1e-6, 1.0));
    }
    let spline = spline_from(knots_log, &vec![LOG_S_BOUNDS.0; knots_log.len()], omega_max)?;
    let k = knots_log.len();
    Ok(Some(SpectrumFit {
        spline,
        normalizations,
        curve_labels: labels.to_vec(),
        residual,
        dof: n_points.saturating_sub(curves.len()),
        knot_frequencies: knots_log.iter().map(|x| x.exp()).collect(),
        spectrum_constrained: false,
        sensitive_band: (knots_log[0].exp(), knots_log[k - 1].exp()),
        start_index: 0,
        converged: true,
    }))
}

/// 10%-90% quantiles of the per-node sensitivity, each data point weighted
/// by how strongly its contrast responds to a change of scale in `S`.
fn sensitive_band(design: &Design, s_nodes: &[f64], chis: &[f64]) -> (f64, f64) {
    let mut density = vec![0.0; s_nodes.len()];
    for (row, &chi) in design.rows.iter().zip(chis) {
        if !(chi > 0.0) {
            continue;
        }
        let weight = (-chi).exp();
        for ((d, w), s) in density.iter_mut().zip(row).zip(s_nodes) {
            *d += weight * w * s;
        }
    }
    let total: f64 = density.iter().sum();
    let nodes = &design.nodes_log;
    if !(total > 0.0) {
        return (nodes[0].exp(), nodes[nodes.len() - 1].exp());
    }
    let quantile = |q: f64| {
        let mut acc = 0.0;
        for (i, d) in density.iter().enumerate() {
            acc += d;
            if acc >= q * total {
                return nodes[i].exp();
            }
        }
        nodes[nodes.len() - 1].exp()
    };
    let (a, b) = (quantile(0.1), quantile(0.9));
    if b > a * 1.01 {
        (a, b)
    } else {
        (a / 2.0, a * 2.0)
    }
}
