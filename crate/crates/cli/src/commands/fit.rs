use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::File;
use std::path::{Path, PathBuf};

use clap::Args;
use decouple_core::spectroscopy::{
    fit_coherence_time_full, fit_spectrum_with, linear_scaling_report, ScalingReport,
    SpectrumFitOptions,
};
use decouple_core::CoherenceCurve;
use log::warn;
use serde::Serialize;
use serde_json::Value;

use super::simulate::{CurveEntry, CurveManifest};
use crate::config::{read_text, FileConfig};
use crate::error::{CliError, CliResult};
use crate::output::{to_value, OutputDir, RunInfo};

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Curve manifest (`curves.json` as written by `simulate`).
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Number of spline knots.
    #[arg(long)]
    pub knots: Option<usize>,
    /// Lowest knot frequency in Hz.
    #[arg(long)]
    pub omega_min_hz: Option<f64>,
    /// Highest knot frequency in Hz.
    #[arg(long)]
    pub omega_max_hz: Option<f64>,
    /// Optimizer starts.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Objective evaluations per simplex run.
    #[arg(long)]
    pub max_evals: Option<usize>,
    /// Weight of the second-difference penalty on log S.
    #[arg(long)]
    pub smoothness: Option<f64>,
    /// Rows in spectrum.csv.
    #[arg(long)]
    pub spectrum_samples: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    curves: PathBuf,
    entries: Vec<CurveEntry>,
    knots: usize,
    omega_min_hz: f64,
    omega_max_hz: f64,
    starts: usize,
    max_evals: usize,
    smoothness: f64,
    spectrum_samples: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct FamilyScaling {
    pulse_counts: Vec<usize>,
    #[serde(flatten)]
    report: ScalingReport,
}

pub fn run(
    args: FitArgs,
    cfg: &FileConfig,
    out: &mut OutputDir,
    run: &RunInfo,
) -> CliResult<Value> {
    let section = &cfg.fit;
    let manifest_path = args
        .curves
        .or(section.curves.clone())
        .ok_or_else(|| CliError::usage("--curves is required"))?;
    let text = read_text(&manifest_path)?;
    let manifest: CurveManifest =
        serde_json::from_str(&text).map_err(|source| CliError::Parse {
            path: manifest_path.clone(),
            source,
        })?;
    if manifest.curves.is_empty() {
        return Err(CliError::usage("curve manifest lists no curves"));
    }
    let base = manifest_path
        .parent()
        .unwrap_or(Path::new(""))
        .to_path_buf();
    let curves: Vec<CoherenceCurve> = manifest
        .curves
        .iter()
        .map(|e| load_curve(&base, e))
        .collect::<CliResult<_>>()?;

    let defaults = SpectrumFitOptions::default();
    let resolved = Resolved {
        curves: manifest_path.clone(),
        entries: manifest.curves.clone(),
        knots: args.knots.or(section.knots).unwrap_or(defaults.knots),
        omega_min_hz: args
            .omega_min_hz
            .or(section.omega_min_hz)
            .unwrap_or(defaults.omega_range.0 / (2.0 * PI)),
        omega_max_hz: args
            .omega_max_hz
            .or(section.omega_max_hz)
            .unwrap_or(defaults.omega_range.1 / (2.0 * PI)),
        starts: args.starts.or(section.starts).unwrap_or(defaults.starts),
        max_evals: args
            .max_evals
            .or(section.max_evals)
            .unwrap_or(defaults.max_evals),
        smoothness: args
            .smoothness
            .or(section.smoothness)
            .unwrap_or(defaults.smoothness),
        spectrum_samples: args
            .spectrum_samples
            .or(section.spectrum_samples)
            .unwrap_or(200),
        seed: run.seed,
    };
    let opts = SpectrumFitOptions {
        knots: resolved.knots,
        omega_range: (
            2.0 * PI * resolved.omega_min_hz,
            2.0 * PI * resolved.omega_max_hz,
        ),
        seed: resolved.seed,
        starts: resolved.starts,
        max_evals: resolved.max_evals,
        smoothness: resolved.smoothness,
        ..defaults
    };

    let fit = fit_spectrum_with(&curves, &opts)?;
    if !fit.spectrum_constrained {
        warn!("the curves show no decay; the fitted spectrum is unconstrained");
    }
    out.write_bytes(
        "spectrum_fit.json",
        format!("{}\n", fit.to_json()?).as_bytes(),
    )?;
    out.write_with("spectrum.csv", |w| {
        fit.write_spectrum_csv(w, resolved.spectrum_samples)
    })?;
    println!(
        "spectrum: residual {:.4}, dof {}, mid-band slope {:.3}",
        fit.residual,
        fit.dof,
        fit.mid_band_slope()
    );

    let mut table = String::from("label,n,tau_c_s,uncertainty_s,stretch,normalization,status\n");
    let mut families: BTreeMap<String, Vec<(usize, f64, f64)>> = BTreeMap::new();
    for curve in &curves {
        match fit_coherence_time_full(curve) {
            Ok(t) => {
                table.push_str(&format!(
                    "{},{},{},{},{},{},ok\n",
                    curve.label(),
                    curve.n(),
                    t.tau_c,
                    t.uncertainty,
                    t.stretch,
                    t.normalization
                ));
                families
                    .entry(family_of(curve.label()).to_string())
                    .or_default()
                    .push((curve.n(), t.tau_c, t.uncertainty));
                println!("{}: tau_c = {:.6e} s", curve.label(), t.tau_c);
            }
            Err(e) if e.is_numerical() => {
                warn!("{}: {e}", curve.label());
                table.push_str(&format!(
                    "{},{},,,,,{}\n",
                    curve.label(),
                    curve.n(),
                    status_of(&e)
                ));
            }
            Err(e) => return Err(e.into()),
        }
    }
    out.write_bytes("tau_c.csv", table.as_bytes())?;

    let mut scaling = BTreeMap::new();
    for (family, mut points) in families {
        points.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        if points.len() < 3 {
            continue;
        }
        match linear_scaling_report(&points) {
            Ok(report) => {
                println!(
                    "{family}: tau_c = {:.4e} n + {:.4e} s, R^2 {:.4}",
                    report.slope, report.intercept, report.r_squared
                );
                scaling.insert(
                    family,
                    FamilyScaling {
                        pulse_counts: points.iter().map(|p| p.0).collect(),
                        report,
                    },
                );
            }
            Err(e) => warn!("{family}: no scaling report ({e})"),
        }
    }
    out.write_json("scaling.json", &scaling)?;

    Ok(to_value(&resolved))
}

fn load_curve(base: &Path, entry: &CurveEntry) -> CliResult<CoherenceCurve> {
    let path = base.join(&entry.file);
    let file = File::open(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(CoherenceCurve::read_csv(
        file,
        entry.sequence.clone(),
        entry.source,
    )?)
}

/// `udd-4` -> `udd`; anything without a count is its own family.
fn family_of(label: &str) -> &str {
    match label.rsplit_once('-') {
        Some((family, count)) if count.parse::<usize>().is_ok() => family,
        _ => label,
    }
}

fn status_of(e: &decouple_core::Error) -> &'static str {
    match e {
        decouple_core::Error::InsufficientDecay(_) => "insufficient_decay",
        _ => "no_convergence",
    }
}

#[cfg(test)]
mod tests {
    use super::family_of;

    #[test]
    fn families() {
        assert_eq!(family_of("udd-12"), "udd");
        assert_eq!(family_of("cpmg-1"), "cpmg");
        assert_eq!(family_of("ramsey"), "ramsey");
        assert_eq!(family_of("solved-6"), "solved");
        assert_eq!(family_of("my-seq"), "my-seq");
    }
}
