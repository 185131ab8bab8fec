use std::path::PathBuf;

use clap::Args;
use decouple_core::dephasing::{
    coherence_time, min_feasible_tau, write_coherence_csv, write_filter_csv, FilterEvaluation,
    FilterKernel,
};
use decouple_core::{chi, CoherenceModel, NoiseSpectrum, PulseSequence};
use log::warn;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::{log_space, tau_grid, FileConfig, SequenceSource, SpectrumSource};
use crate::error::{CliError, CliResult};
use crate::output::{to_value, OutputDir, RunInfo};

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Sequence JSON file, or `ramsey`, `udd:<n>`, `cpmg:<n>`.
    #[arg(long)]
    pub sequence: Option<String>,
    /// Noise spectrum JSON file.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    /// Contrast at zero delay.
    #[arg(long)]
    pub normalization: Option<f64>,
    /// Explicit tau values in seconds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    /// Lower end of a log-spaced tau grid, seconds.
    #[arg(long)]
    pub tau_min: Option<f64>,
    /// Upper end of the tau grid, seconds.
    #[arg(long)]
    pub tau_max: Option<f64>,
    /// Number of tau grid points.
    #[arg(long)]
    pub tau_points: Option<usize>,
    /// Samples of the filter function written to filter.csv.
    #[arg(long)]
    pub filter_points: Option<usize>,
    /// Upper end of the filter dump in units of `w tau`.
    #[arg(long)]
    pub filter_x_max: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    sequence: PulseSequence,
    spectrum: NoiseSpectrum,
    normalization: f64,
    taus_s: Vec<f64>,
    filter_points: usize,
    filter_x_max: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    label: String,
    n: usize,
    normalization: f64,
    /// `None` when chi never reaches 1.
    tau_c_s: Option<f64>,
}

/// Default grid when none is given: a decade either side of `tau_c`.
const AUTO_SPAN: f64 = 10.0;
const AUTO_POINTS: usize = 41;

pub fn run(
    args: PredictArgs,
    cfg: &FileConfig,
    out: &mut OutputDir,
    _run: &RunInfo,
) -> CliResult<Value> {
    let section = &cfg.predict;
    let sequence = match args.sequence {
        Some(s) => SequenceSource::Named(s),
        None => section
            .sequence
            .clone()
            .ok_or_else(|| CliError::usage("--sequence is required"))?,
    }
    .resolve()?;
    let spectrum = match args.spectrum {
        Some(p) => SpectrumSource::Path(p),
        None => section
            .spectrum
            .clone()
            .ok_or_else(|| CliError::usage("--spectrum is required"))?,
    }
    .resolve()?;
    let normalization = args.normalization.or(section.normalization).unwrap_or(1.0);
    let model = CoherenceModel::new(normalization, sequence.clone(), spectrum.clone())?;

    let tau_c = match coherence_time(&model) {
        Ok(t) => Some(t),
        Err(e) if e.is_numerical() => {
            warn!("no 1/e time: {e}");
            None
        }
        Err(e) => return Err(e.into()),
    };

    let tau_points = args.tau_points.or(section.tau_points);
    let grid = tau_grid(
        args.taus.or(section.taus_s.clone()),
        args.tau_min.or(section.tau_min_s),
        args.tau_max.or(section.tau_max_s),
        tau_points,
    )?;
    let taus = match (grid, tau_c) {
        (Some(g), _) => g,
        (None, Some(tc)) => {
            let floor = min_feasible_tau(&sequence.alphas, sequence.pulse_duration) * 1.01;
            log_space(
                (tc / AUTO_SPAN).max(floor),
                tc * AUTO_SPAN,
                tau_points.unwrap_or(AUTO_POINTS).max(2),
            )
        }
        (None, None) => {
            return Err(CliError::usage(
                "the spectrum gives no 1/e time; pass --taus or --tau-min/--tau-max",
            ))
        }
    };

    let rows: Vec<(f64, f64, f64)> = taus
        .par_iter()
        .map(|&t| {
            let x = chi(&sequence.with_tau(t)?, t, &spectrum)?;
            Ok((t, normalization * (-x).exp(), x))
        })
        .collect::<decouple_core::Result<_>>()?;
    out.write_with("coherence.csv", |w| write_coherence_csv(w, &rows))?;

    let filter_points = args
        .filter_points
        .or(section.filter_points)
        .unwrap_or(1000)
        .max(2);
    let filter_x_max = args
        .filter_x_max
        .or(section.filter_x_max)
        .unwrap_or(8.0 * std::f64::consts::PI * (sequence.n + 1) as f64);
    if !(filter_x_max > 0.0) {
        return Err(CliError::usage("filter-x-max must be positive"));
    }
    let kernel = FilterKernel::for_sequence(&sequence, sequence.tau)?;
    let filter: Vec<FilterEvaluation> = (0..filter_points)
        .map(|i| {
            let x = filter_x_max * i as f64 / (filter_points - 1) as f64;
            FilterEvaluation {
                x,
                value: kernel.eval(x),
            }
        })
        .collect();
    out.write_with("filter.csv", |w| write_filter_csv(w, &filter))?;

    let summary = Summary {
        label: sequence.label.clone(),
        n: sequence.n,
        normalization,
        tau_c_s: tau_c,
    };
    out.write_json("summary.json", &summary)?;
    match tau_c {
        Some(t) => println!("{}: tau_c = {:.6e} s", summary.label, t),
        None => println!("{}: no 1/e crossing", summary.label),
    }

    Ok(to_value(&Resolved {
        sequence,
        spectrum,
        normalization,
        taus_s: taus,
        filter_points,
        filter_x_max,
    }))
}
