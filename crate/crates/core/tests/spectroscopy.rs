use std::f64::consts::PI;

use decouple_core::dephasing::{coherence_time, CoherenceModel};
use decouple_core::spectroscopy::{
    fit_spectrum_with, linear_scaling_report, CoherenceCurve, CurveSource, SpectrumFitOptions,
};
use decouple_core::{chi, NoiseSpectrum, PulseSequence};

fn cpmg(n: usize) -> PulseSequence {
    if n == 0 {
        PulseSequence::ramsey(1e-3).unwrap()
    } else {
        PulseSequence::cpmg(n, 1e-3, 0.0).unwrap()
    }
}

fn tau_c(seq: &PulseSequence, spectrum: &NoiseSpectrum) -> f64 {
    coherence_time(&CoherenceModel::new(1.0, seq.clone(), spectrum.clone()).unwrap()).unwrap()
}

/// Ten noiseless points from 0.3 to about 2.2 tau_c with 1% error bars.
fn analytic_curve(seq: PulseSequence, spectrum: &NoiseSpectrum, scale: f64) -> CoherenceCurve {
    let tc = tau_c(&seq, spectrum);
    let points = (0..10)
        .map(|i| {
            let t = tc * 0.3 * 1.25f64.powi(i);
            let c = chi(&seq.with_tau(t).unwrap(), t, spectrum).unwrap();
            (t, scale * (-c).exp(), 0.01)
        })
        .collect();
    CoherenceCurve::new(points, seq, CurveSource::Simulated).unwrap()
}

const EDGE: f64 = 2.0 * PI * 50.0;

/// omega^-4 noise scaled to a 1 ms Ramsey time. Its infrared edge dominates every curve,
/// so it sits inside the sensitive band.
fn steep() -> NoiseSpectrum {
    let raw = NoiseSpectrum::power_law(1.0, 4.0, EDGE, 2.0 * PI * 1e5).unwrap();
    let c = chi(&cpmg(0), 1e-3, &raw).unwrap();
    raw.scaled(1.0 / c)
}

fn fit_options() -> SpectrumFitOptions {
    SpectrumFitOptions {
        knots: 10,
        omega_range: (2.0 * PI * 10.0, 2.0 * PI * 5e5),
        ..Default::default()
    }
}

#[test]
fn white_ramsey_tau_c_and_amplitude_scaling() {
    let s0 = 800.0;
    let seq = PulseSequence::ramsey(1e-3).unwrap();
    let one = tau_c(&seq, &NoiseSpectrum::white(s0));
    let four = tau_c(&seq, &NoiseSpectrum::white(4.0 * s0));
    assert!((one * s0 / 2.0 - 1.0).abs() < 1e-4, "{one}");
    assert!((one / four - 4.0).abs() < 1e-3);
}

#[test]
fn cpmg_tau_c_grows_with_n_and_is_nearly_linear() {
    let spectrum = steep();
    let times: Vec<f64> = (1..=12).map(|n| tau_c(&cpmg(n), &spectrum)).collect();
    assert!(times.windows(2).all(|w| w[1] > w[0]), "{times:?}");
    let line: Vec<(usize, f64, f64)> = (2..=12).map(|n| (n, times[n - 1], 0.0)).collect();
    let report = linear_scaling_report(&line).unwrap();
    assert!(report.r_squared >= 0.98, "{report:?}");
}

#[test]
fn recovers_steep_spectrum_and_predicts_long_sequences() {
    let spectrum = steep();
    let curves: Vec<CoherenceCurve> = [0, 1, 4, 8, 16]
        .into_iter()
        .map(|n| analytic_curve(cpmg(n), &spectrum, 1.0))
        .collect();
    let fit = fit_spectrum_with(&curves, &fit_options()).unwrap();
    let slope = fit.mid_band_slope();
    assert!((slope + 4.0).abs() <= 0.5, "slope {slope}");
    assert!(
        fit.normalizations.iter().all(|n| (n - 1.0).abs() < 0.02),
        "{:?}",
        fit.normalizations
    );

    // pointwise within a factor of 2 across the band, away from the hard edge a spline cannot follow
    let (lo, hi) = fit.sensitive_band;
    let lo = lo.max(2.0 * EDGE);
    let fitted = fit.spectrum();
    for k in 0..=8 {
        let w = lo * (hi / lo).powf(k as f64 / 8.0);
        let ratio = fitted.eval(w) / spectrum.eval(w);
        assert!(
            (0.5..=2.0).contains(&ratio),
            "{:.0} Hz: {ratio:.3}",
            w / (2.0 * PI)
        );
    }

    // held-out pulse count
    let held = cpmg(6);
    let rel = tau_c(&held, &fitted) / tau_c(&held, &spectrum) - 1.0;
    assert!(rel.abs() <= 0.25, "held-out CPMG-6 off by {rel:.3}");

    let u20 = tau_c(&PulseSequence::udd(20, 1e-3, 0.0).unwrap(), &fitted);
    let c20 = tau_c(&cpmg(20), &fitted);
    assert!(
        (u20 / c20 - 1.0).abs() <= 0.2,
        "UDD-20 {u20} vs CPMG-20 {c20}"
    );
}

#[test]
fn normalization_absorbs_uniform_loss() {
    let spectrum = steep();
    let build = |scale: f64| -> Vec<CoherenceCurve> {
        [0, 2, 8]
            .into_iter()
            .map(|n| analytic_curve(cpmg(n), &spectrum, scale))
            .collect()
    };
    let opts = SpectrumFitOptions {
        knots: 8,
        ..fit_options()
    };
    let full = fit_spectrum_with(&build(1.0), &opts).unwrap();
    let lossy = fit_spectrum_with(&build(0.9), &opts).unwrap();
    for (a, b) in full.normalizations.iter().zip(&lossy.normalizations) {
        assert!((b / a - 0.9).abs() < 0.01, "{a} -> {b}");
    }
    let (lo, hi) = full.sensitive_band;
    let lo = lo.max(2.0 * EDGE);
    for k in 0..=8 {
        let w = lo * (hi / lo).powf(k as f64 / 8.0);
        let ratio = lossy.spectrum().eval(w) / full.spectrum().eval(w);
        assert!(
            (ratio - 1.0).abs() < 0.1,
            "{:.0} Hz: {ratio:.3}",
            w / (2.0 * PI)
        );
    }
}
