use std::f64::consts::{E, PI};

use decouple_core::dephasing::{coherence_time, CoherenceModel};
use decouple_core::montecarlo::{
    coherence_curve_mc, default_phases, fit_fringe, fit_fringe_with, ramsey_fringe,
    CurveSimulation, FringeDataset, FringeFitOptions, FringePoint, PulseParams,
};
use decouple_core::spectroscopy::fit_coherence_time;
use decouple_core::{chi, NoiseSpectrum, PulseSequence};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

#[test]
fn ou_ramsey_at_the_analytic_one_over_e_point() {
    let spectrum =
        NoiseSpectrum::lorentzian((2.0 * PI * 400.0f64).powi(2), 2.0 * PI * 500.0).unwrap();
    let model =
        CoherenceModel::new(1.0, PulseSequence::ramsey(1e-3).unwrap(), spectrum.clone()).unwrap();
    let tau = coherence_time(&model).unwrap();
    let seq = PulseSequence::ramsey(tau).unwrap();
    let fringe = ramsey_fringe(
        &seq,
        &PulseParams::ideal(),
        &spectrum,
        &default_phases(20),
        500,
        17,
    )
    .unwrap();
    let est = fit_fringe(&fringe).unwrap();
    assert!(
        (est.contrast - 1.0 / E).abs() < 3.0 * est.uncertainty,
        "{} +- {}",
        est.contrast,
        est.uncertainty
    );
}

#[test]
fn bootstrap_error_matches_repeated_experiments() {
    let phases = default_phases(20);
    let truth = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut contrasts = Vec::new();
    let mut sigmas = Vec::new();
    let mut within = 0;
    for rep in 0..200u64 {
        let points = phases
            .iter()
            .map(|&phi| {
                let p = 0.5 * (1.0 + truth * (phi + 0.3).cos());
                FringePoint {
                    phase: phi,
                    successes: Binomial::new(200, p).unwrap().sample(&mut rng),
                    trials: 200,
                }
            })
            .collect();
        let ds = FringeDataset::new(points, 1e-3, "synthetic").unwrap();
        let est = fit_fringe_with(
            &ds,
            &FringeFitOptions {
                n_bootstrap: 500,
                seed: rep,
            },
        )
        .unwrap();
        if (est.contrast - truth).abs() <= 3.0 * est.uncertainty {
            within += 1;
        }
        contrasts.push(est.contrast);
        sigmas.push(est.uncertainty);
    }
    let m = contrasts.len() as f64;
    let mean = contrasts.iter().sum::<f64>() / m;
    let spread = (contrasts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let boot = sigmas.iter().sum::<f64>() / m;
    assert!(within >= 195, "{within}/200 within 3 sigma");
    assert!(
        (boot / spread - 1.0).abs() < 0.3,
        "bootstrap {boot} vs repeated {spread}"
    );
}

#[test]
fn white_noise_ramsey_curve_gives_two_over_s0() {
    let s0 = 2000.0;
    let spectrum = NoiseSpectrum::White {
        s0,
        omega_max: Some(2.0 * PI * 2e5),
    };
    let sim = CurveSimulation {
        shots_per_phase: 200,
        seed: 5,
        ..Default::default()
    };
    let taus = log_grid(2e-4, 3e-3, 10);
    let (curve, _) = coherence_curve_mc(
        &PulseSequence::ramsey(1e-3).unwrap(),
        &PulseParams::ideal(),
        &spectrum,
        &taus,
        &sim,
    )
    .unwrap();
    let (tau_c, _) = fit_coherence_time(&curve).unwrap();
    assert!((tau_c * s0 / 2.0 - 1.0).abs() < 0.1, "{tau_c}");
}

#[test]
fn half_millisecond_ramsey_with_finite_pulses() {
    // S0 for a 0.51 ms Ramsey 1/e time
    let s0 = 2.0 / 0.51e-3;
    let spectrum = NoiseSpectrum::White {
        s0,
        omega_max: Some(2.0 * PI * 1e5),
    };
    let sim = CurveSimulation {
        seed: 51,
        ..Default::default()
    };
    let taus = log_grid(1e-4, 1.5e-3, 10);
    let (curve, _) = coherence_curve_mc(
        &PulseSequence::ramsey(1e-3).unwrap(),
        &PulseParams::default(),
        &spectrum,
        &taus,
        &sim,
    )
    .unwrap();
    let (tau_c, _) = fit_coherence_time(&curve).unwrap();
    assert!((tau_c / 0.51e-3 - 1.0).abs() < 0.1, "{tau_c}");
}

#[test]
fn zero_noise_curve_sits_at_the_readout_floor() {
    let params = PulseParams::default();
    let sim = CurveSimulation {
        seed: 8,
        ..Default::default()
    };
    let (curve, _) = coherence_curve_mc(
        &PulseSequence::udd(4, 1e-3, 0.0).unwrap(),
        &params,
        &NoiseSpectrum::zero(),
        &[5e-4, 1e-3, 4e-3],
        &sim,
    )
    .unwrap();
    let floor = 1.0 - 2.0 * params.readout_error;
    for p in &curve.points {
        assert!(
            (p.contrast - floor).abs() <= 3.0 * p.uncertainty + 5e-3,
            "{p:?}"
        );
    }
}

#[test]
fn udd6_outlasts_udd3_under_steep_noise() {
    let spectrum = NoiseSpectrum::power_law(4.7e12, 4.0, 2.0 * PI * 10.0, 2.0 * PI * 1e5).unwrap();
    let params = PulseParams::ideal();
    let sim = CurveSimulation {
        shots_per_phase: 200,
        seed: 36,
        ..Default::default()
    };
    let taus = log_grid(1.2e-2, 3e-2, 4);
    let udd = |n: usize| {
        let seq = PulseSequence::udd(n, 1e-3, 0.0).unwrap();
        if n == 3 {
            for &t in &taus {
                let c = (-chi(&seq.with_tau(t).unwrap(), t, &spectrum).unwrap()).exp();
                assert!(c < 0.97, "tau {t} is still on the plateau");
            }
        }
        coherence_curve_mc(&seq, &params, &spectrum, &taus, &sim)
            .unwrap()
            .0
    };
    let (three, six) = (udd(3), udd(6));
    for (a, b) in three.points.iter().zip(&six.points) {
        assert!(
            b.contrast > a.contrast,
            "tau {}: UDD-6 {} vs UDD-3 {}",
            a.tau,
            b.contrast,
            a.contrast
        );
    }
}
