use std::f64::consts::PI;

use decouple_core::dephasing::FilterKernel;
use decouple_core::montecarlo::{evolve_bloch, evolve_bloch_vector, PulseParams};
use decouple_core::sequences::{
    chebyshev_u_roots_unit, cpmg_times, max_cancellation_residual, mirrored, phase_error, udd_times,
};
use decouple_core::{chi, DriftPolynomial, NoiseSpectrum, NoiseTrajectory, PulseSequence};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Strictly increasing interior timings with gaps of at least `1e-3`.
fn timings(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3..1.0f64, 1..=max_n).prop_map(|raw| {
        let total: f64 = raw.iter().sum::<f64>() + 0.5;
        let mut t = 0.0;
        raw.iter()
            .map(|g| {
                t += g / total;
                t
            })
            .collect()
    })
}

/// `int_0^1 s(t) delta(t) dt` by composite Simpson on each sign segment.
fn phase_error_numeric(alphas: &[f64], poly: &DriftPolynomial) -> f64 {
    let mut edges = vec![0.0];
    edges.extend_from_slice(alphas);
    edges.push(1.0);
    let mut total = 0.0;
    for (k, w) in edges.windows(2).enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let m = 2000;
        let h = (w[1] - w[0]) / m as f64;
        let mut acc = poly.eval(w[0]) + poly.eval(w[1]);
        for i in 1..m {
            acc += poly.eval(w[0] + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        total += sign * acc * h / 3.0;
    }
    total
}

#[test]
fn udd_closed_form_cancels_through_twenty() {
    for n in 1..=20 {
        let r = max_cancellation_residual(&udd_times(n).unwrap());
        assert!(r < 1e-12, "n = {n}: {r:e}");
    }
}

#[test]
fn udd_times_are_chebyshev_roots() {
    for n in 1..=12 {
        let udd = udd_times(n).unwrap();
        let roots = chebyshev_u_roots_unit(n);
        for (a, b) in udd.iter().zip(&roots) {
            assert!((a - b).abs() < 1e-10, "n = {n}");
        }
    }
}

#[test]
fn monomial_of_degree_n_survives() {
    for n in 1..=8 {
        let e = phase_error(&udd_times(n).unwrap(), &DriftPolynomial::monomial(n));
        assert!(e.abs() > 0.0, "n = {n}");
        // first uncancelled moment of the Uhrig sequence
        assert!(
            (e.abs() - 4f64.powi(-(n as i32))).abs() < 1e-12,
            "n = {n}: {e:e}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn timings_are_mirror_symmetric(n in 1usize..60) {
        for times in [udd_times(n).unwrap(), cpmg_times(n).unwrap()] {
            for i in 0..n {
                prop_assert!((times[i] + times[n - 1 - i] - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn udd_cancels_lower_degree_drifts(
        (n, coeffs) in (1usize..=8).prop_flat_map(|n| (Just(n), prop::collection::vec(-1.0..1.0f64, n)))
    ) {
        let poly = DriftPolynomial::new(coeffs).unwrap();
        let e = phase_error(&udd_times(n).unwrap(), &poly);
        prop_assert!(e.abs() < 1e-10, "n = {}: {:e}", n, e);
    }

    #[test]
    fn phase_error_matches_quadrature(
        alphas in timings(6),
        coeffs in prop::collection::vec(-1.0..1.0f64, 1..=6),
    ) {
        let poly = DriftPolynomial::new(coeffs).unwrap();
        let exact = phase_error(&alphas, &poly);
        let numeric = phase_error_numeric(&alphas, &poly);
        prop_assert!((exact - numeric).abs() <= 1e-6 * exact.abs() + 1e-10, "{} vs {}", exact, numeric);
    }

    #[test]
    fn filter_is_non_negative_and_vanishes_at_dc(alphas in timings(12), x in 0.0..400.0f64) {
        let k = FilterKernel::instantaneous(&alphas).unwrap();
        prop_assert!(k.eval(x) >= 0.0);
        prop_assert!(k.eval(0.0).abs() < 1e-20);
    }

    #[test]
    fn filter_is_mirror_invariant(alphas in timings(12), x in 0.0..400.0f64) {
        let a = FilterKernel::instantaneous(&alphas).unwrap().eval(x);
        let b = FilterKernel::instantaneous(&mirrored(&alphas)).unwrap().eval(x);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn hahn_echo_cancels_constant_offsets(delta in -1e5..1e5f64) {
        let params = PulseParams::ideal();
        let seq = PulseSequence::udd(1, 1e-3, 0.0).unwrap();
        let traj = NoiseTrajectory::constant(delta, 1e-6, 1e-3).unwrap();
        let quiet = NoiseTrajectory::constant(0.0, 1e-6, 1e-3).unwrap();
        let p = evolve_bloch(&seq, &params, &traj, 0.9).unwrap();
        let q = evolve_bloch(&seq, &params, &quiet, 0.9).unwrap();
        prop_assert!((p - q).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chi_is_linear_in_the_spectrum(
        a in 0.0..5.0f64,
        b in 0.0..5.0f64,
        n in 0usize..6,
        tau in 1e-4..1e-2f64,
    ) {
        let s1 = NoiseSpectrum::White { s0: 300.0, omega_max: Some(2.0 * PI * 2e4) };
        let s2 = NoiseSpectrum::lorentzian(4e5, 2.0 * PI * 300.0).unwrap();
        let seq = if n == 0 { PulseSequence::ramsey(tau).unwrap() } else { PulseSequence::udd(n, tau, 0.0).unwrap() };
        let mixed = chi(&seq, tau, &NoiseSpectrum::combine(a, s1.clone(), b, s2.clone())).unwrap();
        let parts = a * chi(&seq, tau, &s1).unwrap() + b * chi(&seq, tau, &s2).unwrap();
        prop_assert!((mixed - parts).abs() <= 1e-5 * parts.abs() + 1e-12, "{} vs {}", mixed, parts);
    }

    #[test]
    fn bloch_vector_stays_normalized(
        seed in any::<u64>(),
        n in 0usize..8,
        phase in -PI..PI,
        finite in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dt, tau) = (1e-6, 1e-3);
        let params = if finite { PulseParams::default() } else { PulseParams::ideal() };
        let d = params.pi_duration();
        let seq = if n == 0 { PulseSequence::ramsey(tau).unwrap() } else { PulseSequence::cpmg(n, tau, d).unwrap() };
        let count = (params.shot_duration(tau) / dt).ceil() as usize + 1;
        let samples = (0..count).map(|_| rng.gen_range(-2e4..2e4)).collect();
        let traj = NoiseTrajectory::new(dt, samples, seed).unwrap();
        let r = evolve_bloch_vector(&seq, &params, &traj, phase).unwrap();
        let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        let tol = if finite { 1e-6 } else { 1e-9 };
        prop_assert!((norm - 1.0).abs() < tol, "norm {}", norm);
    }
}
