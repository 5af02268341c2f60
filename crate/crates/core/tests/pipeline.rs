//! End-to-end runs through sampler, solver and estimator against closed forms.

use num_complex::Complex64;
use stablesde::sde_solver::{NoiseDriver, PathSimulator};
use stablesde::stats::ecf;
use stablesde::weak_error::{estimate_weak_error_with, terminal_component_samples, Pairing, WeakErrorOptions};
use stablesde::{
    generator_calculus::TestFunction, CoefficientField, CylindricalNoiseSpec, IncrementSamplerMode, RngStreamKey,
    TimeGrid,
};

/// For pure noise `X_T = x0 + L_T`, so `E exp(iξ X_T) = exp(iξ x0 + T ψ(ξ))`.
#[test]
fn pure_noise_terminal_law_matches_characteristic_function() {
    let coeffs = CoefficientField::pure_noise(1).unwrap();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let x0 = 0.3;
    for (alpha, beta) in [(1.6, 0.5), (1.9, -0.9)] {
        let noise = CylindricalNoiseSpec::new(alpha, &[beta]).unwrap();
        let psi = |xi: f64| noise.components()[0].characteristic_exponent(xi);
        for mode in [IncrementSamplerMode::ExactTransform, IncrementSamplerMode::default_decomposition()] {
            let sim = PathSimulator::new(&coeffs, &NoiseDriver::Stable { noise: noise.clone(), mode }, grid, false).unwrap();
            let samples = terminal_component_samples(&sim, &[x0], 0, 20_000, RngStreamKey::new(3, 1)).unwrap();
            assert_eq!(samples.len(), 20_000);
            for xi in [0.5, 1.0, 2.0] {
                let want = (Complex64::new(0.0, xi * x0) + psi(xi) * grid.horizon()).exp();
                let got = ecf(&samples, xi);
                let (zr, zi) = ((got.value.re - want.re) / got.se_re, (got.value.im - want.im) / got.se_im);
                assert!(zr.abs() < 4.5 && zi.abs() < 4.5, "{alpha} {beta} {mode:?} xi={xi}: z=({zr:.2}, {zi:.2})");
            }
        }
    }
}

/// Weak error for pure noise and `f = cos` is `Re e^{i x0} (e^{Tψ(1)} − e^{−T})`.
#[test]
fn pure_noise_weak_error_matches_closed_form() {
    let coeffs = CoefficientField::pure_noise(1).unwrap();
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let f = TestFunction::cosine(&[1.0], 0.0).unwrap();
    let x0 = 0.5;
    for pairing in [Pairing::Coupled, Pairing::Independent] {
        let noise = CylindricalNoiseSpec::new(1.7, &[0.8]).unwrap();
        let psi = noise.components()[0].characteristic_exponent(1.0);
        let phase = Complex64::new(0.0, x0).exp();
        let want = (phase * ((psi * grid.horizon()).exp() - (-grid.horizon()).exp())).re;
        let p = estimate_weak_error_with(
            &coeffs,
            &noise,
            &f,
            grid,
            &[x0],
            40_000,
            IncrementSamplerMode::ExactTransform,
            RngStreamKey::new(5, 2),
            WeakErrorOptions { pairing, taming: false },
        )
        .unwrap();
        assert!(p.is_valid());
        assert!((p.estimate - want).abs() < 4.5 * p.std_error, "{pairing:?}: {} vs {want} (se {})", p.estimate, p.std_error);
    }
}

#[test]
fn ensembles_do_not_depend_on_thread_count() {
    let coeffs = CoefficientField::bounded_smooth(2).unwrap();
    let noise = CylindricalNoiseSpec::new(1.8, &[0.3, -0.6]).unwrap();
    let driver = NoiseDriver::Stable {
        noise,
        mode: IncrementSamplerMode::default_decomposition(),
    };
    let sim = PathSimulator::new(&coeffs, &driver, TimeGrid::new(1.0, 32).unwrap(), false).unwrap();
    let draw = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| terminal_component_samples(&sim, &[0.1, -0.2], 1, 3_000, RngStreamKey::new(9, 4)).unwrap())
    };
    let one = draw(1);
    for threads in [2, 5] {
        let other = draw(threads);
        assert!(one.iter().zip(&other).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn recorded_path_ends_at_terminal_state() {
    let coeffs = CoefficientField::ou_type(1).unwrap();
    let noise = CylindricalNoiseSpec::new(1.75, &[0.2]).unwrap();
    let driver = NoiseDriver::Stable {
        noise,
        mode: IncrementSamplerMode::ExactTransform,
    };
    let sim = PathSimulator::new(&coeffs, &driver, TimeGrid::new(2.0, 50).unwrap(), false).unwrap();
    let key = RngStreamKey::new(1, 1).derive(17);
    let path = sim.path(&[0.4], key).unwrap();
    let mut ws = sim.workspace();
    sim.terminal(&[0.4], key, &mut ws).unwrap();
    assert_eq!(path.len(), 51);
    assert_eq!(path.state(0), &[0.4]);
    assert_eq!(path.terminal(), ws.state());
}
