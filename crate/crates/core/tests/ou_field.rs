use std::sync::Arc;

use oulab::ou_field::{structure_function, structure_function_exact, FieldState, StepIntegrals};
use oulab::spectra::{build_modeset, ExponentChoice, ModeSet, SpectrumParams};
use proptest::prelude::*;

fn modeset(shells: usize, dirs: usize) -> Arc<ModeSet> {
    Arc::new(build_modeset(&SpectrumParams::default(), ExponentChoice::Base, shells, dirs).unwrap())
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m2 = v.iter().map(|x| x * x).sum::<f64>() / n;
    let m4 = v.iter().map(|x| x.powi(4)).sum::<f64>() / n;
    (m2, m4)
}

#[test]
fn velocity_component_is_gaussian() {
    let ms = modeset(12, 4);
    let n = 20_000;
    let samples: Vec<f64> = (0..n)
        .map(|s| FieldState::init_stationary(Arc::clone(&ms), 1.0, s).unwrap().eval_velocity(&[0.4, -1.2])[0])
        .collect();
    let (m2, m4) = moments(&samples);
    // var(x^4) = 105 s^8 - 9 s^8 for a gaussian
    let se = (96.0f64).sqrt() * m2 * m2 / (n as f64).sqrt();
    assert!((m4 - 3.0 * m2 * m2).abs() < 4.0 * se, "m4 {m4}, 3 m2^2 {}", 3.0 * m2 * m2);
    let var = ms.total_variance() / 2.0;
    assert!((m2 - var).abs() < 4.0 * var * (2.0 / n as f64).sqrt());
}

#[test]
fn structure_function_zero_separation_is_zero() {
    let ms = modeset(8, 4);
    let est = structure_function(&ms, &[0.3, 0.1], &[0.0, 0.0], 0.5, 10, 1).unwrap();
    assert!(est.mean.data().iter().all(|&v| v == 0.0));
}

#[test]
fn structure_function_matches_mode_sum() {
    let ms = modeset(12, 4);
    for (r, tau) in [([0.5, 0.2], 0.0), ([1.5, -0.7], 1.0), ([4.0, 0.0], 3.0)] {
        let est = structure_function(&ms, &[0.2, 0.9], &r, tau, 10_000, 17).unwrap();
        let exact = structure_function_exact(&ms, &r, tau);
        for i in 0..2 {
            for j in 0..2 {
                let se = est.stderr.get(i, j);
                assert!(
                    (est.mean.get(i, j) - exact.get(i, j)).abs() < 4.0 * se + 1e-15,
                    "r {r:?} tau {tau}: {} vs {} (se {se})",
                    est.mean.get(i, j),
                    exact.get(i, j)
                );
            }
        }
    }
}

#[test]
fn far_separation_decorrelates() {
    let ms = modeset(12, 4);
    let est = structure_function(&ms, &[0.0, 0.0], &[5000.0, 3000.0], 0.0, 10_000, 5).unwrap();
    let c0 = ms.covariance(&[0.0, 0.0]);
    for i in 0..2 {
        let want = 2.0 * c0.get(i, i);
        assert!((est.mean.get(i, i) - want).abs() < 4.0 * est.stderr.get(i, i) + 0.02 * want);
    }
}

#[test]
fn step_integrals_scale_with_epsilon() {
    let ms = modeset(6, 4);
    let eps = 0.2;
    let mut fast = FieldState::init_stationary(Arc::clone(&ms), eps, 9).unwrap();
    let mut slow = FieldState::init_stationary(Arc::clone(&ms), 1.0, 9).unwrap();
    let (mut a, mut b) = (StepIntegrals::default(), StepIntegrals::default());
    for _ in 0..5 {
        fast.advance_integrated(0.01, &mut a);
        slow.advance_integrated(0.01 / (eps * eps), &mut b);
        for j in 0..ms.len() {
            assert!((a.xi[j] - eps * b.xi[j]).abs() < 1e-12 * (1.0 + b.xi[j].abs()));
            assert!((a.eta[j] - eps * b.eta[j]).abs() < 1e-12 * (1.0 + b.eta[j].abs()));
        }
        assert_eq!(fast.xi(), slow.xi());
        let x = [0.7, 0.1];
        let (u, v) = (fast.eval_velocity(&x), slow.eval_velocity(&x));
        for c in 0..2 {
            assert!((u[c] - v[c] / eps).abs() < 1e-12 * (1.0 + u[c].abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Exact transitions keep N(0,1) amplitudes for any step sequence.
    #[test]
    fn stationary_for_any_steps(steps in proptest::collection::vec(1e-4f64..5.0, 1..20), seed in 0u64..1000) {
        let ms = Arc::new(build_modeset(&SpectrumParams::default(), ExponentChoice::Base, 250, 10).unwrap());
        let mut f = FieldState::init_stationary(ms, 0.5, seed).unwrap();
        for dt in steps {
            f.advance(dt);
        }
        let all: Vec<f64> = f.xi().iter().chain(f.eta()).copied().collect();
        let (m2, _) = moments(&all);
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let n = all.len() as f64;
        prop_assert!((m2 - 1.0).abs() < 5.0 * (2.0 / n).sqrt());
        prop_assert!(mean.abs() < 5.0 / n.sqrt());
    }
}
