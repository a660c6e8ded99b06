mod common;

use common::{random_cov_field, random_model, rel_diff};
use nalgebra::{DMatrix, Matrix2};
use ndarray::Array2;
use num_complex::Complex;
use onsep::model::{init_mixture_model, Level};
use onsep::offline::{e_step, m_step_spatial, m_step_spectral, xi_field};
use onsep::{stft, Adapt, AudioBuffer64, Floors, MixtureModel64, SeparationConfig, SourceModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FLOOR: f64 = 1e-12;

fn covariances(s: &SourceModel<f64>) -> Vec<Vec<Complex<f64>>> {
    let mut out = Vec::new();
    for f in 0..s.bins() {
        for n in 0..s.frames() {
            out.push(s.source_covariance(f, n, FLOOR).unwrap());
        }
    }
    out
}

fn worst_rel(a: &[Vec<Complex<f64>>], b: &[Vec<Complex<f64>>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let scale = y.iter().map(|v| v.norm()).fold(0.0, f64::max);
            x.iter().zip(y).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max) / scale
        })
        .fold(0.0, f64::max)
}

fn fixed_factors(m: &MixtureModel64) -> Vec<Array2<f64>> {
    let mut out = Vec::new();
    for s in &m.sources {
        for part in [&s.excitation, &s.filter] {
            for level in Level::ALL {
                let fm = part.factor(level);
                if !fm.is_free() {
                    out.push(fm.values().clone());
                }
            }
        }
    }
    out
}

fn min_eigenvalue_ratio(r: &[Complex<f64>]) -> f64 {
    let m = Matrix2::new(r[0], r[1], r[2], r[3]);
    let h = DMatrix::from_fn(4, 4, |a, b| {
        let z = m[(a % 2, b % 2)];
        match (a / 2, b / 2) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        }
    });
    let eig = h.symmetric_eigen().eigenvalues;
    eig.min() / (r[0].re + r[3].re)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn normalize_preserves_source_covariances(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = random_model(&mut rng, 6, 5, 2, 2);
        m.sources[0].excitation.w = onsep::FactorMatrix::free(m.sources[0].excitation.w.values() * scale).unwrap();
        let before: Vec<_> = m.sources.iter().map(covariances).collect();
        m.normalize().unwrap();
        for (s, b) in m.sources.iter().zip(&before) {
            prop_assert!(worst_rel(&covariances(s), b) < 1e-10);
        }
    }

    #[test]
    fn normalize_is_idempotent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = random_model(&mut rng, 5, 4, 2, 3);
        m.normalize().unwrap();
        let once = m.clone();
        let factors = m.normalize().unwrap();
        for f in &factors {
            prop_assert!((f.product() - 1.0).abs() < 1e-12);
        }
        for (a, b) in m.sources.iter().zip(&once.sources) {
            prop_assert!(rel_diff(&a.filter.g.values().clone(), &b.filter.g.values().clone()) < 1e-12);
            prop_assert!(rel_diff(&a.excitation.w.values().clone(), &b.excitation.w.values().clone()) < 1e-12);
        }
    }

    #[test]
    fn fixed_factors_survive_updates_bit_for_bit(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = random_model(&mut rng, 5, 4, 2, 2);
        let fixed = fixed_factors(&m);
        let rx_hat = random_cov_field(&mut rng, 5, 4, 2);
        let floors = Floors::default();
        for _ in 0..3 {
            let stats = e_step(&m, &rx_hat, &floors).unwrap();
            for (s, st) in m.sources.iter_mut().zip(&stats) {
                let v = s.spectral_variance(FLOOR).unwrap();
                s.spatial = m_step_spatial(s, &st.posterior, &v);
                let xi = xi_field(s, &st.posterior).unwrap();
                m_step_spectral(s, &xi, &floors);
            }
            m.normalize().unwrap();
            prop_assert_eq!(&fixed_factors(&m), &fixed);
        }
    }

    #[test]
    fn spatial_updates_stay_psd(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, 5, 4, 2, 2);
        let rx_hat = random_cov_field(&mut rng, 5, 4, 2);
        let stats = e_step(&m, &rx_hat, &Floors::default()).unwrap();
        for (s, st) in m.sources.iter().zip(&stats) {
            let r = m_step_spatial(s, &st.posterior, &s.spectral_variance(FLOOR).unwrap());
            for f in 0..r.bins() {
                prop_assert!(min_eigenvalue_ratio(r.get(f)) >= -1e-10);
            }
        }
    }
}

#[test]
fn scaled_excitation_moves_into_filter_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut m = random_model(&mut rng, 6, 5, 2, 1);
    m.sources[0].spatial_adapt = Adapt::Fixed;
    m.normalize().unwrap();
    let g_mean = m.sources[0].filter.g.mean();
    m.sources[0].excitation.w = onsep::FactorMatrix::free(m.sources[0].excitation.w.values() * 10.0).unwrap();
    let before = covariances(&m.sources[0]);
    let factors = m.normalize().unwrap();
    let s = &m.sources[0];
    assert!((s.excitation.w.mean() - 1.0).abs() < 1e-12);
    assert!((factors[0].excitation[0] - 10.0).abs() < 1e-10);
    assert!((s.filter.g.mean() / g_mean - 10.0).abs() < 1e-10);
    assert!((factors[0].product() - s.filter.g.mean() / g_mean).abs() < 1e-10);
    assert!(worst_rel(&covariances(s), &before) < 1e-10);
}

#[test]
fn free_spatial_traces_are_flat_after_normalize() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut m = random_model(&mut rng, 7, 3, 2, 2);
    m.normalize().unwrap();
    for s in &m.sources {
        for f in 0..s.bins() {
            let r = s.spatial.get(f);
            assert!((r[0].re + r[3].re - 2.0).abs() < 1e-12);
        }
    }
}

#[test]
fn initial_model_matches_mixture_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let samples: Vec<Vec<f64>> = (0..2).map(|_| (0..640).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let x = stft(&AudioBuffer64::new(8000, samples).unwrap(), 64).unwrap();
    let cfg = SeparationConfig {
        window_len: 64,
        ..SeparationConfig::default()
    };
    let m = init_mixture_model(&cfg, &x, 0).unwrap();
    for s in &m.sources {
        let v = s.spectral_variance(FLOOR).unwrap();
        assert!((v.mean().unwrap() / x.mean_power() - 1.0).abs() < 1e-9);
    }
}
