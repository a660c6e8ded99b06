#![allow(dead_code)]

use ndarray::Array2;
use num_complex::Complex;
use onsep::{
    generate, stft, Adapt, AudioBuffer, CovField, ExcitationSpec, FactorMatrix, HermitianStack, MixtureModel,
    SeparationConfig, SourceKind, SourceModel, SourceSpec, SpectralBlock, SynthSource, SynthSpec,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Basis spectra learned with KL-NMF on the power spectrogram of isolated
/// training renders of `kind`; columns have unit mean.
pub fn learn_dictionary(kind: SourceKind, sample_rate: u32, window_len: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let spec = SynthSpec {
        channels: 1,
        duration: 3.0,
        sample_rate,
        sources: vec![SynthSource { kind, azimuth_deg: 0.0, silence: vec![] }],
        seed: seed ^ 0x5eed_d1c7,
        colliding: false,
        convolutive_taps: None,
    };
    let (mix, _) = generate::<f64>(&spec).unwrap();
    let x = stft(&mix, window_len).unwrap();
    let (f_n, n_n) = (x.bins(), x.frames());
    let v: Vec<f64> = (0..f_n)
        .flat_map(|f| (0..n_n).map(move |n| (f, n)))
        .map(|(f, n)| x.get(f, n, 0).norm_sqr() + 1e-10)
        .collect();
    let mut w: Vec<f64> = (0..f_n * k).map(|i| 0.5 + ((i * 7919 + 13) % 97) as f64 / 97.0).collect();
    let mut h: Vec<f64> = (0..k * n_n).map(|i| 0.5 + ((i * 104_729 + 7) % 89) as f64 / 89.0).collect();
    let mut approx = vec![0.0; f_n * n_n];
    for _ in 0..60 {
        for pass in 0..2 {
            for f in 0..f_n {
                for n in 0..n_n {
                    approx[f * n_n + n] = (0..k).map(|c| w[f * k + c] * h[c * n_n + n]).sum::<f64>().max(1e-300);
                }
            }
            if pass == 0 {
                for c in 0..k {
                    let den: f64 = (0..f_n).map(|f| w[f * k + c]).sum();
                    for n in 0..n_n {
                        let num: f64 = (0..f_n).map(|f| w[f * k + c] * v[f * n_n + n] / approx[f * n_n + n]).sum();
                        h[c * n_n + n] *= num / den.max(1e-300);
                    }
                }
            } else {
                for c in 0..k {
                    let den: f64 = (0..n_n).map(|n| h[c * n_n + n]).sum();
                    for f in 0..f_n {
                        let num: f64 = (0..n_n).map(|n| h[c * n_n + n] * v[f * n_n + n] / approx[f * n_n + n]).sum();
                        w[f * k + c] *= num / den.max(1e-300);
                    }
                }
            }
        }
    }
    for c in 0..k {
        let mean = (0..f_n).map(|f| w[f * k + c]).sum::<f64>() / f_n as f64;
        for f in 0..f_n {
            w[f * k + c] = w[f * k + c] / mean + 1e-6;
        }
    }
    (0..f_n).map(|f| w[f * k..(f + 1) * k].to_vec()).collect()
}

/// Synthetic source kinds, paired with azimuths, for a three-source mixture.
pub const TRIO: [(SourceKind, f64); 3] = [
    (SourceKind::HarmonicToneSequence, -45.0),
    (SourceKind::BassLine, 0.0),
    (SourceKind::FilteredNoisePercussion, 45.0),
];

pub fn trio_spec(duration: f64, sample_rate: u32, seed: u64) -> SynthSpec {
    SynthSpec {
        channels: 2,
        duration,
        sample_rate,
        sources: TRIO
            .iter()
            .map(|&(kind, azimuth_deg)| SynthSource { kind, azimuth_deg, silence: vec![] })
            .collect(),
        seed,
        colliding: false,
        convolutive_taps: None,
    }
}

/// Constrained source models for [`TRIO`]: harmonic patterns with a free
/// envelope, and fixed learned dictionaries for percussion and bass.
pub fn trio_sources(sample_rate: u32, window_len: usize) -> Vec<SourceSpec> {
    let dict = |kind, seed| ExcitationSpec::Dictionary {
        path: None,
        matrix: Some(learn_dictionary(kind, sample_rate, window_len, 12, seed)),
    };
    let source = |label: &str, excitation| SourceSpec {
        label: label.into(),
        excitation,
        filter: Default::default(),
        spatial: Adapt::Free,
        azimuth_deg: None,
    };
    vec![
        source(
            "tones",
            ExcitationSpec::Harmonic {
                f0_min: 220.0,
                f0_max: 880.0,
                steps_per_semitone: 1,
                partials_per_pattern: 4,
                max_partials: Some(12),
                envelope: Adapt::Free,
            },
        ),
        source("bass", dict(SourceKind::BassLine, 12)),
        source("drums", dict(SourceKind::FilteredNoisePercussion, 11)),
    ]
}

pub fn config(window_len: usize, sources: Vec<SourceSpec>) -> SeparationConfig {
    SeparationConfig {
        window_len,
        sources,
        ..SeparationConfig::default()
    }
}

pub fn energy(b: &AudioBuffer<f64>) -> f64 {
    b.channels().iter().flatten().map(|v| v * v).sum()
}

pub fn positive(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(0.1..1.0))
}

/// `B B^H + I / 10` for a random complex `B`, row-major.
pub fn random_hpd(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex<f64>> {
    let b: Vec<Complex<f64>> = (0..n * n)
        .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let mut m = vec![Complex::new(0.0, 0.0); n * n];
    for r in 0..n {
        for c in 0..n {
            let mut acc = (0..n).map(|k| b[r * n + k] * b[c * n + k].conj()).sum::<Complex<f64>>();
            if r == c {
                acc += 0.1;
            }
            m[r * n + c] = acc;
        }
    }
    m
}

/// Source with every level free except a fixed excitation `U`.
pub fn random_source(rng: &mut ChaCha8Rng, bins: usize, frames: usize, channels: usize) -> SourceModel<f64> {
    let spatial = HermitianStack::from_fn(bins, channels, |_| random_hpd(rng, channels));
    let excitation = SpectralBlock::new(
        FactorMatrix::free(positive(rng, bins, 3)).unwrap(),
        FactorMatrix::fixed(positive(rng, 3, 2)).unwrap(),
        FactorMatrix::free(positive(rng, 2, 2)).unwrap(),
        FactorMatrix::free(positive(rng, 2, frames)).unwrap(),
    )
    .unwrap();
    let filter = SpectralBlock::new(
        FactorMatrix::free(positive(rng, bins, 2)).unwrap(),
        FactorMatrix::free(positive(rng, 2, 2)).unwrap(),
        FactorMatrix::free(positive(rng, 2, frames)).unwrap(),
        FactorMatrix::identity(frames, Adapt::Free),
    )
    .unwrap();
    SourceModel::new("s", spatial, Adapt::Free, excitation, filter).unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng, bins: usize, frames: usize, channels: usize, sources: usize) -> MixtureModel<f64> {
    MixtureModel::new((0..sources).map(|_| random_source(rng, bins, frames, channels)).collect()).unwrap()
}

pub fn random_cov_field(rng: &mut ChaCha8Rng, bins: usize, frames: usize, channels: usize) -> CovField<f64> {
    let mut field = CovField::zeros(bins, frames, channels);
    for f in 0..bins {
        for n in 0..frames {
            field.get_mut(f, n).copy_from_slice(&random_hpd(rng, channels));
        }
    }
    field
}

/// Largest relative deviation between two arrays, scaled by `b`'s peak.
pub fn rel_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}
