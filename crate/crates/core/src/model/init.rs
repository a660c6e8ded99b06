use ndarray::Array2;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    build_harmonic_patterns, load_dictionary_csv, FactorMatrix, HarmonicGrid, HermitianStack,
    MixtureModel, SourceModel, SpectralBlock,
};
use crate::config::{Adapt, ExcitationSpec, FilterSpec, SeparationConfig, SourceSpec};
use crate::linalg::{re, zero};
use crate::tf::TfTensor;
use crate::{Error, Real, Result};

/// RNG stream reserved for parameters that persist across blocks.
pub const PERSISTENT_STREAM: u64 = 0;

/// Deterministic RNG for the `counter`-th block-local initialization.
pub fn block_rng(seed: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(counter + 1);
    rng
}

fn persistent_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PERSISTENT_STREAM);
    rng
}

/// Constant-power gains for a source at `azimuth_deg` in `[-45, 45]`.
///
/// With two channels this is `(cos(az + 45), sin(az + 45))`, so `-45` is
/// hard left and `+45` hard right. With more channels the source is panned
/// between the two nearest channels of a uniform line.
pub fn pan_gains(channels: usize, azimuth_deg: f64) -> Vec<f64> {
    if channels == 1 {
        return vec![1.0];
    }
    let pos = ((azimuth_deg + 45.0) / 90.0).clamp(0.0, 1.0) * (channels - 1) as f64;
    let k = (pos.floor() as usize).min(channels - 2);
    let frac = pos - k as f64;
    let mut g = vec![0.0; channels];
    g[k] = (frac * std::f64::consts::FRAC_PI_2).cos();
    g[k + 1] = (frac * std::f64::consts::FRAC_PI_2).sin();
    g
}

/// Midpoints of `J` equal cells covering `[-span, span]` degrees.
pub fn initial_azimuths(n_sources: usize, span_deg: f64) -> Vec<f64> {
    let width = 2.0 * span_deg / n_sources as f64;
    (0..n_sources)
        .map(|j| -span_deg + width * (j as f64 + 0.5))
        .collect()
}

/// `a a^H + diffuse * I` for the panning vector `a` of `azimuth_deg`.
pub fn diffuse_covariance<T: Real>(channels: usize, azimuth_deg: f64, diffuse: f64) -> Vec<Complex<T>> {
    let a = pan_gains(channels, azimuth_deg);
    let mut m = vec![zero(); channels * channels];
    for r in 0..channels {
        for c in 0..channels {
            let mut x = a[r] * a[c];
            if r == c {
                x += diffuse;
            }
            m[r * channels + c] = re(T::lit(x));
        }
    }
    m
}

fn uniform_matrix<T: Real>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.gen_range(0.1..0.9)))
}

fn smooth_bands<T: Real>(bins: usize, bands: usize) -> Array2<T> {
    let mut w = Array2::<T>::zeros((bins, bands));
    if bands == 1 {
        w.fill(T::one());
        return w;
    }
    let spacing = (bins - 1) as f64 / (bands - 1) as f64;
    for b in 0..bands {
        let centre = b as f64 * spacing;
        let mut col = vec![0.0; bins];
        for (f, x) in col.iter_mut().enumerate() {
            let d = (f as f64 - centre) / spacing;
            if d.abs() < 1.0 {
                *x = 0.5 * (1.0 + (std::f64::consts::PI * d).cos());
            }
        }
        let mean = col.iter().sum::<f64>() / bins as f64;
        for (f, x) in col.into_iter().enumerate() {
            w[[f, b]] = T::lit(x / mean.max(f64::MIN_POSITIVE));
        }
    }
    w
}

fn excitation_levels<T: Real>(
    spec: &SourceSpec,
    bins: usize,
    sample_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(FactorMatrix<T>, FactorMatrix<T>)> {
    match &spec.excitation {
        ExcitationSpec::Harmonic {
            f0_min,
            f0_max,
            steps_per_semitone,
            partials_per_pattern,
            max_partials,
            envelope,
        } => {
            let hp = build_harmonic_patterns::<T>(
                bins,
                sample_rate,
                &HarmonicGrid {
                    f0_min: *f0_min,
                    f0_max: *f0_max,
                    steps_per_semitone: *steps_per_semitone,
                    partials_per_pattern: *partials_per_pattern,
                    max_partials: *max_partials,
                },
            )?;
            let u = FactorMatrix::new(hp.envelope_init(), *envelope)?;
            Ok((hp.patterns, u))
        }
        ExcitationSpec::Dictionary { path, matrix } => {
            let dict: Array2<T> = match (path, matrix) {
                (Some(p), _) => load_dictionary_csv(p)?,
                (None, Some(rows)) => {
                    let cols = rows.first().map_or(0, Vec::len);
                    if rows.iter().any(|r| r.len() != cols) {
                        return Err(Error::Dictionary("ragged inline dictionary".into()));
                    }
                    Array2::from_shape_fn((rows.len(), cols), |(r, c)| T::lit(rows[r][c]))
                }
                (None, None) => {
                    return Err(Error::InvalidConfig("dictionary needs a path or a matrix".into()))
                }
            };
            if dict.nrows() != bins {
                return Err(Error::Shape(format!(
                    "dictionary has {} rows but the STFT has {} bins",
                    dict.nrows(),
                    bins
                )));
            }
            Ok((FactorMatrix::identity(bins, Adapt::Fixed), FactorMatrix::fixed(dict)?))
        }
        ExcitationSpec::Free { components } => Ok((
            FactorMatrix::identity(bins, Adapt::Fixed),
            FactorMatrix::free(uniform_matrix(bins, *components, rng))?,
        )),
    }
}

fn filter_levels<T: Real>(
    spec: &SourceSpec,
    bins: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(FactorMatrix<T>, FactorMatrix<T>)> {
    match spec.filter {
        FilterSpec::Flat => Ok((
            FactorMatrix::fixed(Array2::ones((bins, 1)))?,
            FactorMatrix::fixed(Array2::ones((1, 1)))?,
        )),
        FilterSpec::Smooth { bands, components } => Ok((
            FactorMatrix::fixed(smooth_bands(bins, bands))?,
            FactorMatrix::free(uniform_matrix(bands, components, rng))?,
        )),
    }
}

/// Draw fresh temporal weights and diagonal temporal patterns for `frames`
/// frames, then scale each source's excitation weights so that its mean
/// spectral variance equals `target_power`.
pub fn init_block_local<T: Real>(
    model: &mut MixtureModel<T>,
    frames: usize,
    target_power: T,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for (j, s) in model.sources.iter_mut().enumerate() {
        for part in [&mut s.excitation, &mut s.filter] {
            let k2 = part.u.cols();
            if part.h.is_diagonal() {
                let g = uniform_matrix::<T>(k2, frames, rng);
                let h_adapt = part.h.adapt();
                part.g = FactorMatrix::new(g, part.g.adapt())?;
                part.h = FactorMatrix::identity(frames, h_adapt);
            } else {
                let k3 = part.h.rows();
                part.g = FactorMatrix::new(Array2::ones((k2, k3)), part.g.adapt())?;
                part.h = FactorMatrix::new(Array2::ones((k3, frames)), part.h.adapt())?;
            }
        }
        let mut v = s.excitation.product();
        v.zip_mut_with(&s.filter.product(), |a, &b| *a *= b);
        let mean = v.mean().unwrap_or_else(T::zero);
        if !(mean > T::zero()) || !mean.is_finite() {
            return Err(Error::Degenerate(format!(
                "source {j}: initial spectral variance has mean {mean}"
            )));
        }
        let scale = target_power / mean;
        s.excitation.g.values_mut().mapv_inplace(|x| x * scale);
    }
    Ok(())
}

/// Build the model for `frames` frames from explicit dimensions.
#[allow(clippy::too_many_arguments)]
pub(crate) fn init_model_for<T: Real>(
    cfg: &SeparationConfig,
    bins: usize,
    frames: usize,
    channels: usize,
    sample_rate: f64,
    target_power: T,
    seed: u64,
    block_counter: u64,
) -> Result<MixtureModel<T>> {
    cfg.validate()?;
    if channels < 1 || frames < 1 || bins < 2 {
        return Err(Error::InvalidConfig("need I >= 1, N >= 1 and F >= 2".into()));
    }
    let azimuths = initial_azimuths(cfg.sources.len(), cfg.init.azimuth_span_deg);
    let mut prng = persistent_rng(seed);
    let mut sources = Vec::with_capacity(cfg.sources.len());
    for (j, spec) in cfg.sources.iter().enumerate() {
        let az = spec.azimuth_deg.unwrap_or(azimuths[j]);
        let spatial = HermitianStack::constant(
            bins,
            channels,
            &diffuse_covariance::<T>(channels, az, cfg.init.diffuse),
        );
        let (wx, ux) = excitation_levels::<T>(spec, bins, sample_rate, &mut prng)?;
        let (wf, uf) = filter_levels::<T>(spec, bins, &mut prng)?;
        let excitation = placeholder_block(wx, ux, frames, true)?;
        let filter = placeholder_block(wf, uf, frames, matches!(spec.filter, FilterSpec::Smooth { .. }))?;
        let label = if spec.label.is_empty() {
            format!("source{j}")
        } else {
            spec.label.clone()
        };
        sources.push(SourceModel::new(label, spatial, spec.spatial, excitation, filter)?);
    }
    let mut model = MixtureModel::new(sources)?;
    let target = target_power.max(T::lit(cfg.floors.variance));
    init_block_local(&mut model, frames, target, &mut block_rng(seed, block_counter))?;
    Ok(model)
}

fn placeholder_block<T: Real>(
    w: FactorMatrix<T>,
    u: FactorMatrix<T>,
    frames: usize,
    diagonal_h: bool,
) -> Result<SpectralBlock<T>> {
    let k2 = u.cols();
    let (g, h) = if diagonal_h {
        (
            FactorMatrix::free(Array2::ones((k2, frames)))?,
            FactorMatrix::identity(frames, Adapt::Free),
        )
    } else {
        (
            FactorMatrix::free(Array2::ones((k2, 1)))?,
            FactorMatrix::fixed(Array2::ones((1, frames)))?,
        )
    };
    SpectralBlock::new(w, u, g, h)
}

/// Initial model for the whole tensor `x`: diffuse spatial covariances,
/// constraint-specific spectral factors, random power-matched temporal
/// weights and diagonal temporal patterns.
pub fn init_mixture_model<T: Real>(cfg: &SeparationConfig, x: &TfTensor<T>, rng_seed: u64) -> Result<MixtureModel<T>> {
    cfg.validate()?;
    let rx = crate::offline::empirical_covariance(x, cfg.smoothing_frames)?;
    init_model_for(
        cfg,
        x.bins(),
        x.frames(),
        x.channels(),
        x.sample_rate() as f64,
        rx.mean_trace(),
        rng_seed,
        0,
    )
}
