//! Local Gaussian source model: per-source full-rank spatial covariance
//! `R_j(f)` times a hierarchical-NMF spectral variance
//! `V_j = (Wx Ux Gx Hx) .* (Wf Uf Gf Hf)`.

mod dictionary;
mod factor;
pub(crate) mod init;
mod patterns;

use ndarray::Array2;
use num_complex::Complex;

pub use dictionary::{load_dictionary_csv, parse_dictionary_csv};
pub use factor::{FactorMatrix, Level, SpectralBlock};
pub use init::{
    block_rng, diffuse_covariance, init_block_local, init_mixture_model, initial_azimuths,
    pan_gains, PERSISTENT_STREAM,
};
pub use patterns::{build_harmonic_patterns, HarmonicGrid, HarmonicPatterns};

use crate::config::Adapt;
use crate::linalg::{self, zero};
use crate::{Error, Real, Result};

/// `(f, n)`-indexed nonnegative power values, `F x N`.
pub type PowerField<T> = Array2<T>;

/// One `I x I` Hermitian PSD matrix per frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianStack<T> {
    channels: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> HermitianStack<T> {
    pub fn from_fn(bins: usize, channels: usize, mut f: impl FnMut(usize) -> Vec<Complex<T>>) -> Self {
        let mut data = Vec::with_capacity(bins * channels * channels);
        for b in 0..bins {
            let m = f(b);
            assert_eq!(m.len(), channels * channels);
            data.extend(m);
        }
        Self { channels, data }
    }

    pub fn constant(bins: usize, channels: usize, m: &[Complex<T>]) -> Self {
        Self::from_fn(bins, channels, |_| m.to_vec())
    }

    pub fn zeros(bins: usize, channels: usize) -> Self {
        Self {
            channels,
            data: vec![zero(); bins * channels * channels],
        }
    }

    pub fn bins(&self) -> usize {
        self.data.len() / (self.channels * self.channels)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, f: usize) -> &[Complex<T>] {
        let s = self.channels * self.channels;
        &self.data[f * s..(f + 1) * s]
    }

    pub fn get_mut(&mut self, f: usize) -> &mut [Complex<T>] {
        let s = self.channels * self.channels;
        &mut self.data[f * s..(f + 1) * s]
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    /// Mean over bins of `trace(R(f)) / I`.
    pub fn mean_trace(&self) -> T {
        let i = self.channels;
        let total = (0..self.bins()).fold(T::zero(), |acc, f| acc + linalg::trace(self.get(f), i).re);
        total / T::from_usize_lossy(self.bins() * i)
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x = x.scale(s));
    }

    /// Add `eps * trace(R(f)) / I` to every diagonal, falling back to the
    /// stack's mean trace (or 1) for all-zero bins.
    pub fn load_diagonal(&mut self, eps: T) {
        let i = self.channels;
        let fallback = match self.mean_trace() {
            m if m > T::zero() => m,
            _ => T::one(),
        };
        for f in 0..self.bins() {
            let m = self.get_mut(f);
            let mut level = linalg::trace(m, i).re / T::from_usize_lossy(i);
            if !(level > T::zero()) {
                level = fallback;
            }
            for k in 0..i {
                m[k * i + k].re += eps * level;
            }
        }
    }

    /// `(1 - a) * self + a * other`
    pub fn blend(&mut self, other: &Self, a: T) {
        let keep = T::one() - a;
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x = x.scale(keep) + y.scale(a);
        }
    }
}

/// Parameters of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel<T> {
    pub label: String,
    pub spatial: HermitianStack<T>,
    pub spatial_adapt: Adapt,
    pub excitation: SpectralBlock<T>,
    pub filter: SpectralBlock<T>,
}

impl<T: Real> SourceModel<T> {
    pub fn new(
        label: impl Into<String>,
        spatial: HermitianStack<T>,
        spatial_adapt: Adapt,
        excitation: SpectralBlock<T>,
        filter: SpectralBlock<T>,
    ) -> Result<Self> {
        let s = Self {
            label: label.into(),
            spatial,
            spatial_adapt,
            excitation,
            filter,
        };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        self.excitation.check()?;
        self.filter.check()?;
        if self.excitation.bins() != self.filter.bins() || self.excitation.frames() != self.filter.frames() {
            return Err(Error::Shape(format!(
                "excitation is {}x{} but filter is {}x{}",
                self.excitation.bins(),
                self.excitation.frames(),
                self.filter.bins(),
                self.filter.frames()
            )));
        }
        if self.spatial.bins() != self.excitation.bins() {
            return Err(Error::Shape(format!(
                "spatial stack has {} bins, spectral model {}",
                self.spatial.bins(),
                self.excitation.bins()
            )));
        }
        if !self.filter.g.is_free() {
            return Err(Error::InvalidConfig(
                "filter temporal weights carry the normalization scale and cannot be fixed".into(),
            ));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.excitation.bins()
    }

    pub fn frames(&self) -> usize {
        self.excitation.frames()
    }

    pub fn channels(&self) -> usize {
        self.spatial.channels()
    }

    /// `V = (Wx Ux Gx Hx) .* (Wf Uf Gf Hf)`, floored at `floor`.
    pub fn spectral_variance(&self, floor: T) -> Result<PowerField<T>> {
        self.check()?;
        let mut v = self.excitation.product();
        let vf = self.filter.product();
        ndarray::Zip::from(&mut v)
            .and(&vf)
            .for_each(|a, &b| *a = (*a * b).max(floor));
        Ok(v)
    }

    /// `R_j(f) * v` for a given variance value.
    pub fn source_covariance_with(&self, f: usize, v: T) -> Vec<Complex<T>> {
        self.spatial.get(f).iter().map(|x| x.scale(v)).collect()
    }

    /// `R_{c_j}(f, n) = R_j(f) v_j(f, n)`.
    pub fn source_covariance(&self, f: usize, n: usize, floor: T) -> Result<Vec<Complex<T>>> {
        let v = self.spectral_variance(floor)?;
        Ok(self.source_covariance_with(f, v[[f, n]]))
    }
}

/// Per-source divisors applied by [`MixtureModel::normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationFactors<T> {
    pub spatial: T,
    pub excitation: [T; 4],
    /// `W`, `U` and `H` of the filter part; `G` of the filter absorbs them.
    pub filter: [T; 3],
}

impl<T: Real> NormalizationFactors<T> {
    /// Product of every divisor, i.e. the factor `Gf` was multiplied by.
    pub fn product(&self) -> T {
        self.excitation
            .iter()
            .chain(self.filter.iter())
            .fold(self.spatial, |acc, &x| acc * x)
    }
}

/// All sources of a mixture sharing `F`, `N` and `I`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel<T> {
    pub sources: Vec<SourceModel<T>>,
}

impl<T: Real> MixtureModel<T> {
    pub fn new(sources: Vec<SourceModel<T>>) -> Result<Self> {
        let m = Self { sources };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<()> {
        let first = self
            .sources
            .first()
            .ok_or_else(|| Error::InvalidConfig("mixture needs at least one source".into()))?;
        for (j, s) in self.sources.iter().enumerate() {
            s.check()?;
            if s.bins() != first.bins() || s.frames() != first.frames() || s.channels() != first.channels() {
                return Err(Error::Shape(format!("source {j} disagrees on (F, N, I)")));
            }
        }
        Ok(())
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn bins(&self) -> usize {
        self.sources[0].bins()
    }

    pub fn frames(&self) -> usize {
        self.sources[0].frames()
    }

    pub fn channels(&self) -> usize {
        self.sources[0].channels()
    }

    pub fn spectral_variances(&self, floor: T) -> Result<Vec<PowerField<T>>> {
        self.sources.iter().map(|s| s.spectral_variance(floor)).collect()
    }

    /// Rescale every free parameter to unit mean, moving the scale into the
    /// filter temporal weights so that each `R_{c_j}` is unchanged.
    pub fn normalize(&mut self) -> Result<Vec<NormalizationFactors<T>>> {
        self.sources.iter_mut().enumerate().map(|(j, s)| normalize_source(j, s)).collect()
    }
}

fn divisor<T: Real>(j: usize, name: &str, mean: T) -> Result<T> {
    if !(mean > T::zero()) || !mean.is_finite() {
        return Err(Error::Degenerate(format!(
            "source {j}: {name} has non-positive mean {mean}"
        )));
    }
    Ok(mean)
}

fn normalize_factor<T: Real>(j: usize, name: &str, fm: &mut FactorMatrix<T>) -> Result<T> {
    if !fm.is_free() {
        return Ok(T::one());
    }
    let d = divisor(j, name, fm.mean())?;
    fm.values_mut().mapv_inplace(|x| x / d);
    Ok(d)
}

/// The free factor whose rows are indexed by frequency bin, if any.
fn bin_rows<'a, T: Real>(
    excitation: &'a mut SpectralBlock<T>,
    filter: &'a mut SpectralBlock<T>,
) -> Option<&'a mut FactorMatrix<T>> {
    for part in [excitation, filter] {
        if part.w.is_free() {
            return Some(&mut part.w);
        }
        if part.w.is_diagonal() && part.u.is_free() {
            return Some(&mut part.u);
        }
    }
    None
}

/// Move the per-bin trace profile of a free spatial covariance into a free
/// bin-indexed spectral factor. The product `R_j(f) v_j(f, n)` is unchanged,
/// but the scale can no longer drift between the two across iterations.
fn fix_bin_gauge<T: Real>(s: &mut SourceModel<T>) {
    if s.spatial_adapt != Adapt::Free {
        return;
    }
    let i = s.spatial.channels();
    let traces: Vec<T> = (0..s.spatial.bins())
        .map(|f| linalg::trace(s.spatial.get(f), i).re)
        .collect();
    let mean = traces.iter().fold(T::zero(), |a, &t| a + t) / T::from_usize_lossy(traces.len().max(1));
    if !(mean > T::zero()) || !mean.is_finite() || traces.iter().any(|&t| !(t > T::zero())) {
        return;
    }
    let Some(fm) = bin_rows(&mut s.excitation, &mut s.filter) else {
        return;
    };
    for (f, &t) in traces.iter().enumerate() {
        let c = t / mean;
        s.spatial.get_mut(f).iter_mut().for_each(|x| *x = x.unscale(c));
        fm.values_mut().row_mut(f).mapv_inplace(|x| x * c);
    }
}

fn normalize_source<T: Real>(j: usize, s: &mut SourceModel<T>) -> Result<NormalizationFactors<T>> {
    fix_bin_gauge(s);
    let spatial = if s.spatial_adapt == Adapt::Free {
        let d = divisor(j, "spatial covariance", s.spatial.mean_trace())?;
        s.spatial.scale(T::one() / d);
        d
    } else {
        T::one()
    };
    let mut excitation = [T::one(); 4];
    for (k, level) in Level::ALL.into_iter().enumerate() {
        excitation[k] = normalize_factor(j, "excitation factor", s.excitation.factor_mut(level))?;
    }
    let mut filter = [T::one(); 3];
    for (k, level) in [Level::W, Level::U, Level::H].into_iter().enumerate() {
        filter[k] = normalize_factor(j, "filter factor", s.filter.factor_mut(level))?;
    }
    let factors = NormalizationFactors {
        spatial,
        excitation,
        filter,
    };
    let p = factors.product();
    s.filter.g.values_mut().mapv_inplace(|x| x * p);
    Ok(factors)
}

/// Functional form of [`MixtureModel::normalize`].
pub fn normalize<T: Real>(mut m: MixtureModel<T>) -> Result<(MixtureModel<T>, Vec<NormalizationFactors<T>>)> {
    let f = m.normalize()?;
    Ok((m, f))
}
