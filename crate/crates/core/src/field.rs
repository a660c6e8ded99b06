use num_complex::Complex;

use crate::linalg::{self, zero};
use crate::Real;

/// One `I x I` complex matrix per `(f, n)` point, stored contiguously.
///
/// Used for the empirical and model mixture covariances, the posterior
/// source statistics, and the Wiener gains.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField<T> {
    bins: usize,
    frames: usize,
    channels: usize,
    data: Vec<Complex<T>>,
}

/// Hermitian PSD field (`R^x`, `R_x`, `R^c_j`).
pub type CovField<T> = MatrixField<T>;

/// Per-point Wiener gains `Omega_j`; not Hermitian in general.
pub type GainField<T> = MatrixField<T>;

impl<T: Real> MatrixField<T> {
    pub fn zeros(bins: usize, frames: usize, channels: usize) -> Self {
        Self {
            bins,
            frames,
            channels,
            data: vec![zero(); bins * frames * channels * channels],
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    fn offset(&self, f: usize, n: usize) -> usize {
        (f * self.frames + n) * self.channels * self.channels
    }

    #[inline]
    pub fn get(&self, f: usize, n: usize) -> &[Complex<T>] {
        let o = self.offset(f, n);
        &self.data[o..o + self.channels * self.channels]
    }

    #[inline]
    pub fn get_mut(&mut self, f: usize, n: usize) -> &mut [Complex<T>] {
        let o = self.offset(f, n);
        let s = self.channels * self.channels;
        &mut self.data[o..o + s]
    }

    /// Mean over `(f, n)` of `trace / I`.
    pub fn mean_trace(&self) -> T {
        let i = self.channels;
        let mut acc = T::zero();
        for f in 0..self.bins {
            for n in 0..self.frames {
                acc += linalg::trace(self.get(f, n), i).re;
            }
        }
        acc / T::from_usize_lossy((self.bins * self.frames * i).max(1))
    }

    /// Mean of `trace / I` over bins, per frame.
    pub fn frame_mean_trace(&self, n: usize) -> T {
        let i = self.channels;
        let acc = (0..self.bins).fold(T::zero(), |acc, f| acc + linalg::trace(self.get(f, n), i).re);
        acc / T::from_usize_lossy(self.bins * i)
    }
}
