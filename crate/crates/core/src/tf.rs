//! Sine-window STFT analysis and weighted overlap-add synthesis.
//!
//! Frames are half-overlapping: frame `n` covers samples
//! `[n * hop, n * hop + L)` with `hop = L / 2`, and the signal tail is
//! zero-padded so that `N = ceil(T / hop) + 1`. Because
//! `w[t]^2 + w[t + hop]^2 = 1` for the sine window, analysis followed by
//! synthesis with the same window is the identity on every sample covered by
//! two frames, i.e. everywhere except the first `hop` samples.

use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView2};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::linalg::zero;
use crate::{Error, Real, Result};

/// Multichannel time-domain audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer<T> {
    sample_rate: u32,
    channels: Vec<Vec<T>>,
}

impl<T: Real> AudioBuffer<T> {
    pub fn new(sample_rate: u32, channels: Vec<Vec<T>>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::InvalidConfig("audio needs at least one channel".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("all channels must have the same length".into()));
        }
        Ok(Self {
            sample_rate,
            channels,
        })
    }

    pub fn silent(sample_rate: u32, n_channels: usize, len: usize) -> Result<Self> {
        Self::new(sample_rate, vec![vec![T::zero(); len]; n_channels])
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, i: usize) -> &[T] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<T>] {
        &self.channels
    }

    pub fn channels_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<T>> {
        self.channels
    }

    /// Largest absolute sample value over all channels.
    pub fn peak(&self) -> T {
        self.channels
            .iter()
            .flatten()
            .fold(T::zero(), |m, &x| m.max(x.abs()))
    }
}

/// Complex STFT coefficients indexed `(f, n, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfTensor<T> {
    values: Array3<Complex<T>>,
    window_len: usize,
    sample_rate: u32,
}

impl<T: Real> TfTensor<T> {
    pub fn new(values: Array3<Complex<T>>, window_len: usize, sample_rate: u32) -> Result<Self> {
        check_window(window_len)?;
        if values.dim().0 != window_len / 2 + 1 {
            return Err(Error::Shape(format!(
                "expected {} bins for window {}, got {}",
                window_len / 2 + 1,
                window_len,
                values.dim().0
            )));
        }
        Ok(Self {
            values,
            window_len,
            sample_rate,
        })
    }

    pub fn zeros(bins: usize, frames: usize, channels: usize, sample_rate: u32) -> Result<Self> {
        let window_len = 2 * (bins.max(1) - 1);
        Self::new(
            Array3::from_elem((bins, frames, channels), zero()),
            window_len,
            sample_rate,
        )
    }

    pub fn bins(&self) -> usize {
        self.values.dim().0
    }

    pub fn frames(&self) -> usize {
        self.values.dim().1
    }

    pub fn channels(&self) -> usize {
        self.values.dim().2
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop(&self) -> usize {
        self.window_len / 2
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn values(&self) -> &Array3<Complex<T>> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array3<Complex<T>> {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, f: usize, n: usize, i: usize) -> Complex<T> {
        self.values[[f, n, i]]
    }

    /// Frame `n` as an `F x I` view.
    pub fn frame(&self, n: usize) -> ArrayView2<'_, Complex<T>> {
        self.values.index_axis(ndarray::Axis(1), n)
    }

    /// Copy of frames `[start, end)`.
    pub fn slice_frames(&self, start: usize, end: usize) -> Self {
        Self {
            values: self
                .values
                .slice(ndarray::s![.., start..end, ..])
                .to_owned(),
            window_len: self.window_len,
            sample_rate: self.sample_rate,
        }
    }

    /// Build a tensor from a list of `F x I` frames.
    pub fn from_frames(frames: &[Array2<Complex<T>>], window_len: usize, sample_rate: u32) -> Result<Self> {
        let (bins, channels) = frames
            .first()
            .map(|f| f.dim())
            .unwrap_or((window_len / 2 + 1, 1));
        let mut values = Array3::from_elem((bins, frames.len(), channels), zero());
        for (n, fr) in frames.iter().enumerate() {
            if fr.dim() != (bins, channels) {
                return Err(Error::Shape("frames differ in shape".into()));
            }
            values.index_axis_mut(ndarray::Axis(1), n).assign(fr);
        }
        Self::new(values, window_len, sample_rate)
    }

    /// Mean over `(f, n)` of `trace(x x^H) / I`.
    pub fn mean_power(&self) -> T {
        let count = self.values.len();
        if count == 0 {
            return T::zero();
        }
        let sum = self.values.iter().fold(T::zero(), |acc, c| acc + c.norm_sqr());
        sum / T::from_usize_lossy(count)
    }
}

/// Sine window `w[t] = sin(pi (t + 0.5) / L)`.
pub fn sine_window<T: Real>(window_len: usize) -> Vec<T> {
    let l = T::from_usize_lossy(window_len);
    (0..window_len)
        .map(|t| (T::PI() * (T::from_usize_lossy(t) + T::lit(0.5)) / l).sin())
        .collect()
}

fn check_window(window_len: usize) -> Result<()> {
    if window_len < 4 || !window_len.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "window length must be even and >= 4, got {window_len}"
        )));
    }
    Ok(())
}

/// Number of frames produced for a signal of `len` samples.
pub fn frame_count(len: usize, window_len: usize) -> usize {
    let hop = window_len / 2;
    len.div_ceil(hop) + 1
}

struct Plans<T: Real> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

fn plans<T: Real>(window_len: usize) -> Plans<T> {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(window_len),
        inverse: planner.plan_fft_inverse(window_len),
    }
}

/// One-sided STFT of every channel.
pub fn stft<T: Real>(audio: &AudioBuffer<T>, window_len: usize) -> Result<TfTensor<T>> {
    check_window(window_len)?;
    if audio.is_empty() {
        return Err(Error::InvalidConfig("audio must contain at least one sample".into()));
    }
    let hop = window_len / 2;
    let bins = hop + 1;
    let frames = frame_count(audio.len(), window_len);
    let window = sine_window::<T>(window_len);
    let fft = plans::<T>(window_len).forward;
    let mut buf = vec![zero::<T>(); window_len];
    let mut scratch = vec![zero::<T>(); fft.get_inplace_scratch_len()];
    let mut values = Array3::from_elem((bins, frames, audio.n_channels()), zero());
    for (i, ch) in audio.channels().iter().enumerate() {
        for n in 0..frames {
            let start = n * hop;
            for (t, slot) in buf.iter_mut().enumerate() {
                let x = ch.get(start + t).copied().unwrap_or_else(T::zero);
                *slot = Complex::new(x * window[t], T::zero());
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for f in 0..bins {
                values[[f, n, i]] = buf[f];
            }
        }
    }
    TfTensor::new(values, window_len, audio.sample_rate())
}

/// Weighted overlap-add synthesis with the analysis window.
pub fn istft<T: Real>(tf: &TfTensor<T>, out_len: usize) -> Result<AudioBuffer<T>> {
    let window_len = tf.window_len();
    let hop = tf.hop();
    let covered = if tf.frames() == 0 {
        0
    } else {
        (tf.frames() - 1) * hop + window_len
    };
    if out_len > covered {
        return Err(Error::Shape(format!(
            "requested {out_len} samples but frames cover only {covered}"
        )));
    }
    let window = sine_window::<T>(window_len);
    let ifft = plans::<T>(window_len).inverse;
    let norm = T::one() / T::from_usize_lossy(window_len);
    let mut buf = vec![zero::<T>(); window_len];
    let mut scratch = vec![zero::<T>(); ifft.get_inplace_scratch_len()];
    let bins = tf.bins();
    let mut channels = vec![vec![T::zero(); covered]; tf.channels()];
    for (i, out) in channels.iter_mut().enumerate() {
        for n in 0..tf.frames() {
            for f in 0..bins {
                buf[f] = tf.get(f, n, i);
            }
            // DC and Nyquist of a real signal are real
            buf[0].im = T::zero();
            buf[bins - 1].im = T::zero();
            for f in 1..(bins - 1) {
                buf[window_len - f] = buf[f].conj();
            }
            ifft.process_with_scratch(&mut buf, &mut scratch);
            let start = n * hop;
            for t in 0..window_len {
                out[start + t] += buf[t].re * norm * window[t];
            }
        }
        out.truncate(out_len);
    }
    AudioBuffer::new(tf.sample_rate(), channels)
}
