//! Wiener-filter reconstruction of the source spatial images.

use ndarray::{Array2, Array3, ArrayView2};
use num_complex::Complex;

use crate::config::Floors;
use crate::linalg::{self, zero};
use crate::model::{MixtureModel, PowerField};
use crate::offline::PointWorkspace;
use crate::tf::{istft, AudioBuffer, TfTensor};
use crate::{Error, Real, Result};

/// Applies `Omega_j(f, n)` to mixture vectors, refining the solve against
/// the model mixture covariance once so that the images sum back to the
/// input to working precision.
pub(crate) struct WienerKernel<T> {
    ws: PointWorkspace<T>,
    channels: usize,
    x: Vec<Complex<T>>,
    y: Vec<Complex<T>>,
    r: Vec<Complex<T>>,
    dy: Vec<Complex<T>>,
}

impl<T: Real> WienerKernel<T> {
    pub fn new(n_sources: usize, channels: usize) -> Self {
        Self {
            ws: PointWorkspace::new(n_sources, channels),
            channels,
            x: vec![zero(); channels],
            y: vec![zero(); channels],
            r: vec![zero(); channels],
            dy: vec![zero(); channels],
        }
    }

    /// Separate the mixture vector `x` observed at model point `(f, n)`;
    /// `out[j]` receives source `j`'s image.
    pub fn apply(
        &mut self,
        model: &MixtureModel<T>,
        vs: &[PowerField<T>],
        f: usize,
        n: usize,
        x: impl Iterator<Item = Complex<T>>,
        eps_r: T,
        out: &mut [Vec<Complex<T>>],
    ) -> Result<()> {
        let ch = self.channels;
        for (d, s) in self.x.iter_mut().zip(x) {
            *d = s;
        }
        self.ws.load(model, vs, f, n, eps_r);
        self.ws.invert(f, n)?;
        linalg::mul_vec(&self.ws.rx_inv, &self.x, &mut self.y, ch);
        linalg::mul_vec(&self.ws.rx, &self.y, &mut self.r, ch);
        for (r, x) in self.r.iter_mut().zip(&self.x) {
            *r = *x - *r;
        }
        linalg::mul_vec(&self.ws.rx_inv, &self.r, &mut self.dy, ch);
        for (y, d) in self.y.iter_mut().zip(&self.dy) {
            *y += *d;
        }
        for (j, o) in out.iter_mut().enumerate() {
            linalg::mul_vec(&self.ws.rc[j], &self.y, o, ch);
        }
        Ok(())
    }
}

/// `c_j(f, n) = Omega_j(f, n) x(f, n)` for every source.
pub fn wiener_separate<T: Real>(x: &TfTensor<T>, m: &MixtureModel<T>, floors: &Floors) -> Result<Vec<TfTensor<T>>> {
    if x.bins() != m.bins() || x.frames() != m.frames() || x.channels() != m.channels() {
        return Err(Error::Shape(format!(
            "mixture is {}x{}x{}, model is {}x{}x{}",
            x.bins(),
            x.frames(),
            x.channels(),
            m.bins(),
            m.frames(),
            m.channels()
        )));
    }
    let vs = m.spectral_variances(T::lit(floors.variance))?;
    let (bins, frames, ch) = (x.bins(), x.frames(), x.channels());
    let n_src = m.n_sources();
    let mut images: Vec<Array3<Complex<T>>> = (0..n_src)
        .map(|_| Array3::from_elem((bins, frames, ch), zero()))
        .collect();
    let mut kernel = WienerKernel::new(n_src, ch);
    let mut out = vec![vec![zero(); ch]; n_src];
    let eps_r = T::lit(floors.regularization);
    for f in 0..bins {
        for n in 0..frames {
            kernel.apply(m, &vs, f, n, (0..ch).map(|i| x.get(f, n, i)), eps_r, &mut out)?;
            for (img, o) in images.iter_mut().zip(&out) {
                for i in 0..ch {
                    img[[f, n, i]] = o[i];
                }
            }
        }
    }
    images
        .into_iter()
        .map(|v| TfTensor::new(v, x.window_len(), x.sample_rate()))
        .collect()
}

/// Separate a single mixture frame (`F x I`) using model frame `n`.
pub(crate) fn wiener_frame<T: Real>(
    m: &MixtureModel<T>,
    vs: &[PowerField<T>],
    n: usize,
    frame: ArrayView2<'_, Complex<T>>,
    floors: &Floors,
) -> Result<Vec<Array2<Complex<T>>>> {
    let (bins, ch) = frame.dim();
    let n_src = m.n_sources();
    let mut kernel = WienerKernel::new(n_src, ch);
    let mut out = vec![vec![zero(); ch]; n_src];
    let mut frames: Vec<Array2<Complex<T>>> = (0..n_src).map(|_| Array2::from_elem((bins, ch), zero())).collect();
    let eps_r = T::lit(floors.regularization);
    for f in 0..bins {
        kernel.apply(m, vs, f, n, frame.row(f).iter().copied(), eps_r, &mut out)?;
        for (dst, o) in frames.iter_mut().zip(&out) {
            for i in 0..ch {
                dst[[f, i]] = o[i];
            }
        }
    }
    Ok(frames)
}

/// Time-domain source images of length `out_len`.
pub fn images_to_audio<T: Real>(images: &[TfTensor<T>], out_len: usize) -> Result<Vec<AudioBuffer<T>>> {
    images.iter().map(|tf| istft(tf, out_len)).collect()
}
