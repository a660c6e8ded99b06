use ndarray::Array2;

use super::FactorMatrix;
use crate::{Error, Real, Result};

/// Log-spaced fundamental-frequency grid for harmonic patterns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicGrid {
    pub f0_min: f64,
    pub f0_max: f64,
    pub steps_per_semitone: usize,
    /// Consecutive harmonics grouped into one pattern.
    pub partials_per_pattern: usize,
    /// Optional cap on the harmonic number.
    pub max_partials: Option<usize>,
}

/// Fixed narrowband patterns and the pitch owning each column.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicPatterns<T> {
    pub patterns: FactorMatrix<T>,
    pub pitch_of_column: Vec<usize>,
    pub f0s: Vec<f64>,
}

impl<T: Real> HarmonicPatterns<T> {
    pub fn n_pitches(&self) -> usize {
        self.f0s.len()
    }

    /// Spectral envelope weights linking each pattern to its pitch.
    pub fn envelope_init(&self) -> Array2<T> {
        let mut u = Array2::zeros((self.pitch_of_column.len(), self.n_pitches()));
        for (col, &p) in self.pitch_of_column.iter().enumerate() {
            u[[col, p]] = T::one();
        }
        u
    }
}

/// Build one column per (pitch, partial group). Each column is a sum of
/// Gaussian lobes with a one-bin standard deviation centred on the
/// harmonics of the group, normalized to unit mean over frequency.
pub fn build_harmonic_patterns<T: Real>(
    bins: usize,
    sample_rate: f64,
    grid: &HarmonicGrid,
) -> Result<HarmonicPatterns<T>> {
    let nyquist = sample_rate / 2.0;
    if !(grid.f0_min > 0.0 && grid.f0_min < grid.f0_max && grid.f0_max < nyquist) {
        return Err(Error::InvalidConfig(format!(
            "harmonic grid needs 0 < f0_min < f0_max < fs/2, got [{}, {}] at fs={}",
            grid.f0_min, grid.f0_max, sample_rate
        )));
    }
    if grid.steps_per_semitone == 0 || grid.partials_per_pattern == 0 || bins < 2 {
        return Err(Error::InvalidConfig("empty harmonic grid".into()));
    }
    let window_len = 2 * (bins - 1);
    let bins_per_hz = window_len as f64 / sample_rate;
    let step = 1.0 / (12.0 * grid.steps_per_semitone as f64);
    let f0s: Vec<f64> = (0..)
        .map(|p| grid.f0_min * 2f64.powf(p as f64 * step))
        .take_while(|&f0| f0 <= grid.f0_max * (1.0 + 1e-12))
        .collect();

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut pitch_of_column = Vec::new();
    for (p, &f0) in f0s.iter().enumerate() {
        let mut harmonics: Vec<usize> = (1..).take_while(|&k| (k as f64) * f0 < nyquist).collect();
        if let Some(cap) = grid.max_partials {
            harmonics.truncate(cap);
        }
        for group in harmonics.chunks(grid.partials_per_pattern) {
            let col: Vec<f64> = (0..bins)
                .map(|b| {
                    group
                        .iter()
                        .map(|&k| {
                            let centre = k as f64 * f0 * bins_per_hz;
                            let d = b as f64 - centre;
                            (-0.5 * d * d).exp()
                        })
                        .sum()
                })
                .collect();
            let mean = col.iter().sum::<f64>() / bins as f64;
            if mean > 0.0 {
                columns.push(col.into_iter().map(|x| x / mean).collect());
                pitch_of_column.push(p);
            }
        }
    }
    if columns.is_empty() {
        return Err(Error::InvalidConfig("harmonic grid produced no patterns".into()));
    }
    let mut w = Array2::<T>::zeros((bins, columns.len()));
    for (c, col) in columns.iter().enumerate() {
        for (b, &x) in col.iter().enumerate() {
            w[[b, c]] = T::lit(x);
        }
    }
    Ok(HarmonicPatterns {
        patterns: FactorMatrix::fixed(w)?,
        pitch_of_column,
        f0s,
    })
}
