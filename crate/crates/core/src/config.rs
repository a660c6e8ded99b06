//! Run configuration shared by the offline and online estimators.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Whether a parameter is re-estimated or held constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Adapt {
    Fixed,
    #[default]
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Offline,
    Online,
}

/// Numerical floors used by every update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Floors {
    /// Lower bound on spectral variances.
    pub variance: f64,
    /// Lower bound on multiplicative-update denominators.
    pub denominator: f64,
    /// Relative diagonal loading of the mixture covariance.
    pub regularization: f64,
}

impl Default for Floors {
    fn default() -> Self {
        Self {
            variance: 1e-12,
            denominator: 1e-12,
            regularization: 1e-9,
        }
    }
}

/// Initial spatial covariance settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitSettings {
    /// Weight of the identity added to the rank-1 panning covariance.
    pub diffuse: f64,
    /// Initial azimuths spread over `[-span, span]` degrees.
    pub azimuth_span_deg: f64,
}

impl Default for InitSettings {
    fn default() -> Self {
        Self {
            diffuse: 0.5,
            azimuth_span_deg: 45.0,
        }
    }
}

/// Excitation-part constraint of one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExcitationSpec {
    /// Fixed narrowband harmonic patterns with free spectral envelope weights.
    Harmonic {
        f0_min: f64,
        f0_max: f64,
        #[serde(default = "one")]
        steps_per_semitone: usize,
        #[serde(default = "default_partials")]
        partials_per_pattern: usize,
        #[serde(default)]
        max_partials: Option<usize>,
        #[serde(default)]
        envelope: Adapt,
    },
    /// Fixed diagonal patterns and a fixed basis-spectra dictionary.
    Dictionary {
        #[serde(default)]
        path: Option<PathBuf>,
        /// Inline `F x K` matrix, used when `path` is absent.
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
    },
    /// Fixed diagonal patterns and free basis spectra (plain NMF).
    Free { components: usize },
}

fn one() -> usize {
    1
}

fn default_partials() -> usize {
    4
}

/// Filter-part constraint of one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterSpec {
    /// Constant filter; only a global gain is carried.
    #[default]
    Flat,
    /// Free smooth spectral envelope built on overlapping raised-cosine bands.
    Smooth { bands: usize, components: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    #[serde(default)]
    pub label: String,
    pub excitation: ExcitationSpec,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default)]
    pub spatial: Adapt,
    /// Overrides the automatic initial azimuth.
    #[serde(default)]
    pub azimuth_deg: Option<f64>,
}

impl SourceSpec {
    pub fn free(label: &str, components: usize) -> Self {
        Self {
            label: label.to_string(),
            excitation: ExcitationSpec::Free { components },
            filter: FilterSpec::Flat,
            spatial: Adapt::Free,
            azimuth_deg: None,
        }
    }
}

/// Complete description of one separation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparationConfig {
    pub window_len: usize,
    pub mode: Mode,
    /// Offline GEM iterations.
    pub iterations: usize,
    /// Online GEM iterations per block.
    pub iters_per_block: usize,
    /// Online block length in frames.
    pub block_len: usize,
    /// Online step size in `]0, 1]`.
    pub alpha: f64,
    pub seed: u64,
    /// Odd length of the moving average used for the empirical covariance.
    pub smoothing_frames: usize,
    pub floors: Floors,
    pub init: InitSettings,
    /// Freeze a source's spatial update when its block power is negligible.
    pub divergence_guard: bool,
    /// Guard threshold relative to the block mixture power.
    pub silence_threshold: f64,
    /// Re-initialize spatial covariances to the diffuse state for every block.
    pub reinit_spatial_per_block: bool,
    pub sources: Vec<SourceSpec>,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            window_len: 2048,
            mode: Mode::Offline,
            iterations: 100,
            iters_per_block: 30,
            block_len: 50,
            alpha: 1.0,
            seed: 0,
            smoothing_frames: 1,
            floors: Floors::default(),
            init: InitSettings::default(),
            divergence_guard: false,
            silence_threshold: 1e-6,
            reinit_spatial_per_block: false,
            sources: vec![SourceSpec::free("source0", 8), SourceSpec::free("source1", 8)],
        }
    }
}

impl SeparationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.window_len < 4 || !self.window_len.is_multiple_of(2) {
            return bad(format!("window_len must be even and >= 4, got {}", self.window_len));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in ]0, 1], got {}", self.alpha));
        }
        if self.block_len < 1 {
            return bad("block_len must be >= 1".into());
        }
        if self.iterations < 1 {
            return bad("iterations must be >= 1".into());
        }
        if self.iters_per_block < 1 {
            return bad("iters_per_block must be >= 1".into());
        }
        if self.smoothing_frames.is_multiple_of(2) {
            return bad(format!(
                "smoothing_frames must be odd, got {}",
                self.smoothing_frames
            ));
        }
        if self.sources.is_empty() {
            return bad("at least one source is required".into());
        }
        let f = &self.floors;
        if !(f.variance > 0.0 && f.denominator > 0.0 && f.regularization >= 0.0) {
            return bad("floors must be positive".into());
        }
        if !(self.init.diffuse > 0.0) {
            return bad("diffuse weight must be positive for a full-rank start".into());
        }
        for (j, s) in self.sources.iter().enumerate() {
            match &s.excitation {
                ExcitationSpec::Free { components } if *components == 0 => {
                    return bad(format!("source {j}: free excitation needs components >= 1"));
                }
                ExcitationSpec::Harmonic {
                    f0_min,
                    f0_max,
                    steps_per_semitone,
                    partials_per_pattern,
                    ..
                } => {
                    if !(*f0_min > 0.0 && f0_min < f0_max) {
                        return bad(format!("source {j}: need 0 < f0_min < f0_max"));
                    }
                    if *steps_per_semitone == 0 || *partials_per_pattern == 0 {
                        return bad(format!("source {j}: harmonic grid sizes must be >= 1"));
                    }
                }
                ExcitationSpec::Dictionary { path, matrix } if path.is_none() && matrix.is_none() => {
                    return bad(format!("source {j}: dictionary needs a path or a matrix"));
                }
                _ => {}
            }
            if let FilterSpec::Smooth { bands, components } = s.filter {
                if bands == 0 || components == 0 {
                    return bad(format!("source {j}: smooth filter sizes must be >= 1"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        SeparationConfig::default().validate().unwrap();
    }

    #[test]
    fn alpha_domain_is_half_open() {
        let mut cfg = SeparationConfig::default();
        cfg.alpha = 0.0;
        assert!(cfg.validate().is_err());
        cfg.alpha = 1.0;
        assert!(cfg.validate().is_ok());
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn even_smoothing_rejected() {
        let cfg = SeparationConfig {
            smoothing_frames: 2,
            ..SeparationConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
