//! Multichannel audio source separation with local Gaussian models whose
//! spectral variances follow a hierarchical nonnegative factorization,
//! estimated either offline over a whole recording or online over a
//! sliding block of frames.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases fix the scalar to `f64`.

// NaN must fail positivity checks, so `!(x > 0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod field;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod offline;
pub mod online;
pub mod scalar;
pub mod separate;
pub mod synth;
pub mod tf;

pub use config::{Adapt, ExcitationSpec, FilterSpec, Floors, InitSettings, Mode, SeparationConfig, SourceSpec};
pub use error::{Error, Location, Result};
pub use field::{CovField, GainField, MatrixField};
pub use metrics::{average_scores, bss_eval_images, AveragedScores, BssScores, SourceScores};
pub use model::{FactorMatrix, HermitianStack, Level, MixtureModel, SourceModel, SpectralBlock};
pub use offline::{e_step, empirical_covariance, log_likelihood, mixture_covariance, offline_fit, OfflineFit};
pub use online::{online_separate, OnlineState, StepReport};
pub use scalar::Real;
pub use separate::{images_to_audio, wiener_separate};
pub use synth::{generate, SourceKind, SynthSource, SynthSpec};
pub use tf::{istft, stft, AudioBuffer, TfTensor};

pub type AudioBuffer64 = AudioBuffer<f64>;
pub type TfTensor64 = TfTensor<f64>;
pub type MixtureModel64 = MixtureModel<f64>;
pub type SourceModel64 = SourceModel<f64>;
pub type OnlineState64 = OnlineState<f64>;
pub type CovField64 = CovField<f64>;
