//! Online GEM estimation over a sliding block of frames.
//!
//! At every step the newest frame is appended to a block of at most
//! `block_len` frames. Temporal weights and patterns are block-local and
//! re-drawn for every block; spatial covariances and the running numerators
//! and denominators of the `W`/`U` updates persist across blocks and are
//! blended with step size `alpha`.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex;

use crate::config::SeparationConfig;
use crate::model::init::init_model_for;
use crate::model::{block_rng, init_block_local, HermitianStack, Level, MixtureModel, SpectralBlock};
use crate::offline::{empirical_covariance, gem_iteration, Part, SpatialRule, TermBlend};
use crate::separate::wiener_frame;
use crate::tf::TfTensor;
use crate::{Error, Real, Result};

/// Exponential running average `(1 - alpha) * prev + alpha * stat`.
pub fn running_average<T: Real>(prev: &Array2<T>, stat: &Array2<T>, alpha: T) -> Array2<T> {
    let keep = T::one() - alpha;
    let mut out = prev.mapv(|x| x * keep);
    out.zip_mut_with(stat, |o, &s| *o += alpha * s);
    out
}

/// Running numerators and denominators of the `W` (`m`, `c`) and `U`
/// (`n`, `d`) updates of one part of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorAccumulators<T> {
    pub m: Array2<T>,
    pub c: Array2<T>,
    pub n: Array2<T>,
    pub d: Array2<T>,
}

impl<T: Real> FactorAccumulators<T> {
    pub fn zeros_for(block: &SpectralBlock<T>) -> Self {
        let w = block.w.values().dim();
        let u = block.u.values().dim();
        Self {
            m: Array2::zeros(w),
            c: Array2::zeros(w),
            n: Array2::zeros(u),
            d: Array2::zeros(u),
        }
    }

    /// Fold one block's instantaneous `(num, den)` for `level` into the
    /// accumulators, starting from `prev`.
    pub fn accumulate(&mut self, prev: &Self, level: Level, num: &Array2<T>, den: &Array2<T>, alpha: T) {
        match level {
            Level::W => {
                self.m = running_average(&prev.m, num, alpha);
                self.c = running_average(&prev.c, den, alpha);
            }
            Level::U => {
                self.n = running_average(&prev.n, num, alpha);
                self.d = running_average(&prev.d, den, alpha);
            }
            Level::G | Level::H => {}
        }
    }
}

/// Accumulators of both parts of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceAccumulators<T> {
    pub excitation: FactorAccumulators<T>,
    pub filter: FactorAccumulators<T>,
}

impl<T: Real> SourceAccumulators<T> {
    fn part(&self, part: Part) -> &FactorAccumulators<T> {
        match part {
            Part::Excitation => &self.excitation,
            Part::Filter => &self.filter,
        }
    }

    fn part_mut(&mut self, part: Part) -> &mut FactorAccumulators<T> {
        match part {
            Part::Excitation => &mut self.excitation,
            Part::Filter => &mut self.filter,
        }
    }
}

struct AccumulatedTerms<'a, T> {
    prev: &'a SourceAccumulators<T>,
    cur: &'a mut SourceAccumulators<T>,
    alpha: T,
}

impl<T: Real> TermBlend<T> for AccumulatedTerms<'_, T> {
    fn blend(&mut self, part: Part, level: Level, num: Array2<T>, den: Array2<T>) -> (Array2<T>, Array2<T>) {
        let acc = self.cur.part_mut(part);
        acc.accumulate(self.prev.part(part), level, &num, &den, self.alpha);
        match level {
            Level::W => (acc.m.clone(), acc.c.clone()),
            Level::U => (acc.n.clone(), acc.d.clone()),
            Level::G | Level::H => (num, den),
        }
    }
}

/// What one online step did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<T> {
    /// Index of the separated frame.
    pub t: usize,
    pub block_frames: usize,
    /// Sources whose spatial update the divergence guard froze in the last iteration.
    pub frozen: Vec<usize>,
    /// Separated newest frame per source, `F x I`.
    pub frames: Vec<Array2<Complex<T>>>,
}

/// Single-writer state of one online separation stream.
#[derive(Debug, Clone)]
pub struct OnlineState<T> {
    cfg: SeparationConfig,
    seed: u64,
    window_len: usize,
    sample_rate: u32,
    /// Index of the newest frame in the block.
    t: usize,
    blocks_processed: u64,
    block: VecDeque<Array2<Complex<T>>>,
    model: MixtureModel<T>,
    initial_spatial: Vec<HermitianStack<T>>,
    prev_spatial: Vec<HermitianStack<T>>,
    acc: Vec<SourceAccumulators<T>>,
}

impl<T: Real> OnlineState<T> {
    /// New stream whose block holds `first_frame` (`F x I`), not yet processed.
    pub fn init(
        cfg: &SeparationConfig,
        first_frame: ArrayView2<'_, Complex<T>>,
        window_len: usize,
        sample_rate: u32,
        rng_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let (bins, channels) = first_frame.dim();
        if bins != window_len / 2 + 1 {
            return Err(Error::Shape(format!(
                "frame has {bins} bins, window {window_len} needs {}",
                window_len / 2 + 1
            )));
        }
        let power = first_frame.iter().fold(T::zero(), |a, c| a + c.norm_sqr())
            / T::from_usize_lossy(bins * channels);
        let model = init_model_for(cfg, bins, 1, channels, sample_rate as f64, power, rng_seed, 0)?;
        let spatial: Vec<HermitianStack<T>> = model.sources.iter().map(|s| s.spatial.clone()).collect();
        let acc = model
            .sources
            .iter()
            .map(|s| SourceAccumulators {
                excitation: FactorAccumulators::zeros_for(&s.excitation),
                filter: FactorAccumulators::zeros_for(&s.filter),
            })
            .collect();
        let mut block = VecDeque::with_capacity(cfg.block_len);
        block.push_back(first_frame.to_owned());
        Ok(Self {
            cfg: cfg.clone(),
            seed: rng_seed,
            window_len,
            sample_rate,
            t: 0,
            blocks_processed: 0,
            block,
            model,
            initial_spatial: spatial.clone(),
            prev_spatial: spatial,
            acc,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn block_frames(&self) -> usize {
        self.block.len()
    }

    pub fn alpha(&self) -> f64 {
        self.cfg.alpha
    }

    pub fn config(&self) -> &SeparationConfig {
        &self.cfg
    }

    /// Model restricted to the current block.
    pub fn model(&self) -> &MixtureModel<T> {
        &self.model
    }

    /// Committed spatial covariance of source `j`.
    pub fn spatial(&self, j: usize) -> &HermitianStack<T> {
        &self.prev_spatial[j]
    }

    pub fn accumulators(&self, j: usize) -> &SourceAccumulators<T> {
        &self.acc[j]
    }

    /// Append a frame without running any estimation.
    pub fn push_frame(&mut self, frame: ArrayView2<'_, Complex<T>>) -> Result<()> {
        let expected = self.block[0].dim();
        if frame.dim() != expected {
            return Err(Error::Shape(format!(
                "frame is {:?}, stream expects {:?}",
                frame.dim(),
                expected
            )));
        }
        if self.block.len() == self.cfg.block_len {
            self.block.pop_front();
        }
        self.block.push_back(frame.to_owned());
        self.t += 1;
        Ok(())
    }

    /// Push `frame` and process the resulting block.
    pub fn step(&mut self, frame: ArrayView2<'_, Complex<T>>) -> Result<StepReport<T>> {
        self.push_frame(frame)?;
        self.process()
    }

    /// Estimate the model on the current block and separate its newest frame.
    pub fn process(&mut self) -> Result<StepReport<T>> {
        self.process_observed(|_, _| {})
    }

    /// [`OnlineState::process`] with a callback after every iteration.
    pub fn process_observed(&mut self, mut observe: impl FnMut(usize, &MixtureModel<T>)) -> Result<StepReport<T>> {
        let t = self.t;
        let b = self.block.len();
        let frames: Vec<Array2<Complex<T>>> = self.block.iter().cloned().collect();
        let block = TfTensor::from_frames(&frames, self.window_len, self.sample_rate)?;
        let rx_hat = empirical_covariance(&block, self.cfg.smoothing_frames)?;
        let power = rx_hat.mean_trace();
        let floors = self.cfg.floors;
        let target = power.max(T::lit(floors.variance));
        let mut rng = block_rng(self.seed, self.blocks_processed);
        init_block_local(&mut self.model, b, target, &mut rng).map_err(|e| e.at_step(t))?;
        let start = if self.cfg.reinit_spatial_per_block {
            &self.initial_spatial
        } else {
            &self.prev_spatial
        };
        for (s, r) in self.model.sources.iter_mut().zip(start) {
            s.spatial = r.clone();
        }
        let alpha = T::lit(self.cfg.alpha);
        let rule = SpatialRule {
            previous: Some(&self.prev_spatial),
            alpha,
            freeze_below: self
                .cfg
                .divergence_guard
                .then(|| T::lit(self.cfg.silence_threshold) * power),
        };
        let mut cur_acc = self.acc.clone();
        let mut frozen = Vec::new();
        for it in 0..self.cfg.iters_per_block {
            let mut blends: Vec<AccumulatedTerms<'_, T>> = self
                .acc
                .iter()
                .zip(cur_acc.iter_mut())
                .map(|(prev, cur)| AccumulatedTerms { prev, cur, alpha })
                .collect();
            frozen = gem_iteration(&mut self.model, &rx_hat, &floors, &rule, &mut blends)
                .map_err(|e| e.at_iteration(it).at_step(t))?;
            observe(it, &self.model);
        }
        self.prev_spatial = self.model.sources.iter().map(|s| s.spatial.clone()).collect();
        self.acc = cur_acc;
        self.blocks_processed += 1;
        let vs = self.model.spectral_variances(T::lit(floors.variance))?;
        let newest = self.block.back().expect("block is never empty");
        let separated = wiener_frame(&self.model, &vs, b - 1, newest.view(), &floors).map_err(|e| e.at_step(t))?;
        Ok(StepReport {
            t,
            block_frames: b,
            frozen,
            frames: separated,
        })
    }
}

/// Causal separation of every frame of `x`; frame `n` of each output is
/// produced once frame `n` has been observed.
pub fn online_separate<T: Real>(x: &TfTensor<T>, cfg: &SeparationConfig, rng_seed: u64) -> Result<Vec<TfTensor<T>>> {
    online_separate_observed(x, cfg, rng_seed, |_| {})
}

/// [`online_separate`] with a callback receiving every step report.
pub fn online_separate_observed<T: Real>(
    x: &TfTensor<T>,
    cfg: &SeparationConfig,
    rng_seed: u64,
    mut observe: impl FnMut(&StepReport<T>),
) -> Result<Vec<TfTensor<T>>> {
    if x.frames() == 0 {
        return Err(Error::InvalidConfig("mixture has no frames".into()));
    }
    let mut state = OnlineState::init(cfg, x.frame(0), x.window_len(), x.sample_rate(), rng_seed)?;
    let n_src = cfg.sources.len();
    let mut out: Vec<Vec<Array2<Complex<T>>>> = vec![Vec::with_capacity(x.frames()); n_src];
    for n in 0..x.frames() {
        let report = if n == 0 { state.process()? } else { state.step(x.frame(n))? };
        observe(&report);
        for (o, fr) in out.iter_mut().zip(report.frames) {
            o.push(fr);
        }
    }
    out.into_iter()
        .map(|frames| TfTensor::from_frames(&frames, x.window_len(), x.sample_rate()))
        .collect()
}
