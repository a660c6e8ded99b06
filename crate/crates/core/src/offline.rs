//! Offline GEM estimation with multiplicative spectral updates.

use ndarray::Array2;
use num_complex::Complex;

use crate::config::{Adapt, Floors, SeparationConfig};
use crate::error::Location;
use crate::field::{CovField, GainField};
use crate::linalg::{self, re, zero, HpdWorkspace};
use crate::model::{
    init::init_model_for, HermitianStack, Level, MixtureModel, PowerField, SourceModel, SpectralBlock,
};
use crate::tf::TfTensor;
use crate::{Error, Real, Result};

/// Moving-average outer products `x x^H` over `smoothing_frames` frames,
/// truncated at the edges.
pub fn empirical_covariance<T: Real>(x: &TfTensor<T>, smoothing_frames: usize) -> Result<CovField<T>> {
    if smoothing_frames == 0 || smoothing_frames.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "smoothing_frames must be odd and >= 1, got {smoothing_frames}"
        )));
    }
    let (bins, frames, ch) = (x.bins(), x.frames(), x.channels());
    let mut raw = CovField::zeros(bins, frames, ch);
    for f in 0..bins {
        for n in 0..frames {
            let m = raw.get_mut(f, n);
            for r in 0..ch {
                let xr = x.get(f, n, r);
                for c in 0..ch {
                    m[r * ch + c] = xr * x.get(f, n, c).conj();
                }
            }
        }
    }
    if smoothing_frames == 1 {
        return Ok(raw);
    }
    let half = (smoothing_frames - 1) / 2;
    let mut out = CovField::zeros(bins, frames, ch);
    for f in 0..bins {
        for n in 0..frames {
            let lo = n.saturating_sub(half);
            let hi = (n + half).min(frames - 1);
            let w = T::one() / T::from_usize_lossy(hi - lo + 1);
            let dst = out.get_mut(f, n);
            for k in lo..=hi {
                for (d, s) in dst.iter_mut().zip(raw.get(f, k)) {
                    *d += *s;
                }
            }
            dst.iter_mut().for_each(|d| *d = d.scale(w));
        }
    }
    Ok(out)
}

/// Scratch state for evaluating the model at one `(f, n)` point.
pub(crate) struct PointWorkspace<T> {
    channels: usize,
    /// Regularized source covariances.
    pub rc: Vec<Vec<Complex<T>>>,
    pub rx: Vec<Complex<T>>,
    pub rx_inv: Vec<Complex<T>>,
    hpd: HpdWorkspace<T>,
    pub tmp: Vec<Complex<T>>,
    pub tmp2: Vec<Complex<T>>,
}

impl<T: Real> PointWorkspace<T> {
    pub fn new(n_sources: usize, channels: usize) -> Self {
        let s = channels * channels;
        Self {
            channels,
            rc: vec![vec![zero(); s]; n_sources],
            rx: vec![zero(); s],
            rx_inv: vec![zero(); s],
            hpd: HpdWorkspace::new(channels),
            tmp: vec![zero(); s],
            tmp2: vec![zero(); s],
        }
    }

    /// Fill `rc_j = v_j R_j + (delta / J) I` and `rx = sum_j rc_j`, where
    /// `delta = eps_r * trace(sum_j v_j R_j) / I`. Spreading the loading over
    /// the sources keeps `sum_j Omega_j = I` exact.
    pub fn load(&mut self, model: &MixtureModel<T>, vs: &[PowerField<T>], f: usize, n: usize, eps_r: T) {
        let ch = self.channels;
        let mut tr = T::zero();
        for (j, s) in model.sources.iter().enumerate() {
            let v = vs[j][[f, n]];
            for (d, r) in self.rc[j].iter_mut().zip(s.spatial.get(f)) {
                *d = r.scale(v);
            }
            tr += linalg::trace(&self.rc[j], ch).re;
        }
        let load = eps_r * tr / T::from_usize_lossy(ch * model.n_sources());
        self.rx.iter_mut().for_each(|x| *x = zero());
        for rc in &mut self.rc {
            for i in 0..ch {
                rc[i * ch + i] += re(load);
            }
            for (d, s) in self.rx.iter_mut().zip(rc.iter()) {
                *d += *s;
            }
        }
    }

    /// Invert `rx` in place into `rx_inv`; returns `log det rx`.
    pub fn invert(&mut self, f: usize, n: usize) -> Result<T> {
        self.hpd
            .inverse(&self.rx, &mut self.rx_inv)
            .ok_or_else(|| Error::Numerical {
                context: Location::at(f, n),
                message: "mixture covariance is not positive definite".into(),
            })
    }

    /// `tmp = rc_j rx^-1`
    pub fn gain(&mut self, j: usize) {
        linalg::mul(&self.rc[j], &self.rx_inv, &mut self.tmp, self.channels);
    }
}

/// Model mixture covariance `R_x = sum_j R_j v_j`, diagonally loaded by
/// `eps_r * trace / I`.
pub fn mixture_covariance<T: Real>(m: &MixtureModel<T>, floors: &Floors) -> Result<CovField<T>> {
    let vs = m.spectral_variances(T::lit(floors.variance))?;
    Ok(mixture_covariance_with(m, &vs, floors))
}

pub(crate) fn mixture_covariance_with<T: Real>(m: &MixtureModel<T>, vs: &[PowerField<T>], floors: &Floors) -> CovField<T> {
    let (bins, frames, ch) = (m.bins(), m.frames(), m.channels());
    let mut ws = PointWorkspace::new(m.n_sources(), ch);
    let eps_r = T::lit(floors.regularization);
    let mut out = CovField::zeros(bins, frames, ch);
    for f in 0..bins {
        for n in 0..frames {
            ws.load(m, vs, f, n, eps_r);
            out.get_mut(f, n).copy_from_slice(&ws.rx);
        }
    }
    out
}

/// `sum_{f,n} -trace(R_x^-1 R^x) - log det(pi R_x)`.
pub fn log_likelihood<T: Real>(rx_hat: &CovField<T>, rx: &CovField<T>) -> Result<T> {
    if rx_hat.bins() != rx.bins() || rx_hat.frames() != rx.frames() || rx_hat.channels() != rx.channels() {
        return Err(Error::Shape("covariance fields differ in shape".into()));
    }
    let ch = rx.channels();
    let mut hpd = HpdWorkspace::new(ch);
    let mut inv = vec![zero(); ch * ch];
    let log_pi = T::lit(ch as f64 * std::f64::consts::PI.ln());
    let mut total = T::zero();
    for f in 0..rx.bins() {
        let mut row = T::zero();
        for n in 0..rx.frames() {
            let logdet = hpd.inverse(rx.get(f, n), &mut inv).ok_or_else(|| Error::Numerical {
                context: Location::at(f, n),
                message: "mixture covariance is singular".into(),
            })?;
            row += -linalg::trace_of_product(&inv, rx_hat.get(f, n), ch) - logdet - log_pi;
        }
        total += row;
    }
    Ok(total)
}

/// Per-source E-step output.
#[derive(Debug, Clone)]
pub struct SourceStatistics<T> {
    pub gain: GainField<T>,
    pub posterior: CovField<T>,
}

/// Wiener gains and posterior second moments
/// `R^c_j = Omega_j R^x Omega_j^H + (I - Omega_j) R_{c_j}` for every source.
pub fn e_step<T: Real>(m: &MixtureModel<T>, rx_hat: &CovField<T>, floors: &Floors) -> Result<Vec<SourceStatistics<T>>> {
    let vs = m.spectral_variances(T::lit(floors.variance))?;
    let (gains, posts) = e_step_with(m, &vs, rx_hat, floors, true)?;
    Ok(gains
        .into_iter()
        .zip(posts)
        .map(|(gain, posterior)| SourceStatistics { gain, posterior })
        .collect())
}

pub(crate) fn e_step_with<T: Real>(
    m: &MixtureModel<T>,
    vs: &[PowerField<T>],
    rx_hat: &CovField<T>,
    floors: &Floors,
    keep_gains: bool,
) -> Result<(Vec<GainField<T>>, Vec<CovField<T>>)> {
    let (bins, frames, ch) = (m.bins(), m.frames(), m.channels());
    if rx_hat.bins() != bins || rx_hat.frames() != frames || rx_hat.channels() != ch {
        return Err(Error::Shape(format!(
            "empirical covariance is {}x{}x{}, model is {bins}x{frames}x{ch}",
            rx_hat.bins(),
            rx_hat.frames(),
            rx_hat.channels()
        )));
    }
    let n_src = m.n_sources();
    let eps_r = T::lit(floors.regularization);
    let mut ws = PointWorkspace::new(n_src, ch);
    let mut gains: Vec<GainField<T>> = if keep_gains {
        (0..n_src).map(|_| GainField::zeros(bins, frames, ch)).collect()
    } else {
        Vec::new()
    };
    let mut posts: Vec<CovField<T>> = (0..n_src).map(|_| CovField::zeros(bins, frames, ch)).collect();
    let mut resid = vec![zero(); ch * ch];
    for f in 0..bins {
        for n in 0..frames {
            ws.load(m, vs, f, n, eps_r);
            ws.invert(f, n)?;
            for j in 0..n_src {
                ws.gain(j);
                // Omega R^x Omega^H
                linalg::mul(&ws.tmp, rx_hat.get(f, n), &mut ws.tmp2, ch);
                let post = posts[j].get_mut(f, n);
                linalg::mul_adj(&ws.tmp2, &ws.tmp, post, ch);
                // (I - Omega) R_c
                for (k, r) in resid.iter_mut().enumerate() {
                    *r = -ws.tmp[k];
                }
                for i in 0..ch {
                    resid[i * ch + i] += re(T::one());
                }
                linalg::mul(&resid, &ws.rc[j], &mut ws.tmp2, ch);
                for (p, x) in post.iter_mut().zip(&ws.tmp2) {
                    *p += *x;
                }
                linalg::hermitize(post, ch);
                if keep_gains {
                    gains[j].get_mut(f, n).copy_from_slice(&ws.tmp);
                }
            }
        }
    }
    Ok((gains, posts))
}

/// `xi_j(f, n) = trace(R_j(f)^-1 R^c_j(f, n)) / I`, clamped at zero.
pub fn xi_field<T: Real>(s: &SourceModel<T>, posterior: &CovField<T>) -> Result<PowerField<T>> {
    let ch = s.channels();
    let (bins, frames) = (posterior.bins(), posterior.frames());
    if bins != s.bins() || ch != posterior.channels() {
        return Err(Error::Shape("posterior statistics do not match the source".into()));
    }
    let mut hpd = HpdWorkspace::new(ch);
    let mut inv = vec![zero(); ch * ch];
    let scale = T::one() / T::from_usize_lossy(ch);
    let mut xi = Array2::zeros((bins, frames));
    for f in 0..bins {
        hpd.inverse(s.spatial.get(f), &mut inv).ok_or_else(|| Error::Numerical {
            context: Location::bin(f),
            message: format!("spatial covariance of `{}` is singular", s.label),
        })?;
        for n in 0..frames {
            let v = linalg::trace_of_product(&inv, posterior.get(f, n), ch) * scale;
            xi[[f, n]] = v.max(T::zero());
        }
    }
    Ok(xi)
}

/// `R_j(f) = (1/N) sum_n R^c_j(f, n) / v_j(f, n)`.
pub fn m_step_spatial<T: Real>(s: &SourceModel<T>, posterior: &CovField<T>, v: &PowerField<T>) -> HermitianStack<T> {
    let ch = s.channels();
    let frames = posterior.frames();
    let inv_n = T::one() / T::from_usize_lossy(frames);
    HermitianStack::from_fn(posterior.bins(), ch, |f| {
        let mut acc = vec![zero(); ch * ch];
        for n in 0..frames {
            let w = T::one() / v[[f, n]];
            for (a, p) in acc.iter_mut().zip(posterior.get(f, n)) {
                *a += p.scale(w);
            }
        }
        acc.iter_mut().for_each(|a| *a = a.scale(inv_n));
        linalg::hermitize(&mut acc, ch);
        acc
    })
}

/// Which half of the excitation/filter product a factor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Part {
    Excitation,
    Filter,
}

/// Numerator and denominator of the multiplicative update of one factor.
pub(crate) fn mu_terms<T: Real>(
    block: &SpectralBlock<T>,
    other: &Array2<T>,
    xi: &PowerField<T>,
    level: Level,
    eps_v: T,
) -> (Array2<T>, Array2<T>) {
    let own = block.product().mapv(|x| x.max(eps_v));
    // P = Xi .* own^-2 .* other^-1,  Q = own^-1
    let mut p = xi.clone();
    ndarray::Zip::from(&mut p)
        .and(&own)
        .and(other)
        .for_each(|p, &a, &b| *p /= a * a * b);
    let q = own.mapv(|a| T::one() / a);
    match level {
        Level::W => {
            let b = block.ugh();
            (p.dot(&b.t()), q.dot(&b.t()))
        }
        Level::U => {
            let gh = block.gh();
            let pn = block.w.lmul_t(p.view());
            let qn = block.w.lmul_t(q.view());
            (pn.dot(&gh.t()), qn.dot(&gh.t()))
        }
        Level::G => {
            let a = block.wu();
            let pn = a.t().dot(&p);
            let qn = a.t().dot(&q);
            (block.h.rmul_t(pn.view()), block.h.rmul_t(qn.view()))
        }
        Level::H => {
            let a = block.wug();
            (a.t().dot(&p), a.t().dot(&q))
        }
    }
}

/// Hook letting the online estimator replace a factor's instantaneous
/// update terms by their running averages.
pub(crate) trait TermBlend<T> {
    fn blend(&mut self, part: Part, level: Level, num: Array2<T>, den: Array2<T>) -> (Array2<T>, Array2<T>);
}

pub(crate) struct Direct;

impl<T> TermBlend<T> for Direct {
    fn blend(&mut self, _: Part, _: Level, num: Array2<T>, den: Array2<T>) -> (Array2<T>, Array2<T>) {
        (num, den)
    }
}

pub(crate) fn m_step_spectral_with<T: Real, B: TermBlend<T>>(
    s: &mut SourceModel<T>,
    xi: &PowerField<T>,
    floors: &Floors,
    blend: &mut B,
) {
    let eps_v = T::lit(floors.variance);
    let eps_d = T::lit(floors.denominator);
    for part in [Part::Excitation, Part::Filter] {
        let other = match part {
            Part::Excitation => s.filter.product(),
            Part::Filter => s.excitation.product(),
        }
        .mapv(|x| x.max(eps_v));
        let block = match part {
            Part::Excitation => &mut s.excitation,
            Part::Filter => &mut s.filter,
        };
        for level in Level::ALL {
            if !block.factor(level).is_free() {
                continue;
            }
            let (num, den) = mu_terms(block, &other, xi, level, eps_v);
            let (num, den) = blend.blend(part, level, num, den);
            block.factor_mut(level).apply_ratio(&num, &den, eps_d);
        }
    }
}

/// Multiplicative updates of every free spectral factor, excitation then
/// filter, each in the order `W, U, G, H`.
pub fn m_step_spectral<T: Real>(s: &mut SourceModel<T>, xi: &PowerField<T>, floors: &Floors) {
    m_step_spectral_with(s, xi, floors, &mut Direct);
}

/// Spatial update rule of one GEM iteration.
pub(crate) struct SpatialRule<'a, T> {
    /// Committed covariances of the previous block, blended with step `alpha`.
    pub previous: Option<&'a [HermitianStack<T>]>,
    pub alpha: T,
    /// Freeze a source whose mean posterior power `xi` falls below this value.
    pub freeze_below: Option<T>,
}

impl<T: Real> SpatialRule<'_, T> {
    pub fn direct() -> Self {
        Self {
            previous: None,
            alpha: T::one(),
            freeze_below: None,
        }
    }
}

/// One GEM iteration: E-step, spatial M-step, spectral MU, normalization.
/// Returns the indices of sources whose spatial update was frozen.
pub(crate) fn gem_iteration<T: Real, B: TermBlend<T>>(
    model: &mut MixtureModel<T>,
    rx_hat: &CovField<T>,
    floors: &Floors,
    rule: &SpatialRule<'_, T>,
    blends: &mut [B],
) -> Result<Vec<usize>> {
    let vs = model.spectral_variances(T::lit(floors.variance))?;
    let (_, posts) = e_step_with(model, &vs, rx_hat, floors, false)?;
    let mut frozen = Vec::new();
    for (j, s) in model.sources.iter_mut().enumerate() {
        if s.spatial_adapt == Adapt::Free {
            let freeze = match rule.freeze_below {
                Some(threshold) => xi_field(s, &posts[j])?.mean().unwrap_or_else(T::zero) < threshold,
                None => false,
            };
            let mut updated = match (rule.previous, freeze) {
                (Some(prev), true) => prev[j].clone(),
                (Some(prev), false) => {
                    let mut r = prev[j].clone();
                    r.blend(&m_step_spatial(s, &posts[j], &vs[j]), rule.alpha);
                    r
                }
                (None, _) => m_step_spatial(s, &posts[j], &vs[j]),
            };
            if freeze {
                frozen.push(j);
            } else {
                updated.load_diagonal(T::lit(floors.regularization));
            }
            s.spatial = updated;
        }
        let xi = xi_field(s, &posts[j])?;
        m_step_spectral_with(s, &xi, floors, &mut blends[j]);
    }
    model.normalize()?;
    Ok(frozen)
}

/// Outcome of an offline fit.
#[derive(Debug, Clone)]
pub struct OfflineFit<T> {
    pub model: MixtureModel<T>,
    /// Log-likelihood of the initial model.
    pub initial_log_likelihood: T,
    /// Log-likelihood after each iteration.
    pub log_likelihood: Vec<T>,
}

/// Mean power below which a mixture is treated as silent.
pub const SILENCE_POWER: f64 = 1e-20;

/// Fit the model to the whole tensor.
pub fn offline_fit<T: Real>(x: &TfTensor<T>, cfg: &SeparationConfig, rng_seed: u64) -> Result<OfflineFit<T>> {
    offline_fit_observed(x, cfg, rng_seed, |_, _, _| {})
}

/// [`offline_fit`] with a callback receiving `(iteration, model, log L)`
/// after every iteration.
pub fn offline_fit_observed<T: Real>(
    x: &TfTensor<T>,
    cfg: &SeparationConfig,
    rng_seed: u64,
    mut observe: impl FnMut(usize, &MixtureModel<T>, T),
) -> Result<OfflineFit<T>> {
    cfg.validate()?;
    let rx_hat = empirical_covariance(x, cfg.smoothing_frames)?;
    let power = rx_hat.mean_trace();
    if !(power.to_f64_lossy() >= SILENCE_POWER) {
        return Err(Error::DegenerateInput(format!(
            "mixture mean power {power:e} is below {SILENCE_POWER:e}"
        )));
    }
    let mut model = init_model_for(
        cfg,
        x.bins(),
        x.frames(),
        x.channels(),
        x.sample_rate() as f64,
        power,
        rng_seed,
        0,
    )?;
    let floors = cfg.floors;
    let initial = log_likelihood(&rx_hat, &mixture_covariance(&model, &floors)?)?;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut blends: Vec<Direct> = model.sources.iter().map(|_| Direct).collect();
    for it in 0..cfg.iterations {
        gem_iteration(&mut model, &rx_hat, &floors, &SpatialRule::direct(), &mut blends)
            .map_err(|e| e.at_iteration(it))?;
        let ll = log_likelihood(&rx_hat, &mixture_covariance(&model, &floors)?).map_err(|e| e.at_iteration(it))?;
        observe(it, &model, ll);
        trace.push(ll);
    }
    Ok(OfflineFit {
        model,
        initial_log_likelihood: initial,
        log_likelihood: trace,
    })
}
