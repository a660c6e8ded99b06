//! Image-based separation criteria: SDR, SIR, ISR and SAR.
//!
//! Each estimated image channel is split into a target part (the matching
//! reference channel times a least-squares gain), a spatial-distortion part
//! (projection of the remainder onto delayed copies of every channel of the
//! same reference image), an interference part (the extra captured by the
//! delayed channels of all reference images) and an artifact part (what is
//! left).

use serde::Serialize;

use crate::linalg::SpdCholesky;
use crate::tf::AudioBuffer;
use crate::{Error, Real, Result};

/// Scores are clamped to `[-SCORE_CAP_DB, SCORE_CAP_DB]`.
pub const SCORE_CAP_DB: f64 = 300.0;

/// Default half-width of the delay range, in taps.
pub const DEFAULT_FILTER_LEN: usize = 32;

/// Scores of one source in dB; `None` when undefined (silent reference).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SourceScores {
    pub sdr: Option<f64>,
    pub sir: Option<f64>,
    pub isr: Option<f64>,
    pub sar: Option<f64>,
}

impl SourceScores {
    pub fn as_array(&self) -> [Option<f64>; 4] {
        [self.sdr, self.sir, self.isr, self.sar]
    }
}

/// Scores for every source of one mixture.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BssScores {
    pub sources: Vec<SourceScores>,
}

/// Mean scores and how many defined values went into each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AveragedScores {
    pub scores: SourceScores,
    /// Counts in `sdr, sir, isr, sar` order.
    pub counts: [usize; 4],
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if !(num > 0.0) {
        return -SCORE_CAP_DB;
    }
    if !(den > 0.0) {
        return SCORE_CAP_DB;
    }
    (10.0 * (num / den).log10()).clamp(-SCORE_CAP_DB, SCORE_CAP_DB)
}

/// `sum_t x[t] y[t - lag]`.
fn xcorr(x: &[f64], y: &[f64], lag: isize) -> f64 {
    let n = x.len() as isize;
    let lo = lag.max(0);
    let hi = n.min(n + lag);
    if lo >= hi {
        return 0.0;
    }
    let xs = &x[lo as usize..hi as usize];
    let ys = &y[(lo - lag) as usize..(hi - lag) as usize];
    xs.iter().zip(ys).map(|(a, b)| a * b).sum()
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn factor_with_ridge(gram: &[f64], n: usize) -> Result<SpdCholesky<f64>> {
    let scale = (0..n).map(|i| gram[i * n + i]).sum::<f64>() / n.max(1) as f64;
    let mut ridge = 1e-10 * scale;
    for _ in 0..4 {
        let mut a = gram.to_vec();
        for i in 0..n {
            a[i * n + i] += ridge;
        }
        if let Some(c) = SpdCholesky::new(&a, n) {
            return Ok(c);
        }
        ridge *= 1e3;
    }
    Err(Error::Degenerate("reference Gram matrix is not positive definite".into()))
}

/// Delayed copies of a set of reference channels.
struct Subspace {
    members: Vec<usize>,
    chol: SpdCholesky<f64>,
}

/// Separation scores of `est` against `refs` (`J` images each, equal
/// channel counts and lengths), with delays `-filt_len..=filt_len`.
pub fn bss_eval_images<T: Real>(est: &[AudioBuffer<T>], refs: &[AudioBuffer<T>], filt_len: usize) -> Result<BssScores> {
    if est.is_empty() || est.len() != refs.len() {
        return Err(Error::Shape(format!(
            "{} estimates for {} references",
            est.len(),
            refs.len()
        )));
    }
    let ch = refs[0].n_channels();
    let len = refs[0].len();
    for b in est.iter().chain(refs) {
        if b.n_channels() != ch || b.len() != len {
            return Err(Error::Shape(format!(
                "image is {}x{}, expected {ch}x{len}",
                b.n_channels(),
                b.len()
            )));
        }
    }
    let to64 = |b: &AudioBuffer<T>| -> Vec<Vec<f64>> {
        b.channels()
            .iter()
            .map(|c| c.iter().map(|v| v.to_f64_lossy()).collect())
            .collect()
    };
    let refs64: Vec<Vec<Vec<f64>>> = refs.iter().map(to64).collect();
    let est64: Vec<Vec<Vec<f64>>> = est.iter().map(to64).collect();

    // Non-silent reference channels form the basis, `(source, channel)`.
    let mut basis = Vec::new();
    let mut ref_energy = vec![0.0; refs.len()];
    for (j, r) in refs64.iter().enumerate() {
        for (i, c) in r.iter().enumerate() {
            let e = energy(c);
            ref_energy[j] += e;
            if e > 0.0 {
                basis.push((j, i));
            }
        }
    }
    if basis.is_empty() {
        return Err(Error::DegenerateInput("all reference images are silent".into()));
    }

    let l = filt_len as isize;
    let taps = 2 * filt_len + 1;
    let nb = basis.len();
    let sig = |b: usize| -> &[f64] { &refs64[basis[b].0][basis[b].1] };
    // xc[(a * nb + b) * (4L + 1) + d + 2L] = xcorr(ref_a, ref_b, d)
    let span = 4 * filt_len + 1;
    let mut xc = vec![0.0; nb * nb * span];
    for a in 0..nb {
        for b in a..nb {
            for d in -2 * l..=2 * l {
                let v = xcorr(sig(a), sig(b), d);
                xc[(a * nb + b) * span + (d + 2 * l) as usize] = v;
                xc[(b * nb + a) * span + (2 * l - d) as usize] = v;
            }
        }
    }
    let subspace = |members: Vec<usize>| -> Result<Subspace> {
        let n = members.len() * taps;
        let mut gram = vec![0.0; n * n];
        for (p, &a) in members.iter().enumerate() {
            for (q, &b) in members.iter().enumerate() {
                for s in 0..taps {
                    for s2 in 0..taps {
                        let d = s2 as isize - s as isize;
                        gram[(p * taps + s) * n + q * taps + s2] = xc[(a * nb + b) * span + (d + 2 * l) as usize];
                    }
                }
            }
        }
        Ok(Subspace {
            chol: factor_with_ridge(&gram, n)?,
            members,
        })
    };
    // Projection of an extended signal (length `len + 2L`) onto a subspace.
    let project = |sub: &Subspace, x: &[f64]| -> Vec<f64> {
        let mut rhs = Vec::with_capacity(sub.members.len() * taps);
        for &b in &sub.members {
            let r = sig(b);
            for s in 0..taps {
                rhs.push(x[s..s + len].iter().zip(r).map(|(u, v)| u * v).sum());
            }
        }
        let coef = sub.chol.solve(&rhs);
        let mut out = vec![0.0; x.len()];
        for (p, &b) in sub.members.iter().enumerate() {
            let r = sig(b);
            for s in 0..taps {
                let c = coef[p * taps + s];
                if c != 0.0 {
                    for (o, v) in out[s..s + len].iter_mut().zip(r) {
                        *o += c * v;
                    }
                }
            }
        }
        out
    };

    let all = subspace((0..nb).collect())?;
    let ext = len + 2 * filt_len;
    let mut scores = Vec::with_capacity(refs.len());
    for j in 0..refs.len() {
        if !(ref_energy[j] > 0.0) {
            scores.push(SourceScores::default());
            continue;
        }
        let own = subspace((0..nb).filter(|&b| basis[b].0 == j).collect())?;
        // Energies of target, residual, spatial error, interference,
        // artifacts, target + spatial and target + spatial + interference.
        let [mut e_t, mut e_r, mut e_spat, mut e_interf, mut e_artif, mut e_ts, mut e_tsi] = [0.0; 7];
        for i in 0..ch {
            let reference = &refs64[j][i];
            let estimate = &est64[j][i];
            let re = energy(reference);
            let gain = if re > 0.0 {
                estimate.iter().zip(reference).map(|(a, b)| a * b).sum::<f64>() / re
            } else {
                0.0
            };
            let mut target = vec![0.0; ext];
            let mut resid = vec![0.0; ext];
            for t in 0..len {
                target[filt_len + t] = gain * reference[t];
                resid[filt_len + t] = estimate[t] - target[filt_len + t];
            }
            let p_own = project(&own, &resid);
            let p_all = project(&all, &resid);
            for t in 0..ext {
                let st = target[t];
                let sp = p_own[t];
                let inter = p_all[t] - p_own[t];
                let art = resid[t] - p_all[t];
                e_t += st * st;
                e_r += resid[t] * resid[t];
                e_spat += sp * sp;
                e_interf += inter * inter;
                e_artif += art * art;
                e_ts += (st + sp) * (st + sp);
                e_tsi += (st + sp + inter) * (st + sp + inter);
            }
        }
        scores.push(SourceScores {
            sdr: Some(ratio_db(e_t, e_r)),
            isr: Some(ratio_db(e_t, e_spat)),
            sir: Some(ratio_db(e_ts, e_interf)),
            sar: Some(ratio_db(e_tsi, e_artif)),
        });
    }
    Ok(BssScores { sources: scores })
}

/// Mean of every criterion over all defined source scores, in dB.
pub fn average_scores(scores: &[BssScores]) -> Result<AveragedScores> {
    if scores.is_empty() {
        return Err(Error::InvalidConfig("no scores to average".into()));
    }
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    for s in scores.iter().flat_map(|b| &b.sources) {
        for (k, v) in s.as_array().into_iter().enumerate() {
            if let Some(v) = v {
                sums[k] += v;
                counts[k] += 1;
            }
        }
    }
    let mean = |k: usize| (counts[k] > 0).then(|| sums[k] / counts[k] as f64);
    Ok(AveragedScores {
        scores: SourceScores {
            sdr: mean(0),
            sir: mean(1),
            isr: mean(2),
            sar: mean(3),
        },
        counts,
    })
}
