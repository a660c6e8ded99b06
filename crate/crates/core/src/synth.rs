//! Synthetic stereo corpus with known source images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::pan_gains;
use crate::tf::AudioBuffer;
use crate::{Error, Real, Result};

/// Kind of synthetic instrument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    HarmonicToneSequence,
    FilteredNoisePercussion,
    BassLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSource {
    pub kind: SourceKind,
    pub azimuth_deg: f64,
    /// `(start, end)` intervals in seconds during which the source is silent.
    #[serde(default)]
    pub silence: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub channels: usize,
    pub duration: f64,
    pub sample_rate: u32,
    pub sources: Vec<SynthSource>,
    pub seed: u64,
    /// Allow several sources at the same azimuth.
    #[serde(default)]
    pub colliding: bool,
    /// Length of a random per-channel FIR replacing plain gains.
    #[serde(default)]
    pub convolutive_taps: Option<usize>,
}

impl SynthSpec {
    /// `kinds.len()` sources spread over `[-45, 45]` degrees.
    pub fn spread(kinds: &[SourceKind], duration: f64, sample_rate: u32, seed: u64) -> Self {
        let n = kinds.len();
        let sources = kinds
            .iter()
            .enumerate()
            .map(|(j, &kind)| SynthSource {
                kind,
                azimuth_deg: if n == 1 { 0.0 } else { -45.0 + 90.0 * j as f64 / (n - 1) as f64 },
                silence: Vec::new(),
            })
            .collect();
        Self {
            channels: 2,
            duration,
            sample_rate,
            sources,
            seed,
            colliding: false,
            convolutive_taps: None,
        }
    }

    pub fn len(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if self.sample_rate == 0 || self.channels == 0 || self.sources.is_empty() {
            return bad("need a sample rate, at least one channel and one source".into());
        }
        if self.is_empty() {
            return bad("duration is shorter than one sample".into());
        }
        for (j, s) in self.sources.iter().enumerate() {
            if !(-45.0..=45.0).contains(&s.azimuth_deg) {
                return bad(format!("source {j}: azimuth {} outside [-45, 45]", s.azimuth_deg));
            }
            if s.silence.iter().any(|&(a, b)| !(a <= b)) {
                return bad(format!("source {j}: silence interval with start after end"));
            }
            if !self.colliding && self.sources[..j].iter().any(|o| o.azimuth_deg == s.azimuth_deg) {
                return bad(format!("source {j}: azimuth {} already used", s.azimuth_deg));
            }
        }
        if self.convolutive_taps == Some(0) {
            return bad("convolutive filter needs at least one tap".into());
        }
        Ok(())
    }
}

fn source_rng(seed: u64, j: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(j as u64 + 1);
    rng
}

/// Additive tone with `1/k` partials, placed at `start` with an attack and
/// exponential decay envelope.
fn add_note(out: &mut [f64], fs: f64, start: usize, len: usize, f0: f64, partials: usize, decay: f64) {
    let attack = (0.01 * fs) as usize;
    let end = (start + len).min(out.len());
    for (k, o) in out[start..end].iter_mut().enumerate() {
        let t = k as f64 / fs;
        let env = (k as f64 / attack.max(1) as f64).min(1.0) * (-t / decay).exp();
        let release = ((end - start - k) as f64 / attack.max(1) as f64).min(1.0);
        let mut v = 0.0;
        for p in 1..=partials {
            let f = f0 * p as f64;
            if f < fs / 2.0 {
                v += (2.0 * std::f64::consts::PI * f * t).sin() / p as f64;
            }
        }
        *o += env * release * v;
    }
}

fn harmonic_tones(len: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // A minor pentatonic over two octaves from A3.
    const STEPS: [i32; 10] = [0, 3, 5, 7, 10, 12, 15, 17, 19, 22];
    let mut out = vec![0.0; len];
    let mut t = 0;
    while t < len {
        let dur = (rng.gen_range(0.2..0.45) * fs) as usize;
        let step = STEPS[rng.gen_range(0..STEPS.len())];
        let f0 = 220.0 * 2f64.powf(step as f64 / 12.0);
        add_note(&mut out, fs, t, dur, f0, 8, 0.4);
        t += dur;
    }
    out
}

fn bass_line(len: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    const STEPS: [i32; 5] = [0, 3, 5, 7, 10];
    let mut out = vec![0.0; len];
    let mut t = 0;
    while t < len {
        let dur = (rng.gen_range(0.4..0.6) * fs) as usize;
        let f0 = 55.0 * 2f64.powf(STEPS[rng.gen_range(0..STEPS.len())] as f64 / 12.0);
        add_note(&mut out, fs, t, dur, f0, 10, 0.8);
        t += dur;
    }
    out
}

fn percussion(len: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let beat = (0.125 * fs) as usize;
    let mut t = 0;
    let mut i = 0usize;
    while t < len {
        if rng.gen_bool(0.75) {
            // Alternate a low-passed thump with a high-passed click.
            let low = i.is_multiple_of(2);
            let (decay, coef) = if low { (0.05, 0.95) } else { (0.015, 0.3) };
            let hit_len = ((5.0 * decay * fs) as usize).min(len - t);
            let mut state = 0.0;
            for k in 0..hit_len {
                let n: f64 = rng.gen_range(-1.0..1.0);
                state = coef * state + (1.0 - coef) * n;
                let v = if low { state * 4.0 } else { n - state };
                out[t + k] += v * (-(k as f64) / (decay * fs)).exp();
            }
        }
        t += beat;
        i += 1;
    }
    out
}

fn normalize_rms(x: &mut [f64], rms: f64) {
    let e = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if e > 0.0 {
        x.iter_mut().for_each(|v| *v *= rms / e);
    }
}

/// Synthesize a mixture and its source images; the mixture is the exact
/// sample-wise sum of the images.
pub fn generate<T: Real>(spec: &SynthSpec) -> Result<(AudioBuffer<T>, Vec<AudioBuffer<T>>)> {
    spec.validate()?;
    let len = spec.len();
    let fs = spec.sample_rate as f64;
    let mut images = Vec::with_capacity(spec.sources.len());
    for (j, src) in spec.sources.iter().enumerate() {
        let mut rng = source_rng(spec.seed, j);
        let mut mono = match src.kind {
            SourceKind::HarmonicToneSequence => harmonic_tones(len, fs, &mut rng),
            SourceKind::FilteredNoisePercussion => percussion(len, fs, &mut rng),
            SourceKind::BassLine => bass_line(len, fs, &mut rng),
        };
        normalize_rms(&mut mono, 0.1);
        let gains = pan_gains(spec.channels, src.azimuth_deg);
        let mut channels: Vec<Vec<f64>> = match spec.convolutive_taps {
            None => gains.iter().map(|&g| mono.iter().map(|v| g * v).collect()).collect(),
            Some(taps) => gains
                .iter()
                .map(|&g| {
                    let h: Vec<f64> = (0..taps)
                        .map(|k| {
                            if k == 0 {
                                g
                            } else {
                                g * rng.gen_range(-0.5..0.5) * (-(k as f64) / (taps as f64 / 3.0)).exp()
                            }
                        })
                        .collect();
                    (0..len)
                        .map(|t| h.iter().enumerate().take(t + 1).map(|(k, hk)| hk * mono[t - k]).sum())
                        .collect()
                })
                .collect(),
        };
        for &(a, b) in &src.silence {
            let start = ((a * fs).round().max(0.0) as usize).min(len);
            let end = ((b * fs).round().max(0.0) as usize).min(len);
            for c in channels.iter_mut() {
                c[start..end].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let channels: Vec<Vec<T>> = channels
            .into_iter()
            .map(|c| c.into_iter().map(T::lit).collect())
            .collect();
        images.push(AudioBuffer::new(spec.sample_rate, channels)?);
    }
    let mut mix = vec![vec![T::zero(); len]; spec.channels];
    for img in &images {
        for (m, c) in mix.iter_mut().zip(img.channels()) {
            for (a, &b) in m.iter_mut().zip(c) {
                *a += b;
            }
        }
    }
    Ok((AudioBuffer::new(spec.sample_rate, mix)?, images))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec::spread(
            &[SourceKind::HarmonicToneSequence, SourceKind::FilteredNoisePercussion, SourceKind::BassLine],
            0.5,
            8000,
            3,
        )
    }

    #[test]
    fn mixture_is_exact_sum() {
        let (mix, imgs) = generate::<f64>(&spec()).unwrap();
        for i in 0..2 {
            for t in 0..mix.len() {
                let s: f64 = imgs.iter().fold(0.0, |a, img| a + img.channel(i)[t]);
                assert_eq!(mix.channel(i)[t] - s, 0.0);
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = generate::<f32>(&spec()).unwrap();
        let b = generate::<f32>(&spec()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn full_silence_interval_zeroes_image() {
        let mut s = spec();
        s.sources[1].silence = vec![(0.0, s.duration)];
        let (_, imgs) = generate::<f64>(&s).unwrap();
        assert!(imgs[1].channels().iter().flatten().all(|&v| v == 0.0));
        assert!(imgs[0].peak() > 0.0);
    }

    #[test]
    fn hard_panned_gains_are_orthogonal() {
        let l = pan_gains(2, -45.0);
        let r = pan_gains(2, 45.0);
        assert!((l[0] * r[0] + l[1] * r[1]).abs() < 1e-15);
    }

    #[test]
    fn convolutive_variant_keeps_exact_sum() {
        let mut s = spec();
        s.convolutive_taps = Some(8);
        let (mix, imgs) = generate::<f64>(&s).unwrap();
        let t = mix.len() / 2;
        let sum: f64 = imgs.iter().fold(0.0, |a, img| a + img.channel(1)[t]);
        assert_eq!(mix.channel(1)[t], sum);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = spec();
        s.duration = 0.0;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.sources[1].azimuth_deg = s.sources[0].azimuth_deg;
        assert!(s.validate().is_err());
        s.colliding = true;
        assert!(s.validate().is_ok());
    }
}
