//! WAV reading and atomic file writing.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use onsep::AudioBuffer64;

pub const MAX_CHANNELS: u16 = 8;

/// Sample encoding of written files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Pcm16,
    Float32,
}

/// Read a 16/24/32-bit PCM or 32-bit float WAV with 1 to 8 channels.
pub fn read_wav(path: &Path) -> Result<AudioBuffer64> {
    let reader = WavReader::open(path).with_context(|| format!("cannot open `{}`", path.display()))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > MAX_CHANNELS {
        bail!("`{}` has {} channels, 1 to {MAX_CHANNELS} are supported", path.display(), spec.channels);
    }
    let ch = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (fmt, bits) => bail!("`{}`: unsupported sample format {fmt:?} with {bits} bits", path.display()),
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / ch); ch];
    for frame in interleaved.chunks_exact(ch) {
        for (c, &v) in channels.iter_mut().zip(frame) {
            c.push(v);
        }
    }
    AudioBuffer64::new(spec.sample_rate, channels).with_context(|| format!("`{}`", path.display()))
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write in `{}`", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("cannot create `{}`", path.display()))?;
    Ok(())
}

pub fn encode_wav(audio: &AudioBuffer64, encoding: Encoding) -> Result<Vec<u8>> {
    let spec = WavSpec {
        channels: audio.n_channels() as u16,
        sample_rate: audio.sample_rate(),
        bits_per_sample: match encoding {
            Encoding::Pcm16 => 16,
            Encoding::Float32 => 32,
        },
        sample_format: match encoding {
            Encoding::Pcm16 => SampleFormat::Int,
            Encoding::Float32 => SampleFormat::Float,
        },
    };
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut w = WavWriter::new(&mut cursor, spec)?;
        for t in 0..audio.len() {
            for c in audio.channels() {
                match encoding {
                    Encoding::Float32 => w.write_sample(c[t] as f32)?,
                    Encoding::Pcm16 => w.write_sample((c[t].clamp(-1.0, 1.0) * 32767.0).round() as i16)?,
                }
            }
        }
        w.finalize()?;
    }
    Ok(cursor.into_inner())
}

pub fn write_wav(path: &Path, audio: &AudioBuffer64, encoding: Encoding) -> Result<()> {
    write_atomic(path, &encode_wav(audio, encoding)?)
}
