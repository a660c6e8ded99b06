//! `onsep separate`: one WAV per source plus a JSON run report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::Args;
use onsep::{images_to_audio, offline_fit, online, stft, wiener_separate, AudioBuffer64, Mode, SeparationConfig};
use serde::Serialize;

use crate::audio::{read_wav, write_atomic, write_wav, Encoding};
use crate::manifest::{Entry, Manifest, Role};
use crate::{settings, Overrides, UsageError};

#[derive(Debug, Args)]
pub struct SeparateArgs {
    /// Mixture WAV file.
    pub input: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Directory receiving the source WAVs, `manifest.tsv` and `report.json`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Write 16-bit PCM instead of 32-bit float.
    #[arg(long)]
    pub pcm16: bool,
}

/// Per-run diagnostics written next to the separated sources.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub mode: Mode,
    pub sources: Vec<String>,
    pub frames: usize,
    pub seconds: f64,
    /// Offline log-likelihood before the first and after every iteration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<Vec<f64>>,
    /// Online wall-clock seconds per step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_seconds: Option<Vec<f64>>,
}

pub fn labels(cfg: &SeparationConfig) -> Vec<String> {
    cfg.sources
        .iter()
        .enumerate()
        .map(|(j, s)| if s.label.is_empty() { format!("source{j}") } else { s.label.clone() })
        .collect()
}

/// Separate `audio` according to `cfg`; the images have the input's length.
pub fn separate_audio(audio: &AudioBuffer64, cfg: &SeparationConfig) -> Result<(Vec<AudioBuffer64>, Report)> {
    cfg.validate()?;
    let start = Instant::now();
    let x = stft(audio, cfg.window_len)?;
    let (images, log_likelihood, step_seconds) = match cfg.mode {
        Mode::Offline => {
            let fit = offline_fit(&x, cfg, cfg.seed)?;
            let mut trace = vec![fit.initial_log_likelihood];
            trace.extend(&fit.log_likelihood);
            (wiener_separate(&x, &fit.model, &cfg.floors)?, Some(trace), None)
        }
        Mode::Online => {
            let mut steps = Vec::with_capacity(x.frames());
            let mut last = Instant::now();
            let images = online::online_separate_observed(&x, cfg, cfg.seed, |_| {
                let now = Instant::now();
                steps.push((now - last).as_secs_f64());
                last = now;
            })?;
            (images, None, Some(steps))
        }
    };
    let out = images_to_audio(&images, audio.len())?;
    let report = Report {
        mode: cfg.mode,
        sources: labels(cfg),
        frames: x.frames(),
        seconds: start.elapsed().as_secs_f64(),
        log_likelihood,
        step_seconds,
    };
    Ok((out, report))
}

/// Write separated sources as `<out_dir>/<label>.wav` and return their manifest entries.
pub fn write_sources(
    out_dir: &Path,
    mix_id: &str,
    labels: &[String],
    sources: &[AudioBuffer64],
    encoding: Encoding,
) -> Result<Vec<Entry>> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create `{}`", out_dir.display()))?;
    labels
        .iter()
        .zip(sources)
        .map(|(label, audio)| {
            let path = out_dir.join(format!("{label}.wav"));
            write_wav(&path, audio, encoding)?;
            Ok(Entry {
                mix_id: mix_id.to_string(),
                role: Role::Source(label.clone()),
                path,
            })
        })
        .collect()
}

pub fn run(args: &SeparateArgs) -> Result<()> {
    let cfg = settings::load(&args.overrides)?;
    if !args.input.is_file() {
        return Err(anyhow!(UsageError(format!("input `{}` does not exist", args.input.display()))));
    }
    let audio = read_wav(&args.input)?;
    let (sources, report) = separate_audio(&audio, &cfg).with_context(|| format!("separating `{}`", args.input.display()))?;
    let mix_id = args.input.file_stem().map_or("mixture".into(), |s| s.to_string_lossy().into_owned());
    let encoding = if args.pcm16 { Encoding::Pcm16 } else { Encoding::Float32 };
    let entries = write_sources(&args.out_dir, &mix_id, &report.sources, &sources, encoding)?;
    let manifest = Manifest { entries };
    write_atomic(&args.out_dir.join("manifest.tsv"), manifest.to_text(&args.out_dir).as_bytes())?;
    let json = serde_json::to_vec_pretty(&report)?;
    write_atomic(&args.out_dir.join("report.json"), &json)?;
    Ok(())
}
