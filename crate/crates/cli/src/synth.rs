//! `onsep synth`: a synthetic corpus and its manifest.

use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::Args;
use onsep::{generate, AudioBuffer64, SourceKind, SynthSpec};
use serde::{Deserialize, Serialize};

use crate::audio::{write_atomic, write_wav, Encoding};
use crate::manifest::{Entry, Manifest, Role};
use crate::UsageError;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON corpus spec; the default corpus when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the corpus seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// Corpus description: either explicit mixtures or `mixtures` spread ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub mixtures: usize,
    pub duration: f64,
    pub sample_rate: u32,
    pub channels: usize,
    pub seed: u64,
    pub kinds: Vec<SourceKind>,
    pub convolutive_taps: Option<usize>,
    /// Explicit mixtures; replaces the generated ones when non-empty.
    pub explicit: Vec<SynthSpec>,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            mixtures: 5,
            duration: 10.0,
            sample_rate: 16_000,
            channels: 2,
            seed: 0,
            kinds: vec![
                SourceKind::HarmonicToneSequence,
                SourceKind::BassLine,
                SourceKind::FilteredNoisePercussion,
            ],
            convolutive_taps: None,
            explicit: Vec::new(),
        }
    }
}

impl CorpusSpec {
    /// Mixture specs; mixture `m` of a generated corpus uses seed `seed + m`.
    pub fn specs(&self) -> Vec<SynthSpec> {
        if !self.explicit.is_empty() {
            return self.explicit.clone();
        }
        (0..self.mixtures)
            .map(|m| {
                let mut s = SynthSpec::spread(&self.kinds, self.duration, self.sample_rate, self.seed.wrapping_add(m as u64));
                s.channels = self.channels;
                s.convolutive_taps = self.convolutive_taps;
                s
            })
            .collect()
    }
}

fn kind_name(k: SourceKind) -> &'static str {
    match k {
        SourceKind::HarmonicToneSequence => "tones",
        SourceKind::FilteredNoisePercussion => "drums",
        SourceKind::BassLine => "bass",
    }
}

/// Unique per-mixture labels: kind names, suffixed when repeated.
pub fn source_labels(spec: &SynthSpec) -> Vec<String> {
    let names: Vec<&str> = spec.sources.iter().map(|s| kind_name(s.kind)).collect();
    names
        .iter()
        .enumerate()
        .map(|(j, n)| {
            if names.iter().filter(|m| *m == n).count() > 1 {
                format!("{n}{j}")
            } else {
                n.to_string()
            }
        })
        .collect()
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let mut corpus = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read spec `{}`", p.display()))?;
            serde_json::from_str::<CorpusSpec>(&text)
                .map_err(|e| anyhow!(UsageError(format!("spec `{}`: {e}", p.display()))))?
        }
        None => CorpusSpec::default(),
    };
    if let Some(s) = args.seed {
        corpus.seed = s;
        for (m, spec) in corpus.explicit.iter_mut().enumerate() {
            spec.seed = s.wrapping_add(m as u64);
        }
    }
    let specs = corpus.specs();
    if specs.is_empty() {
        return Err(anyhow!(UsageError("corpus has no mixtures".into())));
    }
    let mut entries = Vec::new();
    for (m, spec) in specs.iter().enumerate() {
        spec.validate().map_err(|e| anyhow!(UsageError(format!("mixture {m}: {e}"))))?;
        let id = format!("mix{m:02}");
        let dir = args.out_dir.join(&id);
        std::fs::create_dir_all(&dir).with_context(|| format!("cannot create `{}`", dir.display()))?;
        let (mix, images): (AudioBuffer64, Vec<AudioBuffer64>) = generate(spec)?;
        let path = dir.join("mixture.wav");
        write_wav(&path, &mix, Encoding::Float32)?;
        entries.push(Entry {
            mix_id: id.clone(),
            role: Role::Mixture,
            path,
        });
        for (label, img) in source_labels(spec).into_iter().zip(&images) {
            let path = dir.join(format!("{label}.wav"));
            write_wav(&path, img, Encoding::Float32)?;
            entries.push(Entry {
                mix_id: id.clone(),
                role: Role::Source(label),
                path,
            });
        }
    }
    let manifest = Manifest { entries };
    write_atomic(&args.out_dir.join("manifest.tsv"), manifest.to_text(&args.out_dir).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_corpus_has_five_distinct_mixtures() {
        let specs = CorpusSpec::default().specs();
        assert_eq!(specs.len(), 5);
        assert!(specs.windows(2).all(|w| w[0].seed != w[1].seed));
    }

    #[test]
    fn repeated_kinds_get_suffixes() {
        let s = SynthSpec::spread(&[SourceKind::BassLine, SourceKind::BassLine, SourceKind::HarmonicToneSequence], 1.0, 8000, 0);
        assert_eq!(source_labels(&s), ["bass0", "bass1", "tones"]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = serde_json::from_str::<CorpusSpec>("{\n  \"mixtures\": 2,\n  \"duration\": \"long\"\n}").unwrap_err();
        assert_eq!(err.line(), 3);
    }
}
