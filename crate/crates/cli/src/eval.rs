//! `onsep eval`: BSS scores of estimated images against references.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use onsep::metrics::DEFAULT_FILTER_LEN;
use onsep::{average_scores, bss_eval_images, AudioBuffer64, BssScores};

use crate::audio::{read_wav, write_atomic};
use crate::manifest::{Manifest, MixtureSet};
use crate::UsageError;

pub const HEADER: &str = "mixture,source,sdr,sir,isr,sar";

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Manifest of the estimated source images.
    #[arg(long)]
    pub estimates: PathBuf,
    /// Manifest of the reference source images.
    #[arg(long)]
    pub references: PathBuf,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Distortion filter length in samples.
    #[arg(long, default_value_t = DEFAULT_FILTER_LEN)]
    pub filter_len: usize,
}

/// Scores of one mixture with the reference labels.
#[derive(Debug, Clone)]
pub struct MixtureScores {
    pub mix_id: String,
    pub labels: Vec<String>,
    pub scores: BssScores,
}

pub fn read_set(paths: &[(String, PathBuf)]) -> Result<Vec<AudioBuffer64>> {
    paths.iter().map(|(_, p)| read_wav(p)).collect()
}

/// Score `est` against `refs`, source order matching.
pub fn score(mix_id: &str, est: &[(String, PathBuf)], refs: &[(String, PathBuf)], filt_len: usize) -> Result<MixtureScores> {
    if est.len() != refs.len() {
        bail!("mixture `{mix_id}`: {} estimates for {} references", est.len(), refs.len());
    }
    let e = read_set(est)?;
    let r = read_set(refs)?;
    for ((ep, ea), (rp, ra)) in est.iter().zip(&e).zip(refs.iter().zip(&r)) {
        if ea.len() != ra.len() || ea.n_channels() != ra.n_channels() {
            bail!(
                "`{}` ({} x {}) does not match `{}` ({} x {})",
                ep.1.display(),
                ea.n_channels(),
                ea.len(),
                rp.1.display(),
                ra.n_channels(),
                ra.len()
            );
        }
    }
    let scores = bss_eval_images(&e, &r, filt_len).with_context(|| format!("scoring mixture `{mix_id}`"))?;
    Ok(MixtureScores {
        mix_id: mix_id.to_string(),
        labels: refs.iter().map(|(l, _)| l.clone()).collect(),
        scores,
    })
}

pub fn fmt_score(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

pub fn render_csv(all: &[MixtureScores]) -> Result<String> {
    let mut out = String::from(HEADER);
    out.push('\n');
    for m in all {
        for (label, s) in m.labels.iter().zip(&m.scores.sources) {
            let [a, b, c, d] = s.as_array().map(fmt_score);
            writeln!(out, "{},{label},{a},{b},{c},{d}", m.mix_id)?;
        }
    }
    let sets: Vec<BssScores> = all.iter().map(|m| m.scores.clone()).collect();
    let avg = average_scores(&sets)?;
    let [a, b, c, d] = avg.scores.as_array().map(fmt_score);
    writeln!(out, "average,all,{a},{b},{c},{d}")?;
    Ok(out)
}

fn pair(est: &[MixtureSet], refs: &[MixtureSet]) -> Result<Vec<(String, Vec<(String, PathBuf)>, Vec<(String, PathBuf)>)>> {
    let mut out = Vec::new();
    for r in refs {
        let Some(e) = est.iter().find(|e| e.mix_id == r.mix_id) else {
            continue;
        };
        out.push((r.mix_id.clone(), e.sources.clone(), r.sources.clone()));
    }
    if out.is_empty() {
        return Err(anyhow!(UsageError("no mixture id is shared by the two manifests".into())));
    }
    Ok(out)
}

fn load_manifest(p: &Path) -> Result<Manifest> {
    if !p.is_file() {
        return Err(anyhow!(UsageError(format!("manifest `{}` does not exist", p.display()))));
    }
    Manifest::load(p)
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let est = load_manifest(&args.estimates)?.mixtures();
    let refs = load_manifest(&args.references)?.mixtures();
    let all = pair(&est, &refs)?
        .into_iter()
        .map(|(id, e, r)| score(&id, &e, &r, args.filter_len))
        .collect::<Result<Vec<_>>>()?;
    let csv = render_csv(&all)?;
    match &args.out {
        Some(p) => write_atomic(p, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
