//! `onsep sweep`: online separation and scoring over an `(alpha, M, iters)` grid.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use onsep::metrics::DEFAULT_FILTER_LEN;
use onsep::{bss_eval_images, AudioBuffer64, Mode, SeparationConfig, SourceScores, SourceSpec};
use rayon::prelude::*;

use crate::audio::{read_wav, write_atomic};
use crate::eval::fmt_score;
use crate::manifest::Manifest;
use crate::separate::separate_audio;
use crate::UsageError;

pub const DETAIL_HEADER: &str = "alpha,block,iters,mixture,source,sdr,sir,isr,sar,error";
pub const SUMMARY_HEADER: &str = "alpha,block,iters,mean_sdr,mean_sir,mean_isr,mean_sar,count,failed";

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Corpus manifest with `mixture` and `source:<label>` rows.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Base JSON config; `J` free sources when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Step sizes (repeatable).
    #[arg(long)]
    pub alpha: Vec<f64>,
    /// Block lengths in frames (repeatable).
    #[arg(long)]
    pub block: Vec<usize>,
    /// Iterations per block (repeatable).
    #[arg(long)]
    pub iters: Vec<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Parallel cells; all cores when absent.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_FILTER_LEN)]
    pub filter_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub alpha: f64,
    pub block: usize,
    pub iters: usize,
}

struct Corpus {
    id: String,
    mixture: AudioBuffer64,
    labels: Vec<String>,
    refs: Vec<AudioBuffer64>,
}

/// Outcome of one cell on one mixture.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub cell: Cell,
    pub mix_id: String,
    pub labels: Vec<String>,
    pub scores: Result<Vec<SourceScores>, String>,
}

pub fn grid(args: &SweepArgs) -> Result<Vec<Cell>> {
    if args.alpha.is_empty() || args.block.is_empty() || args.iters.is_empty() {
        return Err(anyhow!(UsageError(
            "empty grid: give at least one --alpha, --block and --iters".into()
        )));
    }
    let mut cells = Vec::new();
    for &alpha in &args.alpha {
        for &block in &args.block {
            for &iters in &args.iters {
                cells.push(Cell { alpha, block, iters });
            }
        }
    }
    Ok(cells)
}

fn base_config(args: &SweepArgs, n_sources: usize) -> Result<SeparationConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config `{}`", p.display()))?;
            serde_json::from_str::<SeparationConfig>(&text).with_context(|| format!("invalid config `{}`", p.display()))?
        }
        None => SeparationConfig {
            sources: (0..n_sources).map(|j| SourceSpec::free(&format!("source{j}"), 8)).collect(),
            ..SeparationConfig::default()
        },
    };
    if cfg.sources.len() != n_sources {
        return Err(anyhow!(UsageError(format!(
            "config has {} sources but the corpus has {n_sources}",
            cfg.sources.len()
        ))));
    }
    cfg.mode = Mode::Online;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run_cell(base: &SeparationConfig, cell: Cell, mix: &Corpus, filt_len: usize) -> Result<Vec<SourceScores>> {
    let cfg = SeparationConfig {
        alpha: cell.alpha,
        block_len: cell.block,
        iters_per_block: cell.iters,
        ..base.clone()
    };
    let (est, _) = separate_audio(&mix.mixture, &cfg)?;
    Ok(bss_eval_images(&est, &mix.refs, filt_len)?.sources)
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn render(cells: &[Cell], outcomes: &[Outcome]) -> Result<(String, String)> {
    let mut detail = format!("{DETAIL_HEADER}\n");
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for cell in cells {
        let rows: Vec<&Outcome> = outcomes.iter().filter(|o| o.cell == *cell).collect();
        let mut scored = Vec::new();
        let mut failed = 0;
        for o in &rows {
            match &o.scores {
                Ok(s) => {
                    for (label, sc) in o.labels.iter().zip(s) {
                        let [a, b, c, d] = sc.as_array().map(fmt_score);
                        writeln!(detail, "{},{},{},{},{label},{a},{b},{c},{d},", cell.alpha, cell.block, cell.iters, o.mix_id)?;
                        scored.push(*sc);
                    }
                }
                Err(msg) => {
                    failed += 1;
                    let msg = msg.replace([',', '\n', '"'], " ");
                    writeln!(detail, "{},{},{},{},,,,,,{msg}", cell.alpha, cell.block, cell.iters, o.mix_id)?;
                }
            }
        }
        let m = |k: usize| fmt_score(mean(scored.iter().map(|s| s.as_array()[k])));
        writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{failed}",
            cell.alpha,
            cell.block,
            cell.iters,
            m(0),
            m(1),
            m(2),
            m(3),
            scored.len()
        )?;
    }
    Ok((detail, summary))
}

fn load_corpus(manifest: &Manifest) -> Result<Vec<Corpus>> {
    manifest
        .mixtures()
        .into_iter()
        .map(|set| {
            let path = set
                .mixture
                .ok_or_else(|| anyhow!(UsageError(format!("mixture `{}` has no mixture row", set.mix_id))))?;
            if set.sources.is_empty() {
                return Err(anyhow!(UsageError(format!("mixture `{}` has no source rows", set.mix_id))));
            }
            Ok(Corpus {
                id: set.mix_id,
                mixture: read_wav(&path)?,
                labels: set.sources.iter().map(|(l, _)| l.clone()).collect(),
                refs: set.sources.iter().map(|(_, p)| read_wav(p)).collect::<Result<_>>()?,
            })
        })
        .collect()
}

pub fn run(args: &SweepArgs) -> Result<()> {
    let cells = grid(args)?;
    if !args.manifest.is_file() {
        return Err(anyhow!(UsageError(format!("manifest `{}` does not exist", args.manifest.display()))));
    }
    let corpus = load_corpus(&Manifest::load(&args.manifest)?)?;
    if corpus.is_empty() {
        return Err(anyhow!(UsageError("manifest lists no mixtures".into())));
    }
    let n_sources = corpus[0].refs.len();
    if corpus.iter().any(|c| c.refs.len() != n_sources) {
        bail!(UsageError("every mixture must have the same number of sources".into()));
    }
    let base = base_config(args, n_sources)?;
    for c in &cells {
        SeparationConfig {
            alpha: c.alpha,
            block_len: c.block,
            iters_per_block: c.iters,
            ..base.clone()
        }
        .validate()?;
    }
    let jobs: Vec<(Cell, &Corpus)> = cells.iter().flat_map(|c| corpus.iter().map(move |m| (*c, m))).collect();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(anyhow!(UsageError("--workers must be >= 1".into())));
        }
        pool = pool.num_threads(w);
    }
    let outcomes: Vec<Outcome> = pool.build()?.install(|| {
        jobs.par_iter()
            .map(|(cell, mix)| Outcome {
                cell: *cell,
                mix_id: mix.id.clone(),
                labels: mix.labels.clone(),
                scores: run_cell(&base, *cell, mix, args.filter_len).map_err(|e| format!("{e:#}")),
            })
            .collect()
    });
    let (detail, summary) = render(&cells, &outcomes)?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("cannot create `{}`", args.out_dir.display()))?;
    write_atomic(&args.out_dir.join("sweep.csv"), detail.as_bytes())?;
    write_atomic(&args.out_dir.join("summary.csv"), summary.as_bytes())?;
    let failed = outcomes.iter().filter(|o| o.scores.is_err()).count();
    if failed > 0 {
        bail!("{failed} of {} cell runs failed; see sweep.csv", outcomes.len());
    }
    Ok(())
}
