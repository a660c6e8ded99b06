//! Loading the separation config and applying command-line overrides.

use anyhow::{anyhow, Context, Result};
use onsep::{Mode, SeparationConfig};

use crate::{Overrides, UsageError};

pub fn load(o: &Overrides) -> Result<SeparationConfig> {
    let mut cfg = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config `{}`", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid config `{}`", path.display()))?
        }
        None => SeparationConfig::default(),
    };
    apply(&mut cfg, o)?;
    Ok(cfg)
}

pub fn apply(cfg: &mut SeparationConfig, o: &Overrides) -> Result<()> {
    if let Some(m) = &o.mode {
        cfg.mode = match m.as_str() {
            "offline" => Mode::Offline,
            "online" => Mode::Online,
            other => return Err(anyhow!(UsageError(format!("unknown mode `{other}`, expected offline or online")))),
        };
    }
    if let Some(a) = o.alpha {
        cfg.alpha = a;
    }
    if let Some(b) = o.block {
        cfg.block_len = b;
    }
    if let Some(i) = o.iters {
        match cfg.mode {
            Mode::Offline => cfg.iterations = i,
            Mode::Online => cfg.iters_per_block = i,
        }
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(())
}
