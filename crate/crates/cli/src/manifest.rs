//! Tab-separated corpus manifests: `mix_id`, `role`, `path` per line.
//!
//! Roles are `mixture` or `source:<label>`; relative paths resolve against
//! the manifest's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Role {
    Mixture,
    Source(String),
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Role::Mixture => f.write_str("mixture"),
            Role::Source(l) => write!(f, "source:{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub mix_id: String,
    pub role: Role,
    pub path: PathBuf,
}

/// One mixture with its source files, in manifest order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixtureSet {
    pub mix_id: String,
    pub mixture: Option<PathBuf>,
    pub sources: Vec<(String, PathBuf)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<Entry>,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [mix_id, role, path] = fields[..] else {
                return Err(anyhow!(UsageError(format!("manifest line {}: expected 3 tab-separated fields", k + 1))));
            };
            let role = match role {
                "mixture" => Role::Mixture,
                r => match r.strip_prefix("source:") {
                    Some(l) if !l.is_empty() => Role::Source(l.to_string()),
                    _ => return Err(anyhow!(UsageError(format!("manifest line {}: unknown role `{r}`", k + 1)))),
                },
            };
            let path = Path::new(path);
            entries.push(Entry {
                mix_id: mix_id.to_string(),
                role,
                path: if path.is_absolute() { path.to_path_buf() } else { base.join(path) },
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read manifest `{}`", path.display()))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Lines with paths relative to `base` where possible.
    pub fn to_text(&self, base: &Path) -> String {
        self.entries
            .iter()
            .map(|e| {
                let p = e.path.strip_prefix(base).unwrap_or(&e.path);
                format!("{}\t{}\t{}\n", e.mix_id, e.role, p.display())
            })
            .collect()
    }

    /// Entries grouped by mixture, first appearance order.
    pub fn mixtures(&self) -> Vec<MixtureSet> {
        let mut order: Vec<String> = Vec::new();
        let mut sets: BTreeMap<String, MixtureSet> = BTreeMap::new();
        for e in &self.entries {
            let set = sets.entry(e.mix_id.clone()).or_insert_with(|| {
                order.push(e.mix_id.clone());
                MixtureSet {
                    mix_id: e.mix_id.clone(),
                    mixture: None,
                    sources: Vec::new(),
                }
            });
            match &e.role {
                Role::Mixture => set.mixture = Some(e.path.clone()),
                Role::Source(l) => set.sources.push((l.clone(), e.path.clone())),
            }
        }
        order.into_iter().map(|id| sets.remove(&id).expect("grouped id")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_groups() {
        let m = Manifest::parse("a\tmixture\tm.wav\na\tsource:x\tx.wav\nb\tsource:y\t/abs/y.wav\n", Path::new("/base")).unwrap();
        let sets = m.mixtures();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].mixture.as_deref(), Some(Path::new("/base/m.wav")));
        assert_eq!(sets[1].sources, vec![("y".to_string(), PathBuf::from("/abs/y.wav"))]);
        assert_eq!(m.to_text(Path::new("/base")), "a\tmixture\tm.wav\na\tsource:x\tx.wav\nb\tsource:y\t/abs/y.wav\n");
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Manifest::parse("a\tmixture\n", Path::new(".")).is_err());
        assert!(Manifest::parse("a\tvoice\tv.wav\n", Path::new(".")).is_err());
    }
}
