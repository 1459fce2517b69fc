use std::path::{Path, PathBuf};

use georeason_core::pipeline::{CorpusConfig, DemoConfig};
use georeason_core::pretrain::TrainingConfig;
use georeason_core::tasks::FinetuneConfig;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Input files. Unset entries resolve to the synthetic world written by
/// `build-corpus --synthetic` under `<out>/world`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub gazetteer: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub triples: Option<PathBuf>,
    pub typing: Option<PathBuf>,
    pub heldout: Option<PathBuf>,
    pub summary_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSize {
    pub n_entities: usize,
    pub n_docs: usize,
    pub n_heldout_docs: usize,
}

impl Default for SyntheticSize {
    fn default() -> Self {
        SyntheticSize {
            n_entities: 50,
            n_docs: 20,
            n_heldout_docs: 10,
        }
    }
}

/// Everything a subcommand reads besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub synthetic: SyntheticSize,
    pub corpus: CorpusConfig,
    pub training: TrainingConfig,
    pub recognition: FinetuneConfig,
    pub typing: FinetuneConfig,
    pub ks: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let demo = DemoConfig::default();
        RunConfig {
            seed: 0,
            paths: Paths::default(),
            synthetic: SyntheticSize {
                n_entities: demo.n_entities,
                n_docs: demo.n_docs,
                n_heldout_docs: demo.n_heldout_docs,
            },
            corpus: demo.corpus,
            training: demo.training,
            recognition: demo.recognition,
            typing: demo.typing,
            ks: demo.ks,
        }
    }
}

/// Overlays `user` onto `base`, recursing into objects so omitted nested
/// fields keep the run defaults.
fn merge(base: &mut serde_json::Value, user: serde_json::Value) {
    match (base, user) {
        (serde_json::Value::Object(b), serde_json::Value::Object(u)) => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Reads a JSON config; relative paths are taken against its directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let bytes = std::fs::read(path).map_err(|e| Failure::new("io", format!("reading {}: {e}", path.display())))?;
        let bad = |e: serde_json::Error| Failure::new("config", format!("{}: {e}", path.display()));
        let user: serde_json::Value = serde_json::from_slice(&bytes).map_err(bad)?;
        let mut merged = serde_json::to_value(RunConfig::default()).map_err(bad)?;
        merge(&mut merged, user);
        let mut cfg: RunConfig = serde_json::from_value(merged).map_err(bad)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for slot in [
            &mut p.gazetteer,
            &mut p.corpus,
            &mut p.triples,
            &mut p.typing,
            &mut p.heldout,
            &mut p.summary_cache,
        ] {
            if let Some(rel) = slot.as_ref().filter(|r| r.is_relative()) {
                *slot = Some(base.join(rel));
            }
        }
        Ok(cfg)
    }

    pub fn demo(&self) -> DemoConfig {
        DemoConfig {
            n_entities: self.synthetic.n_entities,
            n_docs: self.synthetic.n_docs,
            n_heldout_docs: self.synthetic.n_heldout_docs,
            corpus: self.corpus,
            training: self.training.clone(),
            recognition: self.recognition.clone(),
            typing: self.typing.clone(),
            ks: self.ks.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.training.validate()?;
        self.recognition.validate()?;
        self.typing.validate()?;
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Failure::new("config", "ks must be a non-empty list of positive integers"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, br#"{"seed": 4, "paths": {"gazetteer": "g.jsonl"}, "training": {"steps": 3}}"#).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.training.steps, 3);
        assert_eq!(cfg.training.d_model, RunConfig::default().training.d_model);
        assert_eq!(cfg.ks, RunConfig::default().ks);
        assert_eq!(cfg.paths.gazetteer, Some(dir.path().join("g.jsonl")));
        cfg.validate().unwrap();
    }

    #[test]
    fn bad_config_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, b"{\"seed\": \"x\"}").unwrap();
        assert_eq!(RunConfig::load(&p).unwrap_err().kind, "config");
        let zero_k = RunConfig {
            ks: vec![0],
            ..RunConfig::default()
        };
        assert!(zero_k.validate().is_err());
    }
}
