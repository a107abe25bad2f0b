//! Pipeline configuration: a TOML file with serde defaults for every knob,
//! plus a small set of environment overrides.

use crate::error::{Error, Result};
use crate::extraction::{ExtractionMode, StyleConfig, VisualSampling};
use crate::features::InteractionWeights;
use crate::gateway::EndpointConfig;
use crate::synth::SyntheticWorld;
use crate::tower::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Which pipeline stages a `run` executes. All default to on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StagesConfig {
    pub extract: bool,
    pub judge: bool,
    pub dpo: bool,
    pub features: bool,
    pub train: bool,
    pub retrieve: bool,
}

impl Default for StagesConfig {
    fn default() -> Self {
        Self { extract: true, judge: true, dpo: true, features: true, train: true, retrieve: true }
    }
}

/// Input and output locations, all relative to the config file unless
/// absolute.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub notes: PathBuf,
    pub reference_tags: PathBuf,
    pub handbooks: PathBuf,
    pub events: PathBuf,
    pub users: PathBuf,
    pub train_examples: PathBuf,
    pub cassette: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            notes: "data/notes.jsonl".into(),
            reference_tags: "data/reference_tags.jsonl".into(),
            handbooks: "data/handbooks.json".into(),
            events: "data/events.jsonl".into(),
            users: "data/users.jsonl".into(),
            train_examples: "data/train_examples.jsonl".into(),
            cassette: "data/cassette.jsonl".into(),
            out_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub mode: ExtractionMode,
    pub style: StyleConfig,
    pub sampling: VisualSampling,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            mode: ExtractionMode::SingleShot,
            style: StyleConfig::default(),
            sampling: VisualSampling::default(),
        }
    }
}

/// Top-level configuration for the whole pipeline.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Model used for handbook generation and tag extraction.
    pub generator: EndpointConfig,
    /// Judge model for scoring and pairwise comparison.
    pub judge: EndpointConfig,
    pub extraction: ExtractionConfig,
    pub weights: InteractionWeights,
    pub train: TrainConfig,
    pub synth: SyntheticWorld,
    pub stages: StagesConfig,
    pub paths: PathsConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config: Self = toml::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("bad config {}: {e}", path.display())))?;
        config.anchor_paths(path.parent().unwrap_or_else(|| Path::new(".")));
        config.apply_env_overrides();
        config.validate()?;
        Ok(config)
    }

    fn anchor_paths(&mut self, base: &Path) {
        for p in [
            &mut self.paths.notes,
            &mut self.paths.reference_tags,
            &mut self.paths.handbooks,
            &mut self.paths.events,
            &mut self.paths.users,
            &mut self.paths.train_examples,
            &mut self.paths.cassette,
            &mut self.paths.out_dir,
        ] {
            if p.is_relative() {
                *p = base.join(p.as_path());
            }
        }
    }

    /// Environment beats file: `NOTETAG_SEED`, `NOTETAG_GENERATOR_MODEL`,
    /// `NOTETAG_JUDGE_MODEL`.
    fn apply_env_overrides(&mut self) {
        if let Ok(seed) = std::env::var("NOTETAG_SEED") {
            if let Ok(seed) = seed.parse() {
                self.set_seed(seed);
            }
        }
        if let Ok(model) = std::env::var("NOTETAG_GENERATOR_MODEL") {
            self.generator.model = model;
        }
        if let Ok(model) = std::env::var("NOTETAG_JUDGE_MODEL") {
            self.judge.model = model;
        }
    }

    /// Propagates one seed to every seeded component.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.synth.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.weights.validate()?;
        if self.train.embed_dim == 0 || self.train.hidden_dim == 0 || self.train.output_dim == 0 {
            return Err(Error::InvalidInput("tower dimensions must be >= 1".into()));
        }
        Ok(())
    }

    /// Stable hash of the fully resolved configuration, reported by runs.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serialization cannot fail");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let config = PipelineConfig::default();
        config.validate().unwrap();
        assert!(config.stages.extract);
        assert_eq!(config.extraction.mode, ExtractionMode::SingleShot);
    }

    #[test]
    fn loads_partial_toml_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        std::fs::write(
            &path,
            r#"
[generator]
base_url = "http://localhost:9999"
model = "gen-model"

[train]
epochs = 5

[stages]
dpo = false
"#,
        )
        .unwrap();
        let config = PipelineConfig::load(&path).unwrap();
        assert_eq!(config.generator.model, "gen-model");
        assert_eq!(config.train.epochs, 5);
        assert!(!config.stages.dpo);
        assert!(config.stages.extract);
        // relative paths resolve against the config file location
        assert!(config.paths.notes.starts_with(dir.path()));
    }

    #[test]
    fn rejects_invalid_train_section() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        std::fs::write(&path, "[train]\nbatch_size = 0\n").unwrap();
        assert!(PipelineConfig::load(&path).is_err());
    }

    #[test]
    fn content_hash_is_stable_and_sensitive() {
        let a = PipelineConfig::default();
        let mut b = PipelineConfig::default();
        assert_eq!(a.content_hash(), b.content_hash());
        b.train.epochs += 1;
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
