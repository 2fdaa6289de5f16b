//! The experiment configuration file: one TOML document drives data
//! generation, encoder pre-training, recognizer training, evaluation and
//! adaptation. Unknown fields are rejected. The configuration hash is taken
//! over the canonical re-serialization, so formatting and comments do not
//! change identity; command-line overrides are recorded in the run manifest
//! instead of the hash.

use crate::adaptation::SuiteConfig;
use crate::charset::fnv1a64;
use crate::dataset::{AugmentationConfig, CorpusSpec};
use crate::error::{Error, Result};
use crate::recognizer::{ConditioningMode, NetConfig};
use crate::style_encoder::{EncoderConfig, EncoderTrainConfig};
use crate::training::TrainSettings;
use crate::wsb::{EmbeddingInit, InitBound, InitSpec, SUPPORTED_ED};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentMeta {
    pub name: String,
    pub output_dir: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub tst_global_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub mode: ConditioningMode,
    pub ed: usize,
    pub embedding_init: EmbeddingInit,
    /// Projection init constant.
    pub tau: f32,
    pub init_bound: InitBound,
    pub architecture: NetConfig,
}

/// Encoder architecture as written in config files; the output dimension
/// always follows the recognizer's `ed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderArch {
    pub conv_channels: Vec<usize>,
    pub attention_blocks: usize,
    pub attention_heads: usize,
    pub ff_mult: usize,
}

impl EncoderArch {
    pub fn to_config(&self, ed: usize) -> EncoderConfig {
        EncoderConfig {
            conv_channels: self.conv_channels.clone(),
            attention_blocks: self.attention_blocks,
            attention_heads: self.attention_heads,
            ff_mult: self.ff_mult,
            ed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    /// Lines aggregated per writer during embedding extraction.
    pub extract_k: usize,
    pub architecture: EncoderArch,
    pub train: EncoderTrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecipeKind {
    Normal,
    Pretrained,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub recipe: RecipeKind,
    /// Iteration-count scale factor in (0, 1].
    pub scale: f64,
    pub settings: TrainSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentMeta,
    pub corpus: CorpusSpec,
    pub partition: PartitionConfig,
    pub augment: AugmentationConfig,
    pub net: NetSection,
    pub encoder: EncoderSection,
    pub training: TrainSection,
    pub adaptation: SuiteConfig,
    /// Held-out writers used by the adaptation commands.
    pub adaptation_corpus: CorpusSpec,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Config(format!(
            "{}: {e}",
            path.display()
        )))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_ED.contains(&self.net.ed) {
            return Err(Error::Config(format!(
                "ed {} not in supported set {:?}",
                self.net.ed, SUPPORTED_ED
            )));
        }
        self.net.architecture.validate()?;
        if self.net.architecture.height != self.corpus.height {
            return Err(Error::Config(format!(
                "network height {} differs from corpus height {}",
                self.net.architecture.height, self.corpus.height
            )));
        }
        self.augment.validate()?;
        self.encoder.architecture.to_config(self.net.ed).validate()?;
        if !(0.0..1.0).contains(&self.partition.tst_global_fraction) {
            return Err(Error::Config("tst_global_fraction out of [0, 1)".into()));
        }
        if !(self.training.scale > 0.0 && self.training.scale <= 1.0) {
            return Err(Error::Config("training scale must be in (0, 1]".into()));
        }
        if self.net.mode.is_conditioned() && self.net.ed == 0 {
            return Err(Error::Config("conditioned modes need ed > 0".into()));
        }
        if self.corpus.charset != self.adaptation_corpus.charset {
            return Err(Error::Config(
                "training and adaptation corpora must share a charset".into(),
            ));
        }
        if self.adaptation_corpus.height != self.corpus.height {
            return Err(Error::Config(
                "training and adaptation corpora must share a height".into(),
            ));
        }
        Ok(())
    }

    /// Identity of this configuration, over the canonical serialization.
    pub fn hash(&self) -> u64 {
        let canon = toml::to_string(self).expect("config serializes");
        fnv1a64(canon.as_bytes())
    }

    pub fn init_spec(&self) -> InitSpec {
        InitSpec {
            tau: self.net.tau,
            bound: self.net.init_bound,
        }
    }

    /// Stage seed derived from the experiment seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        fnv1a64(&[&self.experiment.seed.to_le_bytes()[..], stage.as_bytes()].concat())
    }

    /// Name identifying a trained setup in artifact paths.
    pub fn run_name(&self) -> String {
        let mode = match self.net.mode {
            ConditioningMode::Baseline => "baseline",
            ConditioningMode::SingleAdain => "single_adain",
            ConditioningMode::AllAdain => "all_adain",
        };
        let init = match self.net.embedding_init {
            EmbeddingInit::Normal => "normal",
            EmbeddingInit::Pretrained => "pretrained",
        };
        format!(
            "{mode}_ed{}_{init}_s{}",
            self.net.ed, self.training.settings.seed
        )
    }

    /// Desk-scale default experiment, the one the repository examples use.
    pub fn desk_default() -> ExperimentConfig {
        ExperimentConfig {
            experiment: ExperimentMeta {
                name: "desk".into(),
                output_dir: PathBuf::from("runs/desk"),
                seed: 42,
            },
            corpus: CorpusSpec::desk_default(),
            partition: PartitionConfig {
                tst_global_fraction: 0.0125,
            },
            augment: AugmentationConfig::desk_default(),
            net: NetSection {
                mode: ConditioningMode::SingleAdain,
                ed: 32,
                embedding_init: EmbeddingInit::Pretrained,
                tau: 0.174,
                init_bound: InitBound::InvSqrtEd,
                architecture: NetConfig::desk(),
            },
            encoder: EncoderSection {
                extract_k: 32,
                architecture: EncoderArch {
                    conv_channels: vec![8, 16, 32, 64],
                    attention_blocks: 2,
                    attention_heads: 4,
                    ff_mult: 2,
                },
                train: EncoderTrainConfig {
                    iterations: 700,
                    batch_size: 48,
                    writers_per_batch: 12,
                    lr: 2e-4,
                    weight_decay: 0.01,
                    tau: 0.15,
                    aug_strength: 1.5,
                    seed: 0,
                },
            },
            training: TrainSection {
                recipe: RecipeKind::Pretrained,
                scale: 1.0 / 450.0,
                settings: TrainSettings {
                    batch_size: 32,
                    eval_every: 0,
                    ..Default::default()
                },
            },
            adaptation: SuiteConfig {
                runs_per_writer: 3,
                cluster_sizes: vec![16, 32, 64, 128, 256],
                test_lines: 256,
                ..Default::default()
            },
            adaptation_corpus: CorpusSpec {
                n_writers: 6,
                lines_per_writer: crate::dataset::LinesDist::Fixed { lines: 540 },
                ..CorpusSpec::desk_default()
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_default_round_trips_through_toml() {
        let cfg = ExperimentConfig::desk_default();
        cfg.validate().unwrap();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let cfg = ExperimentConfig::desk_default();
        let mut text = toml::to_string_pretty(&cfg).unwrap();
        text.push_str("\n[experiment2]\nbogus = 1\n");
        assert!(toml::from_str::<ExperimentConfig>(&text).is_err());

        let text2 = toml::to_string_pretty(&cfg)
            .unwrap()
            .replace("[partition]", "[partition]\nnot_a_field = 3\n");
        assert!(toml::from_str::<ExperimentConfig>(&text2).is_err());
    }

    #[test]
    fn hash_ignores_formatting_but_not_values() {
        let cfg = ExperimentConfig::desk_default();
        let mut cfg2 = cfg.clone();
        assert_eq!(cfg.hash(), cfg2.hash());
        cfg2.experiment.seed = 43;
        assert_ne!(cfg.hash(), cfg2.hash());
    }

    #[test]
    fn validation_catches_mismatched_heights() {
        let mut cfg = ExperimentConfig::desk_default();
        cfg.net.architecture.height = 64;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn validation_requires_supported_ed() {
        let mut cfg = ExperimentConfig::desk_default();
        cfg.net.ed = 13;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn load_save_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        let cfg = ExperimentConfig::desk_default();
        cfg.save(&path).unwrap();
        let loaded = ExperimentConfig::load(&path).unwrap();
        assert_eq!(loaded.hash(), cfg.hash());
        assert_eq!(loaded.run_name(), cfg.run_name());
    }
}
