//! The JSON run configuration shared by `train` and `matrix`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use retro_core::corpus::DEFAULT_MAX_WORDS;
use retro_core::encoder::EncoderConfig;
use retro_core::experiments::MatrixSettings;
use retro_core::generator::{
    CandidateWeights, GeneratorConfig, SamplerConfig, DEFAULT_NEGATIVE_DEPTH, DEFAULT_QUESTIONS_PER_PASSAGE,
    DEFAULT_TOP_K, DEFAULT_TOP_P,
};
use retro_core::trainer::{Stage, TrainConfig};

use crate::error::{CliError, CliResult, CoreContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub corpus: CorpusSection,
    pub generator: GeneratorSection,
    pub trainer: TrainerSection,
    #[serde(default)]
    pub eval: EvalSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    #[serde(default = "max_words")]
    pub max_words: usize,
}

fn max_words() -> usize {
    DEFAULT_MAX_WORDS
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection { max_words: DEFAULT_MAX_WORDS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub seed: u64,
    #[serde(default = "n_questions")]
    pub n_questions: usize,
    #[serde(default = "top_p")]
    pub top_p: f64,
    #[serde(default = "top_k")]
    pub top_k: usize,
    #[serde(default = "negative_depth")]
    pub negative_depth: usize,
}

fn n_questions() -> usize {
    DEFAULT_QUESTIONS_PER_PASSAGE
}
fn top_p() -> f64 {
    DEFAULT_TOP_P
}
fn top_k() -> usize {
    DEFAULT_TOP_K
}
fn negative_depth() -> usize {
    DEFAULT_NEGATIVE_DEPTH
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub vocab_hash_buckets: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let c = EncoderConfig::default();
        EncoderSection {
            embed_dim: c.embed_dim,
            hidden_dim: c.hidden_dim,
            out_dim: c.out_dim,
            vocab_hash_buckets: c.vocab_hash_buckets,
        }
    }
}

/// Per-stage optimisation settings; missing fields take the stage defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub grad_accum_steps: Option<usize>,
}

impl StageSection {
    fn resolve(&self, stage: Stage, seed: u64) -> TrainConfig {
        let d = TrainConfig::new(stage, seed);
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            grad_accum_steps: self.grad_accum_steps.unwrap_or(d.grad_accum_steps),
            ..d
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    /// Seeds encoder initialisation, shuffling, resampling and gold negatives.
    pub seed: u64,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub pretrain: StageSection,
    #[serde(default)]
    pub finetune: StageSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "ks")]
    pub ks: Vec<usize>,
}

fn ks() -> Vec<usize> {
    vec![1, 5, 20, 100]
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { ks: ks() }
    }
}

/// Input locations; relative paths are taken from the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub passages: PathBuf,
    pub bm25: PathBuf,
    pub train_qa: PathBuf,
    #[serde(default)]
    pub synthetic: Option<PathBuf>,
    #[serde(default)]
    pub test_qa: Option<PathBuf>,
}

impl RunConfig {
    /// Parses, validates and anchors relative paths at the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut config: RunConfig = crate::fsio::read_json(path)?;
        config.validate().map_err(|e| match e {
            CliError::Core { source, .. } => CliError::format(path, None, source.to_string()),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let anchor = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut config.paths;
        anchor(&mut paths.passages);
        anchor(&mut paths.bm25);
        anchor(&mut paths.train_qa);
        paths.synthetic.as_mut().map(anchor);
        paths.test_qa.as_mut().map(anchor);
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let ctx = || "config".to_string();
        if self.corpus.max_words == 0 {
            return Err(CliError::core("config", retro_core::Error::InvalidArgument("corpus.max_words must be >= 1".into())));
        }
        self.generator_config().validate().context(ctx)?;
        self.encoder_config().validate().context(ctx)?;
        self.train_config(Stage::Pretrain).validate().context(ctx)?;
        self.train_config(Stage::Finetune).validate().context(ctx)?;
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(CliError::core("config", retro_core::Error::InvalidArgument("eval.ks must be nonempty and >= 1".into())));
        }
        Ok(())
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        let g = &self.generator;
        GeneratorConfig {
            n_questions: g.n_questions,
            sampler: SamplerConfig { top_p: g.top_p, top_k: g.top_k, seed: g.seed },
            weights: CandidateWeights::default(),
            negative_depth: g.negative_depth,
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        let e = self.trainer.encoder;
        EncoderConfig {
            embed_dim: e.embed_dim,
            hidden_dim: e.hidden_dim,
            out_dim: e.out_dim,
            vocab_hash_buckets: e.vocab_hash_buckets,
            seed: self.trainer.seed,
        }
    }

    pub fn train_config(&self, stage: Stage) -> TrainConfig {
        let section = match stage {
            Stage::Pretrain => &self.trainer.pretrain,
            Stage::Finetune => &self.trainer.finetune,
        };
        section.resolve(stage, self.trainer.seed)
    }

    /// Settings for the ablation matrix; each cell reseeds every component.
    pub fn matrix_settings(&self) -> MatrixSettings {
        MatrixSettings {
            encoder: self.encoder_config(),
            generator: self.generator_config(),
            pretrain: self.train_config(Stage::Pretrain),
            finetune: self.train_config(Stage::Finetune),
            ks: self.eval.ks.clone(),
        }
    }
}
