//! Run configuration, read from a sectioned TOML file.
//!
//! ```toml
//! input_dir = "corpus"
//! out_dir = "out"
//! parallelism = 4
//!
//! [backend]
//! kind = "fixture"
//! fixture_file = "llm.json"
//!
//! [resolver.thresholds]
//! entity_high = 0.9
//! ```
//!
//! Relative paths are resolved against the directory of the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::chunker::SplitConfig;
use crate::extractor::ExtractorConfig;
use crate::llm::BackendConfig;
use crate::resolver::{EmbeddingConfig, ResolverConfig};
use crate::schema::SchemaConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Documents extracted concurrently.
    pub parallelism: usize,
    /// Prompt templates; the built-in set when absent.
    pub prompts_file: Option<PathBuf>,
    /// Static review UI served by `serve`, if any.
    pub ui_dir: Option<PathBuf>,
    pub backend: BackendConfig,
    pub split: SplitConfig,
    pub extractor: ExtractorConfig,
    pub resolver: ResolverConfig,
    pub embedding: EmbeddingConfig,
    pub schema: SchemaConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input_dir: PathBuf::from("corpus"),
            out_dir: PathBuf::from("out"),
            parallelism: 4,
            prompts_file: None,
            ui_dir: None,
            backend: BackendConfig::default(),
            split: SplitConfig::default(),
            extractor: ExtractorConfig::default(),
            resolver: ResolverConfig::default(),
            embedding: EmbeddingConfig::default(),
            schema: SchemaConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(source: &str) -> Result<Self, PipelineError> {
        toml::from_str(source).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let source = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut config = Self::parse(&source)?;
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    /// Makes relative paths relative to `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input_dir);
        fix(&mut self.out_dir);
        if let Some(p) = self.prompts_file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.ui_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.backend.fixture_file.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if let Err(e) = self.backend.validate() {
            return bad(e);
        }
        if let Err(e) = self.split.validate() {
            return bad(e.to_string());
        }
        if self.extractor.mention_batch_size == 0 {
            return bad("extractor.mention_batch_size must be at least 1".into());
        }
        if let Err(e) = self.resolver.validate() {
            return bad(e.to_string());
        }
        if self.embedding.dimension == 0 {
            return bad("embedding.dimension must be at least 1".into());
        }
        if let Err(e) = self.schema.validate() {
            return bad(e.to_string());
        }
        Ok(())
    }
}
