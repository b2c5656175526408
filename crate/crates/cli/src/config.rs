//! Run configuration: one TOML file, with command-line overrides applied on top.
//!
//! Relative paths are resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use dementia_mm::augment::AugmentationConfig;
use dementia_mm::dataset::{ConditionKind, SplitPlan};
use dementia_mm::embeddings::EmbeddingFormat;
use dementia_mm::models::ModelKind;
use dementia_mm::train_eval::TrainConfig;
use dementia_mm::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub embedding_format: String,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    pub output: PathBuf,
}

fn default_format() -> String {
    "binary".into()
}

fn default_condition() -> String {
    ConditionKind::Original.name().into()
}

fn default_models() -> Vec<String> {
    ModelKind::ALL
        .iter()
        .map(|k| k.name().to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    #[serde(default = "default_condition")]
    pub condition: String,
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    #[serde(default)]
    pub split: SplitPlan,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub augmentation: AugmentationConfig,
}

/// Flag values that win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub condition: Option<String>,
    pub models: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub epochs: Option<usize>,
    pub threshold: Option<f64>,
}

/// A config after validation: parsed enums and existing paths.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub raw: RunConfig,
    pub condition: ConditionKind,
    pub models: Vec<ModelKind>,
    pub embedding_format: EmbeddingFormat,
}

impl Resolved {
    pub fn needs_words(&self) -> bool {
        self.models.iter().any(|k| k.channels().word)
    }

    pub fn needs_audio(&self) -> bool {
        self.models.iter().any(|k| k.channels().audio)
    }

    pub fn output(&self) -> &Path {
        &self.raw.paths.output
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .map_or_else(|| "config".to_string(), str::to_string);
            Error::config(field, e.message().trim().to_string())
        })?;
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_toml(&text, base)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.corpus);
        fix(&mut self.paths.output);
        if let Some(p) = self.paths.embeddings.as_mut() {
            fix(p);
        }
        if let Some(p) = self.paths.lexicon.as_mut() {
            fix(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.output {
            self.paths.output = p.clone();
        }
        if let Some(c) = &o.condition {
            self.condition = c.clone();
        }
        if let Some(m) = &o.models {
            self.models = m.clone();
        }
        if let Some(s) = o.seed {
            self.split.seed = s;
            self.train.seed = s;
            self.augmentation.seed = s;
        }
        if let Some(r) = o.runs {
            self.split.n_runs = r;
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
        if let Some(t) = o.threshold {
            self.train.threshold = t;
        }
    }

    /// Checks every field and that referenced inputs exist; creates the output dir.
    pub fn validate(self) -> Result<Resolved> {
        let condition: ConditionKind = self.condition.parse()?;
        if self.models.is_empty() {
            return Err(Error::config(
                "models",
                "at least one model kind is required",
            ));
        }
        let mut models = Vec::new();
        for m in &self.models {
            let k: ModelKind = m.parse()?;
            if !models.contains(&k) {
                models.push(k);
            }
        }
        let embedding_format =
            EmbeddingFormat::parse(&self.paths.embedding_format).ok_or_else(|| {
                Error::config(
                    "paths.embedding_format",
                    format!("{:?} is not binary or text", self.paths.embedding_format),
                )
            })?;
        self.split.validate()?;
        self.train.validate()?;
        self.augmentation.validate()?;

        let exists = |field: &str, p: &Path| -> Result<()> {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::config(
                    field,
                    format!("{} does not exist", p.display()),
                ))
            }
        };
        exists("paths.corpus", &self.paths.corpus)?;
        let resolved = Resolved {
            condition,
            models,
            embedding_format,
            raw: self,
        };
        let paths = &resolved.raw.paths;
        if resolved.needs_words() {
            let p = paths.embeddings.as_ref().ok_or_else(|| {
                Error::config("paths.embeddings", "required by the selected text models")
            })?;
            exists("paths.embeddings", p)?;
        }
        if condition.is_augmented() {
            let p = paths.lexicon.as_ref().ok_or_else(|| {
                Error::config("paths.lexicon", "required by augmented conditions")
            })?;
            exists("paths.lexicon", p)?;
        }
        fs::create_dir_all(&paths.output).map_err(|e| {
            Error::config(
                "paths.output",
                format!("cannot create {}: {e}", paths.output.display()),
            )
        })?;
        let probe = paths.output.join(".write_test");
        fs::write(&probe, b"")
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| {
                Error::config(
                    "paths.output",
                    format!("{} is not writable: {e}", paths.output.display()),
                )
            })?;
        Ok(resolved)
    }
}
