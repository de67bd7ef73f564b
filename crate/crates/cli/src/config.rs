//! The pipeline config file. Relative paths resolve against the file's
//! directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nluforge::compound::GuidelineConfig;
use nluforge::formats::EmptyWeights;
use nluforge::llm::LlmConfig;
use nluforge::mixer::MixConfig;
use nluforge::pipeline::{RunConfig, SynthConfig};
use nluforge::provenance::digest_json;
use serde::{Deserialize, Serialize};

use crate::UsageError;

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

fn cap() -> usize {
    nluforge::dictionary::EXAMPLE_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub corpus: PathBuf,
    pub output: PathBuf,
    /// Defaults to `<output>.stats.json`.
    #[serde(default)]
    pub stats: Option<PathBuf>,
    /// Dictionary whose guideline material is laid over the built one.
    #[serde(default)]
    pub dictionary: Option<PathBuf>,
    #[serde(default)]
    pub dictionary_out: Option<PathBuf>,
    #[serde(default)]
    pub rules: Option<PathBuf>,
    #[serde(default)]
    pub orders: Option<PathBuf>,
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub guidelines: GuidelineConfig,
    #[serde(default)]
    pub empty_weights: EmptyWeights,
    #[serde(default)]
    pub mix: MixConfig,
    #[serde(default)]
    pub total: Option<u64>,
    #[serde(default = "yes")]
    pub deterministic_rules: bool,
    /// Ask the model for rule-derived samples instead of the catalog.
    #[serde(default)]
    pub llm_rules: bool,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default = "cap")]
    pub example_cap: usize,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.output);
        for p in [
            &mut self.stats,
            &mut self.dictionary,
            &mut self.dictionary_out,
            &mut self.rules,
            &mut self.orders,
            &mut self.templates,
            &mut self.llm.cache_path,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Every referenced input exists and every knob is in range.
    pub fn validate(&self) -> Result<()> {
        let inputs = [
            Some(&self.corpus),
            self.dictionary.as_ref(),
            self.rules.as_ref(),
            self.orders.as_ref(),
            self.templates.as_ref(),
        ];
        for p in inputs.into_iter().flatten() {
            if !p.exists() {
                return Err(UsageError(format!(
                    "config references a missing file: {}",
                    p.display()
                ))
                .into());
            }
        }
        self.guidelines.validate().map_err(UsageError)?;
        if self.workers == 0 {
            return Err(UsageError("workers must be at least 1".into()).into());
        }
        Ok(())
    }

    pub fn stats_path(&self) -> PathBuf {
        self.stats.clone().unwrap_or_else(|| {
            let mut s = self.output.clone().into_os_string();
            s.push(".stats.json");
            s.into()
        })
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            synth: SynthConfig {
                seed: self.seed,
                guidelines: self.guidelines.clone(),
                empty_weights: self.empty_weights,
                rules: self.deterministic_rules && !self.llm_rules,
                workers: self.workers,
            },
            mix: self.mix.clone(),
            total: self.total,
            example_cap: self.example_cap,
        }
    }

    /// Digest of everything that shapes the output; the worker count is
    /// left out.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.workers = 0;
        digest_json(&serde_json::to_value(&c).expect("config serializes"))
    }
}

pub fn load_validated(path: &Path) -> Result<PipelineConfig> {
    let cfg = PipelineConfig::load(path)?;
    cfg.validate()
        .with_context(|| format!("config {}", path.display()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_required_and_paths_resolve() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"corpus": "in.jsonl", "output": "out.jsonl"}"#).unwrap();
        assert!(PipelineConfig::load(&p).unwrap_err().is::<UsageError>());
        std::fs::write(
            &p,
            r#"{"seed": 3, "corpus": "in.jsonl", "output": "out/o.jsonl"}"#,
        )
        .unwrap();
        let c = PipelineConfig::load(&p).unwrap();
        assert_eq!(c.corpus, dir.path().join("in.jsonl"));
        assert_eq!(c.stats_path(), dir.path().join("out/o.jsonl.stats.json"));
        assert!(c.validate().unwrap_err().is::<UsageError>());
        std::fs::write(dir.path().join("in.jsonl"), "").unwrap();
        c.validate().unwrap();
        let mut d = c.clone();
        d.workers = 8;
        assert_eq!(c.digest(), d.digest());
    }
}
