//! TOML run configuration: the training sections plus an `[output]` section.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::envs::EnvironmentConfig;
use crate::error::{Error, Result};
use crate::trainer::{ClassifierConfig, ShapingSection, TrainingConfig, TrainingSection};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Best achievable episode return, used to normalize the ratio metric.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_return: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub environment: EnvironmentConfig,
    pub classifier: ClassifierConfig,
    pub shaping: ShapingSection,
    pub agent: AgentConfig,
    pub training: TrainingSection,
    pub output: OutputSection,
}

impl RunConfigFile {
    pub fn from_training(cfg: TrainingConfig, output: OutputSection) -> Self {
        Self {
            environment: cfg.environment,
            classifier: cfg.classifier,
            shaping: cfg.shaping,
            agent: cfg.agent,
            training: cfg.training,
            output,
        }
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            environment: self.environment.clone(),
            classifier: self.classifier.clone(),
            shaping: self.shaping.clone(),
            agent: self.agent.clone(),
            training: self.training.clone(),
        }
    }

    /// Parses and validates a configuration document.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = self.training_config();
        cfg.validate()?;
        let env = cfg.environment.build()?;
        cfg.shaping_config(&env)?;
        if let Some(m) = self.output.max_return {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::config("output.max_return", "must be positive and finite"));
            }
        }
        Ok(())
    }

    /// The fully resolved document, every default written out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("cannot render config: {e}")))
    }
}

/// Maps a TOML error to a config error naming the dotted key at fault.
fn toml_error(text: &str, err: &toml::de::Error) -> Error {
    let message = err.message().trim().to_string();
    let quoted = message.split('`').nth(1).filter(|_| message.starts_with("unknown field"));
    let key = match (err.span(), quoted) {
        (Some(span), field) => {
            let before = &text[..span.start.min(text.len())];
            let section = before
                .lines()
                .rev()
                .map(str::trim)
                .find(|l| l.starts_with('[') && l.ends_with(']'))
                .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
            let line_start = before.rfind('\n').map_or(0, |i| i + 1);
            let line = &text[line_start..];
            let line_key = line.split('=').next().map(str::trim).filter(|k| !k.is_empty() && !k.starts_with('['));
            let field = field.or(line_key);
            match (section, field) {
                (Some(s), Some(f)) => format!("{s}.{f}"),
                (Some(s), None) => s,
                (None, Some(f)) => f.to_string(),
                (None, None) => "<document>".to_string(),
            }
        }
        (None, Some(field)) => field.to_string(),
        (None, None) => "<document>".to_string(),
    };
    Error::config(key, message)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(text: &str) -> String {
        match RunConfigFile::parse(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(RunConfigFile::parse("").unwrap(), RunConfigFile::default());
    }

    #[test]
    fn resolved_echo_round_trips() {
        let mut cfg = RunConfigFile::default();
        cfg.shaping.eta = 0.75;
        cfg.classifier.learning_rate = 3e-4;
        cfg.output.max_return = Some(88.0);
        cfg.training.max_episode_steps = Some(40);
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfigFile::parse(&text).unwrap(), cfg);
        let again = RunConfigFile::parse(&RunConfigFile::default().to_toml().unwrap()).unwrap();
        assert_eq!(again, RunConfigFile::default());
    }

    #[test]
    fn unknown_keys_are_named() {
        assert_eq!(key_of("[shaping]\netaa = 0.5\n"), "shaping.etaa");
        assert_eq!(key_of("[bogus]\nx = 1\n"), "bogus");
    }

    #[test]
    fn bad_values_are_named() {
        assert_eq!(key_of("[training]\nepisodes = \"many\"\n"), "training.episodes");
        assert_eq!(key_of("[output]\nmax_return = -1.0\n"), "output.max_return");
    }

    #[test]
    fn nonzero_cost_threshold_is_rejected() {
        let err = RunConfigFile::parse("[environment]\ncost_threshold = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("cost_threshold must be 0"), "{err}");
    }
}
