use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use serde::Deserialize;
use sqare_core::harness::HttpAdapterConfig;
use sqare_core::judge::ValidityPolicy;
use sqare_core::studydef::ConditionKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    #[default]
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Markdown,
    Tsv,
}

/// The optional JSON file given with `--config`. Every field may also be set
/// by a flag, and flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub study: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub base_iri: Option<String>,
    pub models: Vec<HttpAdapterConfig>,
    pub cassette: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub parallelism: Option<usize>,
    pub max_retries: Option<u32>,
    pub languages: Vec<String>,
    pub conditions: Vec<String>,
    pub policy: Option<String>,
    pub fixed_clock: Option<String>,
    pub format: Option<Format>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Resolved settings after merging the config file with flags.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub study: Option<PathBuf>,
    pub out: PathBuf,
    pub base_iri: Option<String>,
    pub models: Vec<HttpAdapterConfig>,
    pub cassette: Option<PathBuf>,
    pub mode: Mode,
    pub parallelism: usize,
    pub max_retries: u32,
    pub languages: Vec<String>,
    pub conditions: Vec<ConditionKind>,
    pub policy: ValidityPolicy,
    pub fixed_clock: Option<DateTime<Utc>>,
    pub format: Format,
}

pub fn parse_instant(text: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("{text:?} is not an RFC 3339 timestamp: {e}"))
}

impl CliConfig {
    pub fn from_file(file: FileConfig) -> Result<Self> {
        let fixed_clock = file.fixed_clock.as_deref().map(parse_instant).transpose().map_err(anyhow::Error::msg)?;
        let policy = match file.policy.as_deref() {
            Some(p) => p.parse().map_err(|e| anyhow::anyhow!("config policy: {e}"))?,
            None => ValidityPolicy::default(),
        };
        let conditions = if file.conditions.is_empty() {
            ConditionKind::ALL.to_vec()
        } else {
            file.conditions.iter().map(|c| c.parse()).collect::<Result<_, _>>()?
        };
        Ok(Self {
            study: file.study,
            out: file.out.unwrap_or_else(|| PathBuf::from("out")),
            base_iri: file.base_iri,
            models: file.models,
            cassette: file.cassette,
            mode: file.mode.unwrap_or_default(),
            parallelism: file.parallelism.unwrap_or(4),
            max_retries: file.max_retries.unwrap_or(3),
            languages: file.languages,
            conditions,
            policy,
            fixed_clock,
            format: file.format.unwrap_or_default(),
        })
    }

    pub fn check(&self) -> Result<()> {
        if self.parallelism == 0 {
            bail!("parallelism must be at least 1");
        }
        if self.mode != Mode::Live && self.cassette.is_none() {
            bail!("{:?} mode needs a cassette (--cassette)", self.mode);
        }
        Ok(())
    }

    pub fn study_path(&self) -> Result<&Path> {
        self.study.as_deref().context("no study given; pass --study or set \"study\" in the config file")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let file: FileConfig = serde_json::from_str(r#"{"cassette": "c.jsonl", "conditions": ["conflicting"]}"#).unwrap();
        let config = CliConfig::from_file(file).unwrap();
        assert_eq!(config.mode, Mode::Replay);
        assert_eq!(config.conditions, [ConditionKind::Conflicting]);
        assert_eq!(config.out, PathBuf::from("out"));
        config.check().unwrap();

        let no_cassette = CliConfig::from_file(FileConfig::default()).unwrap();
        assert!(no_cassette.check().is_err());
        assert!(serde_json::from_str::<FileConfig>(r#"{"api_key": "x"}"#).is_err());
    }

    #[test]
    fn instants_must_be_rfc3339() {
        assert_eq!(parse_instant("2025-03-01T12:00:00Z").unwrap().to_rfc3339(), "2025-03-01T12:00:00+00:00");
        assert!(parse_instant("yesterday").is_err());
    }
}
