use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize};

use super::PipelineError;
use crate::ingest::Locator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SourceId {
    Nvd,
    Cwe,
    CveDetails,
    Exploitdb,
}

impl SourceId {
    pub const ALL: [SourceId; 4] = [SourceId::Nvd, SourceId::Cwe, SourceId::CveDetails, SourceId::Exploitdb];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceId::Nvd => "NVD",
            SourceId::Cwe => "CWE",
            SourceId::CveDetails => "CVE_DETAILS",
            SourceId::Exploitdb => "EXPLOITDB",
        }
    }

    /// NVD is the core stream; the rest are supplementary. CVE Details also
    /// feeds the core enrichment path.
    pub fn stream(self) -> Stream {
        match self {
            SourceId::Nvd => Stream::Core,
            _ => Stream::Supplementary,
        }
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceId::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown source {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stream {
    Core,
    Supplementary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub id: SourceId,
    pub locator: String,
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Optional; must agree with the source's fixed stream if given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<Stream>,
}

fn yes() -> bool {
    true
}

impl SourceConfig {
    pub fn new(id: SourceId, locator: impl Into<String>) -> Self {
        SourceConfig {
            id,
            locator: locator.into(),
            enabled: true,
            stream: None,
        }
    }

    pub fn locator(&self) -> Locator {
        Locator::parse(&self.locator)
    }
}

/// Parse `90s`, `30m`, `2h`, `1h30m`, `1d`. Bare numbers are minutes.
pub fn parse_interval(s: &str) -> Result<Duration, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty interval".into());
    }
    if let Ok(m) = s.parse::<u64>() {
        return Ok(Duration::from_secs(m * 60));
    }
    let mut total = 0u64;
    let mut num = String::new();
    for c in s.chars() {
        if c.is_ascii_digit() {
            num.push(c);
            continue;
        }
        let n: u64 = num.parse().map_err(|_| format!("bad interval {s:?}"))?;
        num.clear();
        total += n * match c {
            's' => 1,
            'm' => 60,
            'h' => 3600,
            'd' => 86_400,
            _ => return Err(format!("bad interval unit {c:?} in {s:?}")),
        };
    }
    if !num.is_empty() {
        return Err(format!("interval {s:?} is missing a unit"));
    }
    Ok(Duration::from_secs(total))
}

pub const MIN_INTERVAL: Duration = Duration::from_secs(60);
pub const DEFAULT_INTERVAL: Duration = Duration::from_secs(2 * 3600);

fn interval_de<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
    let s = String::deserialize(d)?;
    parse_interval(&s).map_err(serde::de::Error::custom)
}

fn interval_ser<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{}s", d.as_secs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_interval", deserialize_with = "interval_de", serialize_with = "interval_ser")]
    pub interval: Duration,
}

fn default_interval() -> Duration {
    DEFAULT_INTERVAL
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            interval: DEFAULT_INTERVAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    #[serde(default = "default_alpha")]
    pub alpha: usize,
    #[serde(default = "default_beta")]
    pub beta: usize,
    /// External provider command, used for models other than HASH_DEFAULT.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_command: Option<Vec<String>>,
    /// Update tiers after each NVD merge.
    #[serde(default = "yes")]
    pub enabled: bool,
}

fn default_models() -> Vec<String> {
    vec!["HASH_DEFAULT".into()]
}
fn default_alpha() -> usize {
    32
}
fn default_beta() -> usize {
    128
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            models: default_models(),
            alpha: 32,
            beta: 128,
            provider_command: None,
            enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiSettings {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_row_cap")]
    pub embedding_row_cap: usize,
    #[serde(default = "default_cypher_cap")]
    pub cypher_row_cap: usize,
    #[serde(default = "default_rate")]
    pub rate_limit_per_minute: u32,
    #[serde(default)]
    pub cors_allow: Vec<String>,
}

fn default_bind() -> String {
    "127.0.0.1".into()
}
fn default_port() -> u16 {
    8000
}
fn default_row_cap() -> usize {
    200
}
fn default_cypher_cap() -> usize {
    10_000
}
fn default_rate() -> u32 {
    60
}

impl Default for ApiSettings {
    fn default() -> Self {
        ApiSettings {
            bind: default_bind(),
            port: default_port(),
            embedding_row_cap: default_row_cap(),
            cypher_row_cap: default_cypher_cap(),
            rate_limit_per_minute: default_rate(),
            cors_allow: Vec::new(),
        }
    }
}

/// Operator configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Data directory: graph store, state file, spool and embedding tiers
    /// live underneath unless overridden on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub api: ApiSettings,
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
    /// Directory relative locators resolve against; set by [`Config::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let cfg: Config = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(d) = &cfg.data_dir {
            if d.is_relative() {
                cfg.data_dir = Some(cfg.base_dir.join(d));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.schedule.interval < MIN_INTERVAL {
            return bad(format!("schedule interval must be at least 1 minute, got {}s", self.schedule.interval.as_secs()));
        }
        for s in &self.sources {
            if let Some(st) = s.stream {
                if st != s.id.stream() {
                    return bad(format!("{} belongs to the {:?} stream", s.id, s.id.stream()));
                }
            }
        }
        let mut ids: Vec<SourceId> = self.sources.iter().map(|s| s.id).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("each source may appear once".into());
        }
        let e = &self.embedding;
        if e.alpha == 0 || e.alpha >= e.beta {
            return bad(format!("embedding tiers need 0 < alpha < beta, got {} and {}", e.alpha, e.beta));
        }
        if self.api.embedding_row_cap == 0 || self.api.cypher_row_cap == 0 {
            return bad("row caps must be at least 1".into());
        }
        Ok(())
    }

    /// Sources with relative locators resolved against the config file.
    pub fn resolved_sources(&self) -> Vec<SourceConfig> {
        self.sources
            .iter()
            .map(|s| SourceConfig {
                locator: s.locator().resolve(&self.base_dir).to_string(),
                ..s.clone()
            })
            .collect()
    }
}
