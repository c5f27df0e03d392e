use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::config::SourceId;
use super::loader::Deferred;
use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Success,
    Partial,
    Failed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceState {
    /// Largest lastModified processed so far.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub watermark: Option<DateTime<Utc>>,
    /// Ids already processed at exactly the watermark, so a later run can
    /// pick up records that share that timestamp without redoing these.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub boundary: BTreeSet<String>,
    /// Content digest of the last processed input, for sources without
    /// per-record timestamps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_run: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_outcome: Option<Outcome>,
}

impl SourceState {
    /// Whether a record last modified at `t` still needs processing.
    pub fn is_new(&self, id: &str, t: DateTime<Utc>) -> bool {
        match self.watermark {
            None => true,
            Some(w) => t > w || (t == w && !self.boundary.contains(id)),
        }
    }

    /// Move the watermark forward over processed `(id, lastModified)` pairs.
    pub fn advance<'a>(&mut self, processed: impl IntoIterator<Item = (&'a str, DateTime<Utc>)>) {
        let processed: Vec<(&str, DateTime<Utc>)> = processed.into_iter().collect();
        let Some(max) = processed.iter().map(|(_, t)| *t).max() else {
            return;
        };
        match self.watermark {
            Some(w) if w > max => return,
            Some(w) if w == max => {}
            _ => {
                self.watermark = Some(max);
                self.boundary.clear();
            }
        }
        self.boundary
            .extend(processed.iter().filter(|(_, t)| *t == max).map(|(id, _)| id.to_string()));
    }
}

/// Cursors and the deferred queue, persisted between runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineRunState {
    #[serde(default)]
    pub sources: BTreeMap<SourceId, SourceState>,
    #[serde(default)]
    pub deferred: Vec<Deferred>,
}

impl PipelineRunState {
    pub fn source(&mut self, id: SourceId) -> &mut SourceState {
        self.sources.entry(id).or_default()
    }

    /// Missing file means a fresh state.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        match std::fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| PipelineError::State(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(PipelineError::State(format!("{}: {e}", path.display()))),
        }
    }

    /// Atomic replace via a temporary file.
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let err = |e: std::io::Error| PipelineError::State(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(err)?;
        }
        let tmp = path.with_extension("tmp");
        let text = serde_json::to_vec_pretty(self).expect("state serializes");
        std::fs::write(&tmp, text).map_err(err)?;
        std::fs::rename(&tmp, path).map_err(err)
    }
}

/// FNV-1a over the input, as hex.
pub fn digest(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> DateTime<Utc> {
        s.parse().unwrap()
    }

    #[test]
    fn watermark_with_ties() {
        let mut s = SourceState::default();
        assert!(s.is_new("a", t("2020-01-01T00:00:00Z")));
        s.advance([("a", t("2020-01-02T00:00:00Z")), ("b", t("2020-01-01T00:00:00Z"))]);
        assert_eq!(s.watermark, Some(t("2020-01-02T00:00:00Z")));
        assert!(!s.is_new("a", t("2020-01-02T00:00:00Z")));
        assert!(s.is_new("c", t("2020-01-02T00:00:00Z")));
        assert!(!s.is_new("b", t("2020-01-01T00:00:00Z")));
        s.advance([("c", t("2020-01-02T00:00:00Z"))]);
        assert!(!s.is_new("a", t("2020-01-02T00:00:00Z")));
        // never moves backwards
        s.advance([("z", t("2019-01-01T00:00:00Z"))]);
        assert_eq!(s.watermark, Some(t("2020-01-02T00:00:00Z")));
    }
}
