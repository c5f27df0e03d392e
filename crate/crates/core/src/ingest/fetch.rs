use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use super::IngestError;

/// Where a source's raw bytes come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Locator {
    Path(PathBuf),
    Url(String),
}

impl Locator {
    pub fn parse(s: &str) -> Locator {
        let t = s.trim();
        if let Some(p) = t.strip_prefix("file://") {
            Locator::Path(PathBuf::from(p))
        } else if t.starts_with("http://") || t.starts_with("https://") {
            Locator::Url(t.to_string())
        } else {
            Locator::Path(PathBuf::from(t))
        }
    }

    /// Resolve relative paths against `base`.
    pub fn resolve(self, base: &Path) -> Locator {
        match self {
            Locator::Path(p) if p.is_relative() => Locator::Path(base.join(p)),
            other => other,
        }
    }
}

impl std::fmt::Display for Locator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Locator::Path(p) => write!(f, "{}", p.display()),
            Locator::Url(u) => f.write_str(u),
        }
    }
}

const MAX_DOWNLOAD: u64 = 512 * 1024 * 1024;

fn spool_name(url: &str) -> String {
    let mut name: String = url
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    name.truncate(120);
    name
}

/// Read a source. URLs are downloaded into `spool` first and parsed from
/// there, so a fetched feed can be inspected after the run.
pub fn read_locator(loc: &Locator, spool: &Path) -> Result<Vec<u8>, IngestError> {
    match loc {
        Locator::Path(p) => fs::read(p).map_err(|e| IngestError::Unreachable {
            locator: loc.to_string(),
            reason: e.to_string(),
        }),
        Locator::Url(url) => {
            let unreachable = |reason: String| IngestError::Unreachable {
                locator: url.clone(),
                reason,
            };
            let mut resp = ureq::get(url).call().map_err(|e| unreachable(e.to_string()))?;
            let mut bytes = Vec::new();
            resp.body_mut()
                .as_reader()
                .take(MAX_DOWNLOAD)
                .read_to_end(&mut bytes)
                .map_err(|e| unreachable(e.to_string()))?;
            fs::create_dir_all(spool)?;
            let path = spool.join(spool_name(url));
            let tmp = path.with_extension("part");
            fs::write(&tmp, &bytes)?;
            fs::rename(&tmp, &path)?;
            Ok(bytes)
        }
    }
}
