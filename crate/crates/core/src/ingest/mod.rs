//! Per-source parsers and normalizers. Parsing never touches the store;
//! the pipeline loads what comes out of here.

mod fetch;
mod normalize;
mod parse;
mod records;

use thiserror::Error;

pub use fetch::{read_locator, Locator};
pub use normalize::{collapse_whitespace, normalize_name, url_host, Normalize, UNKNOWN_AUTHOR};
pub use parse::{parse_cvedetails_export, parse_cwe_catalog, parse_exploitdb_index, parse_nvd_feed, parse_timestamp};
pub use records::*;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{source_name}: {reason}")]
    Format { source_name: &'static str, reason: String },
    #[error("cannot read {locator}: {reason}")]
    Unreachable { locator: String, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
