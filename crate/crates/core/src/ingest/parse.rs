//! Source parsers. Each is pure: bytes in, records and rejects out.

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::normalize::Normalize;
use super::records::*;
use super::IngestError;

fn utf8<'a>(source: &'static str, bytes: &'a [u8]) -> Result<&'a str, IngestError> {
    std::str::from_utf8(bytes).map_err(|e| IngestError::Format {
        source_name: source,
        reason: format!("input is not UTF-8 (byte {})", e.valid_up_to()),
    })
}

type Entry = (usize, Result<serde_json::Value, String>);

/// Split structured input into entries: a top-level JSON array, or one JSON
/// document per non-blank line. Only a broken array is fatal.
fn json_entries(source: &'static str, bytes: &[u8]) -> Result<Vec<Entry>, IngestError> {
    let text = utf8(source, bytes)?;
    if text.trim_start().starts_with('[') {
        let items: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| IngestError::Format {
            source_name: source,
            reason: format!("invalid JSON array: {e}"),
        })?;
        return Ok(items.into_iter().enumerate().map(|(i, x)| (i + 1, Ok(x))).collect());
    }
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| (i + 1, serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))))
        .collect())
}

fn entry_id(v: &serde_json::Value, field: &str) -> Option<String> {
    v.get(field).and_then(|x| x.as_str()).map(str::to_string)
}

/// Shared driver for the line-structured sources.
fn parse_json_source<R, T>(
    source: &'static str,
    bytes: &[u8],
    id_field: &str,
    mut convert: impl FnMut(R) -> Result<T, String>,
) -> Result<Parsed<T>, IngestError>
where
    R: DeserializeOwned,
{
    let mut out = Parsed::default();
    for (entry, value) in json_entries(source, bytes)? {
        let value = match value {
            Ok(v) => v,
            Err(reason) => {
                out.rejects.push(Reject { entry, id: None, reason });
                continue;
            }
        };
        let id = entry_id(&value, id_field);
        let result = serde_json::from_value::<R>(value)
            .map_err(|e| e.to_string())
            .and_then(&mut convert);
        match result {
            Ok(r) => out.records.push(r),
            Err(reason) => out.rejects.push(Reject { entry, id, reason }),
        }
    }
    Ok(out)
}

/// RFC 3339, or a zone-less timestamp taken as UTC (the NVD API style).
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc());
        }
    }
    if let Ok(d) = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
    }
    Err(format!("bad timestamp {s:?}"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVuln {
    #[serde(rename = "cveID")]
    cve_id: String,
    description: String,
    published: String,
    #[serde(rename = "lastModified")]
    last_modified: String,
    #[serde(rename = "cvssV2severity", default)]
    severity: Option<String>,
    #[serde(rename = "cvssV3exploitabilityScore", default)]
    score: Option<f64>,
    #[serde(rename = "cweIDs", default)]
    cwe_ids: Vec<String>,
    #[serde(rename = "affectedProducts", default)]
    products: Vec<ProductRef>,
    #[serde(rename = "referenceUrls", default)]
    urls: Vec<String>,
}

/// NVD-style feed, one CVE per line.
pub fn parse_nvd_feed(bytes: &[u8]) -> Result<Parsed<CanonicalVulnRecord>, IngestError> {
    parse_json_source("nvd", bytes, "cveID", |raw: RawVuln| {
        let mut rec = CanonicalVulnRecord {
            cve_id: raw.cve_id,
            description: raw.description,
            published: parse_timestamp(&raw.published)?,
            last_modified: parse_timestamp(&raw.last_modified)?,
            cvss_v2_severity: raw.severity.as_deref().map(str::parse).transpose()?,
            cvss_v3_exploitability_score: raw.score,
            // NVD uses NVD-CWE-Other / NVD-CWE-noinfo for "no specific CWE"
            cwe_ids: raw.cwe_ids.into_iter().filter(|c| !c.starts_with("NVD-CWE-")).collect(),
            affected_products: raw.products,
            reference_urls: raw.urls,
        }
        .normalize();
        if rec.description.is_empty() {
            return Err("empty description".into());
        }
        rec.validate()?;
        Ok(rec)
    })
}

/// CWE catalog; a repeated cweID keeps the first entry.
pub fn parse_cwe_catalog(bytes: &[u8]) -> Result<Parsed<WeaknessRecord>, IngestError> {
    let mut parsed = parse_json_source("cwe", bytes, "cweID", |raw: WeaknessRecord| {
        let rec = raw.normalize();
        rec.validate()?;
        Ok(rec)
    })?;
    let mut seen = std::collections::HashSet::new();
    let mut records = Vec::with_capacity(parsed.records.len());
    // entry numbers are lost after conversion, so dedup rejects cite the id
    for r in parsed.records {
        if seen.insert(r.cwe_id.clone()) {
            records.push(r);
        } else {
            parsed.rejects.push(Reject {
                entry: 0,
                id: Some(r.cwe_id.clone()),
                reason: "duplicate cweID".into(),
            });
        }
    }
    parsed.records = records;
    Ok(parsed)
}

#[derive(Deserialize)]
struct RawExploitRow {
    #[serde(rename = "exploitID")]
    exploit_id: String,
    title: String,
    #[serde(rename = "type")]
    exploit_type: String,
    author: String,
    #[serde(rename = "cveIDs")]
    cve_ids: String,
    url: String,
}

/// ExploitDB index as CSV: `exploitID,title,type,author,cveIDs,url`, with
/// CVE ids joined by `;`.
pub fn parse_exploitdb_index(bytes: &[u8]) -> Result<Parsed<ExploitRecord>, IngestError> {
    let fatal = |reason: String| IngestError::Format {
        source_name: "exploitdb",
        reason,
    };
    utf8("exploitdb", bytes)?;
    let mut out = Parsed::default();
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(out);
    }
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(bytes);
    let headers = rdr.headers().map_err(|e| fatal(e.to_string()))?.clone();
    let want = ["exploitID", "title", "type", "author", "cveIDs", "url"];
    if headers.iter().map(str::trim).ne(want.iter().copied()) {
        return Err(fatal(format!("header must be {}", want.join(","))));
    }
    let mut seen = std::collections::HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let entry = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(Reject {
                    entry,
                    id: None,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let id = row.get(0).map(|s| s.trim().to_string());
        let result = row
            .deserialize::<RawExploitRow>(Some(&headers))
            .map_err(|e| e.to_string())
            .and_then(|raw| {
                let mut rec = ExploitRecord {
                    exploit_id: raw.exploit_id,
                    title: raw.title,
                    exploit_type: raw.exploit_type,
                    author_name: raw.author,
                    cve_ids: raw
                        .cve_ids
                        .split(';')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect(),
                    source_url: Some(raw.url),
                }
                .normalize();
                rec.validate()?;
                if !seen.insert(rec.exploit_id.clone()) {
                    return Err("duplicate exploitID".to_string());
                }
                Ok(rec)
            });
        match result {
            Ok(r) => out.records.push(r),
            Err(reason) => out.rejects.push(Reject { entry, id, reason }),
        }
    }
    Ok(out)
}

/// CVE Details export, one enrichment per line.
pub fn parse_cvedetails_export(bytes: &[u8]) -> Result<Parsed<EnrichmentRecord>, IngestError> {
    parse_json_source("cvedetails", bytes, "cveID", |raw: EnrichmentRecord| {
        let mut rec = raw.normalize();
        rec.validate()?;
        Ok(rec)
    })
}
