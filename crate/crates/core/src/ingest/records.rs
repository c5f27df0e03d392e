use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::graph::{Props, Value};

/// CVSS v2 qualitative severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    Low,
    Medium,
    High,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Low => "LOW",
            Severity::Medium => "MEDIUM",
            Severity::High => "HIGH",
        }
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LOW" => Ok(Severity::Low),
            "MEDIUM" => Ok(Severity::Medium),
            "HIGH" => Ok(Severity::High),
            other => Err(format!("unknown severity {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProductRef {
    #[serde(rename = "vendorName")]
    pub vendor_name: String,
    #[serde(rename = "productName")]
    pub product_name: String,
}

impl ProductRef {
    pub fn new(vendor: impl Into<String>, product: impl Into<String>) -> Self {
        ProductRef {
            vendor_name: vendor.into(),
            product_name: product.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalVulnRecord {
    #[serde(rename = "cveID")]
    pub cve_id: String,
    pub description: String,
    pub published: DateTime<Utc>,
    #[serde(rename = "lastModified")]
    pub last_modified: DateTime<Utc>,
    #[serde(rename = "cvssV2severity", default, skip_serializing_if = "Option::is_none")]
    pub cvss_v2_severity: Option<Severity>,
    #[serde(rename = "cvssV3exploitabilityScore", default, skip_serializing_if = "Option::is_none")]
    pub cvss_v3_exploitability_score: Option<f64>,
    #[serde(rename = "cweIDs", default)]
    pub cwe_ids: Vec<String>,
    #[serde(rename = "affectedProducts", default)]
    pub affected_products: Vec<ProductRef>,
    #[serde(rename = "referenceUrls", default)]
    pub reference_urls: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeaknessRecord {
    #[serde(rename = "cweID")]
    pub cwe_id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploitRecord {
    #[serde(rename = "exploitID")]
    pub exploit_id: String,
    pub title: String,
    #[serde(rename = "exploitType")]
    pub exploit_type: String,
    #[serde(rename = "authorName")]
    pub author_name: String,
    #[serde(rename = "cveIDs")]
    pub cve_ids: Vec<String>,
    #[serde(rename = "sourceUrl", default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
}

impl ExploitRecord {
    /// References no CVE at all.
    pub fn is_unlinked(&self) -> bool {
        self.cve_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentRecord {
    #[serde(rename = "cveID")]
    pub cve_id: String,
    #[serde(rename = "extraProps", default)]
    pub extra_props: Props,
    #[serde(rename = "productMappings", default)]
    pub product_mappings: Vec<ProductRef>,
    #[serde(rename = "referenceDomains", default)]
    pub reference_domains: Vec<String>,
}

/// Property names an enrichment may not set.
pub const RESERVED_KEYS: [&str; 2] = ["cveID", "published"];

/// A parsed entry that failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based entry number within the input (line or row).
    pub entry: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub reason: String,
}

impl fmt::Display for Reject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "entry {} ({id}): {}", self.entry, self.reason),
            None => write!(f, "entry {}: {}", self.entry, self.reason),
        }
    }
}

/// Records plus the entries that were turned away. Every input entry ends up
/// in exactly one of the two lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub rejects: Vec<Reject>,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed {
            records: Vec::new(),
            rejects: Vec::new(),
        }
    }
}

impl<T> Parsed<T> {
    pub fn entries(&self) -> usize {
        self.records.len() + self.rejects.len()
    }
}

pub fn is_cve_id(s: &str) -> bool {
    let Some(rest) = s.strip_prefix("CVE-") else {
        return false;
    };
    let Some((year, seq)) = rest.split_once('-') else {
        return false;
    };
    year.len() == 4
        && year.bytes().all(|b| b.is_ascii_digit())
        && seq.len() >= 4
        && seq.bytes().all(|b| b.is_ascii_digit())
}

pub fn is_cwe_id(s: &str) -> bool {
    s.strip_prefix("CWE-")
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

/// Year component of a CVE identifier.
pub fn cve_year(cve_id: &str) -> Option<i32> {
    if !is_cve_id(cve_id) {
        return None;
    }
    cve_id[4..8].parse().ok()
}

fn dedup_in_place<T: PartialEq + Clone>(v: &mut Vec<T>) {
    let mut seen: Vec<T> = Vec::with_capacity(v.len());
    v.retain(|x| {
        if seen.contains(x) {
            false
        } else {
            seen.push(x.clone());
            true
        }
    });
}

impl CanonicalVulnRecord {
    /// Check the record invariants. Duplicate list entries are dropped
    /// rather than rejected.
    pub fn validate(&mut self) -> Result<(), String> {
        if !is_cve_id(&self.cve_id) {
            return Err(format!("malformed cveID {:?}", self.cve_id));
        }
        if self.published > self.last_modified {
            return Err("timestamp order: published after lastModified".into());
        }
        if let Some(s) = self.cvss_v3_exploitability_score {
            if !(0.0..=10.0).contains(&s) {
                return Err(format!("score out of range: {s}"));
            }
        }
        if let Some(bad) = self.cwe_ids.iter().find(|c| !is_cwe_id(c)) {
            return Err(format!("malformed cweID {bad:?}"));
        }
        if self
            .affected_products
            .iter()
            .any(|p| p.vendor_name.trim().is_empty() || p.product_name.trim().is_empty())
        {
            return Err("empty vendor or product name".into());
        }
        dedup_in_place(&mut self.cwe_ids);
        dedup_in_place(&mut self.affected_products);
        dedup_in_place(&mut self.reference_urls);
        Ok(())
    }

    /// Field-wise union used when a batch carries the same CVE twice; the
    /// later record wins on scalars.
    pub fn absorb(&mut self, later: CanonicalVulnRecord) {
        self.description = later.description;
        self.published = self.published.min(later.published);
        self.last_modified = self.last_modified.max(later.last_modified);
        if later.cvss_v2_severity.is_some() {
            self.cvss_v2_severity = later.cvss_v2_severity;
        }
        if later.cvss_v3_exploitability_score.is_some() {
            self.cvss_v3_exploitability_score = later.cvss_v3_exploitability_score;
        }
        self.cwe_ids.extend(later.cwe_ids);
        self.affected_products.extend(later.affected_products);
        self.reference_urls.extend(later.reference_urls);
        dedup_in_place(&mut self.cwe_ids);
        dedup_in_place(&mut self.affected_products);
        dedup_in_place(&mut self.reference_urls);
    }
}

impl WeaknessRecord {
    pub fn validate(&self) -> Result<(), String> {
        if !is_cwe_id(&self.cwe_id) {
            return Err(format!("malformed cweID {:?}", self.cwe_id));
        }
        if self.name.trim().is_empty() {
            return Err("empty weakness name".into());
        }
        Ok(())
    }
}

impl ExploitRecord {
    pub fn validate(&mut self) -> Result<(), String> {
        if self.exploit_id.trim().is_empty() {
            return Err("empty exploitID".into());
        }
        if self.exploit_type.trim().is_empty() {
            return Err("empty exploit type".into());
        }
        if let Some(bad) = self.cve_ids.iter().find(|c| !is_cve_id(c)) {
            return Err(format!("malformed cveID {bad:?}"));
        }
        dedup_in_place(&mut self.cve_ids);
        Ok(())
    }
}

impl EnrichmentRecord {
    pub fn validate(&mut self) -> Result<(), String> {
        if !is_cve_id(&self.cve_id) {
            return Err(format!("malformed cveID {:?}", self.cve_id));
        }
        if let Some(k) = RESERVED_KEYS.iter().find(|k| self.extra_props.contains_key(**k)) {
            return Err(format!("reserved key {k} in extraProps"));
        }
        for (name, v) in &self.extra_props {
            if let Value::Float(f) = v {
                if !f.is_finite() {
                    return Err(format!("{name}: non-finite number"));
                }
            }
        }
        dedup_in_place(&mut self.product_mappings);
        dedup_in_place(&mut self.reference_domains);
        Ok(())
    }
}
