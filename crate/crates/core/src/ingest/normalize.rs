//! Cleaning rules applied between parsing and loading. Every function here
//! is idempotent.

use super::records::*;

/// Trim and squeeze internal whitespace runs to one space.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Vendor and product identifiers: lower-case, whitespace runs become `_`.
pub fn normalize_name(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// Host part of a URL (or of a bare host), lower-cased, without userinfo,
/// port or trailing dot. Returns `None` when nothing host-like remains.
pub fn url_host(url: &str) -> Option<String> {
    let s = url.trim();
    let rest = match s.find("://") {
        Some(i) if s[..i].chars().all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c)) => &s[i + 3..],
        _ => s.strip_prefix("//").unwrap_or(s),
    };
    let authority = rest.split(['/', '?', '#']).next().unwrap_or("");
    let host_port = authority.rsplit_once('@').map_or(authority, |(_, h)| h);
    let host = if let Some(v6) = host_port.strip_prefix('[') {
        v6.split(']').next().unwrap_or("")
    } else {
        host_port.split(':').next().unwrap_or("")
    };
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    if host.is_empty() || host.chars().any(char::is_whitespace) {
        None
    } else {
        Some(host)
    }
}

pub trait Normalize: Sized {
    fn normalize(self) -> Self;
}

fn norm_products(v: Vec<ProductRef>) -> Vec<ProductRef> {
    let mut out: Vec<ProductRef> = Vec::with_capacity(v.len());
    for p in v {
        let p = ProductRef::new(normalize_name(&p.vendor_name), normalize_name(&p.product_name));
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

fn dedup(v: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(v.len());
    for s in v {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

impl Normalize for CanonicalVulnRecord {
    fn normalize(mut self) -> Self {
        self.cve_id = self.cve_id.trim().to_ascii_uppercase();
        self.description = collapse_whitespace(&self.description);
        self.cwe_ids = dedup(self.cwe_ids.iter().map(|c| c.trim().to_ascii_uppercase()).collect());
        self.affected_products = norm_products(self.affected_products);
        self.reference_urls = dedup(self.reference_urls.iter().map(|u| u.trim().to_string()).collect());
        self
    }
}

impl Normalize for WeaknessRecord {
    fn normalize(mut self) -> Self {
        self.cwe_id = self.cwe_id.trim().to_ascii_uppercase();
        self.name = collapse_whitespace(&self.name);
        self.description = collapse_whitespace(&self.description);
        self
    }
}

/// Author used when the source leaves the field blank.
pub const UNKNOWN_AUTHOR: &str = "unknown";

impl Normalize for ExploitRecord {
    fn normalize(mut self) -> Self {
        self.exploit_id = self.exploit_id.trim().to_string();
        self.title = collapse_whitespace(&self.title);
        self.exploit_type = collapse_whitespace(&self.exploit_type);
        self.author_name = collapse_whitespace(&self.author_name);
        if self.author_name.is_empty() {
            self.author_name = UNKNOWN_AUTHOR.to_string();
        }
        self.cve_ids = dedup(self.cve_ids.iter().map(|c| c.trim().to_ascii_uppercase()).collect());
        self.source_url = self.source_url.map(|u| u.trim().to_string()).filter(|u| !u.is_empty());
        self
    }
}

impl Normalize for EnrichmentRecord {
    fn normalize(mut self) -> Self {
        self.cve_id = self.cve_id.trim().to_ascii_uppercase();
        self.product_mappings = norm_products(self.product_mappings);
        self.reference_domains = dedup(self.reference_domains.iter().filter_map(|d| url_host(d)).collect());
        self
    }
}
