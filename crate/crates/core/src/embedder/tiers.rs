use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::Serialize;

use super::model::{Embedder, ModelId};
use super::pca::{fit_pca, from_matrix, to_matrix, PcaModel};
use super::EmbedderError;
use crate::graph::{GraphData, NodeLabel};
use crate::ingest::cve_year;
use crate::pipeline::PostMerge;

const MAGIC: &[u8; 4] = b"VGDT";
const VERSION: u16 = 1;

/// Dense row-major f32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TierMatrix {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl TierMatrix {
    pub fn new(dim: usize) -> Self {
        TierMatrix { dim, data: Vec::new() }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Self {
        let mut m = TierMatrix::new(dim);
        for r in rows {
            m.push(r);
        }
        m
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f32>> {
        (0..self.rows()).map(|i| self.row(i).to_vec()).collect()
    }

    fn push(&mut self, row: &[f32]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    fn set(&mut self, i: usize, row: &[f32]) {
        self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(row);
    }
}

/// Serialize one tier: header, cveID index, then little-endian f32 rows.
/// Returns the bytes and the offset at which the data section starts.
pub fn encode_tier(year: i32, model: ModelId, ids: &[String], m: &TierMatrix) -> (Vec<u8>, usize) {
    let mut out = Vec::with_capacity(64 + ids.len() * 16 + m.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&year.to_le_bytes());
    let name = model.as_str().as_bytes();
    out.push(name.len() as u8);
    out.extend_from_slice(name);
    out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim as u32).to_le_bytes());
    for id in ids {
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    let offset = out.len();
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    (out, offset)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbedderError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or_else(|| {
            EmbedderError::Format(format!("truncated at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, EmbedderError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, EmbedderError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_tier(buf: &[u8]) -> Result<(i32, ModelId, Vec<String>, TierMatrix), EmbedderError> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(EmbedderError::Format("bad magic".into()));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(EmbedderError::Format(format!("unsupported version {version}")));
    }
    let year = c.u32()? as i32;
    let len = c.take(1)?[0] as usize;
    let model = std::str::from_utf8(c.take(len)?)
        .map_err(|_| EmbedderError::Format("model id not utf-8".into()))?
        .parse()?;
    let n = c.u32()? as usize;
    let dim = c.u32()? as usize;
    let mut ids = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let l = c.u16()? as usize;
        let id = std::str::from_utf8(c.take(l)?)
            .map_err(|_| EmbedderError::Format("cveID not utf-8".into()))?;
        ids.push(id.to_string());
    }
    let bytes = c.take(n * dim * 4)?;
    if c.pos != buf.len() {
        return Err(EmbedderError::Format(format!("{} trailing bytes", buf.len() - c.pos)));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((year, model, ids, TierMatrix { dim, data }))
}

/// The three stored representations of one (year, model) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TierSet {
    pub year: i32,
    pub model: ModelId,
    pub ids: Vec<String>,
    pub full: TierMatrix,
    pub beta: TierMatrix,
    pub alpha: TierMatrix,
    pub pca_beta: PcaModel,
    pub pca_alpha: PcaModel,
}

impl TierSet {
    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn native_dim(&self) -> usize {
        self.full.dim
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BuildReport {
    pub year: i32,
    pub model: String,
    pub rows: usize,
    pub full_dim: usize,
    pub beta_dim: usize,
    pub alpha_dim: usize,
    pub appended: usize,
    pub replaced: usize,
    pub written: bool,
    pub warnings: Vec<String>,
}

/// Vulnerabilities of `year` with a description, ordered by cveID.
pub fn year_descriptions(graph: &GraphData, year: i32) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = graph
        .nodes_by_label(NodeLabel::Vulnerability)
        .filter_map(|n| {
            let id = n.get("cveID")?.as_str()?;
            let desc = n.get("description")?.as_str()?;
            (cve_year(id) == Some(year) && !desc.trim().is_empty())
                .then(|| (id.to_string(), desc.to_string()))
        })
        .collect();
    out.sort();
    out
}

/// Years present among the given cveIDs, or among all vulnerabilities.
pub fn years_of<'a>(ids: impl IntoIterator<Item = &'a str>) -> BTreeSet<i32> {
    ids.into_iter().filter_map(cve_year).collect()
}

pub fn graph_years(graph: &GraphData) -> BTreeSet<i32> {
    years_of(
        graph
            .nodes_by_label(NodeLabel::Vulnerability)
            .filter_map(|n| n.get("cveID").and_then(|v| v.as_str())),
    )
}

fn project(model: &PcaModel, rows: &[Vec<f32>]) -> Result<Vec<Vec<f32>>, EmbedderError> {
    model.transform_f32(rows)
}

/// Embed every description of `year` and fit both reduction models on the
/// full matrix. Returns `None` when the year cannot support a fit.
pub fn build_tiers(
    year: i32,
    model: ModelId,
    graph: &GraphData,
    embedder: &Embedder,
    alpha: usize,
    beta: usize,
) -> Result<(Option<TierSet>, BuildReport), EmbedderError> {
    let d = model.native_dim();
    let mut report = BuildReport {
        year,
        model: model.to_string(),
        full_dim: d,
        ..Default::default()
    };
    let docs = year_descriptions(graph, year);
    report.rows = docs.len();
    if docs.len() < 2 {
        report.warnings.push(format!(
            "{year}: {} vulnerabilities with descriptions, at least 2 are needed for reduced tiers",
            docs.len()
        ));
        return Ok((None, report));
    }
    let texts: Vec<&str> = docs.iter().map(|(_, t)| t.as_str()).collect();
    let rows = embedder.embed_batch(&texts, model)?;
    let cap = docs.len() - 1;
    let (a, b) = (alpha.min(cap).min(d), beta.min(cap).min(d));
    if (a, b) != (alpha, beta) {
        report.warnings.push(format!(
            "{year}: only {} rows, tiers clamped to {a}/{b} dimensions",
            docs.len()
        ));
    }
    let x = to_matrix(&rows, d)?;
    let pca_beta = fit_pca(&x, b)?;
    let pca_alpha = fit_pca(&x, a)?;
    let beta_rows = from_matrix(&pca_beta.transform(&x)?);
    let alpha_rows = from_matrix(&pca_alpha.transform(&x)?);
    report.beta_dim = b;
    report.alpha_dim = a;
    report.appended = docs.len();
    let set = TierSet {
        year,
        model,
        ids: docs.into_iter().map(|(id, _)| id).collect(),
        full: TierMatrix::from_rows(d, &rows),
        beta: TierMatrix::from_rows(b, &beta_rows),
        alpha: TierMatrix::from_rows(a, &alpha_rows),
        pca_beta,
        pca_alpha,
    };
    Ok((Some(set), report))
}

/// Fold changed or new vulnerabilities into an existing tier set, projecting
/// through the stored models without refitting.
pub fn update_tiers(
    set: &mut TierSet,
    graph: &GraphData,
    embedder: &Embedder,
    cve_ids: &[String],
) -> Result<BuildReport, EmbedderError> {
    let mut report = BuildReport {
        year: set.year,
        model: set.model.to_string(),
        full_dim: set.full.dim,
        beta_dim: set.beta.dim,
        alpha_dim: set.alpha.dim,
        ..Default::default()
    };
    let wanted: BTreeSet<&str> = cve_ids
        .iter()
        .map(String::as_str)
        .filter(|id| cve_year(id) == Some(set.year))
        .collect();
    let docs: Vec<(String, String)> = year_descriptions(graph, set.year)
        .into_iter()
        .filter(|(id, _)| wanted.contains(id.as_str()))
        .collect();
    if !docs.is_empty() {
        let texts: Vec<&str> = docs.iter().map(|(_, t)| t.as_str()).collect();
        let rows = embedder.embed_batch(&texts, set.model)?;
        let betas = project(&set.pca_beta, &rows)?;
        let alphas = project(&set.pca_alpha, &rows)?;
        let position: HashMap<String, usize> =
            set.ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        for (i, (id, _)) in docs.iter().enumerate() {
            match position.get(id) {
                Some(&at) if set.full.row(at) == rows[i].as_slice() => {}
                Some(&at) => {
                    set.full.set(at, &rows[i]);
                    set.beta.set(at, &betas[i]);
                    set.alpha.set(at, &alphas[i]);
                    report.replaced += 1;
                }
                None => {
                    set.ids.push(id.clone());
                    set.full.push(&rows[i]);
                    set.beta.push(&betas[i]);
                    set.alpha.push(&alphas[i]);
                    report.appended += 1;
                }
            }
        }
    }
    report.rows = set.rows();
    Ok(report)
}

/// On-disk tier sets under `root/<year>/<MODEL>/`. Each publish writes a new
/// generation directory and then swaps the `CURRENT` pointer by rename, so
/// readers always see one complete generation.
#[derive(Debug)]
pub struct TierStore {
    root: PathBuf,
    cache: Mutex<HashMap<(i32, ModelId), (String, Arc<TierSet>)>>,
}

/// File names inside a generation directory.
pub const FULL_FILE: &str = "full.vgdt.gz";
pub const BETA_FILE: &str = "beta.vgdt";
pub const ALPHA_FILE: &str = "alpha.vgdt";

impl TierStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        TierStore {
            root: root.into(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn set_dir(&self, year: i32, model: ModelId) -> PathBuf {
        self.root.join(year.to_string()).join(model.as_str())
    }

    fn current(&self, year: i32, model: ModelId) -> Option<String> {
        fs::read_to_string(self.set_dir(year, model).join("CURRENT"))
            .ok()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
    }

    /// Directory holding the published generation, if any.
    pub fn generation_dir(&self, year: i32, model: ModelId) -> Option<PathBuf> {
        self.current(year, model).map(|g| self.set_dir(year, model).join(g))
    }

    pub fn exists(&self, year: i32, model: ModelId) -> bool {
        self.current(year, model).is_some()
    }

    /// Years with a published tier set for `model`.
    pub fn years(&self, model: ModelId) -> Vec<i32> {
        let Ok(entries) = fs::read_dir(&self.root) else {
            return Vec::new();
        };
        let mut years: Vec<i32> = entries
            .filter_map(|e| e.ok()?.file_name().to_str()?.parse().ok())
            .filter(|y| self.exists(*y, model))
            .collect();
        years.sort();
        years
    }

    pub fn publish(&self, set: &TierSet) -> Result<PathBuf, EmbedderError> {
        let dir = self.set_dir(set.year, set.model);
        fs::create_dir_all(&dir)?;
        let next = match self.current(set.year, set.model) {
            Some(g) => g.trim_start_matches("gen-").parse::<u64>().unwrap_or(0) + 1,
            None => 1,
        };
        let name = format!("gen-{next:06}");
        let gen_dir = dir.join(&name);
        if gen_dir.exists() {
            fs::remove_dir_all(&gen_dir)?;
        }
        fs::create_dir_all(&gen_dir)?;

        let (full, _) = encode_tier(set.year, set.model, &set.ids, &set.full);
        let mut gz = GzEncoder::new(fs::File::create(gen_dir.join(FULL_FILE))?, Compression::default());
        gz.write_all(&full)?;
        gz.finish()?.sync_all()?;
        for (file, m) in [(BETA_FILE, &set.beta), (ALPHA_FILE, &set.alpha)] {
            fs::write(gen_dir.join(file), encode_tier(set.year, set.model, &set.ids, m).0)?;
        }
        fs::write(gen_dir.join("pca_beta.json"), serde_json::to_vec(&set.pca_beta)?)?;
        fs::write(gen_dir.join("pca_alpha.json"), serde_json::to_vec(&set.pca_alpha)?)?;

        let tmp = dir.join("CURRENT.tmp");
        fs::write(&tmp, &name)?;
        fs::rename(&tmp, dir.join("CURRENT"))?;

        // keep the previous generation for readers that are mid-load
        let mut gens: Vec<String> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok()?.file_name().into_string().ok())
            .filter(|n| n.starts_with("gen-"))
            .collect();
        gens.sort();
        if gens.len() > 2 {
            for old in &gens[..gens.len() - 2] {
                let _ = fs::remove_dir_all(dir.join(old));
            }
        }
        self.cache
            .lock()
            .unwrap()
            .insert((set.year, set.model), (name, Arc::new(set.clone())));
        Ok(gen_dir)
    }

    /// Load the published tier set, reusing the cached copy while the
    /// generation is unchanged.
    pub fn load(&self, year: i32, model: ModelId) -> Result<Arc<TierSet>, EmbedderError> {
        let gen = self
            .current(year, model)
            .ok_or(EmbedderError::MissingTier { year, model })?;
        if let Some((g, set)) = self.cache.lock().unwrap().get(&(year, model)) {
            if *g == gen {
                return Ok(set.clone());
            }
        }
        let set = Arc::new(self.read_generation(year, model, &gen)?);
        self.cache
            .lock()
            .unwrap()
            .insert((year, model), (gen, set.clone()));
        Ok(set)
    }

    fn read_generation(&self, year: i32, model: ModelId, gen: &str) -> Result<TierSet, EmbedderError> {
        let dir = self.set_dir(year, model).join(gen);
        let mut full_bytes = Vec::new();
        GzDecoder::new(fs::File::open(dir.join(FULL_FILE))?).read_to_end(&mut full_bytes)?;
        let (y, m, ids, full) = decode_tier(&full_bytes)?;
        let (_, _, beta_ids, beta) = decode_tier(&fs::read(dir.join(BETA_FILE))?)?;
        let (_, _, alpha_ids, alpha) = decode_tier(&fs::read(dir.join(ALPHA_FILE))?)?;
        if (y, m) != (year, model) || beta_ids != ids || alpha_ids != ids {
            return Err(EmbedderError::Format(format!(
                "{}: tier files disagree on year, model or row index",
                dir.display()
            )));
        }
        Ok(TierSet {
            year,
            model,
            ids,
            full,
            beta,
            alpha,
            pca_beta: serde_json::from_slice(&fs::read(dir.join("pca_beta.json"))?)?,
            pca_alpha: serde_json::from_slice(&fs::read(dir.join("pca_alpha.json"))?)?,
        })
    }
}

/// Which models to maintain and at which reduced dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct TierConfig {
    pub models: Vec<ModelId>,
    pub alpha: usize,
    pub beta: usize,
}

impl Default for TierConfig {
    fn default() -> Self {
        TierConfig {
            models: vec![ModelId::HashDefault],
            alpha: 32,
            beta: 128,
        }
    }
}

/// Build or refresh the tier sets for every year touched by `cve_ids`
/// (every year in the graph when `cve_ids` is `None`). `rebuild` refits the
/// reduction models instead of projecting through the stored ones.
pub fn refresh_tiers(
    store: &TierStore,
    graph: &GraphData,
    embedder: &Embedder,
    cfg: &TierConfig,
    cve_ids: Option<&[String]>,
    rebuild: bool,
) -> Result<Vec<BuildReport>, EmbedderError> {
    let years = match cve_ids {
        Some(ids) => years_of(ids.iter().map(String::as_str)),
        None => graph_years(graph),
    };
    let mut by_year: BTreeMap<i32, Vec<String>> = BTreeMap::new();
    if let Some(ids) = cve_ids {
        for id in ids {
            if let Some(y) = cve_year(id) {
                by_year.entry(y).or_default().push(id.clone());
            }
        }
    }
    let mut reports = Vec::new();
    for &model in &cfg.models {
        for &year in &years {
            let existing = if rebuild || !store.exists(year, model) {
                None
            } else {
                Some(store.load(year, model)?)
            };
            let report = match existing {
                Some(set) => {
                    let mut set = (*set).clone();
                    let ids = match by_year.get(&year) {
                        Some(ids) => ids.clone(),
                        None => year_descriptions(graph, year).into_iter().map(|(id, _)| id).collect(),
                    };
                    let mut report = update_tiers(&mut set, graph, embedder, &ids)?;
                    if report.appended + report.replaced > 0 {
                        store.publish(&set)?;
                        report.written = true;
                    }
                    report
                }
                None => {
                    let (set, mut report) = build_tiers(year, model, graph, embedder, cfg.alpha, cfg.beta)?;
                    if let Some(set) = set {
                        store.publish(&set)?;
                        report.written = true;
                    }
                    for w in &report.warnings {
                        tracing::warn!(year, model = %model, "{w}");
                    }
                    report
                }
            };
            reports.push(report);
        }
    }
    Ok(reports)
}

/// Keeps tier sets current as the pipeline merges vulnerabilities.
#[derive(Debug)]
pub struct TierMaintainer {
    pub store: Arc<TierStore>,
    pub embedder: Embedder,
    pub config: TierConfig,
    pub reports: Vec<BuildReport>,
}

impl TierMaintainer {
    pub fn new(store: Arc<TierStore>, embedder: Embedder, config: TierConfig) -> Self {
        TierMaintainer {
            store,
            embedder,
            config,
            reports: Vec::new(),
        }
    }
}

impl PostMerge for TierMaintainer {
    fn vulnerabilities_merged(&mut self, view: &GraphData, cve_ids: &[String]) -> Result<String, String> {
        let reports = refresh_tiers(
            &self.store,
            view,
            &self.embedder,
            &self.config,
            Some(cve_ids),
            false,
        )
        .map_err(|e| e.to_string())?;
        let written = reports.iter().filter(|r| r.written).count();
        let rows: usize = reports.iter().map(|r| r.appended + r.replaced).sum();
        self.reports.extend(reports);
        Ok(format!("{written} tier sets updated, {rows} rows embedded"))
    }
}
