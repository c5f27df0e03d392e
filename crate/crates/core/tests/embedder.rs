mod support;

use std::collections::HashMap;
use std::io::Read;
use std::sync::Arc;

use nalgebra::DMatrix;
use support::corpus::{synthetic_nvd, vulnerability_store};
use vulgd_core::embedder::*;
use vulgd_core::graph::{props, GraphStore, NodeLabel};
use vulgd_core::pipeline::{run_full, PipelineRunState, RunContext, SourceConfig, SourceId};

fn bag_of_words(text: &str) -> HashMap<String, f64> {
    let mut m = HashMap::new();
    for w in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        *m.entry(w.to_lowercase()).or_insert(0.0) += 1.0;
    }
    m
}

fn bow_cosine(a: &str, b: &str) -> f64 {
    let (x, y) = (bag_of_words(a), bag_of_words(b));
    let dot: f64 = x.iter().map(|(w, c)| c * y.get(w).copied().unwrap_or(0.0)).sum();
    let norm = |m: &HashMap<String, f64>| m.values().map(|c| c * c).sum::<f64>().sqrt();
    dot / (norm(&x) * norm(&y))
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let n = |v: &[f32]| v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    dot / (n(a) * n(b))
}

#[test]
fn similarity_ordering_agrees_with_bag_of_words() {
    let e = Embedder::local();
    let q = "buffer overflow in SMBv1";
    let near = "SMBv1 buffer overflow";
    let far = "cross-site scripting in blog comments";
    let emb = |t| e.embed(t, ModelId::HashDefault).unwrap();
    let (hn, hf) = (cosine(&emb(q), &emb(near)), cosine(&emb(q), &emb(far)));
    let (bn, bf) = (bow_cosine(q, near), bow_cosine(q, far));
    assert!(bn > bf);
    assert!(hn > hf, "{hn} vs {hf}");
    // identical token multisets hash identically
    assert!((hn - bn).abs() < 1e-6, "{hn} vs {bn}");
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(seed, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x100000001b3))
}

#[test]
fn hash_embedding_is_pinned_to_token_buckets() {
    let v = Embedder::local().embed("Overflow overflow!", ModelId::HashDefault).unwrap();
    let seed = 0xcbf29ce484222325u64;
    let bucket = (fnv1a(seed, b"overflow") % 768) as usize;
    for (i, x) in v.iter().enumerate() {
        assert_eq!(x.to_bits(), if i == bucket { 1.0f32 } else { 0.0 }.to_bits(), "bucket {i}");
    }
}

fn build(n: usize, model: ModelId) -> (GraphStore, TierSet, BuildReport) {
    let store = vulnerability_store(2020, n, 9);
    let (set, report) = build_tiers(2020, model, &store.view(), &Embedder::local(), 32, 128).unwrap();
    (store, set.unwrap(), report)
}

#[test]
fn tier_rows_and_dims() {
    let (_, set, report) = build(500, ModelId::SecbertLike);
    assert!(report.warnings.is_empty());
    assert_eq!((set.full.dim, set.beta.dim, set.alpha.dim), (768, 128, 32));
    for m in [&set.full, &set.beta, &set.alpha] {
        assert_eq!(m.rows(), 500);
    }
    let mut sorted = set.ids.clone();
    sorted.sort();
    assert_eq!(sorted, set.ids);
}

#[test]
fn reduced_tiers_are_projections_of_full() {
    let (_, set, _) = build(200, ModelId::HashDefault);
    let full = to_matrix(&set.full.to_rows(), 768).unwrap();
    for (tier, model) in [(&set.alpha, &set.pca_alpha), (&set.beta, &set.pca_beta)] {
        let want = model.transform(&full).unwrap();
        for i in 0..set.rows() {
            for j in 0..tier.dim {
                assert!((f64::from(tier.row(i)[j]) - want[(i, j)]).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn small_years_clamp_and_empty_years_skip() {
    let (_, set, report) = build(40, ModelId::HashDefault);
    assert_eq!((set.beta.dim, set.alpha.dim), (39, 32));
    assert_eq!(report.warnings.len(), 1);

    let empty = GraphStore::in_memory();
    let (none, report) = build_tiers(2020, ModelId::HashDefault, &empty.view(), &Embedder::local(), 32, 128).unwrap();
    assert!(none.is_none());
    assert_eq!(report.warnings.len(), 1);
    let tmp = tempfile::tempdir().unwrap();
    let ts = TierStore::new(tmp.path());
    let reports = refresh_tiers(&ts, &empty.view(), &Embedder::local(), &TierConfig::default(), Some(&["CVE-2020-0001".into()]), false).unwrap();
    assert!(!reports[0].written);
    assert!(std::fs::read_dir(tmp.path()).unwrap().next().is_none());
}

#[test]
fn tier_files_round_trip() {
    let (_, set, _) = build(150, ModelId::HashDefault);
    let tmp = tempfile::tempdir().unwrap();
    let ts = TierStore::new(tmp.path());
    let gen = ts.publish(&set).unwrap();
    let fresh = TierStore::new(tmp.path());
    assert_eq!(*fresh.load(2020, ModelId::HashDefault).unwrap(), set);
    assert_eq!(fresh.years(ModelId::HashDefault), vec![2020]);
    assert!(matches!(fresh.load(2019, ModelId::HashDefault), Err(EmbedderError::MissingTier { .. })));

    // header layout read by hand
    let raw = std::fs::read(gen.join(ALPHA_FILE)).unwrap();
    assert_eq!(&raw[..4], b"VGDT");
    assert_eq!(u16::from_le_bytes([raw[4], raw[5]]), 1);
    assert_eq!(i32::from_le_bytes(raw[6..10].try_into().unwrap()), 2020);
    let name_len = raw[10] as usize;
    assert_eq!(&raw[11..11 + name_len], b"HASH_DEFAULT");
    let at = 11 + name_len;
    assert_eq!(u32::from_le_bytes(raw[at..at + 4].try_into().unwrap()), 150);
    assert_eq!(u32::from_le_bytes(raw[at + 4..at + 8].try_into().unwrap()), 32);
    let index_len: usize = set.ids.iter().map(|id| 2 + id.len()).sum();
    assert_eq!(raw.len(), at + 8 + index_len + 150 * 32 * 4);

    // the full tier is gzip
    let gz = std::fs::read(gen.join(FULL_FILE)).unwrap();
    assert_eq!(&gz[..2], &[0x1f, 0x8b]);
    let mut plain = Vec::new();
    flate2::read::GzDecoder::new(&gz[..]).read_to_end(&mut plain).unwrap();
    let (_, _, ids, full) = decode_tier(&plain).unwrap();
    assert_eq!(ids, set.ids);
    assert_eq!(full, set.full);

    let mut bad = raw.clone();
    bad.pop();
    assert!(decode_tier(&bad).is_err());
    assert!(decode_tier(b"NOPE").is_err());
}

#[test]
fn new_cves_append_through_existing_models() {
    let tmp = tempfile::tempdir().unwrap();
    let ts = TierStore::new(tmp.path());
    let store = vulnerability_store(2020, 300, 4);
    let cfg = TierConfig::default();
    refresh_tiers(&ts, &store.view(), &Embedder::local(), &cfg, None, false).unwrap();
    let before = ts.load(2020, ModelId::HashDefault).unwrap();

    let mut batch = store.begin();
    let mut added = Vec::new();
    for (i, desc) in support::corpus::descriptions(10, 99).iter().enumerate() {
        let id = format!("CVE-2020-9{i:04}");
        batch
            .merge_node(NodeLabel::Vulnerability, &props([("cveID", id.as_str())]), &props([("description", desc.as_str())]))
            .unwrap();
        added.push(id);
    }
    batch.commit().unwrap();
    let reports = refresh_tiers(&ts, &store.view(), &Embedder::local(), &cfg, Some(&added), false).unwrap();
    assert_eq!(reports[0].appended, 10);

    let after = ts.load(2020, ModelId::HashDefault).unwrap();
    assert_eq!(after.rows(), before.rows() + 10);
    assert_eq!(after.pca_alpha, before.pca_alpha);
    assert_eq!(after.pca_beta, before.pca_beta);
    assert_eq!(&after.ids[..300], &before.ids[..]);
    assert_eq!(&after.ids[300..], &added[..]);
    assert_eq!(after.alpha.data[..300 * 32], before.alpha.data[..]);
    let e = Embedder::local();
    for (i, id) in added.iter().enumerate() {
        let desc = store.view().find(NodeLabel::Vulnerability, &vulgd_core::graph::NodeKey(vec![id.clone()])).unwrap().props["description"].render();
        let v = e.embed(&desc, ModelId::HashDefault).unwrap();
        let want = before.pca_alpha.transform_f32(&[v]).unwrap().remove(0);
        assert_eq!(after.alpha.row(300 + i), want.as_slice());
    }

    // a second pass over the same ids changes nothing
    let again = refresh_tiers(&ts, &store.view(), &Embedder::local(), &cfg, Some(&added), false).unwrap();
    assert!(!again[0].written);
}

#[test]
fn pipeline_hook_maintains_tiers() {
    let tmp = tempfile::tempdir().unwrap();
    let feed = tmp.path().join("nvd.jsonl");
    std::fs::write(&feed, synthetic_nvd(2021, 0, 200, 1)).unwrap();
    let sources = [SourceConfig::new(SourceId::Nvd, feed.to_string_lossy())];
    let store = GraphStore::in_memory();
    let ts = Arc::new(TierStore::new(tmp.path().join("emb")));
    let mut hook = TierMaintainer::new(ts.clone(), Embedder::local(), TierConfig::default());
    let mut state = PipelineRunState::default();
    let mut ctx = RunContext::new(tmp.path().join("spool"));
    run_full(&sources, &mut state, &store, &mut ctx, Some(&mut hook)).unwrap();
    assert_eq!(ts.load(2021, ModelId::HashDefault).unwrap().rows(), 200);

    let mut text = synthetic_nvd(2021, 0, 200, 1);
    text.push('\n');
    text.push_str(&synthetic_nvd(2021, 500, 10, 2).replace("-03-", "-04-"));
    std::fs::write(&feed, text).unwrap();
    run_full(&sources, &mut state, &store, &mut ctx, Some(&mut hook)).unwrap();
    let set = ts.load(2021, ModelId::HashDefault).unwrap();
    assert_eq!(set.rows(), 210);
    assert!(set.ids.iter().all(|id| store.view().find(NodeLabel::Vulnerability, &vulgd_core::graph::NodeKey(vec![id.clone()])).is_some()));
}

/// Expected (tier, served_dim, client_reduce) per branch, written out by hand.
const TABLE: [(usize, Origin, TierUsed, usize, bool); 18] = [
    (1, Origin::Browser, TierUsed::Alpha, 32, true),
    (1, Origin::Api, TierUsed::Alpha, 1, false),
    (16, Origin::Browser, TierUsed::Alpha, 32, true),
    (16, Origin::Api, TierUsed::Alpha, 16, false),
    (32, Origin::Browser, TierUsed::Alpha, 32, false),
    (32, Origin::Api, TierUsed::Alpha, 32, false),
    (33, Origin::Browser, TierUsed::BetaReduced, 33, false),
    (33, Origin::Api, TierUsed::BetaReduced, 33, false),
    (64, Origin::Browser, TierUsed::BetaReduced, 64, false),
    (64, Origin::Api, TierUsed::BetaReduced, 64, false),
    (128, Origin::Browser, TierUsed::BetaReduced, 128, false),
    (128, Origin::Api, TierUsed::BetaReduced, 128, false),
    (129, Origin::Browser, TierUsed::Full, 768, false),
    (129, Origin::Api, TierUsed::Full, 768, false),
    (512, Origin::Browser, TierUsed::Full, 768, false),
    (512, Origin::Api, TierUsed::Full, 768, false),
    (768, Origin::Browser, TierUsed::Full, 768, false),
    (768, Origin::Api, TierUsed::Full, 768, false),
];

#[test]
fn retrieval_follows_decision_table() {
    let (_, set, _) = build(300, ModelId::HashDefault);
    for (d_r, origin, tier, served, client) in TABLE {
        let r = retrieve(&set, d_r, origin, None).unwrap();
        assert_eq!((r.tier_used, r.served_dim, r.client_reduce_required), (tier, served, client), "{d_r} {origin:?}");
        assert!(r.vectors.iter().all(|v| v.len() == served));
        assert_eq!(r.vectors.len(), 300);
        assert!([d_r, 32, 768].contains(&r.served_dim));
    }
    assert!(matches!(retrieve(&set, 769, Origin::Api, None), Err(EmbedderError::DimOutOfRange { .. })));
}

#[test]
fn retrieval_tiers_match_stored_data() {
    let (_, set, _) = build(300, ModelId::HashDefault);
    assert_eq!(retrieve(&set, 16, Origin::Browser, None).unwrap().vectors, set.alpha.to_rows());
    assert_eq!(retrieve(&set, 128, Origin::Api, None).unwrap().vectors, set.beta.to_rows());
    assert_eq!(retrieve(&set, 400, Origin::Api, None).unwrap().vectors, set.full.to_rows());

    // server reduction of the alpha tier equals a batch fit on that tier
    let r = retrieve(&set, 16, Origin::Api, None).unwrap();
    let alpha = to_matrix(&set.alpha.to_rows(), 32).unwrap();
    let want = fit_pca(&alpha, 16).unwrap().transform(&alpha).unwrap();
    let got = to_matrix(&r.vectors, 16).unwrap();
    assert!((got - want).amax() < 1e-4);

    // beta reduction approximates a batch fit on the beta tier
    let r = retrieve(&set, 40, Origin::Api, None).unwrap();
    let beta = to_matrix(&set.beta.to_rows(), 128).unwrap();
    let batch = fit_pca(&beta, 40).unwrap().transform(&beta).unwrap();
    let got: DMatrix<f64> = to_matrix(&r.vectors, 40).unwrap();
    let var = |m: &DMatrix<f64>| m.norm_squared();
    assert!((var(&got) - var(&batch)).abs() / var(&batch) < 0.02);
}

#[test]
fn id_filter_keeps_index_order_and_reports_misses() {
    let (_, set, _) = build(100, ModelId::HashDefault);
    let ids = vec![set.ids[50].clone(), "CVE-2020-77777".into(), set.ids[3].clone()];
    let r = retrieve(&set, 16, Origin::Browser, Some(&ids)).unwrap();
    assert_eq!(r.ids, vec![set.ids[3].clone(), set.ids[50].clone()]);
    assert_eq!(r.missing, vec!["CVE-2020-77777".to_string()]);
    assert_eq!(r.vectors, vec![set.alpha.row(3).to_vec(), set.alpha.row(50).to_vec()]);
}
