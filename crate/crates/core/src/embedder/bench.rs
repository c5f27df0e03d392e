use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::model::ModelId;
use super::pca::{fit_pca, to_matrix};
use super::tiers::{encode_tier, TierMatrix};
use super::EmbedderError;

pub const DEFAULT_DIMS: [usize; 7] = [16, 32, 64, 128, 256, 512, 768];

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static INSTALLED: AtomicBool = AtomicBool::new(false);

/// System allocator that tracks live and peak heap bytes. Install it with
/// `#[global_allocator]` in a binary to get measured peak memory; otherwise
/// the benchmark falls back to an estimate.
pub struct CountingAlloc;

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            INSTALLED.store(true, Ordering::Relaxed);
            let now = CURRENT.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

fn counting() -> bool {
    INSTALLED.load(Ordering::Relaxed)
}

/// Restart peak tracking from the current live size; returns that size.
fn reset_peak() -> usize {
    let now = CURRENT.load(Ordering::Relaxed);
    PEAK.store(now, Ordering::Relaxed);
    now
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub dim: usize,
    pub storage_bytes: usize,
    pub time_ms: f64,
    pub peak_mem_bytes: usize,
    /// False when peak memory is an estimate rather than a measurement.
    pub peak_mem_measured: bool,
}

const MIB: f64 = 1024.0 * 1024.0;

impl CostRow {
    pub fn storage_mb(&self) -> f64 {
        self.storage_bytes as f64 / MIB
    }

    pub fn peak_mem_mb(&self) -> f64 {
        self.peak_mem_bytes as f64 / MIB
    }
}

/// Synthetic embedding-like rows with a decaying spectrum.
pub fn synthetic_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ dim as u64);
    let normal = Normal::new(0.0f64, 1.0).expect("valid normal");
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|j| (normal.sample(&mut rng) / (1.0 + j as f64).sqrt()) as f32)
                .collect()
        })
        .collect()
}

fn reduce_half(x: &DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>, EmbedderError> {
    fit_pca(x, dim / 2)?.transform(x)
}

/// Working-set estimate for the covariance route: input copy, centered copy,
/// covariance, eigenvectors and the projected output, all f64.
fn estimated_peak(n: usize, d: usize) -> usize {
    8 * (2 * n * d + 2 * d * d + n * d / 2)
}

/// Time and memory of reducing `n_rows` rows to half their width, per dim.
pub fn benchmark_pca(dims: &[usize], n_rows: usize, seed: u64) -> Result<Vec<CostRow>, EmbedderError> {
    let Some(&max) = dims.iter().max() else {
        return Err(EmbedderError::Shape("no dimensions to benchmark".into()));
    };
    if let Some(d) = dims.iter().find(|d| **d < 2) {
        return Err(EmbedderError::Shape(format!("dimension {d} cannot be halved")));
    }
    if n_rows < 2 * max {
        return Err(EmbedderError::Degenerate(format!(
            "{n_rows} rows is fewer than twice the largest dimension {max}"
        )));
    }
    let mut out = Vec::with_capacity(dims.len());
    for &dim in dims {
        let rows = synthetic_rows(n_rows, dim, seed);
        let ids: Vec<String> = (0..n_rows).map(|i| format!("CVE-2000-{i:05}")).collect();
        let (bytes, offset) = encode_tier(2000, ModelId::HashDefault, &ids, &TierMatrix::from_rows(dim, &rows));
        let storage_bytes = bytes.len() - offset;
        drop(bytes);
        let x = to_matrix(&rows, dim)?;
        drop(rows);

        reduce_half(&x, dim)?;
        let (peak_mem_bytes, peak_mem_measured) = if counting() {
            let base = reset_peak();
            reduce_half(&x, dim)?;
            (PEAK.load(Ordering::Relaxed).saturating_sub(base), true)
        } else {
            (estimated_peak(n_rows, dim), false)
        };

        let mut best = Duration::MAX;
        let mut total = Duration::ZERO;
        let mut reps = 0;
        while reps < 3 || (total < Duration::from_millis(50) && reps < 200) {
            let t = Instant::now();
            std::hint::black_box(reduce_half(&x, dim)?);
            let e = t.elapsed();
            best = best.min(e);
            total += e;
            reps += 1;
        }
        out.push(CostRow {
            dim,
            storage_bytes,
            time_ms: best.as_secs_f64() * 1000.0,
            peak_mem_bytes,
            peak_mem_measured,
        });
    }
    Ok(out)
}

/// CSV with columns dim,storage_mb,time_ms,peak_mem_mb.
pub fn cost_table_csv(rows: &[CostRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dim", "storage_mb", "time_ms", "peak_mem_mb"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.dim.to_string(),
            format!("{:.3}", r.storage_mb()),
            format!("{:.3}", r.time_ms),
            format!("{:.3}", r.peak_mem_mb()),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("ascii")
}
