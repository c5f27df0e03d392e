use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::config::MIN_INTERVAL;
use super::PipelineError;

/// Overlap guard for periodic jobs: a tick that arrives while the previous
/// run is still active is skipped and counted.
#[derive(Default)]
pub struct Scheduler {
    running: AtomicBool,
    started: AtomicU64,
    skipped: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tick {
    Started,
    Skipped,
}

struct Running<'a>(&'a AtomicBool);

impl Drop for Running<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

impl Scheduler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_running(&self) -> bool {
        self.running.load(Ordering::Acquire)
    }

    pub fn started(&self) -> u64 {
        self.started.load(Ordering::Relaxed)
    }

    pub fn skipped(&self) -> u64 {
        self.skipped.load(Ordering::Relaxed)
    }

    /// Run `job` on this thread unless a run is already active.
    pub fn tick(&self, job: impl FnOnce()) -> Tick {
        if self
            .running
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            self.skipped.fetch_add(1, Ordering::Relaxed);
            tracing::warn!(skipped = self.skipped(), "previous pipeline run still active, tick skipped");
            return Tick::Skipped;
        }
        let _guard = Running(&self.running);
        self.started.fetch_add(1, Ordering::Relaxed);
        job();
        Tick::Started
    }

    /// Like [`tick`](Self::tick) but the job runs on its own thread, so the
    /// caller's clock keeps ticking while it works.
    pub fn tick_detached(self: &Arc<Self>, job: impl FnOnce() + Send + 'static) -> Option<JoinHandle<()>> {
        if self
            .running
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            self.skipped.fetch_add(1, Ordering::Relaxed);
            tracing::warn!(skipped = self.skipped(), "previous pipeline run still active, tick skipped");
            return None;
        }
        self.started.fetch_add(1, Ordering::Relaxed);
        let me = Arc::clone(self);
        Some(std::thread::spawn(move || {
            let _guard = Running(&me.running);
            job();
        }))
    }
}

/// Invoke `job` every `interval` until `stop` is set. The first run starts
/// immediately. Jobs run detached; overlapping ticks are skipped.
pub fn run_every(
    interval: Duration,
    stop: Arc<AtomicBool>,
    job: impl Fn() + Send + Sync + 'static,
) -> Result<Arc<Scheduler>, PipelineError> {
    if interval < MIN_INTERVAL {
        return Err(PipelineError::Config(format!(
            "schedule interval must be at least 1 minute, got {}s",
            interval.as_secs()
        )));
    }
    let sched = Arc::new(Scheduler::new());
    let job = Arc::new(job);
    let poll = Duration::from_millis(200);
    loop {
        let j = Arc::clone(&job);
        sched.tick_detached(move || j());
        let mut waited = Duration::ZERO;
        while waited < interval {
            if stop.load(Ordering::Acquire) {
                return Ok(sched);
            }
            std::thread::sleep(poll);
            waited += poll;
        }
    }
}
