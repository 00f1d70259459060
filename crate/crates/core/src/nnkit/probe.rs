use std::sync::atomic::{AtomicU64, Ordering};

/// Call counters threaded through inference paths as `Option<&EvalCounters>`
/// so benchmarks can verify how much work each path does.
#[derive(Debug, Default)]
pub struct EvalCounters {
    pub encodes: AtomicU64,
    pub trunk_evals: AtomicU64,
    pub branch_evals: AtomicU64,
    pub head_evals: AtomicU64,
}

impl EvalCounters {
    pub fn bump(counter: Option<&AtomicU64>, n: u64) {
        if let Some(c) = counter {
            c.fetch_add(n, Ordering::Relaxed);
        }
    }

    pub fn get(counter: &AtomicU64) -> u64 {
        counter.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        for c in [&self.encodes, &self.trunk_evals, &self.branch_evals, &self.head_evals] {
            c.store(0, Ordering::Relaxed);
        }
    }
}
