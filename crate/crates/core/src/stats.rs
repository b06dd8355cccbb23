//! Operation counters for the dense kernels.
//!
//! Counters are thread-local: each thread measures only the work it executed,
//! so concurrent inference calls never perturb each other's numbers.

use std::cell::Cell;

/// Snapshot of the per-thread operation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ComputeStats {
    /// Scalar multiply-accumulate operations performed by matrix kernels.
    pub mul_add_count: u64,
    /// Bytes of operand data read by matrix kernels.
    pub bytes_touched: u64,
}

impl ComputeStats {
    pub fn since(&self, earlier: &ComputeStats) -> ComputeStats {
        ComputeStats {
            mul_add_count: self.mul_add_count - earlier.mul_add_count,
            bytes_touched: self.bytes_touched - earlier.bytes_touched,
        }
    }
}

thread_local! {
    static COUNTERS: Cell<ComputeStats> = const { Cell::new(ComputeStats { mul_add_count: 0, bytes_touched: 0 }) };
}

/// Zero this thread's counters.
pub fn reset() {
    COUNTERS.with(|c| c.set(ComputeStats::default()));
}

/// Current value of this thread's counters.
pub fn snapshot() -> ComputeStats {
    COUNTERS.with(|c| c.get())
}

/// Run `f` and return its result together with the work it performed.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, ComputeStats) {
    let before = snapshot();
    let out = f();
    (out, snapshot().since(&before))
}

pub(crate) fn record(mul_adds: u64, bytes: u64) {
    COUNTERS.with(|c| {
        let mut s = c.get();
        s.mul_add_count += mul_adds;
        s.bytes_touched += bytes;
        c.set(s);
    });
}
