//! Multiply-accumulate accounting.
//!
//! Counts are kept per thread and attributed to the thread that issued the
//! operation, even when the kernel itself fans out to worker threads. A
//! measured region therefore only sees the MACs it issued, regardless of what
//! other threads in the process are doing.

use std::cell::Cell;

/// Bucket a MAC is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MacKind {
    /// The two attention products, `Q·Kᵀ` and `softmax(·)·V`.
    Attention,
    /// Similarity scoring inside bipartite matching.
    Similarity,
    /// Everything else: projections, convolutions, FFN.
    Other,
}

/// Snapshot of the multiply-accumulate counts on the current thread.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MacCounter {
    pub attention: u64,
    pub similarity: u64,
    pub other: u64,
}

impl MacCounter {
    /// Total across all buckets.
    pub fn macs(&self) -> u64 {
        self.attention + self.similarity + self.other
    }

    pub fn get(&self, kind: MacKind) -> u64 {
        match kind {
            MacKind::Attention => self.attention,
            MacKind::Similarity => self.similarity,
            MacKind::Other => self.other,
        }
    }

    /// Counts accumulated between `earlier` and `self`.
    pub fn since(&self, earlier: &MacCounter) -> MacCounter {
        MacCounter {
            attention: self.attention - earlier.attention,
            similarity: self.similarity - earlier.similarity,
            other: self.other - earlier.other,
        }
    }

    /// Reads the current thread's counter.
    pub fn snapshot() -> MacCounter {
        COUNTS.with(Cell::get)
    }

    /// Zeroes the current thread's counter.
    pub fn reset() {
        COUNTS.with(|c| c.set(MacCounter::default()));
    }

    /// Runs `f` and returns its result together with the MACs it issued.
    pub fn measure<R>(f: impl FnOnce() -> R) -> (R, MacCounter) {
        let before = Self::snapshot();
        let out = f();
        (out, Self::snapshot().since(&before))
    }
}

thread_local! {
    static COUNTS: Cell<MacCounter> = Cell::new(MacCounter::default());
    static KIND: Cell<MacKind> = const { Cell::new(MacKind::Other) };
}

/// Adds `n` MACs to the bucket currently selected on this thread.
pub(crate) fn record(n: u64) {
    let kind = KIND.with(Cell::get);
    record_as(kind, n);
}

pub(crate) fn record_as(kind: MacKind, n: u64) {
    COUNTS.with(|c| {
        let mut v = c.get();
        match kind {
            MacKind::Attention => v.attention += n,
            MacKind::Similarity => v.similarity += n,
            MacKind::Other => v.other += n,
        }
        c.set(v);
    });
}

/// Attributes every MAC issued by `f` on this thread to `kind`.
pub fn with_mac_kind<R>(kind: MacKind, f: impl FnOnce() -> R) -> R {
    let prev = KIND.with(|k| k.replace(kind));
    let out = f();
    KIND.with(|k| k.set(prev));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets_are_separate() {
        let (_, m) = MacCounter::measure(|| {
            record(5);
            with_mac_kind(MacKind::Similarity, || record(7));
            record_as(MacKind::Attention, 11);
        });
        assert_eq!(m.other, 5);
        assert_eq!(m.similarity, 7);
        assert_eq!(m.attention, 11);
        assert_eq!(m.macs(), 23);
    }

    #[test]
    fn kind_scope_restores_previous() {
        with_mac_kind(MacKind::Attention, || {
            with_mac_kind(MacKind::Similarity, || {});
            let (_, m) = MacCounter::measure(|| record(3));
            assert_eq!(m.attention, 3);
        });
    }

    #[test]
    fn reset_zeroes() {
        record(10);
        MacCounter::reset();
        assert_eq!(MacCounter::snapshot().macs(), 0);
    }
}
