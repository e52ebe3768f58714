use std::sync::atomic::{AtomicU64, Ordering};

use crate::Value;

/// Source of fresh labeled-null ids, scoped to one materialization run.
///
/// Ids are strictly increasing within a counter. Two independent counters may
/// issue colliding ids; never mix nulls from different materializations.
#[derive(Debug, Default)]
pub struct NullCounter {
    next: AtomicU64,
}

impl NullCounter {
    pub fn new() -> Self {
        NullCounter {
            next: AtomicU64::new(0),
        }
    }

    pub fn starting_at(start: u64) -> Self {
        NullCounter {
            next: AtomicU64::new(start),
        }
    }

    /// Issue a fresh labeled null.
    pub fn fresh(&self) -> Value {
        Value::LabeledNull(self.next.fetch_add(1, Ordering::SeqCst))
    }

    /// Number of ids issued so far (when started at 0).
    pub fn issued(&self) -> u64 {
        self.next.load(Ordering::SeqCst)
    }
}
