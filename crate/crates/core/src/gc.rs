//! Memory-management variants: the live-transaction list that drives version
//! garbage collection, and the collection rule itself.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;

use crate::version::VersionList;
use crate::Timestamp;

/// Timestamps of all live transactions.
#[derive(Debug, Default)]
pub struct LiveList {
    live: Mutex<BTreeSet<Timestamp>>,
}

impl LiveList {
    pub fn new() -> Self {
        LiveList::default()
    }

    /// Draws the next timestamp from `counter` and registers it in one step,
    /// so no transaction can hold a timestamp that is not yet visible here.
    pub fn register_next(&self, counter: &AtomicU64) -> Timestamp {
        let mut live = self.live.lock();
        let ts = counter.fetch_add(1, Ordering::AcqRel);
        live.insert(ts);
        ts
    }

    pub fn register(&self, ts: Timestamp) {
        let fresh = self.live.lock().insert(ts);
        assert!(fresh, "transaction {ts} registered twice");
    }

    pub fn deregister(&self, ts: Timestamp) {
        let present = self.live.lock().remove(&ts);
        assert!(present, "transaction {ts} is not live");
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        self.live.lock().contains(&ts)
    }

    /// Least live timestamp.
    pub fn min(&self) -> Option<Timestamp> {
        self.live.lock().first().copied()
    }

    pub fn snapshot(&self) -> Vec<Timestamp> {
        self.live.lock().iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.live.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.lock().is_empty()
    }
}

/// Collection step run right after `creator` added its version to `versions`.
///
/// Only the least live transaction collects. It drops every version older
/// than itself except the newest of those, which remains the version any live
/// or future transaction would read below the new one. Returns how many
/// versions were removed.
pub fn gc_on_version_create(versions: &mut VersionList, creator: Timestamp, live: &LiveList) -> usize {
    match live.min() {
        Some(least) if least == creator => versions.prune_below(least),
        _ => 0,
    }
}
