//! Per-key version lists.
//!
//! Versions are kept sorted by timestamp; the successor of a version (its
//! `vnext`) is simply the next entry. A version with no value records a delete,
//! or is the synthetic 0th version created for a key nobody has written yet.
//!
//! None of these types lock internally: callers hold the owning node's lock.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};

use crate::{Timestamp, Value};

/// Timestamp of the synthetic initial version.
pub const ZERO_TS: Timestamp = 0;

/// How many versions a key keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Keep every version.
    Unbounded,
    /// Keep every version, but the least live transaction prunes what nobody
    /// can read any more when it writes a key.
    Gc,
    /// Keep at most `K` versions, evicting the oldest.
    KBounded(usize),
}

impl Policy {
    pub fn label(&self) -> String {
        match self {
            Policy::Unbounded => "unbounded".to_string(),
            Policy::Gc => "gc".to_string(),
            Policy::KBounded(k) => format!("k:{k}"),
        }
    }
}

impl FromStr for Policy {
    type Err = String;

    /// Parses `unbounded`, `gc` or `k:<K>` with K >= 1.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unbounded" => Ok(Policy::Unbounded),
            "gc" => Ok(Policy::Gc),
            _ => {
                let k = s
                    .strip_prefix("k:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k > 0)
                    .ok_or_else(|| format!("bad policy {s:?}: expected unbounded, gc or k:<K>"))?;
                Ok(Policy::KBounded(k))
            }
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Version {
    ts: Timestamp,
    val: Option<Value>,
    readers: BTreeSet<Timestamp>,
}

impl Version {
    fn new(ts: Timestamp, val: Option<Value>) -> Self {
        Version {
            ts,
            val,
            readers: BTreeSet::new(),
        }
    }

    pub fn ts(&self) -> Timestamp {
        self.ts
    }

    pub fn val(&self) -> Option<Value> {
        self.val
    }

    pub fn readers(&self) -> impl Iterator<Item = Timestamp> + '_ {
        self.readers.iter().copied()
    }

    pub fn max_reader(&self) -> Option<Timestamp> {
        self.readers.last().copied()
    }

    /// Records that transaction `reader` returned this version.
    pub fn register_reader(&mut self, reader: Timestamp) {
        assert!(
            reader > self.ts,
            "reader {reader} must be newer than version {}",
            self.ts
        );
        self.readers.insert(reader);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VersionList {
    versions: Vec<Version>,
}

impl VersionList {
    pub fn new() -> Self {
        VersionList::default()
    }

    pub fn len(&self) -> usize {
        self.versions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.versions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Version> + '_ {
        self.versions.iter()
    }

    pub fn timestamps(&self) -> Vec<Timestamp> {
        self.versions.iter().map(|v| v.ts).collect()
    }

    pub fn latest(&self) -> Option<&Version> {
        self.versions.last()
    }

    pub fn get(&self, ts: Timestamp) -> Option<&Version> {
        self.position(ts).ok().map(|i| &self.versions[i])
    }

    /// The version following `ts` in timestamp order.
    pub fn next_of(&self, ts: Timestamp) -> Option<&Version> {
        let i = self.position(ts).ok()?;
        self.versions.get(i + 1)
    }

    fn position(&self, ts: Timestamp) -> Result<usize, usize> {
        self.versions.binary_search_by_key(&ts, |v| v.ts)
    }

    fn lts_index(&self, ts: Timestamp) -> Option<usize> {
        // partition point = number of versions with ts < `ts`
        self.versions.partition_point(|v| v.ts < ts).checked_sub(1)
    }

    /// The version with the largest timestamp strictly below `ts`.
    pub fn find_lts(&self, ts: Timestamp) -> Option<&Version> {
        self.lts_index(ts).map(|i| &self.versions[i])
    }

    pub fn find_lts_mut(&mut self, ts: Timestamp) -> Option<&mut Version> {
        self.lts_index(ts).map(move |i| &mut self.versions[i])
    }

    /// Commit-time check for a writer with timestamp `ts`: false when a newer
    /// transaction already returned the version this write would supersede.
    ///
    /// A non-empty list without any version below `ts` (possible only after
    /// K-bounded eviction) also fails: the superseded version and its readers
    /// are gone, so the write cannot be placed safely.
    pub fn check_versions(&self, ts: Timestamp) -> bool {
        match self.find_lts(ts) {
            Some(v) => v.max_reader().map_or(true, |r| r <= ts),
            None => self.is_empty(),
        }
    }

    /// Inserts a fresh version in timestamp order.
    pub fn add_version(&mut self, ts: Timestamp, val: Option<Value>) -> &Version {
        let at = match self.position(ts) {
            Ok(_) => panic!("version {ts} already exists"),
            Err(at) => at,
        };
        self.versions.insert(at, Version::new(ts, val));
        &self.versions[at]
    }

    /// Creates the 0th version of a key first seen by `reader`.
    pub fn create_zero_version(&mut self, reader: Timestamp) -> &Version {
        assert!(self.is_empty(), "0th version requires an empty version list");
        let mut zero = Version::new(ZERO_TS, None);
        zero.register_reader(reader);
        self.versions.push(zero);
        &self.versions[0]
    }

    /// Drops the oldest versions until at most `k` remain. Returns how many
    /// were dropped.
    pub fn k_evict(&mut self, k: usize) -> usize {
        assert!(k > 0, "K must be positive");
        let excess = self.versions.len().saturating_sub(k);
        self.versions.drain(..excess);
        excess
    }

    /// Removes every version below `horizon` except the newest of them, which
    /// is what a transaction at `horizon` would read. Returns how many were
    /// removed.
    pub fn prune_below(&mut self, horizon: Timestamp) -> usize {
        match self.lts_index(horizon) {
            Some(keep) => {
                self.versions.drain(..keep);
                keep
            }
            None => 0,
        }
    }

    /// Checks strict timestamp order and the reader invariant.
    pub fn is_well_formed(&self) -> bool {
        self.versions.windows(2).all(|w| w[0].ts < w[1].ts)
            && self
                .versions
                .iter()
                .all(|v| v.readers.iter().all(|&r| r > v.ts))
    }
}

/// Global tally of live versions: +1 on create, -1 on eviction or collection.
#[derive(Debug, Default)]
pub struct VersionCounter {
    live: AtomicI64,
    peak: AtomicI64,
    created: AtomicU64,
}

impl VersionCounter {
    pub fn new() -> Self {
        VersionCounter::default()
    }

    pub fn created(&self, n: usize) {
        let n = n as i64;
        let now = self.live.fetch_add(n, Ordering::AcqRel) + n;
        self.peak.fetch_max(now, Ordering::AcqRel);
        self.created.fetch_add(n as u64, Ordering::Relaxed);
    }

    pub fn removed(&self, n: usize) {
        if n > 0 {
            self.live.fetch_sub(n as i64, Ordering::AcqRel);
        }
    }

    pub fn live(&self) -> i64 {
        self.live.load(Ordering::Acquire)
    }

    pub fn peak(&self) -> i64 {
        self.peak.load(Ordering::Acquire)
    }

    pub fn total_created(&self) -> u64 {
        self.created.load(Ordering::Relaxed)
    }
}
