//! Transactions over the hash table.
//!
//! `insert` only touches the transaction's local log. `lookup` and `delete`
//! read the newest version older than the caller's timestamp and register
//! the caller as a reader of it; they never abort unless K-bounded eviction
//! removed that version. `try_commit` locks the windows of every key the
//! transaction updates, rejects the commit when a younger transaction already
//! read a version this one would overwrite, and otherwise installs one new
//! version per updated key.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::gc::{gc_on_version_create, LiveList};
use crate::history::{Event, History, Method, Recorder, Status};
use crate::list::{is_user_key, InsertMode, Node, RbList, SearchWindow};
use crate::version::{Policy, VersionCounter, VersionList, ZERO_TS};
use crate::{Key, Timestamp, Value};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum TxnError {
    #[error("transaction aborted")]
    Aborted,
    #[error("transaction {0} is no longer live")]
    NotLive(Timestamp),
    #[error("key {0} is reserved for list sentinels")]
    ReservedKey(Key),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxnStatus {
    Live,
    Committed,
    Aborted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Opn {
    Insert,
    Delete,
    Lookup,
}

/// Local-log entry for one key: the last operation on it and the value the
/// transaction now sees for it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LogRecord {
    pub key: Key,
    pub opn: Opn,
    pub value: Option<Value>,
    pub status: Status,
}

#[derive(Clone, Debug)]
pub struct StmConfig {
    pub buckets: usize,
    pub policy: Policy,
    /// Record a history of at most this many events.
    pub history_cap: Option<usize>,
    /// After every collection, check that each live transaction can still
    /// find its version on the collected key.
    pub audit_gc: bool,
}

impl Default for StmConfig {
    fn default() -> Self {
        StmConfig {
            buckets: 5,
            policy: Policy::Unbounded,
            history_cap: None,
            audit_gc: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GcStats {
    pub collections: u64,
    pub removed: u64,
    /// Collections after which some live transaction had no version to read.
    pub violations: u64,
}

#[derive(Debug, Default)]
struct GcCounters {
    collections: AtomicU64,
    removed: AtomicU64,
    violations: AtomicU64,
}

pub struct Stm {
    buckets: Vec<RbList>,
    counter: AtomicU64,
    policy: Policy,
    versions: VersionCounter,
    live: LiveList,
    recorder: Option<Recorder>,
    audit_gc: bool,
    gc: GcCounters,
}

impl Stm {
    pub fn new(config: StmConfig) -> Self {
        assert!(config.buckets > 0, "need at least one bucket");
        if let Policy::KBounded(k) = config.policy {
            assert!(k > 0, "K must be positive");
        }
        Stm {
            buckets: (0..config.buckets).map(|_| RbList::new()).collect(),
            counter: AtomicU64::new(1),
            policy: config.policy,
            versions: VersionCounter::new(),
            live: LiveList::new(),
            recorder: config.history_cap.map(Recorder::new),
            audit_gc: config.audit_gc,
            gc: GcCounters::default(),
        }
    }

    pub fn with_buckets(buckets: usize) -> Self {
        Stm::new(StmConfig {
            buckets,
            ..StmConfig::default()
        })
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn bucket_index(&self, key: Key) -> usize {
        (key % self.buckets.len() as u64) as usize
    }

    pub fn bucket(&self, key: Key) -> &RbList {
        &self.buckets[self.bucket_index(key)]
    }

    pub fn begin(&self) -> Txn<'_> {
        let assign = || match self.policy {
            Policy::Gc => self.live.register_next(&self.counter),
            _ => self.counter.fetch_add(1, Ordering::AcqRel),
        };
        let ts = match &self.recorder {
            Some(rec) => rec.record_begin(assign),
            None => assign(),
        };
        Txn {
            stm: self,
            ts,
            status: TxnStatus::Live,
            log: BTreeMap::new(),
        }
    }

    fn record(&self, event: Event) {
        if let Some(rec) = &self.recorder {
            rec.record(event);
        }
    }

    /// The recorded history so far, when recording is enabled.
    pub fn history(&self) -> Option<History> {
        self.recorder.as_ref().map(Recorder::snapshot)
    }

    pub fn history_truncated(&self) -> bool {
        self.recorder.as_ref().is_some_and(Recorder::truncated)
    }

    pub fn version_counter(&self) -> &VersionCounter {
        &self.versions
    }

    pub fn live_list(&self) -> &LiveList {
        &self.live
    }

    pub fn gc_stats(&self) -> GcStats {
        GcStats {
            collections: self.gc.collections.load(Ordering::Relaxed),
            removed: self.gc.removed.load(Ordering::Relaxed),
            violations: self.gc.violations.load(Ordering::Relaxed),
        }
    }

    fn write_version(&self, node: &Node, ts: Timestamp, val: Option<Value>) {
        let mut versions = node.versions();
        versions.add_version(ts, val);
        self.versions.created(1);
        self.after_write(&mut versions, ts);
    }

    /// Applies the version policy right after `writer` added a version.
    fn after_write(&self, versions: &mut VersionList, writer: Timestamp) {
        match self.policy {
            Policy::Unbounded => {}
            Policy::KBounded(k) => self.versions.removed(versions.k_evict(k)),
            Policy::Gc => {
                let removed = gc_on_version_create(versions, writer, &self.live);
                if removed == 0 {
                    return;
                }
                self.versions.removed(removed);
                self.gc.collections.fetch_add(1, Ordering::Relaxed);
                self.gc.removed.fetch_add(removed as u64, Ordering::Relaxed);
                if self.audit_gc && self.live.snapshot().iter().any(|&t| versions.find_lts(t).is_none()) {
                    self.gc.violations.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }

    fn user_nodes(&self) -> impl Iterator<Item = &Node> + '_ {
        self.buckets.iter().flat_map(RbList::nodes)
    }

    pub fn node_count(&self) -> usize {
        self.user_nodes().count()
    }

    /// Nodes whose lock is currently held. Zero whenever no method is running.
    pub fn locked_node_count(&self) -> usize {
        self.buckets
            .iter()
            .flat_map(RbList::red_nodes)
            .filter(|n| n.lock().is_locked())
            .count()
    }

    pub fn max_version_list_len(&self) -> usize {
        self.user_nodes().map(|n| n.versions().len()).max().unwrap_or(0)
    }

    /// Versions currently stored across all nodes.
    pub fn stored_versions(&self) -> usize {
        self.user_nodes().map(|n| n.versions().len()).sum()
    }

    /// Checks list structure, key placement and version-list order. Only
    /// meaningful while no transaction is inside a method.
    pub fn audit(&self) -> Result<(), String> {
        for (b, list) in self.buckets.iter().enumerate() {
            list.audit().map_err(|e| format!("bucket {b}: {e}"))?;
            for node in list.nodes() {
                if self.bucket_index(node.key()) != b {
                    return Err(format!("key {} stored in bucket {b}", node.key()));
                }
                let versions = node.versions();
                if versions.is_empty() || !versions.is_well_formed() {
                    return Err(format!("bad version list on key {}", node.key()));
                }
            }
        }
        Ok(())
    }

    /// Live transactions that cannot find a version to read on some key.
    pub fn gc_visibility_violations(&self) -> usize {
        let live = self.live.snapshot();
        self.user_nodes()
            .map(|n| {
                let versions = n.versions();
                live.iter().filter(|&&t| versions.find_lts(t).is_none()).count()
            })
            .sum()
    }

    /// Latest committed value of every present key.
    pub fn committed_values(&self) -> BTreeMap<Key, Value> {
        self.user_nodes()
            .filter_map(|n| {
                let versions = n.versions();
                versions.latest().and_then(|v| v.val()).map(|val| (n.key(), val))
            })
            .collect()
    }
}

/// A transaction bound to its table. Dropping a live transaction aborts it.
pub struct Txn<'a> {
    stm: &'a Stm,
    ts: Timestamp,
    status: TxnStatus,
    log: BTreeMap<Key, LogRecord>,
}

struct Update {
    bucket: usize,
    key: Key,
    opn: Opn,
    value: Option<Value>,
}

impl<'a> Txn<'a> {
    pub fn ts(&self) -> Timestamp {
        self.ts
    }

    pub fn status(&self) -> TxnStatus {
        self.status
    }

    pub fn log(&self) -> impl Iterator<Item = &LogRecord> + '_ {
        self.log.values()
    }

    fn check(&self, key: Option<Key>) -> Result<(), TxnError> {
        if self.status != TxnStatus::Live {
            return Err(TxnError::NotLive(self.ts));
        }
        match key {
            Some(k) if !is_user_key(k) => Err(TxnError::ReservedKey(k)),
            _ => Ok(()),
        }
    }

    fn finish(&mut self, status: TxnStatus) {
        self.status = status;
        if self.stm.policy == Policy::Gc {
            self.stm.live.deregister(self.ts);
        }
    }

    /// Buffers an insert; it becomes visible when the transaction commits.
    pub fn insert(&mut self, key: Key, value: Value) -> Result<(), TxnError> {
        self.check(Some(key))?;
        self.log.insert(
            key,
            LogRecord {
                key,
                opn: Opn::Insert,
                value: Some(value),
                status: Status::Ok,
            },
        );
        self.stm.record(Event::insert(self.ts, key, value));
        Ok(())
    }

    /// The value this transaction sees for `key`, `None` when absent.
    pub fn lookup(&mut self, key: Key) -> Result<Option<Value>, TxnError> {
        self.rv_method(key, Opn::Lookup)
    }

    /// Deletes `key` at commit and returns the value it had.
    pub fn delete(&mut self, key: Key) -> Result<Option<Value>, TxnError> {
        self.rv_method(key, Opn::Delete)
    }

    fn rv_method(&mut self, key: Key, opn: Opn) -> Result<Option<Value>, TxnError> {
        self.check(Some(key))?;
        let (stm, ts) = (self.stm, self.ts);
        let method = if opn == Opn::Delete { Method::Delete } else { Method::Lookup };
        let event = |value| match opn {
            Opn::Delete => Event::delete(ts, key, value, None),
            _ => Event::lookup(ts, key, value, None),
        };

        if let Some(rec) = self.log.get_mut(&key) {
            let value = match rec.opn {
                Opn::Delete => None,
                Opn::Insert | Opn::Lookup => rec.value,
            };
            if opn == Opn::Delete {
                rec.opn = Opn::Delete;
                rec.value = None;
                rec.status = Status::of_value(value);
            }
            stm.record(event(value));
            return Ok(value);
        }

        let list = stm.bucket(key);
        let read = loop {
            let window = list.search(key);
            RbList::lock_window(&window, ts);
            if !RbList::rv_validate(&window) {
                RbList::unlock_window(&window, ts);
                continue;
            }
            let mut created = None;
            let read = match window.node_for(key) {
                Some(node) => {
                    let mut versions = node.versions();
                    versions.find_lts_mut(ts).map(|v| {
                        v.register_reader(ts);
                        (v.val(), v.ts())
                    })
                }
                None => {
                    let mut versions = VersionList::new();
                    versions.create_zero_version(ts);
                    stm.versions.created(1);
                    created = Some(list.insert_node(&window, key, InsertMode::RedOnly, ts, versions));
                    Some((None, ZERO_TS))
                }
            };
            stm.record(match read {
                Some((value, version)) => Event {
                    version_read: Some(version),
                    ..event(value)
                },
                None => Event::aborted_method(ts, method, key),
            });
            if let Some(node) = created {
                node.lock().unlock(ts);
            }
            RbList::unlock_window(&window, ts);
            break read;
        };

        let Some((value, _)) = read else {
            self.finish(TxnStatus::Aborted);
            return Err(TxnError::Aborted);
        };
        self.log.insert(
            key,
            LogRecord {
                key,
                opn,
                value: if opn == Opn::Delete { None } else { value },
                status: Status::of_value(value),
            },
        );
        Ok(value)
    }

    /// Attempts to commit. On `Err(Aborted)` none of the updates took effect.
    pub fn try_commit(&mut self) -> Result<(), TxnError> {
        self.check(None)?;
        let (stm, ts) = (self.stm, self.ts);
        let mut updates: Vec<Update> = self
            .log
            .values()
            .filter(|r| r.opn != Opn::Lookup)
            .map(|r| Update {
                bucket: stm.bucket_index(r.key),
                key: r.key,
                opn: r.opn,
                value: r.value,
            })
            .collect();
        if updates.is_empty() {
            stm.record(Event::commit(ts));
            self.finish(TxnStatus::Committed);
            return Ok(());
        }
        updates.sort_by_key(|u| (u.bucket, u.key));

        // Every node touched by any window, keyed by (bucket, key). Within a
        // bucket a key names at most one node, so this is a total lock order
        // shared with single-window methods.
        let mut held: BTreeMap<(usize, Key), &Node> = BTreeMap::new();
        let windows: Vec<SearchWindow<'_>> = loop {
            let windows: Vec<SearchWindow<'_>> = updates
                .iter()
                .map(|u| stm.buckets[u.bucket].search(u.key))
                .collect();
            for (u, w) in updates.iter().zip(&windows) {
                for node in w.nodes() {
                    held.entry((u.bucket, node.key())).or_insert(node);
                }
            }
            for node in held.values() {
                node.lock().lock(ts);
            }
            if windows.iter().all(RbList::rv_validate) {
                break windows;
            }
            release(&held, ts);
            held.clear();
        };

        for (u, w) in updates.iter().zip(&windows) {
            let ok = w.node_for(u.key).map_or(true, |n| n.versions().check_versions(ts));
            if !ok {
                stm.record(Event::abort(ts));
                release(&held, ts);
                self.finish(TxnStatus::Aborted);
                return Err(TxnError::Aborted);
            }
        }

        let mut prev: Option<(usize, Opn, SearchWindow<'_>)> = None;
        for (u, &window) in updates.iter().zip(&windows) {
            let list = &stm.buckets[u.bucket];
            let mut w = window;
            if let Some((bucket, opn, prev_w)) = prev {
                if bucket == u.bucket {
                    intra_trans_validation(&mut w, opn, &prev_w);
                }
            }
            debug_assert!(RbList::rv_validate(&w), "window for {} not repaired: {w:?}", u.key);
            debug_assert!(w.nodes().iter().all(|n| n.lock().holder() == Some(ts)));

            match (u.opn, w.node_for(u.key)) {
                (Opn::Insert, None) | (Opn::Delete, None) => {
                    let mut versions = VersionList::new();
                    versions.add_version(ZERO_TS, None);
                    versions.add_version(ts, u.value);
                    stm.versions.created(2);
                    stm.after_write(&mut versions, ts);
                    let mode = if u.opn == Opn::Insert {
                        InsertMode::BlueAndRed
                    } else {
                        InsertMode::RedOnly
                    };
                    let node = list.insert_node(&w, u.key, mode, ts, versions);
                    held.insert((u.bucket, u.key), node);
                }
                (Opn::Insert, Some(node)) => {
                    if node.is_marked() {
                        list.insert_node(&w, u.key, InsertMode::RelinkBlue, ts, VersionList::new());
                    }
                    stm.write_version(node, ts, u.value);
                }
                (Opn::Delete, Some(node)) => {
                    stm.write_version(node, ts, None);
                    if !node.is_marked() {
                        RbList::unlink_blue(&w);
                    }
                }
                (Opn::Lookup, _) => unreachable!("lookups are not update records"),
            }
            prev = Some((u.bucket, u.opn, w));
        }

        stm.record(Event::commit(ts));
        release(&held, ts);
        self.finish(TxnStatus::Committed);
        Ok(())
    }
}

impl Drop for Txn<'_> {
    fn drop(&mut self) {
        if self.status == TxnStatus::Live {
            self.finish(TxnStatus::Aborted);
        }
    }
}

fn release(held: &BTreeMap<(usize, Key), &Node>, ts: Timestamp) {
    for node in held.values() {
        node.lock().unlock(ts);
    }
}

/// Repairs a window computed before earlier updates of the same commit
/// changed the list, using the window of the previous update in the same
/// bucket. Updates are applied in increasing key order, so the only stale
/// links are the ones that update just rewired.
fn intra_trans_validation<'a>(w: &mut SearchWindow<'a>, prev_opn: Opn, prev: &SearchWindow<'a>) {
    if w.bp.is_marked() || !w.bp.blue_is(w.bc) {
        w.bp = match prev_opn {
            Opn::Insert => prev.bp.blue_next().expect("blue predecessor has a successor"),
            _ => prev.bp,
        };
    }
    if !w.rp.red_is(w.rc) {
        w.rp = prev.rp.red_next().expect("red predecessor has a successor");
    }
}
