//! Opacity checking through the opacity graph.
//!
//! Vertices are transactions plus an implicit initial transaction [`T0`] that
//! wrote null to every key before anything else happened. Edges:
//!
//! * real-time: `a -> b` when `a` finished before `b` began;
//! * reads-from: writer -> reader for every value read from a version;
//! * multi-version: for a reader `j` of writer `w`'s version of `x` and any
//!   other committed writer `k` of `x`, `j -> k` when `w` precedes `k` in the
//!   version order of `x`, and `k -> w` otherwise.
//!
//! A history is opaque exactly when some version order yields an acyclic
//! graph; a topological order of it is then a legal serial witness.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;

use thiserror::Error;

use super::{Event, History, Method, Status};
use crate::{Key, Timestamp, Value};

/// The implicit transaction that initialized every key to null.
pub const T0: Timestamp = 0;

/// Upper bound on alternative version orders tried once the timestamp order
/// gives a cyclic graph.
const MAX_ORDERS: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Violation {
    #[error("malformed history at seq {seq} (txn {txn}): {reason}")]
    Malformed { txn: Timestamp, seq: u64, reason: String },
    #[error("txn {reader} read key {key} from txn {writer}, which committed no write to it (seq {seq})")]
    UnknownVersion { reader: Timestamp, key: Key, writer: Timestamp, seq: u64 },
    #[error("txn {reader} read key {key} from txn {writer} before it committed (seq {seq})")]
    ReadUncommitted { reader: Timestamp, key: Key, writer: Timestamp, seq: u64 },
    #[error("txn {reader} read {returned:?} for key {key} but txn {writer} wrote {expected:?} (seq {seq})")]
    ValueMismatch {
        reader: Timestamp,
        key: Key,
        writer: Timestamp,
        seq: u64,
        expected: Option<Value>,
        returned: Option<Value>,
    },
    #[error("txn {txn} read {returned:?} for key {key} but its own log holds {expected:?} (seq {seq})")]
    LocalRead { txn: Timestamp, key: Key, seq: u64, expected: Option<Value>, returned: Option<Value> },
    #[error("txn {txn} read key {key} without naming a version (seq {seq})")]
    UnversionedRead { txn: Timestamp, key: Key, seq: u64 },
    #[error("serial witness is not legal")]
    IllegalWitness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Committed,
    /// Aborted, or still live and completed as aborted.
    Aborted,
}

#[derive(Clone, Debug)]
struct TxnSummary {
    first: u64,
    last: u64,
    outcome: Outcome,
    commit_seq: Option<u64>,
    events: Vec<Event>,
    /// Final effect per key: `Some` for an insert, `None` for a delete.
    writes: BTreeMap<Key, Option<Value>>,
}

#[derive(Clone, Copy, Debug)]
struct SharedRead {
    reader: Timestamp,
    key: Key,
    writer: Timestamp,
}

#[derive(Debug)]
struct Summary {
    txns: BTreeMap<Timestamp, TxnSummary>,
    reads: Vec<SharedRead>,
}

impl Summary {
    fn committed_writers(&self) -> BTreeMap<Key, Vec<Timestamp>> {
        let mut writers: BTreeMap<Key, Vec<Timestamp>> = BTreeMap::new();
        for (&id, t) in &self.txns {
            if t.outcome == Outcome::Committed {
                for &key in t.writes.keys() {
                    writers.entry(key).or_default().push(id);
                }
            }
        }
        writers
    }
}

fn malformed(e: &Event, reason: &str) -> Violation {
    Violation::Malformed {
        txn: e.txn,
        seq: e.seq,
        reason: reason.to_string(),
    }
}

enum ReadSource {
    /// Answered by the transaction's own earlier operations on the key.
    Own(Option<Value>),
    /// Read from the named committed version.
    Version(Timestamp),
    /// Read from shared state without naming a version.
    Unnamed,
}

/// Where a lookup or delete got its value. After the transaction wrote the
/// key it must see its own write. Otherwise a named version wins, so
/// repeated reads of one key may each name a version (as in a read/write
/// history); an unnamed read falls back to the transaction's earlier read.
fn read_source(
    writes: &BTreeMap<Key, Option<Value>>,
    local: &BTreeMap<Key, Option<Value>>,
    key: Key,
    version: Option<Timestamp>,
) -> ReadSource {
    match (writes.get(&key), version, local.get(&key)) {
        (Some(&own), _, _) => ReadSource::Own(own),
        (None, Some(w), _) => ReadSource::Version(w),
        (None, None, Some(&seen)) => ReadSource::Own(seen),
        (None, None, None) => ReadSource::Unnamed,
    }
}

/// Groups events by transaction and checks each event's shape. Reads from
/// shared memory must name their version unless `value_reads` is set, in
/// which case unnamed ones are left for a value-based check.
fn summarize(history: &History, value_reads: bool) -> Result<Summary, Violation> {
    let mut txns: BTreeMap<Timestamp, TxnSummary> = BTreeMap::new();
    for e in history.events() {
        if e.txn == T0 {
            return Err(malformed(e, "transaction id 0 is reserved"));
        }
        let shape_ok = match e.method {
            Method::Begin | Method::TryC => e.key.is_none() && e.value.is_none() && e.version_read.is_none(),
            Method::InsertEffect => e.key.is_some() && e.value.is_some() && e.status == Status::Ok,
            Method::Lookup | Method::Delete => {
                e.key.is_some()
                    && match e.status {
                        Status::Ok => e.value.is_some(),
                        Status::Fail => e.value.is_none(),
                        Status::Abort => e.value.is_none() && e.version_read.is_none(),
                        Status::Commit => false,
                    }
            }
        };
        let status_ok = match e.method {
            Method::Begin => e.status == Status::Ok,
            Method::TryC => matches!(e.status, Status::Commit | Status::Abort),
            _ => true,
        };
        if !shape_ok || !status_ok {
            return Err(malformed(e, "fields do not fit the method"));
        }
        match txns.get_mut(&e.txn) {
            None => {
                if e.method != Method::Begin {
                    return Err(malformed(e, "first event is not BEGIN"));
                }
                txns.insert(
                    e.txn,
                    TxnSummary {
                        first: e.seq,
                        last: e.seq,
                        outcome: Outcome::Aborted,
                        commit_seq: None,
                        events: vec![*e],
                        writes: BTreeMap::new(),
                    },
                );
            }
            Some(t) => {
                if t.events.last().is_some_and(Event::is_terminal) {
                    return Err(malformed(e, "event after the transaction ended"));
                }
                if e.method == Method::Begin {
                    return Err(malformed(e, "second BEGIN"));
                }
                t.last = e.seq;
                t.events.push(*e);
            }
        }
    }

    let mut reads = Vec::new();
    for (&id, t) in txns.iter_mut() {
        let mut local: BTreeMap<Key, Option<Value>> = BTreeMap::new();
        for e in &t.events {
            match (e.method, e.key) {
                (Method::InsertEffect, Some(key)) => {
                    local.insert(key, e.value);
                    t.writes.insert(key, e.value);
                }
                (Method::Lookup | Method::Delete, Some(key)) if e.status != Status::Abort => {
                    match read_source(&t.writes, &local, key, e.version_read) {
                        ReadSource::Own(expected) if expected != e.value => {
                            return Err(Violation::LocalRead {
                                txn: id,
                                key,
                                seq: e.seq,
                                expected,
                                returned: e.value,
                            });
                        }
                        ReadSource::Own(_) => {}
                        ReadSource::Version(writer) => reads.push((SharedRead { reader: id, key, writer }, e.seq, e.value)),
                        ReadSource::Unnamed if value_reads => {}
                        ReadSource::Unnamed => return Err(Violation::UnversionedRead { txn: id, key, seq: e.seq }),
                    }
                    if e.method == Method::Delete {
                        local.insert(key, None);
                        t.writes.insert(key, None);
                    } else {
                        local.insert(key, e.value);
                    }
                }
                (Method::TryC, _) if e.status == Status::Commit => {
                    t.outcome = Outcome::Committed;
                    t.commit_seq = Some(e.seq);
                }
                _ => {}
            }
        }
    }

    for &(read, seq, value) in &reads {
        let SharedRead { reader, key, writer } = read;
        let expected = if writer == T0 {
            None
        } else {
            let w = txns
                .get(&writer)
                .filter(|w| w.outcome == Outcome::Committed && w.writes.contains_key(&key))
                .ok_or(Violation::UnknownVersion { reader, key, writer, seq })?;
            if w.commit_seq.is_some_and(|c| c > seq) {
                return Err(Violation::ReadUncommitted { reader, key, writer, seq });
            }
            w.writes[&key]
        };
        if expected != value {
            return Err(Violation::ValueMismatch {
                reader,
                key,
                writer,
                seq,
                expected,
                returned: value,
            });
        }
    }

    Ok(Summary {
        txns,
        reads: reads.into_iter().map(|(r, _, _)| r).collect(),
    })
}

/// Per-key order of committed writers, [`T0`] first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VersionOrder {
    orders: BTreeMap<Key, Vec<Timestamp>>,
}

impl VersionOrder {
    pub fn new(orders: BTreeMap<Key, Vec<Timestamp>>) -> Self {
        VersionOrder { orders }
    }

    pub fn writers(&self, key: Key) -> &[Timestamp] {
        self.orders.get(&key).map_or(&[T0], Vec::as_slice)
    }

    pub fn keys(&self) -> impl Iterator<Item = Key> + '_ {
        self.orders.keys().copied()
    }

    fn position(&self, key: Key, writer: Timestamp) -> Option<usize> {
        self.writers(key).iter().position(|&w| w == writer)
    }
}

fn ts_order_of(summary: &Summary) -> VersionOrder {
    let mut orders: BTreeMap<Key, Vec<Timestamp>> = summary
        .reads
        .iter()
        .map(|r| (r.key, vec![T0]))
        .collect();
    for (key, writers) in summary.committed_writers() {
        let order = orders.entry(key).or_insert_with(|| vec![T0]);
        order.extend(writers);
    }
    VersionOrder { orders }
}

/// Version order that sorts the writers of each key by timestamp.
pub fn ts_version_order(history: &History) -> Result<VersionOrder, Violation> {
    summarize(history, false).map(|s| ts_order_of(&s))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    RealTime,
    ReadsFrom,
    MultiVersion,
}

impl EdgeKind {
    pub fn label(&self) -> &'static str {
        match self {
            EdgeKind::RealTime => "rt",
            EdgeKind::ReadsFrom => "rvf",
            EdgeKind::MultiVersion => "mv",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from: Timestamp,
    pub to: Timestamp,
    pub kind: EdgeKind,
}

impl std::fmt::Display for Edge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "T{} -{}-> T{}", self.from, self.kind.label(), self.to)
    }
}

#[derive(Clone, Debug, Default)]
pub struct OpacityGraph {
    vertices: BTreeSet<Timestamp>,
    edges: BTreeSet<Edge>,
}

/// A cycle `edges[0].from -> ... -> edges[n-1].to == edges[0].from`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cycle {
    pub edges: Vec<Edge>,
}

impl Cycle {
    pub fn vertices(&self) -> Vec<Timestamp> {
        self.edges.iter().map(|e| e.from).collect()
    }
}

impl std::fmt::Display for Cycle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.edges.iter().map(Edge::to_string).collect();
        f.write_str(&parts.join(", "))
    }
}

impl OpacityGraph {
    pub fn vertices(&self) -> impl Iterator<Item = Timestamp> + '_ {
        self.vertices.iter().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter()
    }

    pub fn has_edge(&self, from: Timestamp, to: Timestamp, kind: EdgeKind) -> bool {
        self.edges.contains(&Edge { from, to, kind })
    }

    fn add(&mut self, from: Timestamp, to: Timestamp, kind: EdgeKind) {
        if from != to {
            self.edges.insert(Edge { from, to, kind });
        }
    }

    fn successors(&self) -> BTreeMap<Timestamp, Vec<Edge>> {
        let mut succ: BTreeMap<Timestamp, Vec<Edge>> = self.vertices.iter().map(|&v| (v, Vec::new())).collect();
        for e in &self.edges {
            succ.entry(e.from).or_default().push(*e);
        }
        succ
    }

    /// Topological order preferring the smallest timestamp among ready
    /// vertices, or `None` when the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<Timestamp>> {
        let succ = self.successors();
        let mut indegree: BTreeMap<Timestamp, usize> = self.vertices.iter().map(|&v| (v, 0)).collect();
        // parallel edges of different kinds count once each; they are also
        // removed once each, so the counts stay consistent
        for e in &self.edges {
            *indegree.entry(e.to).or_default() += 1;
        }
        let mut ready: BinaryHeap<Reverse<Timestamp>> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&v, _)| Reverse(v))
            .collect();
        let mut order = Vec::with_capacity(indegree.len());
        while let Some(Reverse(v)) = ready.pop() {
            order.push(v);
            for e in &succ[&v] {
                let d = indegree.get_mut(&e.to).expect("edge target is a vertex");
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(e.to));
                }
            }
        }
        (order.len() == indegree.len()).then_some(order)
    }

    pub fn find_cycle(&self) -> Option<Cycle> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let succ = self.successors();
        let mut mark: BTreeMap<Timestamp, Mark> = succ.keys().map(|&v| (v, Mark::New)).collect();
        for &root in succ.keys() {
            if mark[&root] != Mark::New {
                continue;
            }
            // iterative DFS; `path` holds the edges into each active vertex
            let mut stack: Vec<(Timestamp, usize)> = vec![(root, 0)];
            let mut path: Vec<Edge> = Vec::new();
            mark.insert(root, Mark::Active);
            while let Some(&mut (v, ref mut next)) = stack.last_mut() {
                if let Some(&e) = succ[&v].get(*next) {
                    *next += 1;
                    match mark[&e.to] {
                        Mark::New => {
                            mark.insert(e.to, Mark::Active);
                            stack.push((e.to, 0));
                            path.push(e);
                        }
                        Mark::Active => {
                            let start = path.iter().position(|p| p.from == e.to).unwrap_or(path.len());
                            let mut edges = path[start..].to_vec();
                            edges.push(e);
                            return Some(Cycle { edges });
                        }
                        Mark::Done => {}
                    }
                } else {
                    mark.insert(v, Mark::Done);
                    stack.pop();
                    path.pop();
                }
            }
        }
        None
    }
}

/// Real-time and reads-from edges, which do not depend on the version order.
fn base_graph(summary: &Summary) -> OpacityGraph {
    let mut g = OpacityGraph::default();
    g.vertices.insert(T0);
    g.vertices.extend(summary.txns.keys().copied());
    let mut by_first: Vec<(u64, u64, Timestamp)> = summary.txns.iter().map(|(&id, t)| (t.first, t.last, id)).collect();
    by_first.sort_unstable();
    for &(_, last, a) in &by_first {
        g.add(T0, a, EdgeKind::RealTime);
        let later = by_first.partition_point(|&(first, _, _)| first <= last);
        for &(_, _, b) in &by_first[later..] {
            g.add(a, b, EdgeKind::RealTime);
        }
    }
    for r in &summary.reads {
        g.add(r.writer, r.reader, EdgeKind::ReadsFrom);
    }
    g
}

fn add_mv_edges(g: &mut OpacityGraph, summary: &Summary, order: &VersionOrder) -> Result<(), Violation> {
    for r in &summary.reads {
        let writers = order.writers(r.key);
        let Some(wpos) = order.position(r.key, r.writer) else {
            return Err(Violation::UnknownVersion {
                reader: r.reader,
                key: r.key,
                writer: r.writer,
                seq: 0,
            });
        };
        for (kpos, &k) in writers.iter().enumerate() {
            if kpos == wpos {
                continue;
            }
            if wpos < kpos {
                g.add(r.reader, k, EdgeKind::MultiVersion);
            } else {
                g.add(k, r.writer, EdgeKind::MultiVersion);
            }
        }
    }
    Ok(())
}

fn graph_of(summary: &Summary, base: &OpacityGraph, order: &VersionOrder) -> Result<OpacityGraph, Violation> {
    let mut g = base.clone();
    add_mv_edges(&mut g, summary, order)?;
    Ok(g)
}

/// Builds the opacity graph of `history` under `order`.
pub fn build_opg(history: &History, order: &VersionOrder) -> Result<OpacityGraph, Violation> {
    let summary = summarize(history, false)?;
    graph_of(&summary, &base_graph(&summary), order)
}

#[derive(Clone, Debug)]
pub struct Witness {
    /// Transactions in serialization order, without [`T0`].
    pub order: Vec<Timestamp>,
    pub version_order: VersionOrder,
    /// The completed history rearranged into `order`.
    pub serial: History,
}

#[derive(Clone, Debug)]
pub enum Verdict {
    Opaque(Witness),
    /// Every version order tried left this cycle (reported for the
    /// timestamp order).
    NotOpaque(Cycle),
    Invalid(Violation),
}

impl Verdict {
    pub fn is_opaque(&self) -> bool {
        matches!(self, Verdict::Opaque(_))
    }
}

/// Decides opacity. The timestamp version order is tried first; if its graph
/// is cyclic, other per-key writer orders are searched (bounded).
pub fn check_opacity(history: &History) -> Verdict {
    let summary = match summarize(history, false) {
        Ok(s) => s,
        Err(v) => return Verdict::Invalid(v),
    };
    let base = base_graph(&summary);
    let ts_order = ts_order_of(&summary);
    let graph = match graph_of(&summary, &base, &ts_order) {
        Ok(g) => g,
        Err(v) => return Verdict::Invalid(v),
    };
    if let Some(order) = graph.topological_order() {
        return witness(&summary, order, ts_order);
    }
    let cycle = graph.find_cycle().expect("cyclic graph has a cycle");

    // Only keys that are read from and have two or more real writers can
    // produce different multi-version edges.
    let read_keys: BTreeSet<Key> = summary.reads.iter().map(|r| r.key).collect();
    let free: Vec<(Key, Vec<Timestamp>)> = ts_order
        .orders
        .iter()
        .filter(|(k, w)| read_keys.contains(k) && w.len() > 2)
        .map(|(&k, w)| (k, w[1..].to_vec()))
        .collect();
    let mut perms: Vec<Vec<Vec<Timestamp>>> = Vec::with_capacity(free.len());
    let mut total: usize = 1;
    for (_, writers) in &free {
        let p = permutations(writers);
        total = total.saturating_mul(p.len());
        if total > MAX_ORDERS {
            return Verdict::NotOpaque(cycle);
        }
        perms.push(p);
    }
    let mut choice = vec![0usize; free.len()];
    loop {
        // advance odometer; the all-zero choice is the timestamp order
        let mut i = 0;
        loop {
            if i == choice.len() {
                return Verdict::NotOpaque(cycle);
            }
            choice[i] += 1;
            if choice[i] < perms[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
        let mut order = ts_order.clone();
        for (i, (key, _)) in free.iter().enumerate() {
            let mut writers = vec![T0];
            writers.extend(&perms[i][choice[i]]);
            order.orders.insert(*key, writers);
        }
        let g = match graph_of(&summary, &base, &order) {
            Ok(g) => g,
            Err(v) => return Verdict::Invalid(v),
        };
        if let Some(topo) = g.topological_order() {
            return witness(&summary, topo, order);
        }
    }
}

fn permutations(items: &[Timestamp]) -> Vec<Vec<Timestamp>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn witness(summary: &Summary, topo: Vec<Timestamp>, version_order: VersionOrder) -> Verdict {
    let order: Vec<Timestamp> = topo.into_iter().filter(|&v| v != T0).collect();
    let mut events = Vec::new();
    for id in &order {
        let t = &summary.txns[id];
        events.extend(t.events.iter().copied());
        if !t.events.last().is_some_and(Event::is_terminal) {
            events.push(Event::abort(*id));
        }
    }
    let serial = History::sequenced(events);
    if !check_legal_serial(&serial) {
        return Verdict::Invalid(Violation::IllegalWitness);
    }
    Verdict::Opaque(Witness {
        order,
        version_order,
        serial,
    })
}

/// True when `history` is sequential (no two transactions interleave) and
/// every lookup and delete returns what the preceding committed
/// transactions, or the transaction's own earlier operations, imply. A read
/// that names its version must name the last committed writer of that key.
pub fn check_legal_serial(history: &History) -> bool {
    let Ok(summary) = summarize(history, true) else {
        return false;
    };
    let mut spans: Vec<(u64, u64, Timestamp)> = summary.txns.iter().map(|(&id, t)| (t.first, t.last, id)).collect();
    spans.sort_unstable();
    if spans.windows(2).any(|w| w[0].1 > w[1].0) {
        return false;
    }

    let mut state: BTreeMap<Key, (Timestamp, Option<Value>)> = BTreeMap::new();
    for &(_, _, id) in &spans {
        let t = &summary.txns[&id];
        let mut local: BTreeMap<Key, Option<Value>> = BTreeMap::new();
        let mut writes: BTreeMap<Key, Option<Value>> = BTreeMap::new();
        for e in &t.events {
            let Some(key) = e.key else { continue };
            match e.method {
                Method::InsertEffect => {
                    local.insert(key, e.value);
                    writes.insert(key, e.value);
                }
                Method::Lookup | Method::Delete if e.status != Status::Abort => {
                    let (writer, committed) = state.get(&key).copied().unwrap_or((T0, None));
                    let legal = match read_source(&writes, &local, key, e.version_read) {
                        ReadSource::Own(own) => own == e.value,
                        ReadSource::Version(named) => named == writer && committed == e.value,
                        ReadSource::Unnamed => committed == e.value,
                    };
                    if !legal {
                        return false;
                    }
                    if e.method == Method::Delete {
                        writes.insert(key, None);
                    }
                    local.insert(key, if e.method == Method::Delete { None } else { e.value });
                }
                _ => {}
            }
        }
        if t.outcome == Outcome::Committed {
            for (&key, &value) in &t.writes {
                state.insert(key, (id, value));
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(events: Vec<Event>) -> History {
        History::sequenced(events)
    }

    #[test]
    fn empty_history_is_opaque() {
        match check_opacity(&History::default()) {
            Verdict::Opaque(w) => assert!(w.order.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn serial_insert_then_lookup() {
        let hist = h(vec![
            Event::begin(1),
            Event::insert(1, 5, 50),
            Event::commit(1),
            Event::begin(2),
            Event::lookup(2, 5, Some(50), Some(1)),
            Event::commit(2),
        ]);
        assert!(check_legal_serial(&hist));
        let g = build_opg(&hist, &ts_version_order(&hist).unwrap()).unwrap();
        assert!(g.has_edge(1, 2, EdgeKind::RealTime));
        assert!(g.has_edge(1, 2, EdgeKind::ReadsFrom));
        assert!(g.has_edge(T0, 1, EdgeKind::RealTime));
        match check_opacity(&hist) {
            Verdict::Opaque(w) => assert_eq!(w.order, vec![1, 2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stale_read_after_overwrite_is_not_opaque() {
        // T2 reads T1's value after T3 (which started after T1 ended and
        // finished before T2 began) overwrote it.
        let hist = h(vec![
            Event::begin(1),
            Event::insert(1, 5, 50),
            Event::commit(1),
            Event::begin(3),
            Event::insert(3, 5, 51),
            Event::commit(3),
            Event::begin(2),
            Event::lookup(2, 5, Some(50), Some(1)),
            Event::commit(2),
        ]);
        match check_opacity(&hist) {
            Verdict::NotOpaque(c) => {
                assert_eq!(c.edges.first().unwrap().from, c.edges.last().unwrap().to);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_reads_are_reported() {
        let uncommitted = h(vec![
            Event::begin(1),
            Event::insert(1, 5, 50),
            Event::begin(2),
            Event::lookup(2, 5, Some(50), Some(1)),
            Event::commit(1),
            Event::commit(2),
        ]);
        assert!(matches!(
            check_opacity(&uncommitted),
            Verdict::Invalid(Violation::ReadUncommitted { reader: 2, writer: 1, .. })
        ));
        let wrong_value = h(vec![
            Event::begin(1),
            Event::insert(1, 5, 50),
            Event::commit(1),
            Event::begin(2),
            Event::lookup(2, 5, Some(49), Some(1)),
            Event::commit(2),
        ]);
        assert!(matches!(check_opacity(&wrong_value), Verdict::Invalid(Violation::ValueMismatch { .. })));
        let bad_local = h(vec![
            Event::begin(1),
            Event::insert(1, 5, 50),
            Event::lookup(1, 5, None, None),
            Event::commit(1),
        ]);
        assert!(matches!(check_opacity(&bad_local), Verdict::Invalid(Violation::LocalRead { .. })));
    }

    #[test]
    fn malformed_histories() {
        let after_end = h(vec![Event::begin(1), Event::commit(1), Event::lookup(1, 2, None, Some(0))]);
        assert!(matches!(check_opacity(&after_end), Verdict::Invalid(Violation::Malformed { .. })));
        let no_begin = h(vec![Event::commit(1)]);
        assert!(matches!(check_opacity(&no_begin), Verdict::Invalid(Violation::Malformed { .. })));
    }

    #[test]
    fn live_transactions_complete_as_aborted() {
        let hist = h(vec![
            Event::begin(1),
            Event::insert(1, 5, 50),
            Event::begin(2),
            Event::lookup(2, 5, None, Some(0)),
        ]);
        match check_opacity(&hist) {
            Verdict::Opaque(w) => {
                assert_eq!(w.serial.len(), 6);
                assert!(check_legal_serial(&w.serial));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_timestamp_order_found_when_needed() {
        // T2 (ts 2) commits key 1 before T1 (ts 1) does; T3 reads T1's write
        // after both committed. Only the order T2 << T1 explains it.
        let hist = h(vec![
            Event::begin(1),
            Event::begin(2),
            Event::insert(2, 1, 20),
            Event::commit(2),
            Event::insert(1, 1, 10),
            Event::commit(1),
            Event::begin(3),
            Event::lookup(3, 1, Some(10), Some(1)),
            Event::commit(3),
        ]);
        let ts_graph = build_opg(&hist, &ts_version_order(&hist).unwrap()).unwrap();
        assert!(ts_graph.find_cycle().is_some());
        match check_opacity(&hist) {
            Verdict::Opaque(w) => {
                assert_eq!(w.version_order.writers(1), &[T0, 2, 1]);
                assert_eq!(w.order, vec![2, 1, 3]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn legal_serial_rejects_interleaving_and_wrong_writer() {
        let interleaved = h(vec![Event::begin(1), Event::begin(2), Event::commit(1), Event::commit(2)]);
        assert!(!check_legal_serial(&interleaved));
        let wrong_writer = h(vec![
            Event::begin(1),
            Event::insert(1, 5, 50),
            Event::commit(1),
            Event::begin(2),
            Event::insert(2, 5, 50),
            Event::commit(2),
            Event::begin(3),
            Event::lookup(3, 5, Some(50), Some(1)),
            Event::commit(3),
        ]);
        assert!(!check_legal_serial(&wrong_writer));
        let unnamed = h(vec![
            Event::begin(1),
            Event::insert(1, 5, 50),
            Event::commit(1),
            Event::begin(2),
            Event::delete(2, 5, Some(50), None),
            Event::lookup(2, 5, None, None),
            Event::commit(2),
        ]);
        assert!(check_legal_serial(&unnamed));
    }

    #[test]
    fn repeated_named_reads_of_one_key() {
        // T2 reads key 2 before and after T3 overwrote it: a read/write-level
        // conflict cycle.
        let hist = h(vec![
            Event::begin(1),
            Event::insert(1, 2, 20),
            Event::commit(1),
            Event::begin(2),
            Event::lookup(2, 2, Some(20), Some(1)),
            Event::begin(3),
            Event::insert(3, 2, 30),
            Event::commit(3),
            Event::lookup(2, 2, Some(30), Some(3)),
            Event::commit(2),
        ]);
        assert!(matches!(check_opacity(&hist), Verdict::NotOpaque(_)));
        // after its own write a transaction must see that write
        let own = h(vec![
            Event::begin(1),
            Event::insert(1, 2, 20),
            Event::lookup(1, 2, None, Some(0)),
            Event::commit(1),
        ]);
        assert!(matches!(check_opacity(&own), Verdict::Invalid(Violation::LocalRead { .. })));
    }

    #[test]
    fn cycle_is_closed_path() {
        let mut g = OpacityGraph::default();
        g.vertices.extend([0, 1, 2, 3]);
        g.add(0, 1, EdgeKind::RealTime);
        g.add(1, 2, EdgeKind::ReadsFrom);
        g.add(2, 3, EdgeKind::MultiVersion);
        g.add(3, 1, EdgeKind::MultiVersion);
        let c = g.find_cycle().unwrap();
        assert_eq!(c.vertices(), vec![1, 2, 3]);
        assert!(g.topological_order().is_none());
    }
}
