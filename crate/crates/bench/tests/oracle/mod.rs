//! Reference implementations used to judge the library: a random valid
//! history generator, an exhaustive opacity decision procedure, and a plain
//! map model of single-threaded transactions. None of this calls into the
//! checker it is compared against.

#![allow(dead_code)]

use std::collections::BTreeMap;

use mvostm::history::{Event, History, Method, Status};
use mvostm::{Key, Timestamp, Value};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Step {
    Lookup(Key),
    Insert(Key),
    Delete(Key),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum End {
    Commit,
    Abort,
    /// A lookup/delete fails with ABORT as the last method.
    AbortInMethod(Key),
    Live,
}

struct GenTxn {
    ts: Timestamp,
    steps: Vec<Step>,
    end: End,
    next: usize,
    begun: bool,
    local: BTreeMap<Key, Option<Value>>,
    writes: BTreeMap<Key, Option<Value>>,
}

/// A history with at most `max_txns` transactions over keys `1..=max_keys`,
/// each with at most `max_ops` operations, interleaved at random. Every read
/// of shared state names a version committed before it (the latest one half
/// of the time, any older one otherwise), so the history is always valid but
/// may or may not be opaque.
pub fn random_history(rng: &mut impl Rng, max_txns: usize, max_keys: u64, max_ops: usize) -> History {
    let n = rng.gen_range(1..=max_txns);
    let keys = rng.gen_range(1..=max_keys);
    let mut txns: Vec<GenTxn> = (0..n)
        .map(|_| {
            let ops = rng.gen_range(1..=max_ops);
            let steps = (0..ops)
                .map(|_| {
                    let k = rng.gen_range(1..=keys);
                    match rng.gen_range(0..3) {
                        0 => Step::Lookup(k),
                        1 => Step::Insert(k),
                        _ => Step::Delete(k),
                    }
                })
                .collect();
            let end = match rng.gen_range(0..20) {
                0..=13 => End::Commit,
                14..=15 => End::Abort,
                16 => End::AbortInMethod(rng.gen_range(1..=keys)),
                _ => End::Live,
            };
            GenTxn {
                ts: 0,
                steps,
                end,
                next: 0,
                begun: false,
                local: BTreeMap::new(),
                writes: BTreeMap::new(),
            }
        })
        .collect();

    // committed versions per key, in commit order
    let mut committed: BTreeMap<Key, Vec<(Timestamp, Option<Value>)>> = BTreeMap::new();
    let mut events = Vec::new();
    let mut next_ts = 1;
    loop {
        let pending: Vec<usize> = (0..n)
            .filter(|&i| {
                let t = &txns[i];
                !t.begun || t.next < t.steps.len() || (t.next == t.steps.len() && t.end != End::Live)
            })
            .collect();
        let Some(&i) = pending.choose(rng) else { break };
        let t = &mut txns[i];
        if !t.begun {
            t.begun = true;
            t.ts = next_ts;
            next_ts += 1;
            events.push(Event::begin(t.ts));
            continue;
        }
        let ts = t.ts;
        if t.next == t.steps.len() {
            t.next += 1;
            match t.end {
                End::Commit => {
                    for (&k, &v) in &t.writes {
                        committed.entry(k).or_default().push((ts, v));
                    }
                    events.push(Event::commit(ts));
                }
                End::Abort => events.push(Event::abort(ts)),
                End::AbortInMethod(k) => events.push(Event::aborted_method(ts, Method::Lookup, k)),
                End::Live => unreachable!(),
            }
            continue;
        }
        let step = t.steps[t.next];
        t.next += 1;
        match step {
            Step::Insert(k) => {
                let v = ts * 10 + k;
                t.local.insert(k, Some(v));
                t.writes.insert(k, Some(v));
                events.push(Event::insert(ts, k, v));
            }
            Step::Lookup(k) | Step::Delete(k) => {
                let (value, version) = match t.local.get(&k) {
                    Some(&v) => (v, None),
                    None => {
                        let mut choices = vec![(0, None)];
                        choices.extend(committed.get(&k).into_iter().flatten().copied());
                        let (w, v) = if rng.gen_bool(0.5) {
                            *choices.last().unwrap()
                        } else {
                            *choices.choose(rng).unwrap()
                        };
                        (v, Some(w))
                    }
                };
                if let Step::Delete(_) = step {
                    t.local.insert(k, None);
                    t.writes.insert(k, None);
                    events.push(Event::delete(ts, k, value, version));
                } else {
                    t.local.insert(k, value);
                    events.push(Event::lookup(ts, k, value, version));
                }
            }
        }
    }
    History::sequenced(events)
}

struct BfTxn {
    id: Timestamp,
    first: usize,
    last: usize,
    committed: bool,
    events: Vec<Event>,
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    if k == items.len() {
        return visit(items);
    }
    for i in k..items.len() {
        items.swap(k, i);
        if permute(items, k + 1, visit) {
            return true;
        }
        items.swap(k, i);
    }
    false
}

/// Opacity by definition: some total order of the (completed) transactions
/// respects real-time order and makes every read legal when the
/// transactions run one after another.
pub fn brute_force_opaque(history: &History) -> bool {
    let mut txns: Vec<BfTxn> = Vec::new();
    for (pos, e) in history.events().iter().enumerate() {
        match txns.iter_mut().find(|t| t.id == e.txn) {
            Some(t) => {
                t.last = pos;
                t.events.push(*e);
            }
            None => txns.push(BfTxn {
                id: e.txn,
                first: pos,
                last: pos,
                committed: false,
                events: vec![*e],
            }),
        }
        if e.method == Method::TryC && e.status == Status::Commit {
            if let Some(t) = txns.iter_mut().find(|t| t.id == e.txn) {
                t.committed = true;
            }
        }
    }

    let mut order: Vec<usize> = (0..txns.len()).collect();
    permute(&mut order, 0, &mut |perm| {
        let mut rank = vec![0; txns.len()];
        for (r, &i) in perm.iter().enumerate() {
            rank[i] = r;
        }
        for a in 0..txns.len() {
            for b in 0..txns.len() {
                if txns[a].last < txns[b].first && rank[a] > rank[b] {
                    return false;
                }
            }
        }
        serial_legal(perm.iter().map(|&i| &txns[i]))
    })
}

fn serial_legal<'a>(order: impl Iterator<Item = &'a BfTxn>) -> bool {
    // last committed writer and value per key; absent means the initial null
    let mut store: BTreeMap<Key, (Timestamp, Option<Value>)> = BTreeMap::new();
    for t in order {
        let mut seen: BTreeMap<Key, Option<Value>> = BTreeMap::new();
        let mut wrote: BTreeMap<Key, Option<Value>> = BTreeMap::new();
        for e in &t.events {
            let Some(k) = e.key else { continue };
            match e.method {
                Method::InsertEffect => {
                    seen.insert(k, e.value);
                    wrote.insert(k, e.value);
                }
                Method::Lookup | Method::Delete if e.status != Status::Abort => {
                    let (writer, current) = store.get(&k).copied().unwrap_or((0, None));
                    let ok = if let Some(&own) = wrote.get(&k) {
                        e.value == own
                    } else if let Some(named) = e.version_read {
                        named == writer && e.value == current
                    } else if let Some(&before) = seen.get(&k) {
                        e.value == before
                    } else {
                        e.value == current
                    };
                    if !ok {
                        return false;
                    }
                    if e.method == Method::Delete {
                        seen.insert(k, None);
                        wrote.insert(k, None);
                    } else {
                        seen.insert(k, e.value);
                    }
                }
                _ => {}
            }
        }
        if t.committed {
            for (k, v) in wrote {
                store.insert(k, (t.id, v));
            }
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapOp {
    Lookup(Key),
    Insert(Key, Value),
    Delete(Key),
}

/// A single-threaded program: transactions in sequence, each committed or
/// abandoned.
pub type Program = Vec<(Vec<MapOp>, bool)>;

pub fn random_program(rng: &mut impl Rng, keys: u64) -> Program {
    (0..rng.gen_range(1..=8))
        .map(|_| {
            let ops = (0..rng.gen_range(0..=6))
                .map(|_| {
                    let k = rng.gen_range(1..=keys);
                    match rng.gen_range(0..3) {
                        0 => MapOp::Lookup(k),
                        1 => MapOp::Insert(k, rng.gen_range(1..1000)),
                        _ => MapOp::Delete(k),
                    }
                })
                .collect();
            (ops, rng.gen_bool(0.85))
        })
        .collect()
}

/// Return values of every lookup and delete when the program runs against a
/// plain map, plus the final contents.
pub fn reference_map(program: &Program) -> (Vec<Option<Value>>, BTreeMap<Key, Value>) {
    let mut map: BTreeMap<Key, Value> = BTreeMap::new();
    let mut returns = Vec::new();
    for (ops, commit) in program {
        let mut scratch = map.clone();
        for op in ops {
            match *op {
                MapOp::Lookup(k) => returns.push(scratch.get(&k).copied()),
                MapOp::Insert(k, v) => {
                    scratch.insert(k, v);
                }
                MapOp::Delete(k) => returns.push(scratch.remove(&k)),
            }
        }
        if *commit {
            map = scratch;
        }
    }
    (returns, map)
}
