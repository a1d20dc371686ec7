//! Recorded transactional histories and their line-oriented file format.
//!
//! Every event carries a global sequence number assigned at the method's
//! linearization point (while the method still holds its node locks), so the
//! sequence order is consistent with lock order on every key.
//!
//! File format: one event per line, tab separated,
//! `seq  txn  method  key  value  status  version_read`, with `-` standing
//! for an absent key, a null value, or "no shared version read".

mod check;

pub use check::{
    build_opg, check_legal_serial, check_opacity, ts_version_order, Cycle, Edge, EdgeKind,
    OpacityGraph, Outcome, Verdict, VersionOrder, Violation, Witness, T0,
};

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};

use parking_lot::Mutex;
use thiserror::Error;

use crate::{Key, Timestamp, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Begin,
    Lookup,
    Delete,
    /// An insert as seen by its own transaction; it takes effect at commit.
    InsertEffect,
    TryC,
}

impl Method {
    pub fn token(&self) -> &'static str {
        match self {
            Method::Begin => "BEGIN",
            Method::Lookup => "LOOKUP",
            Method::Delete => "DELETE",
            Method::InsertEffect => "INSERT_EFFECT",
            Method::TryC => "TRYC",
        }
    }

    /// Lookup and delete return a value read from a version.
    pub fn is_return_value(&self) -> bool {
        matches!(self, Method::Lookup | Method::Delete)
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "BEGIN" => Method::Begin,
            "LOOKUP" => Method::Lookup,
            "DELETE" => Method::Delete,
            "INSERT_EFFECT" => Method::InsertEffect,
            "TRYC" => Method::TryC,
            other => return Err(format!("unknown method {other:?}")),
        })
    }
}

/// Method outcome, in the order `ABORT, OK, FAIL, COMMIT`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    Abort,
    Ok,
    Fail,
    Commit,
}

impl Status {
    pub fn token(&self) -> &'static str {
        match self {
            Status::Abort => "ABORT",
            Status::Ok => "OK",
            Status::Fail => "FAIL",
            Status::Commit => "COMMIT",
        }
    }

    /// OK for a returned value, FAIL for null.
    pub fn of_value(value: Option<Value>) -> Status {
        if value.is_some() {
            Status::Ok
        } else {
            Status::Fail
        }
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ABORT" => Status::Abort,
            "OK" => Status::Ok,
            "FAIL" => Status::Fail,
            "COMMIT" => Status::Commit,
            other => return Err(format!("unknown status {other:?}")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    pub seq: u64,
    pub txn: Timestamp,
    pub method: Method,
    pub key: Option<Key>,
    pub value: Option<Value>,
    pub status: Status,
    /// Timestamp of the version a lookup/delete read from shared memory;
    /// `None` when it was answered from the transaction's local log.
    pub version_read: Option<Timestamp>,
}

impl Event {
    fn new(txn: Timestamp, method: Method) -> Self {
        Event {
            seq: 0,
            txn,
            method,
            key: None,
            value: None,
            status: Status::Ok,
            version_read: None,
        }
    }

    pub fn begin(txn: Timestamp) -> Self {
        Event::new(txn, Method::Begin)
    }

    pub fn lookup(txn: Timestamp, key: Key, value: Option<Value>, version_read: Option<Timestamp>) -> Self {
        Event {
            key: Some(key),
            value,
            status: Status::of_value(value),
            version_read,
            ..Event::new(txn, Method::Lookup)
        }
    }

    pub fn delete(txn: Timestamp, key: Key, value: Option<Value>, version_read: Option<Timestamp>) -> Self {
        Event {
            method: Method::Delete,
            ..Event::lookup(txn, key, value, version_read)
        }
    }

    /// A lookup or delete that aborted its transaction.
    pub fn aborted_method(txn: Timestamp, method: Method, key: Key) -> Self {
        Event {
            key: Some(key),
            status: Status::Abort,
            ..Event::new(txn, method)
        }
    }

    pub fn insert(txn: Timestamp, key: Key, value: Value) -> Self {
        Event {
            key: Some(key),
            value: Some(value),
            ..Event::new(txn, Method::InsertEffect)
        }
    }

    pub fn commit(txn: Timestamp) -> Self {
        Event {
            status: Status::Commit,
            ..Event::new(txn, Method::TryC)
        }
    }

    pub fn abort(txn: Timestamp) -> Self {
        Event {
            status: Status::Abort,
            ..Event::new(txn, Method::TryC)
        }
    }

    pub fn with_seq(self, seq: u64) -> Self {
        Event { seq, ..self }
    }

    /// Whether this event ends its transaction.
    pub fn is_terminal(&self) -> bool {
        self.method == Method::TryC || self.status == Status::Abort
    }

    pub fn to_line(&self) -> String {
        fn dash<T: ToString>(v: Option<T>) -> String {
            v.map_or_else(|| "-".to_string(), |v| v.to_string())
        }
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.seq,
            self.txn,
            self.method.token(),
            dash(self.key),
            dash(self.value),
            self.status.token(),
            dash(self.version_read)
        )
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: expected 7 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: {reason}")]
    Field { line: usize, reason: String },
    #[error("line {line}: sequence number {seq} does not increase")]
    OutOfOrder { line: usize, seq: u64 },
}

fn parse_opt_u64(field: &str, what: &str, line: usize) -> Result<Option<u64>, ParseError> {
    if field == "-" {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|_| ParseError::Field {
        line,
        reason: format!("bad {what} {field:?}"),
    })
}

impl FromStr for Event {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_line(s, 1)
    }
}

fn parse_line(s: &str, line: usize) -> Result<Event, ParseError> {
    let fields: Vec<&str> = s.split('\t').collect();
    if fields.len() != 7 {
        return Err(ParseError::FieldCount { line, found: fields.len() });
    }
    let field_err = |reason: String| ParseError::Field { line, reason };
    let seq = parse_opt_u64(fields[0], "seq", line)?.ok_or_else(|| field_err("missing seq".into()))?;
    let txn = parse_opt_u64(fields[1], "txn", line)?.ok_or_else(|| field_err("missing txn".into()))?;
    Ok(Event {
        seq,
        txn,
        method: fields[2].parse().map_err(field_err)?,
        key: parse_opt_u64(fields[3], "key", line)?,
        value: parse_opt_u64(fields[4], "value", line)?,
        status: fields[5].parse().map_err(field_err)?,
        version_read: parse_opt_u64(fields[6], "version", line)?,
    })
}

/// An immutable, sequence-ordered list of events.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    events: Vec<Event>,
}

impl History {
    /// Builds a history from events whose sequence numbers strictly increase.
    pub fn from_events(events: Vec<Event>) -> Result<Self, ParseError> {
        for (i, pair) in events.windows(2).enumerate() {
            if pair[1].seq <= pair[0].seq {
                return Err(ParseError::OutOfOrder { line: i + 2, seq: pair[1].seq });
            }
        }
        Ok(History { events })
    }

    /// Numbers `events` 0, 1, 2, ... in the given order.
    pub fn sequenced(events: impl IntoIterator<Item = Event>) -> Self {
        History {
            events: events
                .into_iter()
                .enumerate()
                .map(|(i, e)| e.with_seq(i as u64))
                .collect(),
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            events.push(parse_line(line, i + 1)?);
        }
        History::from_events(events)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Global sequencer for events captured from a running table.
#[derive(Debug)]
pub struct Recorder {
    events: Mutex<Vec<Event>>,
    cap: usize,
    truncated: AtomicBool,
}

impl Recorder {
    pub fn new(cap: usize) -> Self {
        Recorder {
            events: Mutex::new(Vec::new()),
            cap,
            truncated: AtomicBool::new(false),
        }
    }

    pub fn record(&self, event: Event) {
        let mut events = self.events.lock();
        self.push(&mut events, event);
    }

    /// Assigns a timestamp and records its BEGIN in one step, so real-time
    /// order between a commit and a later begin agrees with timestamp order.
    pub fn record_begin(&self, assign: impl FnOnce() -> Timestamp) -> Timestamp {
        let mut events = self.events.lock();
        let ts = assign();
        self.push(&mut events, Event::begin(ts));
        ts
    }

    fn push(&self, events: &mut Vec<Event>, event: Event) {
        if events.len() >= self.cap {
            self.truncated.store(true, Ordering::Relaxed);
            return;
        }
        let seq = events.len() as u64;
        events.push(event.with_seq(seq));
    }

    /// True once an event was dropped because the cap was reached.
    pub fn truncated(&self) -> bool {
        self.truncated.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> History {
        History {
            events: self.events.lock().clone(),
        }
    }
}
