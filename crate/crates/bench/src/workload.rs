//! Workload descriptions and the named presets.

use std::fmt;
use std::str::FromStr;

use mvostm::Policy;
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Operation mix in percent: lookup, insert, delete.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mix {
    pub lookup: u32,
    pub insert: u32,
    pub delete: u32,
}

impl Mix {
    pub const fn new(lookup: u32, insert: u32, delete: u32) -> Self {
        Mix { lookup, insert, delete }
    }

    pub fn is_valid(&self) -> bool {
        self.lookup + self.insert + self.delete == 100
    }

    pub fn is_read_only(&self) -> bool {
        self.lookup == 100
    }
}

impl fmt::Display for Mix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.lookup, self.insert, self.delete)
    }
}

impl FromStr for Mix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [l, i, d] = parts.as_slice() else {
            return Err(format!("mix {s:?} needs three comma-separated percentages"));
        };
        let num = |p: &str| p.parse::<u32>().map_err(|_| format!("bad percentage {p:?} in mix {s:?}"));
        let mix = Mix::new(num(l)?, num(i)?, num(d)?);
        if !mix.is_valid() {
            return Err(format!("mix {s:?} does not sum to 100"));
        }
        Ok(mix)
    }
}

/// Read-mostly: 90% lookup, 8% insert, 2% delete.
pub const W1: Mix = Mix::new(90, 8, 2);
/// Update-heavy: 10% lookup, 45% insert, 45% delete.
pub const W2: Mix = Mix::new(10, 45, 45);
/// Balanced: 50% lookup, 25% insert, 25% delete.
pub const W3: Mix = Mix::new(50, 25, 25);

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub mix: Mix,
    pub threads: usize,
    pub txns_per_thread: usize,
    pub ops_per_txn: usize,
    pub key_space: u64,
    pub buckets: usize,
    pub policy: Policy,
    pub seed: u64,
    pub record_history: bool,
    pub history_cap: usize,
    /// Re-run an aborted transaction's program until it commits.
    pub retry: bool,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            mix: W1,
            threads: 8,
            txns_per_thread: 100,
            ops_per_txn: 10,
            key_space: 1000,
            buckets: 5,
            policy: Policy::Unbounded,
            seed: 1,
            record_history: false,
            history_cap: 1 << 20,
            retry: false,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::InvalidSpec(msg));
        if !self.mix.is_valid() {
            return bad(format!("mix {} does not sum to 100", self.mix));
        }
        for (name, v) in [
            ("threads", self.threads),
            ("txns_per_thread", self.txns_per_thread),
            ("ops_per_txn", self.ops_per_txn),
            ("buckets", self.buckets),
            ("history_cap", self.history_cap),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.key_space == 0 || self.key_space == u64::MAX {
            return bad(format!("key_space must be in 1..{}", u64::MAX));
        }
        if self.policy == Policy::KBounded(0) {
            return bad("K must be at least 1".into());
        }
        Ok(())
    }

    pub fn preset(name: &str) -> Result<Self, BenchError> {
        let base = WorkloadSpec::default();
        Ok(match name.to_ascii_lowercase().as_str() {
            "w1" => WorkloadSpec { mix: W1, ..base },
            "w2" => WorkloadSpec { mix: W2, ..base },
            "w3" => WorkloadSpec { mix: W3, ..base },
            // high contention: many transactions over few keys
            "c1" => WorkloadSpec {
                mix: W2,
                txns_per_thread: 100,
                key_space: 50,
                ..base
            },
            // low contention: one transaction per thread over many keys
            "c2" => WorkloadSpec {
                mix: W2,
                txns_per_thread: 1,
                key_space: 1000,
                ..base
            },
            other => return Err(BenchError::InvalidSpec(format!("unknown preset {other:?}"))),
        })
    }
}
