//! Runs a workload against one shared table.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use mvostm::history::History;
use mvostm::stm::GcStats;
use mvostm::{Key, Policy, Stm, StmConfig, Txn, TxnError, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::report::RunReport;
use crate::workload::{Mix, WorkloadSpec};
use crate::BenchError;

/// Environment variable overriding the default watchdog, in seconds.
pub const WATCHDOG_ENV: &str = "MVOSTM_WATCHDOG_SECS";
pub const DEFAULT_WATCHDOG: Duration = Duration::from_secs(60);

pub fn watchdog_from_env() -> Duration {
    std::env::var(WATCHDOG_ENV)
        .ok()
        .and_then(|s| s.parse::<u64>().ok())
        .map_or(DEFAULT_WATCHDOG, Duration::from_secs)
}

/// Harness options that are not part of the workload itself.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Pause all workers and audit the table after every this many commits.
    pub audit_every: Option<u64>,
    /// Check every live transaction's visibility after each collection.
    pub audit_gc: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditStats {
    pub audits: u64,
    pub violations: u64,
    /// Descriptions of the first few violations.
    pub messages: Vec<String>,
}

impl AuditStats {
    fn fail(&mut self, msg: String) {
        self.violations += 1;
        if self.messages.len() < 16 {
            self.messages.push(msg);
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub audits: AuditStats,
    pub gc: GcStats,
    pub history: Option<History>,
    pub history_truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Lookup(Key),
    Insert(Key, Value),
    Delete(Key),
}

/// One transaction's operations, drawn from the mix with uniform keys in
/// `1..=key_space`.
pub fn gen_program(rng: &mut impl Rng, mix: Mix, ops: usize, key_space: u64) -> Vec<Op> {
    (0..ops)
        .map(|_| {
            let key = rng.gen_range(1..=key_space);
            let roll = rng.gen_range(0..100);
            if roll < mix.lookup {
                Op::Lookup(key)
            } else if roll < mix.lookup + mix.insert {
                Op::Insert(key, rng.gen_range(1..=1_000_000))
            } else {
                Op::Delete(key)
            }
        })
        .collect()
}

/// Per-thread generator: distinct, reproducible streams for each worker.
pub fn thread_rng(seed: u64, thread: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(thread as u64);
    rng
}

struct Shared {
    stm: Stm,
    gate: RwLock<()>,
    /// Timestamp of each worker's live transaction, 0 when it has none.
    slots: Vec<AtomicU64>,
    commits: AtomicU64,
    audits: Mutex<AuditStats>,
    audit_every: Option<u64>,
    k: Option<usize>,
}

impl Shared {
    fn audit(&self) {
        let _pause = self.gate.write().unwrap_or_else(|e| e.into_inner());
        let mut stats = self.audits.lock().unwrap_or_else(|e| e.into_inner());
        stats.audits += 1;
        let stm = &self.stm;
        let locked = stm.locked_node_count();
        if locked != 0 {
            stats.fail(format!("{locked} nodes locked while paused"));
        }
        if let Err(e) = stm.audit() {
            stats.fail(e);
        }
        if let Some(k) = self.k {
            let longest = stm.max_version_list_len();
            if longest > k {
                stats.fail(format!("version list of length {longest} exceeds K={k}"));
            }
        }
        let counted = stm.version_counter().live();
        let stored = stm.stored_versions() as i64;
        if counted != stored {
            stats.fail(format!("version counter {counted} but {stored} versions stored"));
        }
        if stm.policy() == Policy::Gc {
            let hidden = stm.gc_visibility_violations();
            if hidden != 0 {
                stats.fail(format!("{hidden} live reads lost their version"));
            }
            let live: BTreeSet<u64> = stm.live_list().snapshot().into_iter().collect();
            let running: BTreeSet<u64> = self
                .slots
                .iter()
                .map(|s| s.load(Ordering::Acquire))
                .filter(|&ts| ts != 0)
                .collect();
            if live != running {
                stats.fail(format!("live list {live:?} but running {running:?}"));
            }
        }
    }

    /// Runs one program to completion; true when it committed.
    fn execute(&self, slot: &AtomicU64, program: &[Op]) -> bool {
        let mut txn: Txn<'_> = {
            let _g = self.gate.read().unwrap_or_else(|e| e.into_inner());
            let t = self.stm.begin();
            slot.store(t.ts(), Ordering::Release);
            t
        };
        for op in program {
            let _g = self.gate.read().unwrap_or_else(|e| e.into_inner());
            let res = match *op {
                Op::Lookup(k) => txn.lookup(k).map(drop),
                Op::Insert(k, v) => txn.insert(k, v),
                Op::Delete(k) => txn.delete(k).map(drop),
            };
            match res {
                Ok(()) => {}
                Err(TxnError::Aborted) => {
                    slot.store(0, Ordering::Release);
                    return false;
                }
                Err(e) => panic!("workload generated an invalid operation: {e}"),
            }
        }
        let committed = {
            let _g = self.gate.read().unwrap_or_else(|e| e.into_inner());
            let res = txn.try_commit();
            slot.store(0, Ordering::Release);
            res.is_ok()
        };
        if committed {
            let n = self.commits.fetch_add(1, Ordering::AcqRel) + 1;
            if self.audit_every.is_some_and(|every| n % every == 0) {
                self.audit();
            }
        }
        committed
    }
}

pub fn run(spec: &WorkloadSpec) -> Result<RunReport, BenchError> {
    run_detailed(spec, &RunOptions::default()).map(|o| o.report)
}

pub fn run_detailed(spec: &WorkloadSpec, options: &RunOptions) -> Result<RunOutcome, BenchError> {
    spec.validate()?;
    let shared = Arc::new(Shared {
        stm: Stm::new(StmConfig {
            buckets: spec.buckets,
            policy: spec.policy,
            history_cap: spec.record_history.then_some(spec.history_cap),
            audit_gc: options.audit_gc,
        }),
        gate: RwLock::new(()),
        slots: (0..spec.threads).map(|_| AtomicU64::new(0)).collect(),
        commits: AtomicU64::new(0),
        audits: Mutex::new(AuditStats::default()),
        audit_every: options.audit_every,
        k: match spec.policy {
            Policy::KBounded(k) => Some(k),
            _ => None,
        },
    });

    let start = Instant::now();
    let workers: Vec<_> = (0..spec.threads)
        .map(|t| {
            let shared = Arc::clone(&shared);
            let spec = spec.clone();
            thread::spawn(move || {
                let mut rng = thread_rng(spec.seed, t);
                let slot = &shared.slots[t];
                let (mut committed, mut aborted) = (0u64, 0u64);
                for _ in 0..spec.txns_per_thread {
                    let program = gen_program(&mut rng, spec.mix, spec.ops_per_txn, spec.key_space);
                    loop {
                        if shared.execute(slot, &program) {
                            committed += 1;
                            break;
                        }
                        aborted += 1;
                        if !spec.retry {
                            break;
                        }
                    }
                }
                (committed, aborted)
            })
        })
        .collect();
    let (mut committed, mut aborted) = (0, 0);
    for w in workers {
        let (c, a) = w.join().map_err(|_| BenchError::WorkerPanicked)?;
        committed += c;
        aborted += a;
    }
    let secs = start.elapsed().as_secs_f64();

    let stm = &shared.stm;
    let versions = stm.version_counter();
    let report = RunReport::new(spec, committed, aborted, secs, versions.peak(), versions.live());
    let audits = shared.audits.lock().unwrap_or_else(|e| e.into_inner()).clone();
    Ok(RunOutcome {
        report,
        audits,
        gc: stm.gc_stats(),
        history: stm.history(),
        history_truncated: stm.history_truncated(),
    })
}

/// Runs on a separate thread and gives up after `limit`. A timed-out run's
/// workers are left behind; the caller should treat it as a hang.
pub fn run_with_watchdog(spec: &WorkloadSpec, options: &RunOptions, limit: Duration) -> Result<RunOutcome, BenchError> {
    spec.validate()?;
    let (tx, rx) = mpsc::channel();
    let (spec, options) = (spec.clone(), options.clone());
    thread::spawn(move || {
        let _ = tx.send(run_detailed(&spec, &options));
    });
    match rx.recv_timeout(limit) {
        Ok(result) => result,
        Err(mpsc::RecvTimeoutError::Timeout) => Err(BenchError::Timeout(limit)),
        Err(mpsc::RecvTimeoutError::Disconnected) => Err(BenchError::WorkerPanicked),
    }
}

/// One run per K on the same seed. `None` stands for K = infinity and runs
/// the unbounded policy.
pub fn sweep_k(spec: &WorkloadSpec, k_values: &[Option<usize>]) -> Result<Vec<RunReport>, BenchError> {
    if k_values.is_empty() {
        return Err(BenchError::InvalidSpec("sweep needs at least one K".into()));
    }
    k_values
        .iter()
        .map(|k| {
            let policy = k.map_or(Policy::Unbounded, Policy::KBounded);
            run(&WorkloadSpec { policy, ..spec.clone() })
        })
        .collect()
}
