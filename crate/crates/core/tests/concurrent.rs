use std::collections::BTreeSet;
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Duration;

use mvostm::history::{build_opg, check_opacity, ts_version_order, Verdict};
use mvostm::{Policy, Stm, StmConfig, TxnError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fails the test instead of hanging when `f` deadlocks.
fn within<T: Send + 'static>(secs: u64, f: impl FnOnce() -> T + Send + 'static) -> T {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let _ = tx.send(f());
    });
    rx.recv_timeout(Duration::from_secs(secs)).expect("run did not finish: deadlock?")
}

fn stress(stm: &Arc<Stm>, threads: usize, txns: usize, ops: usize, keys: u64, seed: u64) -> (u64, u64) {
    let handles: Vec<_> = (0..threads)
        .map(|t| {
            let stm = Arc::clone(stm);
            thread::spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + t as u64);
                let (mut committed, mut aborted) = (0, 0);
                'txn: for _ in 0..txns {
                    let mut txn = stm.begin();
                    for _ in 0..ops {
                        let key = rng.gen_range(1..=keys);
                        let res = match rng.gen_range(0..3) {
                            0 => txn.lookup(key).map(drop),
                            1 => txn.insert(key, rng.gen_range(1..100)),
                            _ => txn.delete(key).map(drop),
                        };
                        if res == Err(TxnError::Aborted) {
                            aborted += 1;
                            continue 'txn;
                        }
                    }
                    match txn.try_commit() {
                        Ok(()) => committed += 1,
                        Err(_) => aborted += 1,
                    }
                }
                (committed, aborted)
            })
        })
        .collect();
    handles
        .into_iter()
        .map(|h| h.join().unwrap())
        .fold((0, 0), |acc, x| (acc.0 + x.0, acc.1 + x.1))
}

#[test]
fn concurrent_begins_get_distinct_timestamps() {
    let stm = Arc::new(Stm::with_buckets(5));
    let handles: Vec<_> = (0..64)
        .map(|_| {
            let stm = Arc::clone(&stm);
            thread::spawn(move || stm.begin().ts())
        })
        .collect();
    let seen: BTreeSet<u64> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(seen, (1..=64).collect());
}

#[test]
fn recorded_histories_are_opaque_under_every_policy() {
    for policy in [Policy::Unbounded, Policy::Gc, Policy::KBounded(1), Policy::KBounded(3)] {
        for seed in 0..8 {
            let stm = Arc::new(Stm::new(StmConfig {
                buckets: 3,
                policy,
                history_cap: Some(100_000),
                audit_gc: true,
            }));
            let s = Arc::clone(&stm);
            let (committed, aborted) = within(60, move || stress(&s, 6, 25, 6, 12, seed));
            assert_eq!(committed + aborted, 150);
            assert_eq!(stm.locked_node_count(), 0);
            stm.audit().unwrap();
            assert_eq!(stm.gc_stats().violations, 0);
            let history = stm.history().unwrap();
            assert!(!stm.history_truncated());
            match check_opacity(&history) {
                Verdict::Opaque(w) => assert_eq!(w.order.len(), 150),
                other => panic!("{policy} seed {seed}: {other:?}"),
            }
            let graph = build_opg(&history, &ts_version_order(&history).unwrap()).unwrap();
            for e in graph.edges() {
                assert!(e.from < e.to, "{policy} seed {seed}: edge {e} against timestamp order");
            }
        }
    }
}

#[test]
fn wide_commits_on_one_bucket_do_not_deadlock() {
    let stm = Arc::new(Stm::with_buckets(1));
    let s = Arc::clone(&stm);
    let (committed, _) = within(60, move || stress(&s, 8, 50, 16, 24, 7));
    assert!(committed > 0);
    assert_eq!(stm.locked_node_count(), 0);
    stm.audit().unwrap();
}

#[test]
fn version_counter_matches_stored_versions() {
    for policy in [Policy::Unbounded, Policy::Gc, Policy::KBounded(2)] {
        let stm = Arc::new(Stm::new(StmConfig {
            buckets: 4,
            policy,
            ..StmConfig::default()
        }));
        let s = Arc::clone(&stm);
        within(60, move || stress(&s, 4, 40, 8, 30, 11));
        let counter = stm.version_counter();
        assert_eq!(counter.live(), stm.stored_versions() as i64, "{policy}");
        assert!(counter.peak() >= counter.live());
        if let Policy::KBounded(k) = policy {
            assert!(stm.max_version_list_len() <= k);
            assert!(counter.live() <= (k * stm.node_count()) as i64);
        }
    }
}

#[test]
fn read_only_transactions_never_abort() {
    let stm = Arc::new(Stm::with_buckets(2));
    {
        let mut t = stm.begin();
        for k in 1..=20 {
            t.insert(k, k * 10).unwrap();
        }
        t.try_commit().unwrap();
    }
    let readers: Vec<_> = (0..4)
        .map(|i| {
            let stm = Arc::clone(&stm);
            thread::spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(i);
                for _ in 0..100 {
                    let mut t = stm.begin();
                    for _ in 0..10 {
                        t.lookup(rng.gen_range(1..=40)).unwrap();
                    }
                    t.try_commit().unwrap();
                }
            })
        })
        .collect();
    let writer = {
        let stm = Arc::clone(&stm);
        thread::spawn(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            for _ in 0..100 {
                let mut t = stm.begin();
                let k = rng.gen_range(1..=40);
                if rng.gen_bool(0.5) {
                    t.insert(k, 1).unwrap();
                } else if t.delete(k).is_err() {
                    continue;
                }
                let _ = t.try_commit();
            }
        })
    };
    for r in readers {
        r.join().expect("a read-only transaction aborted");
    }
    writer.join().unwrap();
}
