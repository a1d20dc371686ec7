//! Owner-tagged re-entrant lock used for list nodes.
//!
//! Node locks are held across method boundaries (a commit keeps every window
//! locked from validation until the last version is written), so a guard-based
//! mutex does not fit. The owner is a transaction timestamp rather than a
//! thread: the same transaction may lock a node it already holds.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use crate::Timestamp;

const FREE: u64 = 0;
const SPINS_BEFORE_YIELD: u32 = 64;

#[derive(Debug, Default)]
pub struct TxnLock {
    owner: AtomicU64,
    depth: AtomicU32,
}

impl TxnLock {
    pub const fn new() -> Self {
        TxnLock {
            owner: AtomicU64::new(FREE),
            depth: AtomicU32::new(0),
        }
    }

    /// A lock that is already held once by `owner`.
    pub(crate) fn new_held(owner: Timestamp) -> Self {
        assert_ne!(owner, FREE, "owner 0 is reserved");
        TxnLock {
            owner: AtomicU64::new(owner),
            depth: AtomicU32::new(1),
        }
    }

    pub fn lock(&self, owner: Timestamp) {
        assert_ne!(owner, FREE, "owner 0 is reserved");
        let mut spins = 0u32;
        loop {
            if self.try_lock(owner) {
                return;
            }
            if spins < SPINS_BEFORE_YIELD {
                spins += 1;
                std::hint::spin_loop();
            } else {
                std::thread::yield_now();
            }
        }
    }

    pub fn try_lock(&self, owner: Timestamp) -> bool {
        match self
            .owner
            .compare_exchange(FREE, owner, Ordering::Acquire, Ordering::Relaxed)
        {
            Ok(_) => {
                self.depth.store(1, Ordering::Relaxed);
                true
            }
            Err(current) if current == owner => {
                // only the owner touches depth while it holds the lock
                self.depth.fetch_add(1, Ordering::Relaxed);
                true
            }
            Err(_) => false,
        }
    }

    pub fn unlock(&self, owner: Timestamp) {
        let current = self.owner.load(Ordering::Relaxed);
        assert_eq!(current, owner, "unlock by a transaction that does not hold the lock");
        let depth = self.depth.load(Ordering::Relaxed);
        debug_assert!(depth > 0);
        if depth == 1 {
            self.depth.store(0, Ordering::Relaxed);
            self.owner.store(FREE, Ordering::Release);
        } else {
            self.depth.store(depth - 1, Ordering::Relaxed);
        }
    }

    pub fn holder(&self) -> Option<Timestamp> {
        match self.owner.load(Ordering::Acquire) {
            FREE => None,
            owner => Some(owner),
        }
    }

    pub fn is_locked(&self) -> bool {
        self.holder().is_some()
    }

    /// Re-entrant acquisition count for the current holder (0 when free).
    pub fn depth(&self) -> u32 {
        if self.is_locked() {
            self.depth.load(Ordering::Relaxed)
        } else {
            0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn reentrant_for_same_owner() {
        let lock = TxnLock::new();
        lock.lock(3);
        lock.lock(3);
        assert_eq!(lock.depth(), 2);
        assert!(!lock.try_lock(4));
        lock.unlock(3);
        assert_eq!(lock.holder(), Some(3));
        lock.unlock(3);
        assert_eq!(lock.holder(), None);
        assert!(lock.try_lock(4));
    }

    #[test]
    #[should_panic(expected = "does not hold")]
    fn foreign_unlock_panics() {
        let lock = TxnLock::new();
        lock.lock(1);
        lock.unlock(2);
    }

    #[test]
    fn blocked_thread_acquires_after_release() {
        let lock = Arc::new(TxnLock::new());
        lock.lock(1);
        let other = Arc::clone(&lock);
        let waiter = std::thread::spawn(move || {
            other.lock(2);
            other.unlock(2);
        });
        std::thread::sleep(std::time::Duration::from_millis(20));
        lock.unlock(1);
        waiter.join().unwrap();
        assert!(!lock.is_locked());
    }
}
