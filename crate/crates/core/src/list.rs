//! Red-blue lazy list: one hash-table bucket.
//!
//! Every node is reachable from `head` through red links. Unmarked nodes are
//! additionally reachable through blue links, so lookups of live keys skip the
//! logically deleted ones. Nodes are never unlinked from the red list while the
//! list is alive; older versions of deleted keys must stay readable.
//!
//! Traversal is lock-free. Every structural change happens while the caller
//! holds the locks of the window it changes.

use std::ptr;
use std::sync::atomic::{AtomicBool, AtomicPtr, Ordering};

use parking_lot::{Mutex, MutexGuard};
use smallvec::SmallVec;

use crate::lock::TxnLock;
use crate::version::VersionList;
use crate::{Key, Timestamp};

/// Key of the head sentinel.
pub const HEAD_KEY: Key = Key::MIN;
/// Key of the tail sentinel.
pub const TAIL_KEY: Key = Key::MAX;

pub fn is_user_key(key: Key) -> bool {
    HEAD_KEY < key && key < TAIL_KEY
}

pub struct Node {
    key: Key,
    lock: TxnLock,
    marked: AtomicBool,
    versions: Mutex<VersionList>,
    red_next: AtomicPtr<Node>,
    blue_next: AtomicPtr<Node>,
}

impl Node {
    fn alloc(key: Key, marked: bool, lock: TxnLock, versions: VersionList) -> *mut Node {
        Box::into_raw(Box::new(Node {
            key,
            lock,
            marked: AtomicBool::new(marked),
            versions: Mutex::new(versions),
            red_next: AtomicPtr::new(ptr::null_mut()),
            blue_next: AtomicPtr::new(ptr::null_mut()),
        }))
    }

    pub fn key(&self) -> Key {
        self.key
    }

    pub fn lock(&self) -> &TxnLock {
        &self.lock
    }

    pub fn is_marked(&self) -> bool {
        self.marked.load(Ordering::Acquire)
    }

    pub fn is_sentinel(&self) -> bool {
        !is_user_key(self.key)
    }

    /// Version list of this node. Protocol callers hold the node lock first;
    /// the mutex only makes the access sound for audits.
    pub fn versions(&self) -> MutexGuard<'_, VersionList> {
        self.versions.lock()
    }

    pub fn red_next(&self) -> Option<&Node> {
        // SAFETY: nodes are freed only when the owning list drops, and every
        // reference handed out borrows that list.
        unsafe { self.red_next.load(Ordering::Acquire).as_ref() }
    }

    pub fn blue_next(&self) -> Option<&Node> {
        // SAFETY: see `red_next`.
        unsafe { self.blue_next.load(Ordering::Acquire).as_ref() }
    }

    fn set_red_next(&self, next: &Node) {
        self.red_next.store(as_mut_ptr(next), Ordering::Release);
    }

    fn set_blue_next(&self, next: &Node) {
        self.blue_next.store(as_mut_ptr(next), Ordering::Release);
    }

    pub(crate) fn red_is(&self, other: &Node) -> bool {
        ptr::eq(self.red_next.load(Ordering::Acquire), other)
    }

    pub(crate) fn blue_is(&self, other: &Node) -> bool {
        ptr::eq(self.blue_next.load(Ordering::Acquire), other)
    }
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node")
            .field("key", &self.key)
            .field("marked", &self.is_marked())
            .field("locked_by", &self.lock.holder())
            .finish()
    }
}

fn as_mut_ptr(node: &Node) -> *mut Node {
    node as *const Node as *mut Node
}

/// Blue and red predecessor/current pairs bracketing a key.
#[derive(Clone, Copy)]
pub struct SearchWindow<'a> {
    pub bp: &'a Node,
    pub bc: &'a Node,
    pub rp: &'a Node,
    pub rc: &'a Node,
}

impl<'a> SearchWindow<'a> {
    /// Distinct window nodes in increasing key order.
    pub fn nodes(&self) -> SmallVec<[&'a Node; 4]> {
        let mut nodes: SmallVec<[&'a Node; 4]> =
            SmallVec::from_slice(&[self.bp, self.rp, self.rc, self.bc]);
        nodes.sort_by_key(|n| n.key);
        nodes.dedup_by(|a, b| ptr::eq(*a, *b));
        nodes
    }

    /// The node holding `key`, when the window found one.
    pub fn node_for(&self, key: Key) -> Option<&'a Node> {
        (self.rc.key == key).then_some(self.rc)
    }

    pub fn keys(&self) -> [Key; 4] {
        [self.bp.key, self.bc.key, self.rp.key, self.rc.key]
    }

    pub fn same_as(&self, other: &SearchWindow<'_>) -> bool {
        ptr::eq(self.bp, other.bp)
            && ptr::eq(self.bc, other.bc)
            && ptr::eq(self.rp, other.rp)
            && ptr::eq(self.rc, other.rc)
    }
}

impl std::fmt::Debug for SearchWindow<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Window{{bp: {}, bc: {}, rp: {}, rc: {}}}",
            self.bp.key, self.bc.key, self.rp.key, self.rc.key
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertMode {
    /// New marked node, reachable through red links only.
    RedOnly,
    /// New unmarked node, linked into both lists.
    BlueAndRed,
    /// Existing red-only node `rc` is linked back into the blue list.
    RelinkBlue,
}

pub struct RbList {
    head: *mut Node,
}

// SAFETY: nodes are only mutated through atomics, the node lock protocol, or
// the version mutex; the raw head pointer is owned by this list.
unsafe impl Send for RbList {}
unsafe impl Sync for RbList {}

impl Default for RbList {
    fn default() -> Self {
        RbList::new()
    }
}

impl RbList {
    pub fn new() -> Self {
        let tail = Node::alloc(TAIL_KEY, false, TxnLock::new(), VersionList::new());
        let head = Node::alloc(HEAD_KEY, false, TxnLock::new(), VersionList::new());
        // SAFETY: both pointers were just allocated and are not shared yet.
        unsafe {
            (*head).red_next.store(tail, Ordering::Relaxed);
            (*head).blue_next.store(tail, Ordering::Relaxed);
        }
        RbList { head }
    }

    pub fn head(&self) -> &Node {
        // SAFETY: head lives as long as the list.
        unsafe { &*self.head }
    }

    /// Lock-free search for the window of `key`. The result may be stale by
    /// the time the caller locks it; see [`RbList::rv_validate`].
    pub fn search(&self, key: Key) -> SearchWindow<'_> {
        assert!(is_user_key(key), "key {key} is reserved for sentinels");
        let mut bp = self.head();
        let mut bc = bp.blue_next().expect("blue chain ends at tail");
        while bc.key < key {
            bp = bc;
            bc = bc.blue_next().expect("blue chain ends at tail");
        }
        let mut rp = bp;
        let mut rc = rp.red_next().expect("red chain ends at tail");
        while rc.key < key {
            rp = rc;
            rc = rc.red_next().expect("red chain ends at tail");
        }
        SearchWindow { bp, bc, rp, rc }
    }

    /// Locks each distinct window node once, in increasing key order.
    pub fn lock_window(window: &SearchWindow<'_>, owner: Timestamp) {
        for node in window.nodes() {
            node.lock.lock(owner);
        }
    }

    pub fn unlock_window(window: &SearchWindow<'_>, owner: Timestamp) {
        for node in window.nodes() {
            node.lock.unlock(owner);
        }
    }

    /// True when the locked window still brackets its key: both blue nodes
    /// are live and both predecessors still point at their successors.
    pub fn rv_validate(window: &SearchWindow<'_>) -> bool {
        !window.bp.is_marked()
            && !window.bc.is_marked()
            && window.bp.blue_is(window.bc)
            && window.rp.red_is(window.rc)
    }

    /// Structural insert into a locked, validated window. New nodes start
    /// out locked by `owner` and carry `versions`.
    pub fn insert_node<'a>(
        &'a self,
        window: &SearchWindow<'a>,
        key: Key,
        mode: InsertMode,
        owner: Timestamp,
        versions: VersionList,
    ) -> &'a Node {
        let SearchWindow { bp, bc, rp, rc } = *window;
        match mode {
            InsertMode::RedOnly | InsertMode::BlueAndRed => {
                assert!(rp.key < key && key < rc.key, "key {key} not bracketed by {window:?}");
                let blue = mode == InsertMode::BlueAndRed;
                let raw = Node::alloc(key, !blue, TxnLock::new_held(owner), versions);
                // SAFETY: freshly allocated; published below and owned by the list from then on.
                let node = unsafe { &*raw };
                node.set_red_next(rc);
                if blue {
                    assert!(bp.key < key && key < bc.key, "key {key} not bracketed by {window:?}");
                    node.set_blue_next(bc);
                    rp.set_red_next(node);
                    bp.set_blue_next(node);
                } else {
                    rp.set_red_next(node);
                }
                node
            }
            InsertMode::RelinkBlue => {
                assert_eq!(rc.key, key, "relink needs the existing node as rc");
                assert!(rc.is_marked(), "node {key} is already blue");
                assert!(bp.key < key && key < bc.key, "key {key} not bracketed by {window:?}");
                debug_assert!(versions.is_empty());
                rc.set_blue_next(bc);
                bp.set_blue_next(rc);
                rc.marked.store(false, Ordering::Release);
                rc
            }
        }
    }

    /// Logically deletes `bc`: marks it and unlinks it from the blue list.
    /// It stays on the red list.
    pub fn unlink_blue(window: &SearchWindow<'_>) {
        let SearchWindow { bp, bc, .. } = *window;
        assert!(!bc.is_sentinel(), "sentinels are never unlinked");
        assert!(bp.blue_is(bc), "window is not validated");
        bc.marked.store(true, Ordering::Release);
        let next = bc.blue_next().expect("blue node has a successor");
        bp.set_blue_next(next);
    }

    /// All nodes in red order, sentinels included.
    pub fn red_nodes(&self) -> Vec<&Node> {
        let mut out = vec![self.head()];
        let mut cur = self.head();
        while let Some(next) = cur.red_next() {
            out.push(next);
            cur = next;
        }
        out
    }

    /// All nodes in blue order, sentinels included.
    pub fn blue_nodes(&self) -> Vec<&Node> {
        let mut out = vec![self.head()];
        let mut cur = self.head();
        while let Some(next) = cur.blue_next() {
            out.push(next);
            cur = next;
        }
        out
    }

    /// User nodes in key order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> + '_ {
        self.red_nodes().into_iter().filter(|n| !n.is_sentinel())
    }

    /// Checks the structural invariants on a quiescent list; returns a
    /// description of the first violation.
    pub fn audit(&self) -> Result<(), String> {
        let red = self.red_nodes();
        let blue = self.blue_nodes();
        if red.first().map(|n| n.key) != Some(HEAD_KEY) || red.last().map(|n| n.key) != Some(TAIL_KEY) {
            return Err("red list is not bracketed by sentinels".into());
        }
        if let Some(pair) = red.windows(2).find(|w| w[0].key >= w[1].key) {
            return Err(format!("red keys not increasing at {} -> {}", pair[0].key, pair[1].key));
        }
        if red.iter().any(|n| n.is_sentinel() && n.is_marked()) {
            return Err("sentinel marked".into());
        }
        let unmarked: Vec<*const Node> = red
            .iter()
            .filter(|n| !n.is_marked())
            .map(|n| *n as *const Node)
            .collect();
        let blue_ptrs: Vec<*const Node> = blue.iter().map(|n| *n as *const Node).collect();
        if unmarked != blue_ptrs {
            return Err("blue list differs from the unmarked red subsequence".into());
        }
        Ok(())
    }
}

impl Drop for RbList {
    fn drop(&mut self) {
        let mut cur = self.head;
        while !cur.is_null() {
            // SAFETY: every node is on the red chain exactly once and nobody
            // else can observe the list while it drops.
            let boxed = unsafe { Box::from_raw(cur) };
            cur = boxed.red_next.load(Ordering::Relaxed);
        }
    }
}
