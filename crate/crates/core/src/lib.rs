//! Multi-version object-based software transactional memory over a hash table.
//!
//! Each bucket is a red-blue lazy list: red links reach every node ever
//! created, blue links reach only the keys currently present. Every node keeps
//! a list of timestamped versions, so read-only transactions never abort for
//! reading an old value. How many versions a node keeps is chosen by a
//! [`Policy`].
//!
//! ```
//! use mvostm::{Stm, StmConfig};
//!
//! let stm = Stm::new(StmConfig::default());
//! let mut t = stm.begin();
//! t.insert(7, 70).unwrap();
//! t.try_commit().unwrap();
//!
//! let mut r = stm.begin();
//! assert_eq!(r.lookup(7).unwrap(), Some(70));
//! ```

pub mod gc;
pub mod history;
pub mod list;
pub mod lock;
pub mod stm;
pub mod version;

pub type Key = u64;
pub type Value = u64;
pub type Timestamp = u64;

pub use stm::{LogRecord, Opn, Stm, StmConfig, Txn, TxnError, TxnStatus};
pub use version::Policy;
