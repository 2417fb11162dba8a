//! Anonymous ciphertext-policy attribute-based encryption with hidden
//! AND-gate access policies, online/offline encryption for constrained
//! devices, and cloud-side policy update through blind access policies.
//!
//! Modules:
//!
//! * [`algebra`]  -- symmetric-pairing group abstraction and hash maps
//! * [`policy`]   -- attribute universe, lists, AND-gate policies
//! * [`scheme`]   -- the nine core algorithms (setup through decryption)
//! * [`payload`]  -- authenticated payload sealing keyed by group elements
//! * [`wire`]     -- canonical serialization and element-count measurement
//! * [`lifecycle`]-- policy deletion/addition/expiration over stored objects
//! * [`harness`]  -- multi-actor protocol harness with a file-backed store
//! * [`bench`]    -- counter-asserting benchmark grid
//! * [`metrics`]  -- group-operation counters behind all cost assertions

pub mod algebra;
pub mod bench;
pub mod error;
pub mod harness;
pub mod lifecycle;
pub mod metrics;
pub mod payload;
pub mod policy;
pub mod scheme;
pub mod wire;

pub use error::{Error, Result};
