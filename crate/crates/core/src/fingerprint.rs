//! Content fingerprints tying artifacts to the configuration that produced them.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// SHA-256 over the canonical (key-sorted, compact) JSON form of `value`.
pub fn fingerprint<T: Serialize + ?Sized>(value: &T) -> String {
    let canonical = serde_json::to_value(value).expect("serializable value");
    let bytes = serde_json::to_vec(&canonical).expect("serializable value");
    hex(&Sha256::digest(bytes))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Refuses a mismatch unless `force` is set.
pub fn check(what: &str, expected: &str, found: &str, force: bool) -> Result<()> {
    if expected == found || force {
        return Ok(());
    }
    Err(Error::FingerprintMismatch {
        what: what.to_string(),
        expected: expected.to_string(),
        found: found.to_string(),
    })
}
