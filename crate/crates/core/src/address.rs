use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Opaque wallet address: `0x` followed by 40 lowercase hex digits.
///
/// Ordering is lexicographic on the string, which for fixed-width hex is the
/// same as numeric order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(String);

impl Address {
    /// Deterministic address derived from a domain tag and a counter.
    pub fn derive(domain: &str, n: u64) -> Self {
        let mut h = Sha256::new();
        h.update(domain.as_bytes());
        h.update(n.to_le_bytes());
        let digest = h.finalize();
        let mut s = String::with_capacity(42);
        s.push_str("0x");
        for b in &digest[..20] {
            s.push_str(&format!("{b:02x}"));
        }
        Address(s)
    }

    /// Wraps any string; used for hand-written fixtures and tests.
    pub fn new(s: impl Into<String>) -> Self {
        Address(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Address {
    fn from(s: &str) -> Self {
        Address(s.to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_addresses_are_stable_and_distinct() {
        let a = Address::derive("owner", 1);
        assert_eq!(a, Address::derive("owner", 1));
        assert_ne!(a, Address::derive("owner", 2));
        assert_eq!(a.as_str().len(), 42);
        assert!(a.as_str().starts_with("0x"));
    }
}
