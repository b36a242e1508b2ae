//! Canonical JSON encoding.
//!
//! Values are routed through `serde_json::Value`, whose object map keeps keys
//! sorted, then written without insignificant whitespace. Two values that are
//! structurally equal always encode to the same bytes.

use serde::Serialize;

pub fn to_canonical_value<T: Serialize>(value: &T) -> serde_json::Value {
    // Serializing our own types into a `Value` cannot fail: every map key is a string.
    serde_json::to_value(value).expect("value is representable as JSON")
}

pub fn to_canonical_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(&to_canonical_value(value)).expect("JSON value always serializes")
}

pub fn to_canonical_string<T: Serialize>(value: &T) -> String {
    String::from_utf8(to_canonical_bytes(value)).expect("serde_json emits UTF-8")
}

/// Pretty variant for humans; key order is still canonical.
pub fn to_canonical_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(&to_canonical_value(value)).expect("JSON value always serializes")
}
