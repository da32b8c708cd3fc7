//! Canonical text encoding used for every hashed structure.
//!
//! Objects are emitted as compact JSON with keys sorted lexicographically and
//! no insignificant whitespace. Integers are decimal. Fractional quantities
//! are decimal strings in shortest round-trip form, so a value read back from
//! the ledger is bit-identical to the value that was written.

use alloc::format;
use alloc::string::String;

use serde::Serialize;

use crate::digest::Digest;

/// Serializes `value` canonically.
///
/// Panics only if `value` has a `Serialize` impl that produces non-string map
/// keys, which none of the crate's types do.
pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> String {
    // serde_json::Value objects are BTreeMap-backed, hence key-sorted.
    let tree = serde_json::to_value(value).expect("canonical form requires string map keys");
    serde_json::to_string(&tree).expect("serializing a JSON tree cannot fail")
}

pub fn digest_of<T: Serialize + ?Sized>(value: &T) -> Digest {
    Digest::of(to_canonical(value).as_bytes())
}

fn format_decimal(v: f64) -> String {
    format!("{v}")
}

fn parse_decimal(s: &str) -> Option<f64> {
    let v: f64 = s.parse().ok()?;
    (v.is_finite() && format_decimal(v) == s).then_some(v)
}

/// `#[serde(with = "decimal")]` for `f64` fields.
pub mod decimal {
    use super::*;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_decimal(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        parse_decimal(&s).ok_or_else(|| de::Error::custom("non-canonical decimal"))
    }
}

/// `#[serde(with = "decimal_opt")]` for `Option<f64>` fields.
pub mod decimal_opt {
    use super::*;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.serialize_some(&format_decimal(*v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<String>::deserialize(d)? {
            Some(s) => parse_decimal(&s)
                .map(Some)
                .ok_or_else(|| de::Error::custom("non-canonical decimal")),
            None => Ok(None),
        }
    }
}
