//! Serde adapters for the trace text conventions: every integer (and every
//! rational) travels as a decimal string, byte strings as `0x`-prefixed hex.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Scalars rendered through `Display` / parsed through `FromStr`.
pub mod dec {
    use super::*;

    pub fn serialize<T: Display, S: Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(value)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let raw = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        raw.parse::<T>()
            .map_err(|e| D::Error::custom(format!("invalid decimal {raw:?}: {e}")))
    }
}

/// Maps whose values are decimal strings.
pub mod dec_map {
    use super::*;

    pub fn serialize<K, V, S>(map: &BTreeMap<K, V>, s: S) -> Result<S::Ok, S::Error>
    where
        K: Serialize + Ord,
        V: Display,
        S: Serializer,
    {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(map.len()))?;
        for (k, v) in map {
            m.serialize_entry(k, &v.to_string())?;
        }
        m.end()
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: FromStr,
        V::Err: Display,
        D: Deserializer<'de>,
    {
        let raw = BTreeMap::<K, String>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                v.parse::<V>()
                    .map(|parsed| (k, parsed))
                    .map_err(|e| D::Error::custom(format!("invalid decimal {v:?}: {e}")))
            })
            .collect()
    }
}

/// Byte strings as `0x`-prefixed lowercase hex.
pub mod hex_bytes {
    use super::*;

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("0x{}", hex::encode(bytes)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let raw = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        let body = raw.strip_prefix("0x").unwrap_or(&raw);
        hex::decode(body).map_err(|e| D::Error::custom(format!("invalid hex input: {e}")))
    }
}

/// Parses a fixed-width `0x` hex string into an array.
pub(crate) fn parse_fixed_hex<const N: usize>(s: &str) -> Result<[u8; N], String> {
    let body = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .ok_or_else(|| format!("missing 0x prefix in {s:?}"))?;
    if body.len() != 2 * N {
        return Err(format!("expected {} hex digits, got {}", 2 * N, body.len()));
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(body, &mut out).map_err(|e| format!("invalid hex {s:?}: {e}"))?;
    Ok(out)
}

/// Optional scalars: decimal string or `null`.
pub mod opt_dec {
    use super::*;

    pub fn serialize<T: Display, S: Serializer>(value: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => s.collect_str(v),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<Option<T>, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let raw = Option::<String>::deserialize(d)?;
        raw.map(|r| {
            r.parse::<T>()
                .map_err(|e| D::Error::custom(format!("invalid decimal {r:?}: {e}")))
        })
        .transpose()
    }
}
