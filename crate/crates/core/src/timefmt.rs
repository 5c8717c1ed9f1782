//! Serde helper for simulated-time fields.
//!
//! Timestamps are written as plain JSON decimals with at least three
//! fractional digits (`1.500`, `0.0001234`). The digits come from the
//! shortest round-trip representation, so parsing the text back yields the
//! identical `f64`.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

/// Formats minutes with at least three fractional digits and no exponent.
pub fn format_minutes(t: f64) -> String {
    let mut s = format!("{t}");
    match s.find('.') {
        None => s.push_str(".000"),
        Some(dot) => {
            let frac = s.len() - dot - 1;
            for _ in frac..3 {
                s.push('0');
            }
        }
    }
    s
}

pub fn serialize<S: Serializer>(t: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    if !t.is_finite() {
        return Err(serde::ser::Error::custom("timestamp must be finite"));
    }
    let raw = RawValue::from_string(format_minutes(*t)).map_err(serde::ser::Error::custom)?;
    raw.serialize(serializer)
}

pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
    let t = f64::deserialize(deserializer)?;
    if t.is_finite() {
        Ok(t)
    } else {
        Err(D::Error::custom("timestamp must be finite"))
    }
}
