//! Decimal float formatting for the text file formats.

use sha2::{Digest, Sha256};

/// Significant digits for embedding vectors and scores (exact for `f32` payloads).
pub const VECTOR_DIGITS: usize = 9;
/// Significant digits for model parameters and transforms (exact for `f64`).
pub const PARAM_DIGITS: usize = 17;

/// Formats `x` rounded to `digits` significant digits as a JSON-compatible number.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    assert!(x.is_finite(), "cannot format non-finite value {x}");
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{:.*e}", digits - 1, x)
        .parse()
        .expect("rust float formatting round-trips");
    let a = rounded.abs();
    if (1e-5..1e16).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn fmt_list(values: impl IntoIterator<Item = f64>, digits: usize) -> String {
    let mut out = String::from("[");
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fmt_sig(v, digits));
    }
    out.push(']');
    out
}

/// Round-trips a JSON value through the fixed-precision formatter: every float
/// is rewritten with `digits` significant digits.
pub fn to_json_fixed(value: &serde_json::Value, digits: usize) -> String {
    let mut out = String::new();
    write_value(&mut out, value, digits);
    out
}

fn write_value(out: &mut String, value: &serde_json::Value, digits: usize) {
    use serde_json::Value;
    match value {
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&fmt_sig(n.as_f64().unwrap(), digits));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, v, digits);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push(':');
                write_value(out, v, digits);
            }
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

/// Hex SHA-256 of `bytes`, used as a configuration fingerprint.
pub fn config_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
