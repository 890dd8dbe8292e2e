//! Text formats for run artifacts. Every real number is written with 17
//! significant digits so files round-trip bit-exactly.

use std::fmt::Write as _;

use serde_json::Value;

/// `x` with 17 significant digits, positional for moderate magnitudes and
/// scientific otherwise.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    if x == 0.0 {
        return format!("{sign}0.{}", "0".repeat(16));
    }
    if !(-5..17).contains(&exp) {
        return sci;
    }
    if exp < 0 {
        format!("{sign}0.{}{digits}", "0".repeat((-exp - 1) as usize))
    } else {
        let split = exp as usize + 1;
        let (int, frac) = digits.split_at(split);
        if frac.is_empty() {
            format!("{sign}{int}.0")
        } else {
            format!("{sign}{int}.{frac}")
        }
    }
}

/// Pretty JSON with sorted object keys and floats through [`fmt17`].
/// Non-finite floats become `null`.
pub fn to_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = "  ".repeat(depth + 1);
    match v {
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => {
                let _ = write!(out, "{u}");
            }
            (_, Some(i), _) => {
                let _ = write!(out, "{i}");
            }
            (_, _, Some(f)) if f.is_finite() => out.push_str(&fmt17(f)),
            _ => out.push_str("null"),
        },
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad);
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(depth));
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*k], depth + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(depth));
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_eq!(fmt17(0.5), "0.50000000000000000");
        assert_eq!(fmt17(0.85), "0.84999999999999998");
        assert_eq!(fmt17(-2.0), "-2.0000000000000000");
        assert_eq!(fmt17(0.0), "0.0000000000000000");
        assert_eq!(fmt17(1e-7), "9.9999999999999995e-8");
        assert_eq!(fmt17(2f64.powi(-23)), "1.1920928955078125e-7");
        assert_eq!(fmt17(12345.0), "12345.000000000000");
    }

    #[test]
    fn json_sorts_keys_and_formats_floats() {
        let v = serde_json::json!({"b": 0.25, "a": [1, "x", null], "c": {}});
        assert_eq!(
            to_json(&v),
            "{\n  \"a\": [\n    1,\n    \"x\",\n    null\n  ],\n  \"b\": 0.25000000000000000,\n  \"c\": {}\n}\n"
        );
    }

    proptest! {
        #[test]
        fn roundtrips_bit_exactly(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            let s = fmt17(x);
            let digits = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count();
            prop_assert!(digits >= 17);
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
