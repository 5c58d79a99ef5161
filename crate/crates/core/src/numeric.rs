//! Floating-point conventions shared by every module: pairwise summation,
//! comparison slack, and IEEE-754 hexadecimal float strings for reports.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Slack for equality assertions on averages of unit-modulus terms.
pub const EQ_TOL: f64 = 1e-9;

/// Slack used when a bias is compared against a uniformity threshold.
pub const CMP_SLACK: f64 = 1e-12;

const PAIRWISE_BLOCK: usize = 32;

/// Pairwise (tree) summation with a fixed split order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn pairwise_sum_complex(values: &[Complex64]) -> Complex64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum_complex(&values[..mid]) + pairwise_sum_complex(&values[mid..])
}

/// Pairwise mean of the mapped values over `0..len`.
pub fn pairwise_mean_by(len: usize, f: impl Fn(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, f: &dyn Fn(usize) -> f64) -> f64 {
        if hi - lo <= PAIRWISE_BLOCK {
            return (lo..hi).map(f).sum();
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    if len == 0 {
        return 0.0;
    }
    rec(0, len, &f) / len as f64
}

pub fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        pairwise_sum(values) / values.len() as f64
    }
}

/// Formats a float as a C99-style hexadecimal literal (`0x1.8p-2`).
///
/// The encoding is exact: [`parse_hex_f64`] recovers the same bits.
pub fn hex_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 && mantissa == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_bits == 0 {
        (0, -1022)
    } else {
        (1, exp_bits - 1023)
    };
    let mut frac = format!("{mantissa:013x}");
    while frac.ends_with('0') {
        frac.pop();
    }
    let frac = if frac.is_empty() {
        String::new()
    } else {
        format!(".{frac}")
    };
    let exp_sign = if exp >= 0 { "+" } else { "-" };
    format!("{sign}0x{lead}{frac}p{exp_sign}{}", exp.abs())
}

/// Parses the output of [`hex_f64`].
pub fn parse_hex_f64(s: &str) -> Result<f64> {
    let bad = || Error::Format(format!("not a hexadecimal float: {s:?}"));
    match s {
        "nan" => return Ok(f64::NAN),
        "inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let (negative, rest) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s),
    };
    let rest = rest.strip_prefix("0x").ok_or_else(bad)?;
    let (mant, exp) = rest.split_once('p').ok_or_else(bad)?;
    let exp: i64 = exp.parse().map_err(|_| bad())?;
    let (lead, frac) = match mant.split_once('.') {
        Some((l, f)) => (l, f),
        None => (mant, ""),
    };
    if frac.len() > 13 || !frac.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(bad());
    }
    let frac_bits = if frac.is_empty() {
        0
    } else {
        u64::from_str_radix(frac, 16).map_err(|_| bad())? << (4 * (13 - frac.len()))
    };
    let bits = match lead {
        "0" if frac_bits == 0 => 0,
        "0" => {
            if exp != -1022 {
                return Err(bad());
            }
            frac_bits
        }
        "1" => {
            let biased = exp + 1023;
            if !(1..=2046).contains(&biased) {
                return Err(bad());
            }
            ((biased as u64) << 52) | frac_bits
        }
        _ => return Err(bad()),
    };
    let sign = if negative { 1u64 << 63 } else { 0 };
    Ok(f64::from_bits(sign | bits))
}

/// Replaces every non-integer JSON number with its [`hex_f64`] string.
pub fn hexify(value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Number(n) if n.is_f64() => Value::String(hex_f64(n.as_f64().unwrap_or(f64::NAN))),
        Value::Array(items) => Value::Array(items.into_iter().map(hexify).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, hexify(v))).collect()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hex_examples() {
        assert_eq!(hex_f64(1.0), "0x1p+0");
        assert_eq!(hex_f64(0.25), "0x1p-2");
        assert_eq!(hex_f64(0.375), "0x1.8p-2");
        assert_eq!(hex_f64(-0.0), "-0x0p+0");
        assert_eq!(hex_f64(f64::MIN_POSITIVE / 2.0), "0x0.8p-1022");
    }

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-10);
        assert!((pairwise_mean_by(v.len(), |i| v[i]) - naive / 1000.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn hex_round_trips_bits(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(!x.is_nan());
            let back = parse_hex_f64(&hex_f64(x)).unwrap();
            prop_assert_eq!(back.to_bits(), bits);
        }
    }
}
