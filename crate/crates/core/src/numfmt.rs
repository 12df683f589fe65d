//! `%g`-style float formatting and a JSON writer that prints doubles with
//! 17 significant digits.

use serde::Serialize;
use std::io;

/// Formats `v` like C's `%.{prec}g`: `prec` significant digits, trailing
/// zeros removed, scientific notation only for very small or large exponents.
pub fn fmt_g(v: f64, prec: usize) -> String {
    assert!(prec >= 1);
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", prec - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("rust exponent format");
    let exp: i32 = exp.parse().expect("rust exponent format");
    if exp < -5 || exp >= prec as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (prec as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Compact JSON formatter writing every `f64` with 17 significant digits,
/// enough to round-trip any IEEE double bit-exactly.
#[derive(Debug, Default, Clone, Copy)]
pub struct Digits17;

impl serde_json::ser::Formatter for Digits17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if !value.is_finite() {
            return writer.write_all(b"null");
        }
        writer.write_all(fmt_g(value, 17).as_bytes())
    }
}

/// Serializes `value` to a JSON string using [`Digits17`].
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_c_g_conventions() {
        assert_eq!(fmt_g(1.0, 12), "1");
        assert_eq!(fmt_g(0.1, 17), "0.10000000000000001");
        assert_eq!(fmt_g(-2.5, 12), "-2.5");
        assert_eq!(fmt_g(1e-7, 12), "1e-7");
        assert_eq!(fmt_g(123456789012345.0, 12), "1.23456789012e14");
        assert_eq!(fmt_g(0.000123, 12), "0.000123");
        assert_eq!(fmt_g(99999.99999999999, 6), "100000");
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for &v in &[0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-12, 6.02214076e23, -7.25] {
            let s = fmt_g(v, 17);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }
}
