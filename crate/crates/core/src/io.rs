//! Serialization helpers: JSON with 17 significant digits, CSV rows.

use serde::Serialize;
use serde_json::ser::Formatter;
use std::io::{self, Write};

/// Writes every float as `{:.16e}` (17 significant digits, round-trip
/// exact); non-finite floats become `null`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sig17Formatter;

impl Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17Formatter);
    value.serialize(&mut ser).expect("in-memory serialization");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// A float for CSV: shortest representation that round-trips, in
/// exponent form outside `[1e-4, 1e15)`.
pub fn csv_f64(v: f64) -> String {
    if v == 0.0 || (v.is_finite() && (1e-4..1e15).contains(&v.abs())) {
        format!("{v}")
    } else if v.is_finite() {
        format!("{v:e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Quote a CSV field when it contains a delimiter, quote or line break.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Join fields with commas and terminate with CRLF.
pub fn csv_row<S: AsRef<str>>(fields: &[S]) -> String {
    let mut line = fields
        .iter()
        .map(|f| csv_field(f.as_ref()))
        .collect::<Vec<_>>()
        .join(",");
    line.push_str("\r\n");
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        let s = to_json(&vec![0.1f64, -2.5, f64::INFINITY]);
        assert_eq!(s, "[1.0000000000000001e-1,-2.5000000000000000e0,null]\n");
        let back: Vec<Option<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[0], Some(0.1));
    }

    #[test]
    fn csv_floats_round_trip() {
        for v in [0.0, 0.5, 1.4628472785736254e-18, -3e20, 123.25] {
            assert_eq!(csv_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(csv_f64(1.5e-18), "1.5e-18");
        assert_eq!(csv_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_row(&["a", "b,c", "d\"e"]), "a,\"b,c\",\"d\"\"e\"\r\n");
    }
}
