//! Deterministic JSON output.
//!
//! Floats are written with 17 significant digits in scientific notation so
//! that every value round-trips and two runs produce identical bytes;
//! non-finite values become `null`. Object keys come out sorted.

use std::io;

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

struct FixedFloats<'a>(PrettyFormatter<'a>);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.0.$name(writer $(, $arg)*)
            }
        )*
    };
}

impl Formatter for FixedFloats<'_> {
    delegate!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    );

    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Pretty-printed JSON with fixed float formatting and a trailing newline.
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloats(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("JSON is UTF-8")
}

/// Compact form of [`to_string`], used for hashing.
pub fn to_compact_string<T: Serialize + ?Sized>(value: &T) -> String {
    struct Compact;
    impl Formatter for Compact {
        fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
            if value.is_finite() {
                write!(writer, "{value:.16e}")
            } else {
                writer.write_all(b"null")
            }
        }
    }
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Compact);
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    String::from_utf8(out).expect("JSON is UTF-8")
}

/// `v` rounded to 12 significant digits.
pub fn round12(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { 0.0 } else { v };
    }
    format!("{v:.11e}").parse().expect("formatted float parses")
}

pub fn float(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

/// Row-major nested arrays.
pub fn matrix(m: &DMatrix<f64>) -> Value {
    Value::Array(m.row_iter().map(|row| Value::Array(row.iter().map(|&v| float(v)).collect())).collect())
}

/// Row-major nested arrays with entries rounded to 12 significant digits;
/// entries below `1e-12` times the largest one are written as zero.
pub fn matrix12(m: &DMatrix<f64>) -> Value {
    let floor = 1e-12 * m.amax();
    matrix(&m.map(|v| if v.abs() < floor { 0.0 } else { round12(v) }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_use_seventeen_digits() {
        let s = to_compact_string(&json!({"b": 0.1, "a": [1.0, -2.5e-300]}));
        assert_eq!(s, r#"{"a":[1.0000000000000000e0,-2.5000000000000000e-300],"b":1.0000000000000001e-1}"#);
    }

    #[test]
    fn non_finite_is_null() {
        assert_eq!(float(f64::NAN), Value::Null);
        assert_eq!(to_compact_string(&[f64::INFINITY]), "[null]");
    }

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round12(std::f64::consts::PI), 3.14159265359);
        assert_eq!(round12(-0.0), 0.0);
        assert_eq!(round12(1.23456789012345e-7), 1.23456789012e-7);
    }
}
