//! JSON output with fixed float formatting.
//!
//! Every finite `f64` is written with 17 significant digits in scientific
//! notation (`{:.16e}`), which round-trips exactly and keeps byte-identical
//! output across platforms. Non-finite values become `null`.

use std::io;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

struct Fixed17<F>(F);

fn write_fixed<W: ?Sized + io::Write>(writer: &mut W, value: f64) -> io::Result<()> {
    write!(writer, "{value:.16e}")
}

macro_rules! delegate_formatter {
    () => {
        fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
            write_fixed(writer, value)
        }

        fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
            write_fixed(writer, f64::from(value))
        }

        fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.begin_array(w)
        }

        fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.end_array(w)
        }

        fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
            self.0.begin_array_value(w, first)
        }

        fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.end_array_value(w)
        }

        fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.begin_object(w)
        }

        fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.end_object(w)
        }

        fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
            self.0.begin_object_key(w, first)
        }

        fn end_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.end_object_key(w)
        }

        fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.begin_object_value(w)
        }

        fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.end_object_value(w)
        }
    };
}

impl Formatter for Fixed17<CompactFormatter> {
    delegate_formatter!();
}

impl Formatter for Fixed17<PrettyFormatter<'_>> {
    delegate_formatter!();
}

/// Single-line JSON (used for JSONL records).
pub fn to_line<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Fixed17(CompactFormatter));
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// Indented JSON for reports.
pub fn to_pretty<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut out, Fixed17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(to_line(&0.1f64).unwrap(), "1.0000000000000001e-1");
        assert_eq!(to_line(&vec![1.0f64, -2.5]).unwrap(), "[1.0000000000000000e0,-2.5000000000000000e0]");
        assert_eq!(to_line(&f64::NAN).unwrap(), "null");
        let v: f64 = serde_json::from_str(&to_line(&(1.0f64 / 3.0)).unwrap()).unwrap();
        assert_eq!(v, 1.0 / 3.0);
    }

    #[test]
    fn integers_untouched() {
        #[derive(Serialize)]
        struct S {
            n: usize,
            x: f64,
        }
        assert_eq!(to_line(&S { n: 3, x: 2.0 }).unwrap(), r#"{"n":3,"x":2.0000000000000000e0}"#);
        assert!(to_pretty(&S { n: 3, x: 2.0 }).unwrap().contains("\n  \"n\": 3,"));
    }
}
