//! Bit-stable JSON (every float with 17 significant digits, non-finite as
//! null), configuration hashing and LF-terminated CSV tables.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Pretty JSON with floats written as `{:.16e}`.
struct StableFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for StableFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Compact variant, used for hashing.
struct CompactStable;

impl Formatter for CompactStable {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
}

fn encode<T: Serialize + ?Sized, F: Formatter>(value: &T, fmt: F) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser).map_err(|e| Error::Config(format!("JSON encoding failed: {e}")))?;
    Ok(buf)
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut bytes = encode(value, StableFormatter(PrettyFormatter::with_indent(b"  ")))?;
    bytes.push(b'\n');
    Ok(String::from_utf8(bytes).expect("serde_json emits UTF-8"))
}

pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(String::from_utf8(encode(value, CompactStable)?).expect("serde_json emits UTF-8"))
}

/// SHA-256 (hex) of the canonical JSON of `value`.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let digest = Sha256::digest(to_canonical_json(value)?.as_bytes());
    Ok(format!("{digest:x}"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

/// Float cell with the same 17-digit convention as the JSON output.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

/// Writes a header and rows, comma separated, LF line endings.
pub fn write_csv<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let bad = |e: csv::Error| Error::Config(format!("CSV write failed: {e}"));
    w.write_record(header).map_err(bad)?;
    for r in rows {
        w.write_record(r).map_err(bad)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_csv(std::fs::File::create(path)?, header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Serialize;

    #[derive(Serialize)]
    struct Sample {
        a: f64,
        b: Vec<f64>,
        c: Option<f64>,
    }

    #[test]
    fn floats_have_seventeen_digits_and_nan_is_null() {
        let s = to_json(&Sample { a: 0.1, b: vec![1.0, f64::NAN], c: None }).unwrap();
        assert!(s.contains("1.0000000000000001e-1"));
        assert!(s.contains("1.0000000000000000e0"));
        assert!(s.contains("null"));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"].as_f64(), Some(0.1));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&Sample { a: 0.25, b: vec![], c: Some(1.0) }).unwrap();
        let b = config_hash(&Sample { a: 0.25, b: vec![], c: Some(1.0) }).unwrap();
        let c = config_hash(&Sample { a: 0.25000000000000006, b: vec![], c: Some(1.0) }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn csv_uses_lf() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &["n", "x"], &[vec!["1".into(), num(0.5)]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n,x\n1,5.0000000000000000e-1\n");
    }
}
