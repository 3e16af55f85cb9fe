//! Minimal CSV emission shared by every table this crate writes.
//!
//! Floats use 17 significant digits in scientific notation so that every value
//! round-trips exactly; output is locale independent with LF line endings.

use std::io::{self, Write};

/// Formats a float with 17 significant digits. Non-finite values are written
/// as `nan`, `inf` or `-inf`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Writes one record; fields are not quoted and must not contain commas.
pub fn write_row<W: Write + ?Sized, S: AsRef<str>>(w: &mut W, fields: &[S]) -> io::Result<()> {
    let mut first = true;
    for f in fields {
        if !first {
            w.write_all(b",")?;
        }
        first = false;
        w.write_all(f.as_ref().as_bytes())?;
    }
    w.write_all(b"\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_roundtrip() {
        let v = 0.7 / 1.2;
        let s = fmt_f64(v);
        assert_eq!(s, "5.8333333333333337e-1");
        assert_eq!(s.parse::<f64>().unwrap(), v);
        assert_eq!(fmt_f64(0.0), "0.0000000000000000e0");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn rows_are_lf_terminated() {
        let mut buf = Vec::new();
        write_row(&mut buf, &["a", "b"]).unwrap();
        write_row(&mut buf, &[String::from("1")]).unwrap();
        assert_eq!(buf, b"a,b\n1\n");
    }
}
