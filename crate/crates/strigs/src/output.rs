//! CSV emission. Floats are printed with 17 significant digits so outputs
//! are byte-stable across runs and round-trip through f64 exactly.

use crate::error::Result;
use std::fmt::Write as _;
use std::path::Path;

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = String::new();
        buf.push_str(&header.join(","));
        buf.push('\n');
        Self {
            buf,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns, "row width mismatch");
        let _ = writeln!(self.buf, "{}", cells.join(","));
    }

    pub fn into_string(self) -> String {
        self.buf
    }

    pub fn write(self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.buf)?;
        Ok(())
    }
}

pub fn cell(x: f64) -> String {
    fmt_f64(x)
}

pub fn cell_bool(b: bool) -> String {
    if b { "true".into() } else { "false".into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for &x in &[0.1, 1.0 / 3.0, 1e-30, 123456.789, -2.5e17] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }
}
