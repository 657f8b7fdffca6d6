//! Atomic file output and fixed-precision CSV formatting.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Writes `bytes` to `dir/name` through a temporary file and rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(path)
}

pub fn write_json<S: Serialize>(dir: &Path, name: &str, value: &S) -> std::io::Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

/// 17 significant digits, round-trips every `f64` exactly.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// CSV table with a fixed header; every cell is numeric.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    body: String,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|s| s.as_ref().to_string()).collect(), body: String::new() }
    }

    pub fn row(&mut self, cells: &[f64]) {
        assert_eq!(cells.len(), self.header.len(), "row width differs from header");
        let line: Vec<String> = cells.iter().map(|&x| fmt_f64(x)).collect();
        self.body.push_str(&line.join(","));
        self.body.push('\n');
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", self.header.join(","), self.body)
    }

    pub fn write(&self, dir: &Path, name: &str) -> std::io::Result<PathBuf> {
        write_atomic(dir, name, self.to_csv().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, f64::MIN_POSITIVE, 0.35000000000000003] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn atomic_table_write() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["t", "x"]);
        t.row(&[0.0, 1.5]);
        t.row(&[0.1, -2.0]);
        let p = t.write(dir.path(), "a.csv").unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert_eq!(text, "t,x\n0.0000000000000000e0,1.5000000000000000e0\n1.0000000000000001e-1,-2.0000000000000000e0\n");
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }
}
