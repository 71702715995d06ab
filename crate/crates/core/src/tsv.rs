//! Tab-separated report files: `#`-prefixed provenance and header lines, one
//! record per line.

use std::fmt::Display;
use std::io::{self, Write};

pub struct TsvWriter<W: Write> {
    out: W,
}

impl<W: Write> TsvWriter<W> {
    pub fn new(out: W) -> Self {
        TsvWriter { out }
    }

    /// A `# key=value ...` provenance line.
    pub fn provenance(&mut self, entries: &[(&str, String)]) -> io::Result<()> {
        let parts: Vec<String> = entries.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(self.out, "# {}", parts.join(" "))
    }

    /// The `#`-prefixed column header.
    pub fn header(&mut self, columns: &[&str]) -> io::Result<()> {
        writeln!(self.out, "#{}", columns.join("\t"))
    }

    pub fn row(&mut self, fields: &[&dyn Display]) -> io::Result<()> {
        let parts: Vec<String> = fields.iter().map(|f| f.to_string()).collect();
        writeln!(self.out, "{}", parts.join("\t"))
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Shortest round-trip representation of a real.
pub fn real(v: f64) -> String {
    format!("{v:?}")
}
