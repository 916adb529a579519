//! CSV emission. Each file opens with one `# generated ...` line; everything
//! after it depends only on the configuration and seed.

use std::path::Path;

use rchaos_core::sampling::{Estimate, Stat};
use rchaos_core::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Value of `column` in row `i`.
    pub fn cell(&self, i: usize, column: &str) -> Option<&str> {
        let j = self.header.iter().position(|h| h == column)?;
        self.rows.get(i).map(|r| r[j].as_str())
    }

    /// CSV body without the timestamp line.
    pub fn body(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        std::fs::write(path, format!("# generated {stamp}\n{}", self.body()))?;
        Ok(())
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.10e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

/// Value and mode columns of a statistic.
pub fn stat(s: Stat) -> [String; 2] {
    [num(s.value()), s.mode()]
}

pub fn sampled(e: Estimate) -> [String; 2] {
    stat(Stat::Sampled(e))
}

pub fn exact(x: f64) -> [String; 2] {
    stat(Stat::Exact(x))
}
