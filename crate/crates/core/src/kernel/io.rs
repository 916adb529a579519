//! Text format for kernels.
//!
//! ```text
//! order 2 dim 5
//! 1 2 2.5000000000000000e-1
//! 1 3 -1.0000000000000000e0
//! ```
//!
//! The header gives the order and dimension; each following line lists the
//! one-based indices of a key in increasing order, then its coefficient.
//! Coefficients are written with 17 significant digits, which round-trips
//! every `f64` exactly. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::Kernel;
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

impl Kernel {
    pub fn to_text(&self) -> String {
        let mut s = format!("order {} dim {}\n", self.order(), self.dim());
        for (key, v) in self.iter() {
            for k in key {
                write!(s, "{} ", k + 1).unwrap();
            }
            writeln!(s, "{v:.16e}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let (order, dim) = match h.as_slice() {
            ["order", p, "dim", n] => (
                p.parse::<usize>().map_err(|e| parse_err(hline, e.to_string()))?,
                n.parse::<usize>().map_err(|e| parse_err(hline, e.to_string()))?,
            ),
            _ => return Err(parse_err(hline, "expected `order P dim N`")),
        };
        let mut entries = Vec::new();
        for (ln, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != order + 1 {
                return Err(parse_err(ln, format!("expected {order} indices and a value")));
            }
            let mut key = Vec::with_capacity(order);
            for t in &toks[..order] {
                let i: usize = t.parse().map_err(|_| parse_err(ln, format!("bad index `{t}`")))?;
                if i == 0 || i > dim {
                    return Err(parse_err(ln, format!("index {i} outside 1..{dim}")));
                }
                key.push(i - 1);
            }
            if key.windows(2).any(|w| w[0] >= w[1]) {
                return Err(parse_err(ln, "indices must be strictly increasing"));
            }
            let v: f64 = toks[order]
                .parse()
                .map_err(|_| parse_err(ln, format!("bad coefficient `{}`", toks[order])))?;
            entries.push((key, v));
        }
        Kernel::from_entries(order, dim, entries)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
