//! Function-table files for `decompose`.
//!
//! One value per line in atom order: line `a` (zero-based) holds the value at
//! the atom whose bit `k` is set exactly when coordinate `k + 1` equals `+1`.
//! The line count must be a power of two. Blank lines and `#` comments are
//! ignored.

use std::path::Path;

use rchaos_core::{Error, HypercubeFunction, Result};

pub fn function_from_text(text: &str) -> Result<HypercubeFunction> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        values.push(line.parse::<f64>().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("bad value {line:?}"),
        })?);
    }
    if values.is_empty() || !values.len().is_power_of_two() {
        return Err(Error::Input(format!(
            "a function table needs 2^N values, got {}",
            values.len()
        )));
    }
    HypercubeFunction::new(values.len().trailing_zeros() as usize, values)
}

pub fn read_function(path: impl AsRef<Path>) -> Result<HypercubeFunction> {
    function_from_text(&std::fs::read_to_string(path)?)
}

pub fn function_to_text(f: &HypercubeFunction) -> String {
    f.values().iter().map(|v| format!("{v:.16e}\n")).collect()
}
