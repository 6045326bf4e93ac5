//! CSV output for sweep results.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::SweepResult;
use crate::{Error, Result};

/// Header `axis,<column>,…` then one row per axis value. Numbers use 17
/// significant digits so parsing them back is exact. Lines end in `\n`.
pub fn render_csv(result: &SweepResult) -> Result<String> {
    for (name, values) in &result.columns {
        if name.contains([',', '\n', '\r', '"']) {
            return Err(Error::Config(format!(
                "column name '{name}' cannot be written to CSV"
            )));
        }
        if values.len() != result.axis_values.len() {
            return Err(Error::InvalidArgument(format!(
                "column '{name}' has {} values for {} axis points",
                values.len(),
                result.axis_values.len()
            )));
        }
    }
    let mut out = String::from("axis");
    for (name, _) in &result.columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, x) in result.axis_values.iter().enumerate() {
        write!(out, "{x:.16e}").expect("writing to a String cannot fail");
        for (_, values) in &result.columns {
            write!(out, ",{:.16e}", values[i]).expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_csv(result)?)?;
    Ok(())
}
