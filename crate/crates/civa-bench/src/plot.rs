//! Whitespace-delimited tables behind line plots, one per metric.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use civa::Variant;

use crate::report::{AggregateRow, Metric};

/// The table for one metric: a header comment, then one row per sweep value
/// with mean and std columns per variant. Missing values are written `nan`.
pub fn plot_table(rows: &[AggregateRow], metric: Metric) -> Result<String> {
    if rows.is_empty() {
        bail!("empty summary");
    }
    let mut variants: Vec<Variant> = Vec::new();
    let mut values: Vec<Option<usize>> = Vec::new();
    for r in rows {
        if !variants.contains(&r.variant) {
            variants.push(r.variant);
        }
        if !values.contains(&r.sweep_value) {
            values.push(r.sweep_value);
        }
    }
    let mut out = format!("# {} {}", rows[0].sweep_axis.name(), metric.name());
    for v in &variants {
        out.push_str(&format!(" {v}_mean {v}_std"));
    }
    out.push('\n');
    for value in values {
        out.push_str(&value.map_or_else(|| "0".to_string(), |v| v.to_string()));
        for v in &variants {
            let stat = rows
                .iter()
                .find(|r| r.sweep_value == value && r.variant == *v)
                .and_then(|r| r.stat(metric));
            match stat {
                Some(s) => out.push_str(&format!(" {} {}", s.mean, s.std)),
                None => out.push_str(" nan nan"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes `<metric>.dat` for every metric and returns the paths.
pub fn write_plot_data(rows: &[AggregateRow], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    Metric::ALL
        .into_iter()
        .map(|metric| {
            let path = dir.join(format!("{}.dat", metric.name()));
            fs::File::create(&path)?.write_all(plot_table(rows, metric)?.as_bytes())?;
            Ok(path)
        })
        .collect()
}
