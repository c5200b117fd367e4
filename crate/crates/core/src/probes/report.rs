use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "task,feature_set,layer,metric,value,ci_low,ci_high";

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow {
    pub task: String,
    pub feature_set: String,
    /// Position on the per-layer axis, if the feature set has one.
    pub layer: Option<usize>,
    pub metric: String,
    pub value: f64,
    pub ci: Option<(f64, f64)>,
}

/// Probe results as CSV rows, preceded by `# key=value` metadata lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProbeReport {
    pub meta: Vec<(String, String)>,
    pub rows: Vec<ProbeRow>,
}

impl ProbeReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    /// Appends a row; non-finite values are rejected.
    pub fn push(&mut self, row: ProbeRow) -> Result<()> {
        let (lo, hi) = row.ci.unwrap_or((0.0, 0.0));
        if !(row.value.is_finite() && lo.is_finite() && hi.is_finite()) {
            return Err(Error::NumericFault {
                location: format!("{} {} {}", row.task, row.feature_set, row.metric),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extend(&mut self, other: ProbeReport) {
        self.meta.extend(other.meta);
        self.rows.extend(other.rows);
    }

    /// First row matching task, feature set and metric.
    pub fn find(&self, task: &str, feature_set: &str, metric: &str) -> Option<&ProbeRow> {
        self.rows
            .iter()
            .find(|r| r.task == task && r.feature_set == feature_set && r.metric == metric)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }
}

impl fmt::Display for ProbeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.meta {
            writeln!(f, "# {k}={v}")?;
        }
        writeln!(f, "{REPORT_HEADER}")?;
        for r in &self.rows {
            let layer = r.layer.map(|l| l.to_string()).unwrap_or_default();
            let (lo, hi) = r
                .ci
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .unwrap_or_default();
            writeln!(
                f,
                "{},{},{},{},{},{},{}",
                r.task, r.feature_set, layer, r.metric, r.value, lo, hi
            )?;
        }
        Ok(())
    }
}
