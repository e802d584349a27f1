//! Report emission: a structured JSON document carrying the resolved
//! configuration and the metric statistics, plus an aligned-table rendering
//! with the Accuracy/Sensitivity/Specificity/AUC x Min/Average/Max/Std row
//! layout.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use fc_core::evaluation::MetricReport;

/// The persisted report: every constant the run depended on, echoed from
/// the resolved configuration, followed by the aggregated metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Resolved configuration (defaults filled in), serialized generically
    /// so pipeline and standalone-evaluate reports share one shape.
    pub config: serde_json::Value,
    pub metrics: MetricReport,
}

impl Report {
    pub fn new(config: impl Serialize, metrics: MetricReport) -> Result<Self> {
        Ok(Report {
            config: serde_json::to_value(config)?,
            metrics,
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Render the sixteen statistics in table order, two decimals, percent
/// units.
pub fn render_table(metrics: &MetricReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<12} {:<8} {:>8}\n", "Metric", "Stat", "Value"));
    for (name, stats) in [
        ("Accuracy", &metrics.accuracy),
        ("Sensitivity", &metrics.sensitivity),
        ("Specificity", &metrics.specificity),
        ("AUC", &metrics.auc),
    ] {
        for (stat, value) in [
            ("Min", stats.min),
            ("Average", stats.average),
            ("Max", stats.max),
            ("Std", stats.std),
        ] {
            out.push_str(&format!("{name:<12} {stat:<8} {value:>8.2}\n"));
        }
    }
    out
}
