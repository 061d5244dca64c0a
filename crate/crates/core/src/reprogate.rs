//! Two-standard-deviation reproduction criterion.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{aggregate_runs, ScoreDistribution};
use crate::table::Table;

/// Slack for decimal values printed to three places.
const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproEntry {
    pub setting: String,
    pub model: String,
    pub metric: String,
    pub setup: String,
    pub original_mean: f64,
    pub repro: ScoreDistribution,
}

/// One grid cell as stored on disk: either the per-run values or their mean and std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproLine {
    pub setting: String,
    pub model: String,
    pub metric: String,
    pub setup: String,
    pub original_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repro_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repro_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repro_std: Option<f64>,
}

impl ReproLine {
    pub fn into_entry(self, index: usize) -> Result<ReproEntry> {
        let schema = |message: &str| Error::Schema {
            line: index + 1,
            message: message.to_string(),
        };
        let repro = match (self.repro_values, self.repro_mean, self.repro_std) {
            (Some(values), None, None) => aggregate_runs(&self.metric, &values)?,
            (None, Some(mean), Some(std)) if std >= 0.0 => ScoreDistribution {
                metric_name: self.metric.clone(),
                values: Vec::new(),
                mean,
                std,
            },
            (None, Some(_), Some(_)) => return Err(schema("negative repro_std")),
            _ => return Err(schema("give either repro_values or repro_mean with repro_std")),
        };
        Ok(ReproEntry {
            setting: self.setting,
            model: self.model,
            metric: self.metric,
            setup: self.setup,
            original_mean: self.original_mean,
            repro,
        })
    }
}

/// Reads a JSON array of [`ReproLine`]s; blank input means no entries.
pub fn parse_repro_entries(text: &str) -> Result<Vec<ReproEntry>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let lines: Vec<ReproLine> = serde_json::from_str(text)?;
    lines
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.into_entry(i))
        .collect()
}

/// Reproduced iff the original mean lies within two standard deviations of the
/// reproduced mean (inclusive); a zero std requires exact equality.
pub fn gate(entry: &ReproEntry) -> bool {
    let gap = (entry.original_mean - entry.repro.mean).abs();
    if entry.repro.std == 0.0 {
        gap == 0.0
    } else {
        gap <= 2.0 * entry.repro.std + ROUNDING_SLACK
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    #[serde(flatten)]
    pub entry: ReproEntry,
    pub gap: f64,
    pub reproduced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SuccessCount {
    pub reproduced: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReproReport {
    pub verdicts: Vec<Verdict>,
    /// Per-setting counts in first-appearance order.
    pub settings: IndexMap<String, SuccessCount>,
}

pub fn compare_table(entries: &[ReproEntry]) -> ReproReport {
    let mut report = ReproReport::default();
    for e in entries {
        let reproduced = gate(e);
        let count = report.settings.entry(e.setting.clone()).or_default();
        count.total += 1;
        count.reproduced += usize::from(reproduced);
        report.verdicts.push(Verdict {
            entry: e.clone(),
            gap: (e.original_mean - e.repro.mean).abs(),
            reproduced,
        });
    }
    report
}

impl ReproReport {
    /// Reproduced cells are marked with `*`.
    pub fn render(&self) -> String {
        let mut t = Table::new(["setting", "model", "metric", "setup", "orig", "repro (std)", ""]);
        for v in &self.verdicts {
            let e = &v.entry;
            t.row([
                e.setting.clone(),
                e.model.clone(),
                e.metric.clone(),
                e.setup.clone(),
                format!("{:.3}", e.original_mean),
                format!("{:.3} ({:.3})", e.repro.mean, e.repro.std),
                if v.reproduced { "*" } else { "" }.to_string(),
            ]);
        }
        let mut out = t.render();
        for (setting, c) in &self.settings {
            out.push_str(&format!("{setting}: {}/{} reproduced\n", c.reproduced, c.total));
        }
        out
    }
}
