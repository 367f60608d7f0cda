//! Machine-readable reports and their aligned text rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::metrics::Metrics;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub status: Status,
    /// Mean over the successful runs.
    pub metrics: Option<Metrics>,
    /// Single-label accuracy of each successful run, in seed order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_seed: Vec<f64>,
    /// Mean training loss of the last epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Mean wall-clock seconds per epoch. Kept out of the file so that
    /// repeated runs produce identical reports.
    #[serde(skip)]
    pub seconds_per_epoch: Option<f64>,
}

impl Row {
    pub fn ok(name: impl Into<String>, metrics: Metrics) -> Self {
        Self {
            name: name.into(),
            status: Status::Ok,
            metrics: Some(metrics),
            per_seed: Vec::new(),
            final_loss: None,
            error: None,
            seconds_per_epoch: None,
        }
    }

    pub fn failed(name: impl Into<String>, error: impl ToString) -> Self {
        Self {
            name: name.into(),
            status: Status::Failed,
            metrics: None,
            per_seed: Vec::new(),
            final_loss: None,
            error: Some(error.to_string()),
            seconds_per_epoch: None,
        }
    }

    /// Averages repeated runs `(metrics, final loss)`. Any failure marks the
    /// row failed; metrics still average whatever succeeded.
    pub fn from_runs(name: &str, runs: Vec<Result<(Metrics, f64)>>) -> Self {
        let mut ok = Vec::new();
        let mut error = None;
        for r in runs {
            match r {
                Ok(v) => ok.push(v),
                Err(e) => {
                    error.get_or_insert(e.to_string());
                }
            }
        }
        let metrics = mean_metrics(ok.iter().map(|(m, _)| m));
        let final_loss = (!ok.is_empty()).then(|| ok.iter().map(|(_, l)| l).sum::<f64>() / ok.len() as f64);
        Self {
            name: name.to_string(),
            status: if error.is_some() { Status::Failed } else { Status::Ok },
            metrics,
            per_seed: if ok.len() > 1 { ok.iter().map(|(m, _)| m.single_label_accuracy).collect() } else { Vec::new() },
            final_loss,
            error,
            seconds_per_epoch: None,
        }
    }
}

fn mean_metrics<'a>(runs: impl Iterator<Item = &'a Metrics>) -> Option<Metrics> {
    let runs: Vec<&Metrics> = runs.collect();
    if runs.is_empty() {
        return None;
    }
    let k = runs.len() as f64;
    let mean = |f: fn(&Metrics) -> f64| runs.iter().map(|m| f(m)).sum::<f64>() / k;
    Some(Metrics {
        single_label_accuracy: mean(|m| m.single_label_accuracy),
        exact_match: mean(|m| m.exact_match),
        micro_accuracy: mean(|m| m.micro_accuracy),
        path_consistency: mean(|m| m.path_consistency),
        examples: runs.iter().map(|m| m.examples).sum(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Subcommand that produced the report.
    pub kind: String,
    /// Echo of the configuration that produced it.
    pub config: serde_json::Value,
    pub rows: Vec<Row>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub margins: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(kind: &str, rows: Vec<Row>) -> Self {
        Self { kind: kind.to_string(), config: serde_json::Value::Null, rows, margins: BTreeMap::new() }
    }

    pub fn row(&self, name: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Aligned plain-text table. Timing columns appear only when asked for,
    /// since they differ between runs.
    pub fn to_table(&self, with_timing: bool) -> String {
        let mut header = vec!["variant", "status", "single", "exact", "micro", "path", "n"];
        if with_timing {
            header.push("s/epoch");
        }
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            let mut cells = vec![r.name.clone(), format!("{:?}", r.status).to_lowercase()];
            match &r.metrics {
                Some(m) => cells.extend([
                    pct(m.single_label_accuracy),
                    pct(m.exact_match),
                    pct(m.micro_accuracy),
                    pct(m.path_consistency),
                    m.examples.to_string(),
                ]),
                None => cells.extend(std::iter::repeat_n("-".to_string(), 5)),
            }
            if with_timing {
                cells.push(r.seconds_per_epoch.map_or("-".into(), |s| format!("{s:.3}")));
            }
            lines.push(cells);
        }
        let widths: Vec<usize> =
            (0..lines[0].len()).map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(c, s)| if c < 2 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        for (name, v) in &self.margins {
            let _ = writeln!(out, "margin {name}: {:+.2} points", 100.0 * v);
        }
        for r in self.rows.iter().filter(|r| r.error.is_some()) {
            let _ = writeln!(out, "{}: {}", r.name, r.error.as_deref().unwrap_or_default());
        }
        out
    }

    /// Writes `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        std::fs::write(dir.join("report.txt"), self.to_table(false))?;
        Ok(())
    }
}
