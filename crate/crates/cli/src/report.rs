//! Run reports: stage counts, accuracy tables and dataset statistics,
//! rendered as JSON and as aligned text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use crate::io::write_json;

/// Items entering and leaving one stage. Every dropped item is attributed
/// to exactly one reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub stage: String,
    pub input: usize,
    pub output: usize,
    pub dropped: BTreeMap<String, usize>,
}

impl StageCounts {
    pub fn new(stage: impl Into<String>, input: usize, output: usize) -> Self {
        StageCounts {
            stage: stage.into(),
            input,
            output,
            dropped: BTreeMap::new(),
        }
    }

    pub fn drop(mut self, reason: impl Into<String>, count: usize) -> Self {
        *self.dropped.entry(reason.into()).or_default() += count;
        self
    }

    pub fn is_consistent(&self) -> bool {
        self.input == self.output + self.dropped.values().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub dataset: String,
    pub scorer: String,
    pub mode: String,
    pub items: usize,
    pub malformed: usize,
    pub accuracy: Option<f64>,
    pub majority: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub dataset: String,
    pub items: usize,
    pub malformed: usize,
    /// Option count → items.
    pub option_histogram: BTreeMap<usize, usize>,
    pub relations: BTreeMap<String, usize>,
    /// Mean question length in tokens.
    pub mean_question_tokens: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageCounts>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub accuracy: Vec<AccuracyRow>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub datasets: Vec<DatasetStats>,
    /// Wall clock per stage; shown on the terminal, never written to disk.
    #[serde(skip)]
    pub timings: Vec<(String, Duration)>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        RunReport {
            command: command.into(),
            ..Default::default()
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageCounts> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn is_consistent(&self) -> bool {
        self.stages.iter().all(StageCounts::is_consistent)
    }

    /// Writes `report.json` and `report.txt` (both without timings).
    pub fn write(&self, dir: &Path) -> Result<()> {
        debug_assert!(self.is_consistent(), "inconsistent stage counts: {:?}", self.stages);
        write_json(&dir.join("report.json"), self)?;
        std::fs::write(dir.join("report.txt"), self.render(false))?;
        Ok(())
    }

    pub fn render(&self, with_timings: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "== {} ==", self.command);
        if !self.stages.is_empty() {
            let rows = self
                .stages
                .iter()
                .map(|s| {
                    let dropped = if s.dropped.is_empty() {
                        "-".to_string()
                    } else {
                        s.dropped.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
                    };
                    vec![s.stage.clone(), s.input.to_string(), s.output.to_string(), dropped]
                })
                .collect::<Vec<_>>();
            out.push_str(&table(&["stage", "in", "out", "dropped"], &rows));
        }
        if !self.accuracy.is_empty() {
            let rows = self
                .accuracy
                .iter()
                .map(|r| {
                    vec![
                        r.dataset.clone(),
                        r.scorer.clone(),
                        r.mode.clone(),
                        r.items.to_string(),
                        r.malformed.to_string(),
                        r.accuracy.map_or("-".into(), |a| format!("{:.3}", a)),
                        format!("{:.3}", r.majority),
                    ]
                })
                .collect::<Vec<_>>();
            out.push_str(&table(
                &["dataset", "scorer", "mode", "items", "skipped", "accuracy", "majority"],
                &rows,
            ));
        }
        if !self.datasets.is_empty() {
            let rows = self
                .datasets
                .iter()
                .map(|d| {
                    let hist = d.option_histogram.iter().map(|(k, v)| format!("{k}:{v}")).collect::<Vec<_>>().join(" ");
                    let rels = d.relations.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
                    vec![
                        d.dataset.clone(),
                        d.items.to_string(),
                        d.malformed.to_string(),
                        format!("{:.2}", d.mean_question_tokens),
                        if hist.is_empty() { "-".into() } else { hist },
                        if rels.is_empty() { "-".into() } else { rels },
                    ]
                })
                .collect::<Vec<_>>();
            out.push_str(&table(
                &["dataset", "items", "skipped", "mean q len", "options", "relations"],
                &rows,
            ));
        }
        if !self.metrics.is_empty() {
            let rows = self
                .metrics
                .iter()
                .map(|(k, v)| vec![k.clone(), format!("{v:.4}")])
                .collect::<Vec<_>>();
            out.push_str(&table(&["metric", "value"], &rows));
        }
        if with_timings && !self.timings.is_empty() {
            let rows = self
                .timings
                .iter()
                .map(|(k, d)| vec![k.clone(), format!("{:.3}", d.as_secs_f64())])
                .collect::<Vec<_>>();
            out.push_str(&table(&["stage", "seconds"], &rows));
        }
        out
    }
}

/// Left-aligned columns padded to the widest cell, numbers right-aligned.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let numeric = |s: &str| !s.is_empty() && s.parse::<f64>().is_ok();
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if numeric(cell) {
                let _ = write!(s, "{cell:>w$}");
            } else {
                let _ = write!(s, "{cell:<w$}");
            }
        }
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(headers.to_vec());
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&line(rule.iter().map(String::as_str).collect()));
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_consistency() {
        let s = StageCounts::new("gen", 10, 7).drop("ne", 2).drop("rare", 1);
        assert!(s.is_consistent());
        assert!(!StageCounts::new("gen", 10, 7).drop("ne", 2).is_consistent());
    }

    #[test]
    fn table_alignment() {
        let t = table(&["name", "n"], &[vec!["a".into(), "10".into()], vec!["long".into(), "2".into()]]);
        assert_eq!(t, "name  n\n----  --\na     10\nlong   2\n\n");
    }

    #[test]
    fn render_skips_timings_when_asked() {
        let mut r = RunReport::new("x");
        r.stages.push(StageCounts::new("s", 1, 1));
        r.timings.push(("s".into(), Duration::from_millis(5)));
        assert!(!r.render(false).contains("seconds"));
        assert!(r.render(true).contains("seconds"));
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("timings"));
    }
}
