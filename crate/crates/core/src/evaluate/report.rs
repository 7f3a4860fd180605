//! Plain-text and JSON result tables in the layout of the ablation and
//! cross-dataset comparison tables.

use serde::{Deserialize, Serialize};

use super::{MetricSummary, SeedAggregate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Human-readable component list, e.g. `CNN + AUX + BiLSTM`.
    pub components: String,
    pub variant: String,
    pub aggregate: SeedAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub source: String,
    pub target: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub source: String,
    pub target: String,
    pub aggregate: SeedAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTable {
    pub variant: String,
    pub seeds: Vec<u64>,
    pub cells: Vec<TransferCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    MacroF1,
    Kappa,
}

impl Metric {
    pub fn title(self) -> &'static str {
        match self {
            Metric::Accuracy => "Acc",
            Metric::MacroF1 => "MF1",
            Metric::Kappa => "κ",
        }
    }

    pub fn of(self, agg: &SeedAggregate) -> MetricSummary {
        match self {
            Metric::Accuracy => agg.accuracy,
            Metric::MacroF1 => agg.macro_f1,
            Metric::Kappa => agg.kappa,
        }
    }
}

fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let width: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).chain([header[c].chars().count()]).max().unwrap())
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let pad = width[c] - s.chars().count();
                if c == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let rule = "-".repeat(width.iter().sum::<usize>() + 2 * (cols - 1));
    let mut out = vec![rule.clone(), line(header), rule.clone()];
    out.extend(rows.iter().map(|r| line(r)));
    out.push(rule);
    out.join("\n") + "\n"
}

impl AblationTable {
    pub fn render(&self) -> String {
        let header: Vec<String> = ["Components", "Acc", "MF1", "κ"].iter().map(|s| s.to_string()).collect();
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.components.clone(),
                    r.aggregate.accuracy.format(),
                    r.aggregate.macro_f1.format(),
                    r.aggregate.kappa.format(),
                ]
            })
            .collect();
        format!("{} -> {} (seeds {:?})\n{}", self.source, self.target, self.seeds, render(&header, &rows))
    }
}

impl TransferTable {
    /// Mean of the per-direction means.
    pub fn average(&self, metric: Metric) -> f64 {
        self.cells.iter().map(|c| metric.of(&c.aggregate).mean).sum::<f64>() / self.cells.len().max(1) as f64
    }

    /// One row, one column per direction plus `Avg`.
    pub fn render(&self, metric: Metric) -> String {
        let mut header = vec!["Method".to_string()];
        header.extend(self.cells.iter().map(|c| format!("{}→{}", c.source, c.target)));
        header.push("Avg".into());
        let mut row = vec![self.variant.clone()];
        row.extend(self.cells.iter().map(|c| metric.of(&c.aggregate).format()));
        row.push(format!("{:.2}", 100.0 * self.average(metric)));
        format!("{}\n{}", metric.title(), render(&header, &[row]))
    }
}
