use std::fmt::Write as _;

use super::{accuracy, ConfusionMatrix, EvalError, LatencyStats, Method, Percent};
use crate::pipeline::DetectorConfig;

pub const CSV_HEADER: &str = "method,tp,fp,fn,tn,accuracy,lat_min_ms,lat_mean_ms,lat_max_ms,lat_p99_ms";

/// `"<count> <tag> (<count/total>%)"`, e.g. `1057 TP (94.97%)`.
pub fn format_cell(count: u64, tag: &str, total: u64) -> String {
    format!("{count} {tag} ({}%)", Percent::of(count, total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    method: Method,
    matrix: ConfusionMatrix,
    accuracy: Percent,
    latency: Option<LatencyStats>,
}

impl MethodReport {
    pub fn new(method: Method, matrix: ConfusionMatrix, latency: Option<LatencyStats>) -> Result<Self, EvalError> {
        Ok(Self {
            method,
            accuracy: accuracy(&matrix)?,
            matrix,
            latency,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn matrix(&self) -> &ConfusionMatrix {
        &self.matrix
    }

    pub fn accuracy(&self) -> Percent {
        self.accuracy
    }

    pub fn latency(&self) -> Option<&LatencyStats> {
        self.latency.as_ref()
    }

    fn render_text(&self, out: &mut String) {
        let m = &self.matrix;
        let total = m.total();
        let cells = [
            [format_cell(m.tp, "TP", total), format_cell(m.fp, "FP", total)],
            [format_cell(m.fn_, "FN", total), format_cell(m.tn, "TN", total)],
        ];
        let w = cells.iter().flatten().map(String::len).max().unwrap_or(0).max(8);
        let label = format!("Predicted ({})", self.method.title());
        let lw = label.len().max(18);

        let _ = writeln!(out, "{:lw$}        {:w$}  {:w$}", "", "Ground truth", "");
        let _ = writeln!(
            out,
            "{:lw$}        {:<w$}  {:<w$}",
            "",
            m.actual_positive(),
            m.actual_negative()
        );
        let _ = writeln!(out, "{:lw$}        {:<w$}  {:<w$}", "", "Positive", "Negative");
        let _ = writeln!(
            out,
            "{label:lw$} {:>6} {:<w$}  {:<w$}",
            m.predicted_positive(),
            cells[0][0],
            cells[0][1]
        );
        let _ = writeln!(
            out,
            "{:lw$} {:>6} {:<w$}  {:<w$}",
            "",
            m.predicted_negative(),
            cells[1][0],
            cells[1][1]
        );
        let _ = writeln!(out, "Accuracy: {}%", self.accuracy);
        if let Some(l) = &self.latency {
            let _ = writeln!(
                out,
                "Latency (ms): min {:.3}  mean {:.3}  max {:.3}  p99 {:.3}  ({} frames)",
                l.min_ms, l.mean_ms, l.max_ms, l.p99_ms, l.samples
            );
        }
    }

    fn csv_row(&self) -> String {
        let m = &self.matrix;
        let lat = |f: fn(&LatencyStats) -> f64| {
            self.latency
                .as_ref()
                .map(|l| format!("{:.3}", f(l)))
                .unwrap_or_default()
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.method,
            m.tp,
            m.fp,
            m.fn_,
            m.tn,
            self.accuracy,
            lat(|l| l.min_ms),
            lat(|l| l.mean_ms),
            lat(|l| l.max_ms),
            lat(|l| l.p99_ms),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub config: DetectorConfig,
    pub methods: Vec<MethodReport>,
}

impl EvalReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Dataset: {}", self.dataset);
        let _ = writeln!(out, "Config:  {}", self.config);
        for m in &self.methods {
            out.push('\n');
            m.render_text(&mut out);
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for m in &self.methods {
            out.push_str(&m.csv_row());
            out.push('\n');
        }
        out
    }
}
