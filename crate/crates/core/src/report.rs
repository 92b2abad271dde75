//! Benchmark reports: per-dataset records, aggregates, persistence and charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Direction;
use crate::error::{Error, Result};
use crate::metrics;
use crate::trainer::{DirectionScore, Prediction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub method: String,
    pub repetition: u64,
    pub name: String,
    pub label: Direction,
    pub predicted: Prediction,
    pub s: f64,
    pub m_xy: f64,
    pub m_yx: f64,
    pub weight: f64,
    /// Seconds spent scoring this dataset; not part of the deterministic record.
    pub wall_time: f64,
}

impl DatasetRecord {
    pub fn new(method: &str, repetition: u64, name: &str, label: Direction, weight: f64, score: DirectionScore, wall_time: f64) -> Self {
        Self {
            method: method.to_string(),
            repetition,
            name: name.to_string(),
            label,
            predicted: score.predicted,
            s: score.s,
            m_xy: score.m_xy,
            m_yx: score.m_yx,
            weight,
            wall_time,
        }
    }

    pub fn correct(&self) -> bool {
        self.predicted.is_correct(self.label)
    }

    /// Canonical JSON line without timing.
    pub fn canonical_line(&self) -> String {
        serde_json::json!({
            "method": self.method,
            "repetition": self.repetition,
            "name": self.name,
            "label": self.label,
            "predicted": self.predicted,
            "s": self.s,
            "m_xy": self.m_xy,
            "m_yx": self.m_yx,
            "weight": self.weight,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub repetition: u64,
    pub n: usize,
    /// `None` when the test set holds a single class.
    pub auprc: Option<f64>,
    pub accuracy: f64,
    pub weighted_accuracy: f64,
    pub n_ties: usize,
    pub mean_wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub repetitions: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub auprc_mean: Option<f64>,
    pub auprc_std: Option<f64>,
    pub weighted_accuracy_mean: f64,
    pub weighted_accuracy_std: f64,
    pub n_ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub method: String,
    pub repetition: u64,
    pub fold: usize,
    pub member: usize,
    pub decoder_hidden: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub method: String,
    pub repetition: u64,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub records: Vec<DatasetRecord>,
    pub aggregates: Vec<Aggregate>,
    pub summary: Vec<MethodSummary>,
    pub training: Vec<TrainingSummary>,
    pub failures: Vec<FailureRecord>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => close(a, b),
        (None, None) => true,
        _ => false,
    }
}

/// Aggregates for each `(method, repetition)` group, in first-seen order.
pub fn aggregate(records: &[DatasetRecord]) -> Result<Vec<Aggregate>> {
    let mut order: Vec<(String, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, u64), Vec<&DatasetRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.method.clone(), r.repetition);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let correct: Vec<bool> = rs.iter().map(|r| r.correct()).collect();
            let weights: Vec<f64> = rs.iter().map(|r| r.weight).collect();
            let scores: Vec<(f64, bool)> = rs.iter().map(|r| (r.s, r.label == Direction::XToY)).collect();
            let auprc = match metrics::auprc(&scores) {
                Ok(v) => Some(v),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(Aggregate {
                method: key.0,
                repetition: key.1,
                n: rs.len(),
                auprc,
                accuracy: metrics::accuracy(&correct)?,
                weighted_accuracy: metrics::weighted_accuracy(&correct, &weights)?,
                n_ties: rs.iter().filter(|r| r.predicted == Prediction::Tie).count(),
                mean_wall_time: rs.iter().map(|r| r.wall_time).sum::<f64>() / rs.len() as f64,
            })
        })
        .collect()
}

pub fn summarize(aggregates: &[Aggregate]) -> Vec<MethodSummary> {
    let mut order: Vec<String> = Vec::new();
    for a in aggregates {
        if !order.contains(&a.method) {
            order.push(a.method.clone());
        }
    }
    order
        .into_iter()
        .map(|m| {
            let g: Vec<&Aggregate> = aggregates.iter().filter(|a| a.method == m).collect();
            let (am, asd) = metrics::mean_std(&g.iter().map(|a| a.accuracy).collect::<Vec<_>>());
            let (wm, wsd) = metrics::mean_std(&g.iter().map(|a| a.weighted_accuracy).collect::<Vec<_>>());
            let pr: Option<Vec<f64>> = g.iter().map(|a| a.auprc).collect();
            let (pm, psd) = match pr {
                Some(v) => {
                    let (a, b) = metrics::mean_std(&v);
                    (Some(a), Some(b))
                }
                None => (None, None),
            };
            MethodSummary {
                method: m,
                repetitions: g.len(),
                accuracy_mean: am,
                accuracy_std: asd,
                auprc_mean: pm,
                auprc_std: psd,
                weighted_accuracy_mean: wm,
                weighted_accuracy_std: wsd,
                n_ties: g.iter().map(|a| a.n_ties).sum(),
            }
        })
        .collect()
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const RECORDS_JSONL: &str = "records.jsonl";

impl BenchmarkReport {
    pub fn from_records(
        config: serde_json::Value,
        seeds: Vec<u64>,
        records: Vec<DatasetRecord>,
        training: Vec<TrainingSummary>,
        failures: Vec<FailureRecord>,
    ) -> Result<Self> {
        let aggregates = aggregate(&records)?;
        let summary = summarize(&aggregates);
        Ok(Self { config, seeds, records, aggregates, summary, training, failures })
    }

    /// Checks that stored aggregates match the ones recomputed from records.
    pub fn verify(&self) -> Result<()> {
        let fresh = aggregate(&self.records)?;
        let mismatch = || Error::Config("report aggregates do not match its records".into());
        if fresh.len() != self.aggregates.len() {
            return Err(mismatch());
        }
        for (a, b) in fresh.iter().zip(&self.aggregates) {
            let same = a.method == b.method
                && a.repetition == b.repetition
                && a.n == b.n
                && a.n_ties == b.n_ties
                && close(a.accuracy, b.accuracy)
                && close(a.weighted_accuracy, b.weighted_accuracy)
                && close_opt(a.auprc, b.auprc);
            if !same {
                return Err(mismatch());
            }
        }
        Ok(())
    }

    pub fn summary_for(&self, method: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    /// Per-dataset records as canonical JSON lines (timing omitted).
    pub fn canonical_records(&self) -> String {
        self.records.iter().map(|r| r.canonical_line() + "\n").collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<14} {:>4} {:>17} {:>17} {:>17} {:>5}", "method", "reps", "accuracy", "auprc", "weighted acc", "ties");
        for m in &self.summary {
            let pr = match (m.auprc_mean, m.auprc_std) {
                (Some(a), Some(b)) => format!("{a:.3} +- {b:.3}"),
                _ => "n/a".to_string(),
            };
            let _ = writeln!(
                s,
                "{:<14} {:>4} {:>17} {:>17} {:>17} {:>5}",
                m.method,
                m.repetitions,
                format!("{:.3} +- {:.3}", m.accuracy_mean, m.accuracy_std),
                pr,
                format!("{:.3} +- {:.3}", m.weighted_accuracy_mean, m.weighted_accuracy_std),
                m.n_ties
            );
        }
        let _ = writeln!(s, "\nper repetition");
        for a in &self.aggregates {
            let _ = writeln!(
                s,
                "{:<14} rep {:<20} n {:<4} acc {:.3}  auprc {}  wacc {:.3}  ties {}  mean time {:.4}s",
                a.method,
                a.repetition,
                a.n,
                a.accuracy,
                a.auprc.map_or("n/a".to_string(), |v| format!("{v:.3}")),
                a.weighted_accuracy,
                a.n_ties,
                a.mean_wall_time
            );
        }
        if !self.training.is_empty() {
            let _ = writeln!(s, "\ntraining (mean loss per dataset)");
            for t in &self.training {
                let _ = writeln!(
                    s,
                    "{:<14} rep {:<20} fold {} member {} h {:<3} initial {:.5} final {:.5}",
                    t.method, t.repetition, t.fold, t.member, t.decoder_hidden, t.initial_loss, t.final_loss
                );
            }
        }
        if !self.failures.is_empty() {
            let _ = writeln!(s, "\nfailures");
            for f in &self.failures {
                let _ = writeln!(s, "{} rep {} [{}]: {}", f.method, f.repetition, f.stage, f.message);
            }
        }
        s
    }

    /// Writes `report.json`, `report.txt` and `records.jsonl` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(REPORT_JSON), serde_json::to_string_pretty(self)?)?;
        std::fs::write(dir.join(REPORT_TXT), self.to_text())?;
        std::fs::write(dir.join(RECORDS_JSONL), self.canonical_records())?;
        Ok(())
    }

    /// Loads a report and verifies its aggregates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let report: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        report.verify()?;
        Ok(report)
    }

    /// PR curve per method (first repetition) and accuracy bars.
    pub fn write_plots(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("pr_curves.svg"), self.pr_svg())?;
        std::fs::write(dir.join("accuracy.svg"), self.accuracy_svg())?;
        Ok(())
    }

    fn pr_svg(&self) -> String {
        const COLORS: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];
        let (w, h, pad) = (420.0, 360.0, 40.0);
        let mut s = svg_header(w, h, "Precision-recall (first repetition)");
        axes(&mut s, w, h, pad, "recall", "precision");
        for (k, m) in self.summary.iter().enumerate() {
            let rs: Vec<&DatasetRecord> = self.records.iter().filter(|r| r.method == m.method).collect();
            let Some(rep) = rs.first().map(|r| r.repetition) else { continue };
            let scores: Vec<(f64, bool)> =
                rs.iter().filter(|r| r.repetition == rep).map(|r| (r.s, r.label == Direction::XToY)).collect();
            let pts = pr_points(&scores);
            if pts.is_empty() {
                continue;
            }
            let color = COLORS[k % COLORS.len()];
            let mut path = String::new();
            let (mut px, mut py) = (0.0, pts[0].1);
            for (i, &(r, p)) in pts.iter().enumerate() {
                let (x0, y0) = to_px(px, py, w, h, pad);
                let (x1, y1) = to_px(r, p, w, h, pad);
                let _ = write!(path, "{}{x0:.1},{y0:.1} L{x1:.1},{y0:.1} L{x1:.1},{y1:.1} ", if i == 0 { "M" } else { "L" });
                px = r;
                py = p;
            }
            let _ = writeln!(s, r#"<path d="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
                w - pad - 90.0,
                pad + 14.0 * (k as f64 + 1.0),
                m.method
            );
        }
        s.push_str("</svg>\n");
        s
    }

    fn accuracy_svg(&self) -> String {
        let n = self.summary.len().max(1) as f64;
        let (w, h, pad) = (60.0 + 70.0 * n, 320.0, 40.0);
        let mut s = svg_header(w, h, "Accuracy (mean +- std over repetitions)");
        axes(&mut s, w, h, pad, "", "accuracy");
        let bw = (w - 2.0 * pad) / n;
        for (k, m) in self.summary.iter().enumerate() {
            let x = pad + bw * k as f64 + bw * 0.15;
            let (_, top) = to_px(0.0, m.accuracy_mean, w, h, pad);
            let (_, base) = to_px(0.0, 0.0, w, h, pad);
            let _ = writeln!(
                s,
                r##"<rect x="{x:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="#4c72b0"/>"##,
                bw * 0.7,
                base - top
            );
            let (_, lo) = to_px(0.0, (m.accuracy_mean - m.accuracy_std).max(0.0), w, h, pad);
            let (_, hi) = to_px(0.0, (m.accuracy_mean + m.accuracy_std).min(1.0), w, h, pad);
            let cx = x + bw * 0.35;
            let _ = writeln!(s, r#"<line x1="{cx:.1}" y1="{lo:.1}" x2="{cx:.1}" y2="{hi:.1}" stroke="black"/>"#);
            let _ = writeln!(
                s,
                r#"<text x="{cx:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
                h - pad + 14.0,
                m.method
            );
        }
        let (_, half) = to_px(0.0, 0.5, w, h, pad);
        let _ = writeln!(
            s,
            r#"<line x1="{pad}" y1="{half:.1}" x2="{:.1}" y2="{half:.1}" stroke="gray" stroke-dasharray="4,3"/>"#,
            w - pad
        );
        s.push_str("</svg>\n");
        s
    }
}

/// `(recall, precision)` after each group of tied scores.
pub fn pr_points(scores: &[(f64, bool)]) -> Vec<(f64, f64)> {
    let positives = scores.iter().filter(|s| s.1).count();
    if positives == 0 {
        return Vec::new();
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut seen, mut i) = (0usize, 0usize, 0usize);
    let mut out = Vec::new();
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            tp += sorted[i].1 as usize;
            seen += 1;
            i += 1;
        }
        out.push((tp as f64 / positives as f64, tp as f64 / seen as f64));
    }
    out
}

fn svg_header(w: f64, h: f64, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"18\" font-size=\"13\" text-anchor=\"middle\">{title}</text>\n",
        w / 2.0
    )
}

fn to_px(x: f64, y: f64, w: f64, h: f64, pad: f64) -> (f64, f64) {
    (pad + x * (w - 2.0 * pad), h - pad - y * (h - 2.0 * pad))
}

fn axes(s: &mut String, w: f64, h: f64, pad: f64, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{0}" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    for t in [0.0, 0.5, 1.0] {
        let (_, y) = to_px(0.0, t, w, h, pad);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" font-size="10" text-anchor="end">{t:.1}</text>"#, pad - 4.0, y + 3.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{xlabel}</text>"#, w / 2.0, h - 6.0);
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" font-size="11" text-anchor="middle" transform="rotate(-90 12 {})">{ylabel}</text>"#,
        h / 2.0,
        h / 2.0
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(name: &str, label: Direction, s: f64) -> DatasetRecord {
        DatasetRecord::new("meta", 1, name, label, 1.0, DirectionScore::from_mmds(0.0, s), 0.0)
    }

    #[test]
    fn aggregates_recompute_and_detect_tampering() {
        let recs = vec![rec("a", Direction::XToY, 0.4), rec("b", Direction::YToX, 0.1), rec("c", Direction::YToX, -0.2)];
        let mut r = BenchmarkReport::from_records(serde_json::json!({}), vec![1], recs, vec![], vec![]).unwrap();
        r.verify().unwrap();
        assert!((r.aggregates[0].accuracy - 2.0 / 3.0).abs() < 1e-15);
        r.aggregates[0].accuracy = 1.0;
        assert!(r.verify().is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let recs = vec![rec("a", Direction::XToY, 0.4), rec("b", Direction::YToX, 0.1 + 0.2)];
        let r = BenchmarkReport::from_records(serde_json::json!({"k": 1}), vec![1], recs, vec![], vec![]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        r.save(dir.path()).unwrap();
        r.write_plots(dir.path()).unwrap();
        assert_eq!(BenchmarkReport::load(dir.path().join(REPORT_JSON)).unwrap(), r);
    }
}
