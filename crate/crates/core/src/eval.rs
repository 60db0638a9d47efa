//! Confusion matrices, per-class metrics, paradigm ranking and reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::fusion::{argmax, predict, FusionModel};
use crate::nn::loss::one_hot_index;

/// Truth-by-prediction counts; row = true class, column = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(counts: Vec<Vec<u64>>, class_names: Vec<String>) -> Result<Self> {
        let c = class_names.len();
        if c == 0 || counts.len() != c || counts.iter().any(|r| r.len() != c) {
            return Err(Error::Shape(format!(
                "confusion matrix must be {c}x{c}, got {} rows",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { counts, class_names })
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Classes with no true samples.
    pub fn empty_rows(&self) -> Vec<bool> {
        self.row_totals().iter().map(|&t| t == 0).collect()
    }

    /// Rows divided by their totals; empty rows stay all-zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let t: u64 = row.iter().sum();
                row.iter()
                    .map(|&v| if t == 0 { 0.0 } else { v as f64 / t as f64 })
                    .collect()
            })
            .collect()
    }

    /// Per-class recall; classes with no true samples get 0.
    pub fn recalls(&self) -> Vec<f64> {
        self.row_normalized().iter().enumerate().map(|(c, r)| r[c]).collect()
    }

    pub fn one_vs_rest(&self, class: usize) -> OneVsRest {
        let tp = self.counts[class][class];
        let col: u64 = self.counts.iter().map(|r| r[class]).sum();
        let row: u64 = self.counts[class].iter().sum();
        let fp = col - tp;
        let fn_ = row - tp;
        OneVsRest {
            tp,
            fp,
            fn_,
            tn: self.total() - tp - fp - fn_,
        }
    }

    /// Counts followed by the row-normalised matrix, both with class headers.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let header = |s: &mut String, kind: &str| {
            s.push_str(kind);
            for n in &self.class_names {
                s.push(',');
                s.push_str(n);
            }
            s.push('\n');
        };
        header(&mut s, "counts");
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            s.push_str(name);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        header(&mut s, "row_normalized");
        for (name, row) in self.class_names.iter().zip(self.row_normalized()) {
            s.push_str(name);
            for v in row {
                let _ = write!(s, ",{v:.6}");
            }
            s.push('\n');
        }
        s
    }
}

/// Builds the confusion matrix of decision vectors against one-hot truths.
pub fn confusion_matrix(predictions: &[Vec<f32>], truths: &[Vec<f32>], class_names: Vec<String>) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::Dimension {
            op: "confusion_matrix",
            left: vec![predictions.len()],
            right: vec![truths.len()],
        });
    }
    if predictions.is_empty() {
        return Err(Error::invalid("confusion matrix needs at least one sample"));
    }
    let c = class_names.len();
    let mut counts = vec![vec![0u64; c]; c];
    for (p, t) in predictions.iter().zip(truths) {
        if p.len() != c || t.len() != c {
            return Err(Error::Dimension {
                op: "confusion_matrix",
                left: vec![p.len(), t.len()],
                right: vec![c],
            });
        }
        counts[one_hot_index(t)?][argmax(p)] += 1;
    }
    ConfusionMatrix::new(counts, class_names)
}

/// Runs `model` over `samples` and tallies its decisions.
pub fn evaluate(model: &FusionModel, samples: &[SamplePair], class_names: Vec<String>) -> Result<ConfusionMatrix> {
    let mut preds = Vec::with_capacity(samples.len());
    let mut truths = Vec::with_capacity(samples.len());
    for s in samples {
        preds.push(predict(model, s)?);
        truths.push(s.label.clone());
    }
    confusion_matrix(&preds, &truths, class_names)
}

/// One-vs-rest counts of a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneVsRest {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

fn ratio(num: u64, den: u64) -> Option<Ratio<u128>> {
    (den != 0).then(|| Ratio::new(num as u128, den as u128))
}

impl OneVsRest {
    pub fn accuracy(&self) -> Option<Ratio<u128>> {
        ratio(self.tp + self.tn, self.tp + self.fp + self.fn_ + self.tn)
    }

    pub fn precision(&self) -> Option<Ratio<u128>> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<Ratio<u128>> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall, as `2Tp / (2Tp + Fp + Fn)`.
    pub fn f1(&self) -> Option<Ratio<u128>> {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn to_f64(r: Ratio<u128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Metrics of one class. `None` marks a value whose denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    /// Diagonal of the row-normalised confusion matrix (equal to recall).
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// `(Tp + Tn) / total`, present when the table was computed from counts.
    pub one_vs_rest_accuracy: Option<f64>,
    pub counts: Option<OneVsRest>,
}

impl ClassMetrics {
    /// True when any reported metric is undefined.
    pub fn degenerate(&self) -> bool {
        [self.accuracy, self.precision, self.recall, self.f1].iter().any(Option::is_none)
    }

    /// The four reported values, undefined ones as 0.
    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1].map(|v| v.unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Averages {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub classes: Vec<ClassMetrics>,
}

impl MetricsTable {
    /// Unweighted class means; undefined values count as 0.
    pub fn averages(&self) -> Averages {
        let n = self.classes.len().max(1) as f64;
        let mut sum = [0.0; 4];
        for c in &self.classes {
            for (s, v) in sum.iter_mut().zip(c.values()) {
                *s += v;
            }
        }
        Averages {
            accuracy: sum[0] / n,
            precision: sum[1] / n,
            recall: sum[2] / n,
            f1: sum[3] / n,
        }
    }

    pub fn macro_f1(&self) -> f64 {
        self.averages().f1
    }

    /// Lowest per-class F1 and the class it belongs to.
    pub fn min_f1(&self) -> (f64, &str) {
        self.classes
            .iter()
            .map(|c| (c.f1.unwrap_or(0.0), c.class.as_str()))
            .fold((f64::INFINITY, ""), |best, x| if x.0 < best.0 { x } else { best })
    }
}

/// Per-class metrics computed exactly on counts, rounded only at the end.
pub fn metrics_from_cm(cm: &ConfusionMatrix) -> MetricsTable {
    let classes = (0..cm.classes())
        .map(|c| {
            let k = cm.one_vs_rest(c);
            let recall = k.recall().map(to_f64);
            ClassMetrics {
                class: cm.class_names[c].clone(),
                accuracy: recall,
                precision: k.precision().map(to_f64),
                recall,
                f1: k.f1().map(to_f64),
                one_vs_rest_accuracy: k.accuracy().map(to_f64),
                counts: Some(k),
            }
        })
        .collect();
    MetricsTable { classes }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Macro-F1 was strictly best.
    None,
    MinClassF1,
    Name,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub name: String,
    pub macro_f1: f64,
    pub min_f1: f64,
    pub min_f1_class: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParadigmReport {
    /// Tables in the order they were supplied.
    pub tables: Vec<(String, MetricsTable)>,
    /// Best first.
    pub ranking: Vec<RankedEntry>,
    /// How the winner was separated from the runner-up.
    pub tie_break: TieBreak,
}

/// Macro-F1 values closer than this are treated as tied.
pub const MACRO_F1_TIE: f64 = 1e-9;

impl ParadigmReport {
    pub fn winner(&self) -> &RankedEntry {
        &self.ranking[0]
    }

    /// Winner and runner-up agree on both macro-F1 and minimum class F1.
    pub fn exact_tie(&self) -> bool {
        self.tie_break == TieBreak::Name
    }

    pub fn table(&self, name: &str) -> Option<&MetricsTable> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn verdict(&self) -> String {
        let w = self.winner();
        let mut s = format!("verdict: {} (macro-F1 {:.4})", w.name, w.macro_f1);
        if let Some(r) = self.ranking.get(1) {
            match self.tie_break {
                TieBreak::None => {}
                TieBreak::MinClassF1 => {
                    let _ = write!(
                        s,
                        "; tied with {} on macro-F1, decided by minimum class F1 {:.4} ({}) vs {:.4} ({})",
                        r.name, w.min_f1, w.min_f1_class, r.min_f1, r.min_f1_class
                    );
                }
                TieBreak::Name => {
                    let _ = write!(s, "; exact tie with {}, decided by name", r.name);
                }
            }
        }
        s
    }
}

/// Ranks tables by macro-F1, then by minimum class F1, then by name.
pub fn compare_paradigms(tables: Vec<(String, MetricsTable)>) -> Result<ParadigmReport> {
    if tables.is_empty() {
        return Err(Error::invalid("nothing to compare"));
    }
    let mut ranking: Vec<RankedEntry> = tables
        .iter()
        .map(|(name, t)| {
            let (min_f1, cls) = t.min_f1();
            RankedEntry {
                name: name.clone(),
                macro_f1: t.macro_f1(),
                min_f1,
                min_f1_class: cls.to_string(),
            }
        })
        .collect();
    let f1_tied = |a: &RankedEntry, b: &RankedEntry| (a.macro_f1 - b.macro_f1).abs() <= MACRO_F1_TIE;
    ranking.sort_by(|a, b| {
        if f1_tied(a, b) {
            b.min_f1
                .total_cmp(&a.min_f1)
                .then_with(|| a.name.cmp(&b.name))
        } else {
            b.macro_f1.total_cmp(&a.macro_f1)
        }
    });
    let tie_break = match ranking.get(1) {
        Some(r) if f1_tied(&ranking[0], r) => {
            if ranking[0].min_f1 == r.min_f1 {
                TieBreak::Name
            } else {
                TieBreak::MinClassF1
            }
        }
        _ => TieBreak::None,
    };
    Ok(ParadigmReport {
        tables,
        ranking,
        tie_break,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
    Svg,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
            ReportFormat::Svg => "svg",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "svg" => Ok(ReportFormat::Svg),
            _ => Err(Error::invalid(format!("unknown report format '{s}' (csv, markdown, svg)"))),
        }
    }
}

const NA: &str = "n/a";
const CSV_HEADER: [&str; 6] = ["paradigm", "class", "accuracy", "precision", "recall", "f1"];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

fn parse_cell(s: &str, path: &Path, line: u64) -> Result<Option<f64>> {
    let s = s.trim();
    if s.eq_ignore_ascii_case(NA) {
        return Ok(None);
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| Error::format(path, format!("line {line}: '{s}' is not a number")))
}

/// Metrics tables as CSV rows; values use the shortest exact representation.
pub fn tables_to_csv(tables: &[(String, MetricsTable)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for (name, t) in tables {
        for c in &t.classes {
            w.write_record([
                name.clone(),
                c.class.clone(),
                cell(c.accuracy),
                cell(c.precision),
                cell(c.recall),
                cell(c.f1),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Parses CSV produced by [`tables_to_csv`] or written by hand in the same
/// layout. Rows whose class is `average` are ignored; averages are recomputed.
pub fn tables_from_csv(text: &str, path: &Path) -> Result<Vec<(String, MetricsTable)>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    if headers.iter().map(str::to_ascii_lowercase).ne(CSV_HEADER) {
        return Err(Error::format(
            path,
            format!("expected header '{}', found '{}'", CSV_HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out: Vec<(String, MetricsTable)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 6 {
            return Err(Error::format(path, format!("line {line}: expected 6 fields, found {}", rec.len())));
        }
        if rec[1].eq_ignore_ascii_case("average") {
            continue;
        }
        let v: Vec<Option<f64>> = (2..6).map(|i| parse_cell(&rec[i], path, line)).collect::<Result<_>>()?;
        if let Some(bad) = v.iter().flatten().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::format(path, format!("line {line}: metric {bad} outside [0, 1]")));
        }
        let m = ClassMetrics {
            class: rec[1].to_string(),
            accuracy: v[0],
            precision: v[1],
            recall: v[2],
            f1: v[3],
            one_vs_rest_accuracy: None,
            counts: None,
        };
        match out.iter_mut().find(|(n, _)| n == &rec[0]) {
            Some((_, t)) => t.classes.push(m),
            None => out.push((rec[0].to_string(), MetricsTable { classes: vec![m] })),
        }
    }
    if out.is_empty() {
        return Err(Error::format(path, "no metric rows"));
    }
    Ok(out)
}

fn md_cell(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| format!("{x:.2}"))
}

pub fn table_to_markdown(name: &str, t: &MetricsTable) -> String {
    let mut s = format!("### {name}\n\n| Class | Accuracy | Precision | Recall | F1 |\n|---|---|---|---|---|\n");
    for c in &t.classes {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} |",
            c.class,
            md_cell(c.accuracy),
            md_cell(c.precision),
            md_cell(c.recall),
            md_cell(c.f1)
        );
    }
    let a = t.averages();
    let _ = writeln!(
        s,
        "| **Average** | {:.2} | {:.2} | {:.2} | {:.2} |",
        a.accuracy, a.precision, a.recall, a.f1
    );
    s
}

pub fn report_to_markdown(report: &ParadigmReport) -> String {
    let mut s = String::from("# Paradigm comparison\n\n## Ranking\n\n| Rank | Paradigm | Macro-F1 | Min class F1 |\n|---|---|---|---|\n");
    for (i, r) in report.ranking.iter().enumerate() {
        let _ = writeln!(
            s,
            "| {} | {} | {:.4} | {:.4} ({}) |",
            i + 1,
            r.name,
            r.macro_f1,
            r.min_f1,
            r.min_f1_class
        );
    }
    let _ = writeln!(s, "\n{}\n\n## Metrics\n", report.verdict());
    for (name, t) in &report.tables {
        s.push_str(&table_to_markdown(name, t));
        s.push('\n');
    }
    s
}

const METRIC_NAMES: [&str; 4] = ["Accuracy", "Precision", "Recall", "F1"];
const PALETTE: [&str; 8] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#9c755f"];

/// Grouped bar chart: one block per paradigm, one bar group per metric,
/// one bar per class.
pub fn report_to_svg(report: &ParadigmReport) -> String {
    let classes = report.tables.iter().map(|(_, t)| t.classes.len()).max().unwrap_or(0);
    let (bar, gap, block_gap, plot_h, top, left) = (8.0, 10.0, 30.0, 200.0, 40.0, 50.0);
    let group_w = bar * classes as f64;
    let block_w = 4.0 * group_w + 3.0 * gap;
    let width = left + report.tables.len() as f64 * (block_w + block_gap) + 20.0;
    let height = top + plot_h + 90.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let y = top + plot_h * (1.0 - v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{v:.2}</text>"##,
            width - 20.0,
            left - 4.0,
            y + 3.0
        );
    }
    for (p, (name, t)) in report.tables.iter().enumerate() {
        let x0 = left + 10.0 + p as f64 * (block_w + block_gap);
        let _ = writeln!(s, r#"<g class="paradigm" data-paradigm="{}">"#, xml_escape(name));
        for (m, metric) in METRIC_NAMES.iter().enumerate() {
            let gx = x0 + m as f64 * (group_w + gap);
            let _ = writeln!(s, r#"<g class="bar-group" data-metric="{metric}">"#);
            for (c, cm) in t.classes.iter().enumerate() {
                let v = cm.values()[m].clamp(0.0, 1.0);
                let h = plot_h * v;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.3}" width="{bar}" height="{h:.3}" fill="{}"><title>{} {} {}: {v:.4}</title></rect>"#,
                    gx + c as f64 * bar,
                    top + plot_h - h,
                    PALETTE[c % PALETTE.len()],
                    xml_escape(name),
                    xml_escape(&cm.class),
                    metric
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text></g>"#,
                gx + group_w / 2.0,
                top + plot_h + 12.0,
                &metric[..metric.len().min(4)]
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle" font-weight="bold">{}</text></g>"#,
            x0 + block_w / 2.0,
            top + plot_h + 28.0,
            xml_escape(name)
        );
    }
    if let Some((_, t)) = report.tables.first() {
        for (c, cm) in t.classes.iter().enumerate() {
            let x = left + c as f64 * 90.0;
            let y = height - 30.0;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{y}">{}</text>"#,
                y - 9.0,
                PALETTE[c % PALETTE.len()],
                x + 14.0,
                xml_escape(&cm.class)
            );
        }
    }
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="12">{}</text>"#, xml_escape(&report.verdict()));
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_report(report: &ParadigmReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => tables_to_csv(&report.tables),
        ReportFormat::Markdown => report_to_markdown(report),
        ReportFormat::Svg => report_to_svg(report),
    }
}

pub fn emit_report(report: &ParadigmReport, format: ReportFormat, path: &Path) -> Result<()> {
    fs::write(path, render_report(report, format)).map_err(|e| Error::io(path, e))
}
