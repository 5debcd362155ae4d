//! Confusion matrices, per-label precision/recall/F1, the macro "All" row, and
//! inter-annotator agreement.
//!
//! Zero-division cases (a label never predicted, never gold) score 0 rather
//! than being undefined, so averaging across domains is always total.

mod agreement;

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Example, RiskDomain, SentimentLabel};

pub use agreement::{
    cohen_kappa, fleiss_kappa, multi_rater_agreement, parse_annotation_matrix, scott_pi,
    AgreementReport, AnnotationMatrix, PairwiseAgreement,
};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("gold and predicted label lists differ in length ({golds} vs {preds})")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("cannot score an empty label list")]
    Empty,
    #[error("macro average needs exactly 7 domain rows, got {0}")]
    RowCount(usize),
    #[error("no scored annotations for domain {0}")]
    MissingDomain(RiskDomain),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("annotation matrix needs at least {0}")]
    TooSmall(&'static str),
}

/// Rows are gold labels, columns predicted labels, both in
/// positive/negative/neutral order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn add(&mut self, gold: SentimentLabel, pred: SentimentLabel) {
        self.counts[gold.index()][pred.index()] += 1;
    }

    pub fn get(&self, gold: SentimentLabel, pred: SentimentLabel) -> u64 {
        self.counts[gold.index()][pred.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn confusion(golds: &[SentimentLabel], preds: &[SentimentLabel]) -> Result<ConfusionMatrix, MetricsError> {
    if golds.len() != preds.len() {
        return Err(MetricsError::LengthMismatch { golds: golds.len(), preds: preds.len() });
    }
    if golds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut m = ConfusionMatrix::default();
    for (&g, &p) in golds.iter().zip(preds) {
        m.add(g, p);
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Builds a triple from precision and recall, deriving F1.
    pub fn from_pr(precision: f64, recall: f64) -> Prf {
        Prf { precision, recall, f1: f1_score(precision, recall) }
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn prf(m: &ConfusionMatrix, label: SentimentLabel) -> Prf {
    let c = label.index();
    let tp = m.counts[c][c];
    let predicted: u64 = (0..3).map(|g| m.counts[g][c]).sum();
    let gold: u64 = m.counts[c].iter().sum();
    Prf::from_pr(ratio(tp, predicted), ratio(tp, gold))
}

/// Precision/recall/F1 for each of the three labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrfRow {
    pub positive: Prf,
    pub negative: Prf,
    pub neutral: Prf,
}

impl PrfRow {
    pub fn from_confusion(m: &ConfusionMatrix) -> PrfRow {
        PrfRow {
            positive: prf(m, SentimentLabel::Positive),
            negative: prf(m, SentimentLabel::Negative),
            neutral: prf(m, SentimentLabel::Neutral),
        }
    }

    pub fn get(&self, label: SentimentLabel) -> Prf {
        match label {
            SentimentLabel::Positive => self.positive,
            SentimentLabel::Negative => self.negative,
            SentimentLabel::Neutral => self.neutral,
        }
    }

    /// Pos P, Pos R, Pos F1, Neg P, ..., Neu F1.
    pub fn to_array(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for (i, l) in SentimentLabel::ALL.into_iter().enumerate() {
            let p = self.get(l);
            out[3 * i] = p.precision;
            out[3 * i + 1] = p.recall;
            out[3 * i + 2] = p.f1;
        }
        out
    }

    /// Inverse of [`to_array`](Self::to_array); F1 values are taken as given.
    pub fn from_array(v: [f64; 9]) -> PrfRow {
        let prf = |i: usize| Prf { precision: v[i], recall: v[i + 1], f1: v[i + 2] };
        PrfRow { positive: prf(0), negative: prf(3), neutral: prf(6) }
    }

    /// Mean F1 over the three labels.
    pub fn macro_f1(&self) -> f64 {
        (self.positive.f1 + self.negative.f1 + self.neutral.f1) / 3.0
    }
}

/// Per-metric arithmetic mean over the seven domain rows. Each of the nine
/// columns is averaged independently; the resulting F1 is the mean of F1s,
/// not the harmonic mean of the averaged precision and recall.
pub fn macro_all(rows: &[PrfRow]) -> Result<PrfRow, MetricsError> {
    if rows.len() != RiskDomain::ALL.len() {
        return Err(MetricsError::RowCount(rows.len()));
    }
    let mut sum = [0.0; 9];
    for r in rows {
        for (s, v) in sum.iter_mut().zip(r.to_array()) {
            *s += v;
        }
    }
    Ok(PrfRow::from_array(sum.map(|s| s / rows.len() as f64)))
}

/// Per-domain rows plus the macro "All" row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub domains: BTreeMap<RiskDomain, PrfRow>,
    pub all: PrfRow,
    /// Scored annotations per domain.
    #[serde(default)]
    pub support: BTreeMap<RiskDomain, u64>,
}

const TSV_HEADER: &str = "pos_p\tpos_r\tpos_f1\tneg_p\tneg_r\tneg_f1\tneu_p\tneu_r\tneu_f1";

impl EvalReport {
    pub fn from_rows(model: Option<String>, rows: BTreeMap<RiskDomain, PrfRow>) -> Result<Self, MetricsError> {
        if let Some(d) = RiskDomain::ALL.into_iter().find(|d| !rows.contains_key(d)) {
            return Err(MetricsError::MissingDomain(d));
        }
        let ordered: Vec<PrfRow> = RiskDomain::ALL.iter().map(|d| rows[d]).collect();
        let all = macro_all(&ordered)?;
        Ok(EvalReport { model, domains: rows, all, support: BTreeMap::new() })
    }

    pub fn from_confusions(
        model: Option<String>,
        matrices: &BTreeMap<RiskDomain, ConfusionMatrix>,
    ) -> Result<Self, MetricsError> {
        if let Some(d) = RiskDomain::ALL
            .into_iter()
            .find(|d| matrices.get(d).is_none_or(|m| m.total() == 0))
        {
            return Err(MetricsError::MissingDomain(d));
        }
        let rows = matrices.iter().map(|(&d, m)| (d, PrfRow::from_confusion(m))).collect();
        let mut report = Self::from_rows(model, rows)?;
        report.support = matrices.iter().map(|(&d, m)| (d, m.total())).collect();
        Ok(report)
    }

    /// Full-precision JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Domain rows then `all`, three decimals, Pos/Neg/Neu P-R-F1 column order.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("domain\t{TSV_HEADER}\n");
        let fmt_row = |name: &str, r: &PrfRow| {
            let cells: Vec<String> = r.to_array().iter().map(|v| format!("{v:.3}")).collect();
            format!("{name}\t{}\n", cells.join("\t"))
        };
        for (d, r) in &self.domains {
            out.push_str(&fmt_row(d.as_str(), r));
        }
        out.push_str(&fmt_row("all", &self.all));
        out
    }
}

/// Reads per-domain rows (`domain` then nine metrics in column order). A
/// header line starting with `domain` and an `all` row are both skipped.
pub fn parse_rows_tsv<R: BufRead>(reader: R) -> Result<BTreeMap<RiskDomain, PrfRow>, MetricsError> {
    let mut rows = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| MetricsError::Parse { line: line_no, message: e.to_string() })?;
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        if line.trim().is_empty() || cells[0] == "domain" || cells[0] == "all" {
            continue;
        }
        let err = |message: String| MetricsError::Parse { line: line_no, message };
        let domain: RiskDomain = cells[0].parse().map_err(|e: crate::corpus::UnknownToken| err(e.to_string()))?;
        if cells.len() != 10 {
            return Err(err(format!("expected domain plus 9 metrics, got {} cells", cells.len())));
        }
        let mut v = [0.0; 9];
        for (slot, c) in v.iter_mut().zip(&cells[1..]) {
            *slot = c.parse().map_err(|_| err(format!("`{c}` is not a number")))?;
        }
        if rows.insert(domain, PrfRow::from_array(v)).is_some() {
            return Err(err(format!("domain {domain} listed twice")));
        }
    }
    Ok(rows)
}

/// Reference per-domain lexicon-baseline rows shipped with the crate.
pub const REFERENCE_BASELINE_ROWS: &str = include_str!("../../data/table4_baseline_rows.tsv");

/// Tallies one confusion matrix per domain over every (example, domain)
/// annotation. `predict` is called once per example and must return a label
/// for each of its annotated domains.
pub fn tally_by_domain<'a, I, F, E>(examples: I, mut predict: F) -> Result<BTreeMap<RiskDomain, ConfusionMatrix>, E>
where
    I: IntoIterator<Item = &'a Example>,
    F: FnMut(&Example) -> Result<BTreeMap<RiskDomain, SentimentLabel>, E>,
{
    let mut out: BTreeMap<RiskDomain, ConfusionMatrix> = BTreeMap::new();
    for ex in examples {
        let preds = predict(ex)?;
        for a in &ex.annotations {
            let p = *preds.get(&a.domain).expect("predictor covers every annotated domain");
            out.entry(a.domain).or_default().add(a.sentiment, p);
        }
    }
    Ok(out)
}
