//! Chance-corrected agreement between annotators.
//!
//! Expected agreement is computed from integer label counts, so the
//! degenerate case (expected agreement exactly 1) is detected without a
//! floating-point tolerance.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::SentimentLabel;

fn label_counts(labels: &[SentimentLabel]) -> [u64; 3] {
    let mut c = [0u64; 3];
    for l in labels {
        c[l.index()] += 1;
    }
    c
}

fn observed(a: &[SentimentLabel], b: &[SentimentLabel]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch { golds: a.len(), preds: b.len() });
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(agree as f64 / a.len() as f64)
}

/// `(p_o - p_e) / (1 - p_e)`, where the expected agreement is
/// `chance_num / chance_den`. When chance agreement is total the statistic is
/// 1 for perfect observed agreement and 0 otherwise.
fn chance_corrected(p_o: f64, chance_num: u64, chance_den: u64) -> f64 {
    if chance_num == chance_den {
        return if p_o == 1.0 { 1.0 } else { 0.0 };
    }
    let p_e = chance_num as f64 / chance_den as f64;
    (p_o - p_e) / (1.0 - p_e)
}

/// Cohen's kappa: expected agreement from each rater's own marginals.
pub fn cohen_kappa(a: &[SentimentLabel], b: &[SentimentLabel]) -> Result<f64, MetricsError> {
    let p_o = observed(a, b)?;
    let n = a.len() as u64;
    let (ca, cb) = (label_counts(a), label_counts(b));
    let num: u64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    Ok(chance_corrected(p_o, num, n * n))
}

/// Scott's pi: expected agreement from the pooled marginals of both raters.
pub fn scott_pi(a: &[SentimentLabel], b: &[SentimentLabel]) -> Result<f64, MetricsError> {
    let p_o = observed(a, b)?;
    let n = a.len() as u64;
    let (ca, cb) = (label_counts(a), label_counts(b));
    let num: u64 = ca.iter().zip(&cb).map(|(x, y)| (x + y) * (x + y)).sum();
    Ok(chance_corrected(p_o, num, 4 * n * n))
}

/// Items x raters grid of labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMatrix {
    pub item_ids: Vec<String>,
    pub raters: Vec<String>,
    pub labels: Vec<Vec<SentimentLabel>>,
}

impl AnnotationMatrix {
    pub fn new(item_ids: Vec<String>, raters: Vec<String>, labels: Vec<Vec<SentimentLabel>>) -> Result<Self, MetricsError> {
        if raters.len() < 2 {
            return Err(MetricsError::TooSmall("two raters"));
        }
        if labels.is_empty() {
            return Err(MetricsError::TooSmall("one item"));
        }
        if item_ids.len() != labels.len() {
            return Err(MetricsError::Parse { line: 0, message: "item id count differs from row count".into() });
        }
        if let Some(i) = labels.iter().position(|r| r.len() != raters.len()) {
            return Err(MetricsError::Parse {
                line: i + 1,
                message: format!("row has {} labels, expected {}", labels[i].len(), raters.len()),
            });
        }
        Ok(AnnotationMatrix { item_ids, raters, labels })
    }

    pub fn from_rows(labels: Vec<Vec<SentimentLabel>>) -> Result<Self, MetricsError> {
        let r = labels.first().map_or(0, Vec::len);
        let ids = (1..=labels.len()).map(|i| format!("item{i}")).collect();
        let raters = (1..=r).map(|i| format!("rater{i}")).collect();
        Self::new(ids, raters, labels)
    }

    pub fn n_items(&self) -> usize {
        self.labels.len()
    }

    pub fn n_raters(&self) -> usize {
        self.raters.len()
    }

    pub fn rater_column(&self, r: usize) -> Vec<SentimentLabel> {
        self.labels.iter().map(|row| row[r]).collect()
    }
}

/// Parses `item_id<TAB>label<TAB>label...` rows. An optional header whose
/// first cell is `item_id` names the raters.
pub fn parse_annotation_matrix<R: BufRead>(reader: R) -> Result<AnnotationMatrix, MetricsError> {
    let mut raters: Option<Vec<String>> = None;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut width = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| MetricsError::Parse { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        if ids.is_empty() && raters.is_none() && cells[0] == "item_id" {
            raters = Some(cells[1..].iter().map(|s| s.to_string()).collect());
            width = Some(cells.len() - 1);
            continue;
        }
        let w = *width.get_or_insert(cells.len() - 1);
        if cells.len() - 1 != w {
            return Err(MetricsError::Parse {
                line: line_no,
                message: format!("ragged row: {} labels, expected {w}", cells.len() - 1),
            });
        }
        let labels = cells[1..]
            .iter()
            .map(|c| c.parse::<SentimentLabel>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| MetricsError::Parse { line: line_no, message: e.to_string() })?;
        ids.push(cells[0].to_string());
        rows.push(labels);
    }
    let raters = raters.unwrap_or_else(|| (1..=width.unwrap_or(0)).map(|i| format!("rater{i}")).collect());
    AnnotationMatrix::new(ids, raters, rows)
}

/// Fleiss' kappa over all raters.
pub fn fleiss_kappa(m: &AnnotationMatrix) -> f64 {
    let r = m.n_raters() as u64;
    let n = m.n_items() as u64;
    let mut totals = [0u64; 3];
    let mut p_bar = 0.0;
    for row in &m.labels {
        let c = label_counts(row);
        let sq: u64 = c.iter().map(|x| x * x).sum();
        p_bar += (sq - r) as f64 / (r * (r - 1)) as f64;
        for j in 0..3 {
            totals[j] += c[j];
        }
    }
    p_bar /= n as f64;
    let num: u64 = totals.iter().map(|t| t * t).sum();
    chance_corrected(p_bar, num, (n * r) * (n * r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAgreement {
    pub rater_a: String,
    pub rater_b: String,
    pub cohen_kappa: f64,
    pub scott_pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub items: usize,
    pub raters: usize,
    pub fleiss_kappa: f64,
    pub mean_pairwise_cohen: f64,
    pub mean_pairwise_scott: f64,
    pub pairwise: Vec<PairwiseAgreement>,
}

pub fn multi_rater_agreement(m: &AnnotationMatrix) -> AgreementReport {
    let cols: Vec<_> = (0..m.n_raters()).map(|r| m.rater_column(r)).collect();
    let mut pairwise = Vec::new();
    for a in 0..cols.len() {
        for b in a + 1..cols.len() {
            pairwise.push(PairwiseAgreement {
                rater_a: m.raters[a].clone(),
                rater_b: m.raters[b].clone(),
                cohen_kappa: cohen_kappa(&cols[a], &cols[b]).expect("columns share length"),
                scott_pi: scott_pi(&cols[a], &cols[b]).expect("columns share length"),
            });
        }
    }
    let k = pairwise.len() as f64;
    AgreementReport {
        items: m.n_items(),
        raters: m.n_raters(),
        fleiss_kappa: fleiss_kappa(m),
        mean_pairwise_cohen: pairwise.iter().map(|p| p.cohen_kappa).sum::<f64>() / k,
        mean_pairwise_scott: pairwise.iter().map(|p| p.scott_pi).sum::<f64>() / k,
        pairwise,
    }
}
