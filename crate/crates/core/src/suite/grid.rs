use serde::{Deserialize, Serialize};

use super::{train_domain_model, SuiteError};
use crate::corpus::{stratified_kfold, RiskDomain, SentimentLabel};
use crate::metrics::{confusion, PrfRow};
use crate::neuralnet::Hyperparams;
use crate::num::Scalar;

/// Candidate values for the tuned hyperparameters. Defaults are singleton
/// lists holding the default settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub learning_rate: Vec<f64>,
    pub dropout_rate: Vec<f64>,
    pub hidden_units: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub folds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        let h = Hyperparams::default();
        GridSpec {
            learning_rate: vec![h.learning_rate],
            dropout_rate: vec![h.dropout_rate],
            hidden_units: vec![h.hidden_units],
            batch_size: vec![h.batch_size],
            folds: 5,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), SuiteError> {
        let empty = [
            ("learning_rate", self.learning_rate.is_empty()),
            ("dropout_rate", self.dropout_rate.is_empty()),
            ("hidden_units", self.hidden_units.is_empty()),
            ("batch_size", self.batch_size.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(SuiteError::BadGrid(format!("{name} has no candidates")));
        }
        if self.folds < 2 {
            return Err(SuiteError::BadGrid(format!("folds must be >= 2, got {}", self.folds)));
        }
        Ok(())
    }

    /// Every cell, learning rate outermost and batch size innermost.
    pub fn cells(&self, base: &Hyperparams) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        for &lr in &self.learning_rate {
            for &dr in &self.dropout_rate {
                for &hu in &self.hidden_units {
                    for &bs in &self.batch_size {
                        out.push(Hyperparams {
                            learning_rate: lr,
                            dropout_rate: dr,
                            hidden_units: hu,
                            batch_size: bs,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub hyper: Hyperparams,
    pub fold_macro_f1: Vec<f64>,
    pub mean_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: Hyperparams,
    pub cells: Vec<GridCell>,
}

/// Stratified k-fold cross-validation over every grid cell.
///
/// All cells share the same folds. For each fold a model is trained on the
/// remaining folds, thresholds are fitted on that training portion, and
/// macro-F1 is measured on the held-out fold. The first cell with the highest
/// mean wins.
pub fn grid_search<T: Scalar, V: AsRef<[T]>>(
    pairs: &[(V, SentimentLabel)],
    base: &Hyperparams,
    grid: &GridSpec,
    alpha: f64,
    seed: u64,
) -> Result<GridResult, SuiteError> {
    grid.validate()?;
    let labels: Vec<SentimentLabel> = pairs.iter().map(|p| p.1).collect();
    let folds = stratified_kfold(&labels, grid.folds, seed)?;
    let mut cells = Vec::new();
    for hyper in grid.cells(base) {
        hyper.validate()?;
        let mut scores = Vec::with_capacity(folds.len());
        for (f, held) in folds.iter().enumerate() {
            let mut is_held = vec![false; pairs.len()];
            held.iter().for_each(|&i| is_held[i] = true);
            let train_part: Vec<(&[T], SentimentLabel)> = pairs
                .iter()
                .zip(&is_held)
                .filter(|(_, h)| !**h)
                .map(|((v, l), _)| (v.as_ref(), *l))
                .collect();
            // the domain tag is only a label on the scratch model
            let model = train_domain_model::<T, _>(RiskDomain::Mood, &train_part, &hyper, alpha, seed.wrapping_add(f as u64))?;
            let mut golds = Vec::with_capacity(held.len());
            let mut preds = Vec::with_capacity(held.len());
            for &i in held {
                golds.push(pairs[i].1);
                preds.push(model.classify(pairs[i].0.as_ref())?.label);
            }
            scores.push(PrfRow::from_confusion(&confusion(&golds, &preds)?).macro_f1());
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        log::info!("grid cell lr={} dropout={} hidden={} batch={}: macro-F1 {mean:.4}", hyper.learning_rate, hyper.dropout_rate, hyper.hidden_units, hyper.batch_size);
        cells.push(GridCell { hyper, fold_macro_f1: scores, mean_macro_f1: mean });
    }
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.mean_macro_f1 > cells[best].mean_macro_f1 {
            best = i;
        }
    }
    Ok(GridResult { best: cells[best].hyper.clone(), cells })
}
