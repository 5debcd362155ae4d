//! One classifier per risk domain, each paired with neutral-fallback
//! thresholds fitted on its own training outputs.

mod grid;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use twox_hash::XxHash64;

use crate::corpus::{filter_by_domain, Corpus, Example, FoldError, RiskDomain, SentimentLabel, Split};
use crate::embedding::{EmbeddingError, EmbeddingProvider};
use crate::metrics::{tally_by_domain, EvalReport, MetricsError};
use crate::neuralnet::{forward_infer, train, Hyperparams, MlpParams, NetError};
use crate::num::Scalar;

pub use grid::{grid_search, GridCell, GridResult, GridSpec};

pub const DEFAULT_ALPHA: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum SuiteError {
    #[error("no training annotations for domain {0}")]
    NoTrainingData(RiskDomain),
    #[error("suite has no model for domain {0}")]
    MissingModel(RiskDomain),
    #[error("cannot fit thresholds on an empty score set")]
    EmptyScores,
    #[error("alpha must be finite and >= 0, got {0}")]
    BadAlpha(f64),
    #[error("domain models disagree on input dimension ({0} vs {1})")]
    MixedDims(usize, usize),
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Folds(#[from] FoldError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Per-class gates: a positive (negative) label is only possible when the
/// positive (negative) output exceeds `pos_min` (`neg_min`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub alpha: f64,
    pub pos_min: f64,
    pub neg_min: f64,
}

/// `mean + alpha * std` with the population standard deviation, computed in
/// one Welford pass.
pub fn gate_min(scores: &[f64], alpha: f64) -> Result<f64, SuiteError> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(SuiteError::BadAlpha(alpha));
    }
    if scores.is_empty() {
        return Err(SuiteError::EmptyScores);
    }
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for (i, &s) in scores.iter().enumerate() {
        let delta = s - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (s - mean);
    }
    let std = (m2 / scores.len() as f64).max(0.0).sqrt();
    Ok(mean + alpha * std)
}

/// Gates from the infer-mode positive and negative outputs over every
/// training vector.
pub fn fit_thresholds<T: Scalar, V: AsRef<[T]>>(
    params: &MlpParams<T>,
    vectors: &[V],
    alpha: f64,
) -> Result<Thresholds, SuiteError> {
    let mut pos = Vec::with_capacity(vectors.len());
    let mut neg = Vec::with_capacity(vectors.len());
    for v in vectors {
        let out = forward_infer(params, v.as_ref())?;
        pos.push(out[SentimentLabel::Positive.index()].as_f64());
        neg.push(out[SentimentLabel::Negative.index()].as_f64());
    }
    Ok(Thresholds { alpha, pos_min: gate_min(&pos, alpha)?, neg_min: gate_min(&neg, alpha)? })
}

/// The neutral-fallback decision.
///
/// Neutral is always a candidate; positive and negative are candidates only
/// when their score clears their gate. The highest-scoring candidate wins, and
/// ties go to neutral, then negative, then positive.
pub fn decide(scores: [f64; 3], th: &Thresholds) -> SentimentLabel {
    use SentimentLabel::*;
    let mut best = Neutral;
    let mut best_score = scores[Neutral.index()];
    let gated = [(Negative, th.neg_min), (Positive, th.pos_min)];
    for (label, min) in gated {
        let s = scores[label.index()];
        if s > min && s > best_score {
            best = label;
            best_score = s;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: SentimentLabel,
    /// Infer-mode outputs in positive, negative, neutral order.
    pub scores: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainModel<T> {
    pub domain: RiskDomain,
    pub params: MlpParams<T>,
    pub thresholds: Thresholds,
    pub hyper: Hyperparams,
    pub seed: u64,
}

impl<T: Scalar> DomainModel<T> {
    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn scores(&self, x: &[T]) -> Result<[f64; 3], SuiteError> {
        Ok(forward_infer(&self.params, x)?.map(|s| s.as_f64()))
    }

    pub fn classify(&self, x: &[T]) -> Result<Prediction, SuiteError> {
        let scores = self.scores(x)?;
        Ok(Prediction { label: decide(scores, &self.thresholds), scores })
    }
}

/// Trains one network and fits its thresholds on the same vectors.
pub fn train_domain_model<T: Scalar, V: AsRef<[T]>>(
    domain: RiskDomain,
    pairs: &[(V, SentimentLabel)],
    hyper: &Hyperparams,
    alpha: f64,
    seed: u64,
) -> Result<DomainModel<T>, SuiteError> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(SuiteError::BadAlpha(alpha));
    }
    let (params, report) = train::<T, V>(pairs, hyper, seed)?;
    log::debug!(
        "{domain}: {} examples, final epoch loss {:.4}",
        report.examples,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    let vectors: Vec<&[T]> = pairs.iter().map(|(v, _)| v.as_ref()).collect();
    let thresholds = fit_thresholds(&params, &vectors, alpha)?;
    Ok(DomainModel { domain, params, thresholds, hyper: hyper.clone(), seed })
}

/// Stable per-domain seed: the run seed xor a fixed hash of the domain name.
pub fn domain_seed(seed: u64, domain: RiskDomain) -> u64 {
    seed ^ XxHash64::oneshot(0, domain.as_str().as_bytes())
}

/// All seven domain models.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSuite<T> {
    models: BTreeMap<RiskDomain, DomainModel<T>>,
    seed: u64,
}

impl<T: Scalar> ModelSuite<T> {
    pub fn new(models: Vec<DomainModel<T>>, seed: u64) -> Result<Self, SuiteError> {
        let models: BTreeMap<_, _> = models.into_iter().map(|m| (m.domain, m)).collect();
        if let Some(d) = RiskDomain::ALL.into_iter().find(|d| !models.contains_key(d)) {
            return Err(SuiteError::MissingModel(d));
        }
        let mut dims = models.values().map(DomainModel::dim);
        let first = dims.next().expect("seven models");
        if let Some(other) = dims.find(|&d| d != first) {
            return Err(SuiteError::MixedDims(first, other));
        }
        Ok(ModelSuite { models, seed })
    }

    pub fn dim(&self) -> usize {
        self.models.values().next().expect("seven models").dim()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model(&self, domain: RiskDomain) -> &DomainModel<T> {
        &self.models[&domain]
    }

    pub fn models(&self) -> impl Iterator<Item = &DomainModel<T>> {
        self.models.values()
    }

    pub fn classify(&self, domain: RiskDomain, x: &[T]) -> Result<Prediction, SuiteError> {
        self.model(domain).classify(x)
    }
}

/// Trains every domain on its training-split annotations.
///
/// Domains train independently (in parallel
/// when threads are available) and are collected in domain order.
pub fn train_suite<T: Scalar, P: EmbeddingProvider<T> + ?Sized>(
    corpus: &Corpus,
    provider: &P,
    hyper: &Hyperparams,
    alpha: f64,
    seed: u64,
) -> Result<ModelSuite<T>, SuiteError> {
    let train_split = corpus.split(Split::Train);
    let mut per_domain = Vec::with_capacity(RiskDomain::ALL.len());
    for domain in RiskDomain::ALL {
        let items = filter_by_domain(&train_split, domain);
        if items.is_empty() {
            return Err(SuiteError::NoTrainingData(domain));
        }
        let pairs = items
            .iter()
            .map(|it| Ok((provider.embed(it.id, it.text)?.into_inner(), it.label)))
            .collect::<Result<Vec<_>, EmbeddingError>>()?;
        per_domain.push((domain, pairs));
    }
    let models = per_domain
        .par_iter()
        .map(|(domain, pairs)| train_domain_model(*domain, pairs, hyper, alpha, domain_seed(seed, *domain)))
        .collect::<Result<Vec<_>, _>>()?;
    ModelSuite::new(models, seed)
}

/// One prediction per annotated domain of `example`.
pub fn predict_example<T: Scalar, P: EmbeddingProvider<T> + ?Sized>(
    suite: &ModelSuite<T>,
    example: &Example,
    provider: &P,
) -> Result<BTreeMap<RiskDomain, Prediction>, SuiteError> {
    let x = provider.embed(&example.id, &example.text)?;
    example.domains().map(|d| Ok((d, suite.classify(d, &x)?))).collect()
}

/// Scores every annotation of the chosen split.
pub fn evaluate_suite<T: Scalar, P: EmbeddingProvider<T> + ?Sized>(
    suite: &ModelSuite<T>,
    corpus: &Corpus,
    provider: &P,
    split: Split,
    name: Option<String>,
) -> Result<EvalReport, SuiteError> {
    let examples = corpus.examples().iter().filter(|e| e.split == split);
    let matrices = tally_by_domain(examples, |ex| {
        Ok::<_, SuiteError>(predict_example(suite, ex, provider)?.into_iter().map(|(d, p)| (d, p.label)).collect())
    })?;
    Ok(EvalReport::from_confusions(name, &matrices)?)
}
