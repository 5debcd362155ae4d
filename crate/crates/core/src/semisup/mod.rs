//! Pseudo-labeling of unlabeled sentences (self-training and nearest-neighbor
//! label transfer) and retraining on a fixed labeled:pseudo mix.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{filter_by_domain, Corpus, RiskDomain, SentimentLabel, Split};
use crate::embedding::{euclidean, EmbeddingError, EmbeddingProvider};
use crate::neuralnet::Hyperparams;
use crate::num::{cmp_scalar, Scalar};
use crate::suite::{domain_seed, train_domain_model, DomainModel, ModelSuite, SuiteError};

#[derive(Debug, Error)]
pub enum SemisupError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("pool id `{0}` appears twice")]
    DuplicateId(String),
    #[error("k must be >= 1")]
    ZeroK,
    #[error("no labeled examples to augment")]
    NoLabeled,
    #[error("invalid ratio `{0}`: expected two positive integers like 20:80")]
    BadRatio(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolItem<T> {
    pub id: String,
    pub text: String,
    pub vector: Vec<T>,
}

/// Unlabeled sentences with their vectors, kept sorted by id so every
/// downstream result is independent of input order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledPool<T> {
    items: Vec<PoolItem<T>>,
}

impl<T: Scalar> UnlabeledPool<T> {
    pub fn new(mut items: Vec<PoolItem<T>>) -> Result<Self, SemisupError> {
        items.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = items.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(SemisupError::DuplicateId(w[0].id.clone()));
        }
        if let Some(first) = items.first() {
            let dim = first.vector.len();
            if let Some(bad) = items.iter().find(|it| it.vector.len() != dim) {
                return Err(EmbeddingError::DimMismatch { expected: dim, found: bad.vector.len() }.into());
            }
        }
        Ok(UnlabeledPool { items })
    }

    pub fn empty() -> Self {
        UnlabeledPool { items: Vec::new() }
    }

    /// Reads `{"id": ..., "text": ...}` lines and embeds each text.
    pub fn from_jsonl<R: BufRead, P: EmbeddingProvider<T> + ?Sized>(reader: R, provider: &P) -> Result<Self, SemisupError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Row {
            id: String,
            text: String,
        }
        let mut items = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line)
                .map_err(|e| SemisupError::Malformed { line: i + 1, message: e.to_string() })?;
            if !seen.insert(row.id.clone()) {
                return Err(SemisupError::DuplicateId(row.id));
            }
            let vector = provider.embed(&row.id, &row.text)?.into_inner();
            items.push(PoolItem { id: row.id, text: row.text, vector });
        }
        Self::new(items)
    }

    pub fn items(&self) -> &[PoolItem<T>] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoSource {
    SelfTrain,
    Knn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabeled<T> {
    pub id: String,
    pub vector: Vec<T>,
    pub label: SentimentLabel,
    pub confidence: f64,
    pub source: PseudoSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfTrainSelection<T> {
    pub items: Vec<PseudoLabeled<T>>,
    /// Fewer than the requested number of items were available.
    pub shortfall: bool,
}

fn by_confidence<T>(a: &PseudoLabeled<T>, b: &PseudoLabeled<T>) -> std::cmp::Ordering {
    b.confidence.total_cmp(&a.confidence).then_with(|| a.id.cmp(&b.id))
}

/// Labels the pool with `model`'s decision rule and keeps the `n_needed` most
/// confident items, confidence being the largest output score. Items below
/// `floor` are dropped before ranking.
pub fn self_train_select<T: Scalar>(
    model: &DomainModel<T>,
    pool: &UnlabeledPool<T>,
    n_needed: usize,
    floor: Option<f64>,
) -> Result<SelfTrainSelection<T>, SemisupError> {
    let scored = pool
        .items
        .par_iter()
        .map(|it| model.classify(&it.vector).map(|p| (it, p)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut items: Vec<PseudoLabeled<T>> = scored
        .into_iter()
        .map(|(it, p)| PseudoLabeled {
            id: it.id.clone(),
            vector: it.vector.clone(),
            label: p.label,
            confidence: p.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            source: PseudoSource::SelfTrain,
        })
        .filter(|p| floor.is_none_or(|f| p.confidence >= f))
        .collect();
    items.sort_by(by_confidence);
    let shortfall = items.len() < n_needed;
    items.truncate(n_needed);
    Ok(SelfTrainSelection { items, shortfall })
}

/// Nearest-neighbor label transfer.
///
/// Each labeled example acts as a centroid and claims its `k` nearest pool
/// items (distance ties go to the smaller id). A pool item claimed more than
/// once takes the label of its nearest claiming centroid, ties going to the
/// earlier centroid. Output is sorted by id with confidence `1/(1+distance)`.
pub fn knn_augment<T: Scalar, V: AsRef<[T]> + Sync>(
    labeled: &[(V, SentimentLabel)],
    pool: &UnlabeledPool<T>,
    k: usize,
) -> Result<Vec<PseudoLabeled<T>>, SemisupError> {
    if k == 0 {
        return Err(SemisupError::ZeroK);
    }
    if labeled.is_empty() {
        return Err(SemisupError::NoLabeled);
    }
    let neighbours = labeled
        .par_iter()
        .map(|(c, _)| {
            let mut d = pool
                .items
                .iter()
                .enumerate()
                .map(|(i, it)| euclidean(c.as_ref(), &it.vector).map(|d| (d, i)))
                .collect::<Result<Vec<_>, _>>()?;
            // pool is id-sorted, so index order is id order
            d.sort_by(|a, b| cmp_scalar(a.0, b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            Ok(d)
        })
        .collect::<Result<Vec<_>, EmbeddingError>>()?;

    let mut claims: BTreeMap<usize, (T, usize)> = BTreeMap::new();
    for (ci, near) in neighbours.iter().enumerate() {
        for &(d, pi) in near {
            let entry = claims.entry(pi).or_insert((d, ci));
            if d < entry.0 {
                *entry = (d, ci);
            }
        }
    }
    Ok(claims
        .into_iter()
        .map(|(pi, (d, ci))| {
            let it = &pool.items[pi];
            PseudoLabeled {
                id: it.id.clone(),
                vector: it.vector.clone(),
                label: labeled[ci].1,
                confidence: 1.0 / (1.0 + d.as_f64()),
                source: PseudoSource::Knn,
            }
        })
        .collect())
}

/// A labeled:pseudo count ratio such as 20:80. Serialized as that string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MixRatio {
    pub labeled: u32,
    pub pseudo: u32,
}

impl Default for MixRatio {
    fn default() -> Self {
        MixRatio { labeled: 20, pseudo: 80 }
    }
}

impl fmt::Display for MixRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.labeled, self.pseudo)
    }
}

impl FromStr for MixRatio {
    type Err = SemisupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SemisupError::BadRatio(s.to_string());
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let labeled: u32 = a.trim().parse().map_err(|_| bad())?;
        let pseudo: u32 = b.trim().parse().map_err(|_| bad())?;
        if labeled == 0 {
            return Err(bad());
        }
        Ok(MixRatio { labeled, pseudo })
    }
}

impl TryFrom<String> for MixRatio {
    type Error = SemisupError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<MixRatio> for String {
    fn from(r: MixRatio) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixed<'a, T> {
    /// Labeled pairs first, then the chosen pseudo-labeled items.
    pub set: Vec<(&'a [T], SentimentLabel)>,
    pub labeled_count: usize,
    pub pseudo_count: usize,
    pub target_pseudo: usize,
    /// Percentages of labeled and pseudo-labeled items in `set`.
    pub achieved: (f64, f64),
    pub shortfall: bool,
}

/// Keeps every labeled pair and adds up to `labeled * pseudo / labeled_part`
/// of the most confident pseudo-labeled items.
pub fn mix<'a, T: Scalar, V: AsRef<[T]>>(
    labeled: &'a [(V, SentimentLabel)],
    pseudo: &'a [PseudoLabeled<T>],
    ratio: MixRatio,
) -> Mixed<'a, T> {
    let target = labeled.len() * ratio.pseudo as usize / ratio.labeled as usize;
    let mut ranked: Vec<&PseudoLabeled<T>> = pseudo.iter().collect();
    ranked.sort_by(|a, b| by_confidence(a, b));
    ranked.truncate(target);
    let mut set: Vec<(&[T], SentimentLabel)> = labeled.iter().map(|(v, l)| (v.as_ref(), *l)).collect();
    set.extend(ranked.iter().map(|p| (p.vector.as_slice(), p.label)));
    let total = set.len().max(1) as f64;
    Mixed {
        labeled_count: labeled.len(),
        pseudo_count: ranked.len(),
        target_pseudo: target,
        achieved: (100.0 * labeled.len() as f64 / total, 100.0 * ranked.len() as f64 / total),
        shortfall: ranked.len() < target,
        set,
    }
}

pub fn mix_20_80<'a, T: Scalar, V: AsRef<[T]>>(labeled: &'a [(V, SentimentLabel)], pseudo: &'a [PseudoLabeled<T>]) -> Mixed<'a, T> {
    mix(labeled, pseudo, MixRatio::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum AugmentMethod {
    SelfTrain { floor: Option<f64> },
    Knn { k: usize },
}

impl AugmentMethod {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentMethod::SelfTrain { .. } => "self_train",
            AugmentMethod::Knn { .. } => "knn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationReport {
    pub method: String,
    pub requested_ratio: String,
    pub achieved_ratio: String,
    pub labeled_count: usize,
    pub pseudo_count: usize,
    pub shortfall: bool,
    pub label_histogram: BTreeMap<SentimentLabel, usize>,
}

/// Builds a pseudo-labeled set, mixes it with `labeled`, and trains a fresh
/// model whose thresholds are fitted on the combined set. `base` is the model
/// trained on `labeled` alone; self-training uses it to label the pool.
#[allow(clippy::too_many_arguments)]
pub fn retrain_with_augmentation<T: Scalar, V: AsRef<[T]> + Sync>(
    base: &DomainModel<T>,
    labeled: &[(V, SentimentLabel)],
    pool: &UnlabeledPool<T>,
    method: AugmentMethod,
    ratio: MixRatio,
    hyper: &Hyperparams,
    alpha: f64,
    seed: u64,
) -> Result<(DomainModel<T>, AugmentationReport), SemisupError> {
    let target = labeled.len() * ratio.pseudo as usize / ratio.labeled as usize;
    let pseudo = match method {
        AugmentMethod::SelfTrain { floor } => self_train_select(base, pool, target, floor)?.items,
        AugmentMethod::Knn { k } if pool.is_empty() => {
            if k == 0 {
                return Err(SemisupError::ZeroK);
            }
            Vec::new()
        }
        AugmentMethod::Knn { k } => knn_augment(labeled, pool, k)?,
    };
    let mixed = mix(labeled, &pseudo, ratio);
    let mut label_histogram: BTreeMap<SentimentLabel, usize> = SentimentLabel::ALL.iter().map(|&l| (l, 0)).collect();
    for (_, l) in &mixed.set[mixed.labeled_count..] {
        *label_histogram.get_mut(l).expect("all labels present") += 1;
    }
    let report = AugmentationReport {
        method: method.name().to_string(),
        requested_ratio: ratio.to_string(),
        achieved_ratio: format!("{}:{}", fmt_pct(mixed.achieved.0), fmt_pct(mixed.achieved.1)),
        labeled_count: mixed.labeled_count,
        pseudo_count: mixed.pseudo_count,
        shortfall: mixed.shortfall,
        label_histogram,
    };
    let model = train_domain_model(base.domain, &mixed.set, hyper, alpha, seed)?;
    Ok((model, report))
}

fn fmt_pct(v: f64) -> String {
    let r = (v * 10.0).round() / 10.0;
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r:.1}")
    }
}

/// Retrains every domain of `suite` with pseudo-labels from `pool`, using the
/// same per-domain seeds as the supervised suite.
#[allow(clippy::too_many_arguments)]
pub fn augment_suite<T: Scalar, P: EmbeddingProvider<T> + ?Sized>(
    suite: &ModelSuite<T>,
    corpus: &Corpus,
    provider: &P,
    pool: &UnlabeledPool<T>,
    method: AugmentMethod,
    ratio: MixRatio,
    hyper: &Hyperparams,
    alpha: f64,
) -> Result<(ModelSuite<T>, BTreeMap<RiskDomain, AugmentationReport>), SemisupError> {
    let train_split = corpus.split(Split::Train);
    let mut models = Vec::new();
    let mut reports = BTreeMap::new();
    for domain in RiskDomain::ALL {
        let labeled = filter_by_domain(&train_split, domain)
            .iter()
            .map(|it| Ok((provider.embed(it.id, it.text)?.into_inner(), it.label)))
            .collect::<Result<Vec<_>, EmbeddingError>>()?;
        if labeled.is_empty() {
            return Err(SuiteError::NoTrainingData(domain).into());
        }
        let seed = domain_seed(suite.seed(), domain);
        let (model, report) =
            retrain_with_augmentation(suite.model(domain), &labeled, pool, method, ratio, hyper, alpha, seed)?;
        models.push(model);
        reports.insert(domain, report);
    }
    Ok((ModelSuite::new(models, suite.seed())?, reports))
}
