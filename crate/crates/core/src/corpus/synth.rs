//! Synthetic corpus generation from a count/vocabulary specification.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Annotation, Corpus, Example, RiskDomain, SentimentLabel, Split};
use crate::text::tokenize;

const TABLE2_SPEC: &str = include_str!("../../data/table2_genspec.json");

/// Target count and signal vocabulary of one (domain, label) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenCell {
    pub domain: RiskDomain,
    pub sentiment: SentimentLabel,
    pub count: usize,
    pub vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub cells: Vec<GenCell>,
    /// Inclusive sentence length range in tokens.
    pub length_range: (usize, usize),
    #[serde(default)]
    pub noise_vocabulary: Vec<String>,
    /// Fraction of each sentence's tokens drawn from the noise vocabulary, in `[0, 1)`.
    #[serde(default)]
    pub noise_fraction: f64,
    /// Fraction of each cell assigned to the test split (rounded per cell).
    #[serde(default)]
    pub test_fraction: f64,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generation spec: {0}")]
    Invalid(String),
    #[error("cell {domain}/{sentiment} requests {count} sentences but has an empty vocabulary")]
    EmptyVocabulary { domain: RiskDomain, sentiment: SentimentLabel, count: usize },
    #[error("token `{token}` is a signal for more than one label in domain {domain}")]
    OverlappingVocabulary { domain: RiskDomain, token: String },
    #[error("cell {domain}/{sentiment} is listed twice")]
    DuplicateCell { domain: RiskDomain, sentiment: SentimentLabel },
    #[error("malformed spec JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl GenSpec {
    /// The bundled spec reproducing the training-distribution table: 21 cells
    /// with clinical-flavoured signal words, filler noise, and a 30% test split.
    pub fn table2() -> GenSpec {
        GenSpec::from_json(TABLE2_SPEC).expect("bundled spec is valid")
    }

    pub fn from_json(s: &str) -> Result<GenSpec, SynthError> {
        let spec: GenSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let (lo, hi) = self.length_range;
        if lo == 0 || lo > hi {
            return Err(SynthError::Invalid(format!("length range ({lo}, {hi}) is not 1 <= min <= max")));
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return Err(SynthError::Invalid(format!(
                "noise fraction {} outside [0, 1)",
                self.noise_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return Err(SynthError::Invalid(format!(
                "test fraction {} outside [0, 1]",
                self.test_fraction
            )));
        }
        for tok in self.cells.iter().flat_map(|c| &c.vocabulary).chain(&self.noise_vocabulary) {
            if !is_single_token(tok) {
                return Err(SynthError::Invalid(format!(
                    "vocabulary entry `{tok}` is not a single lowercase alphanumeric token"
                )));
            }
        }
        let mut seen_cells = HashSet::new();
        let mut owner: HashMap<(RiskDomain, &str), SentimentLabel> = HashMap::new();
        for c in &self.cells {
            if !seen_cells.insert((c.domain, c.sentiment)) {
                return Err(SynthError::DuplicateCell { domain: c.domain, sentiment: c.sentiment });
            }
            if c.count > 0 && c.vocabulary.is_empty() {
                return Err(SynthError::EmptyVocabulary {
                    domain: c.domain,
                    sentiment: c.sentiment,
                    count: c.count,
                });
            }
            for tok in &c.vocabulary {
                match owner.insert((c.domain, tok.as_str()), c.sentiment) {
                    Some(prev) if prev != c.sentiment => {
                        return Err(SynthError::OverlappingVocabulary {
                            domain: c.domain,
                            token: tok.clone(),
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn cell(&self, domain: RiskDomain, sentiment: SentimentLabel) -> Option<&GenCell> {
        self.cells.iter().find(|c| c.domain == domain && c.sentiment == sentiment)
    }

    /// Every signal token of every cell.
    pub fn signal_tokens(&self) -> impl Iterator<Item = &str> {
        self.cells.iter().flat_map(|c| c.vocabulary.iter().map(String::as_str))
    }
}

fn is_single_token(tok: &str) -> bool {
    let mut it = tokenize(tok);
    matches!((it.next(), it.next()), (Some(t), None) if t == tok)
}

/// Generates a single-annotation corpus whose distribution equals the cell
/// counts exactly. Deterministic for a fixed `(spec, seed)`.
pub fn generate_synthetic(spec: &GenSpec, seed: u64) -> Result<Corpus, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = spec.length_range;

    let mut drafts: Vec<(String, Split, Annotation)> = Vec::new();
    for cell in &spec.cells {
        let n_test = (cell.count as f64 * spec.test_fraction).round() as usize;
        for i in 0..cell.count {
            let len = rng.gen_range(lo..=hi);
            let n_noise = if spec.noise_vocabulary.is_empty() {
                0
            } else {
                ((len as f64 * spec.noise_fraction).floor() as usize).min(len - 1)
            };
            let mut tokens: Vec<&str> = (0..n_noise)
                .map(|_| spec.noise_vocabulary.choose(&mut rng).expect("non-empty").as_str())
                .collect();
            for _ in n_noise..len {
                let tok = cell.vocabulary.choose(&mut rng).expect("validated non-empty");
                let at = rng.gen_range(0..=tokens.len());
                tokens.insert(at, tok);
            }
            let text = format!("{}.", tokens.join(" "));
            let split = if i < n_test { Split::Test } else { Split::Train };
            drafts.push((text, split, Annotation { domain: cell.domain, sentiment: cell.sentiment }));
        }
    }
    drafts.shuffle(&mut rng);

    let width = drafts.len().to_string().len().max(5);
    let examples = drafts
        .into_iter()
        .enumerate()
        .map(|(i, (text, split, ann))| Example {
            id: format!("syn{:0width$}", i + 1),
            text,
            split,
            annotations: vec![ann],
        })
        .collect();
    Ok(Corpus::from_examples(examples).expect("generated examples satisfy corpus invariants"))
}
