//! Lexicon majority-vote baseline.
//!
//! Each sentence scores the mean polarity of the lexicon terms it contains;
//! a symmetric neutral band `tau` around zero decides the label.

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, SentimentLabel, Split};
use crate::metrics::{tally_by_domain, EvalReport, MetricsError};
use crate::text::tokenize;

const STANDIN_LEXICON: &str = include_str!("../data/standin_lexicon.tsv");

#[derive(Debug, Error, PartialEq)]
pub enum LexiconError {
    #[error("line {line}: polarity {value} for `{term}` is outside [-1, 1]")]
    OutOfRange { line: usize, term: String, value: f64 },
    #[error("line {line}: polarity `{cell}` is not a number")]
    NonNumeric { line: usize, cell: String },
    #[error("line {line}: expected `term<TAB>polarity`")]
    Malformed { line: usize },
    #[error("neutral band tau must be in [0, 1), got {0}")]
    BadTau(f64),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    terms: HashMap<String, f64>,
}

impl Lexicon {
    /// The 40-term general-domain stand-in bundled with the crate.
    pub fn standin() -> Lexicon {
        load_lexicon(STANDIN_LEXICON.as_bytes()).expect("bundled lexicon is valid")
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn polarity(&self, term: &str) -> Option<f64> {
        self.terms.get(term).copied()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains_key(term)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, f64)> {
        self.terms.iter().map(|(t, &p)| (t.as_str(), p))
    }

    pub fn insert(&mut self, term: &str, polarity: f64) -> Result<Option<f64>, LexiconError> {
        if !(-1.0..=1.0).contains(&polarity) {
            return Err(LexiconError::OutOfRange { line: 0, term: term.into(), value: polarity });
        }
        Ok(self.terms.insert(term.to_lowercase(), polarity))
    }
}

/// Loads `term<TAB>polarity` rows. Terms are lowercased; a repeated term
/// overrides its earlier row and logs a warning. Multiword terms can never
/// match a unigram token and are skipped with a warning.
pub fn load_lexicon<R: BufRead>(reader: R) -> Result<Lexicon, LexiconError> {
    let mut lex = Lexicon::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| LexiconError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let (term, cell) = line.split_once('\t').ok_or(LexiconError::Malformed { line: line_no })?;
        let term = term.trim().to_lowercase();
        if term.is_empty() {
            return Err(LexiconError::Malformed { line: line_no });
        }
        let value: f64 = cell
            .trim()
            .parse()
            .map_err(|_| LexiconError::NonNumeric { line: line_no, cell: cell.to_string() })?;
        if !(-1.0..=1.0).contains(&value) {
            return Err(LexiconError::OutOfRange { line: line_no, term, value });
        }
        let mut toks = tokenize(&term);
        if !matches!((toks.next(), toks.next()), (Some(t), None) if t == term) {
            log::warn!("lexicon line {line_no}: `{term}` is not a single token, skipped");
            continue;
        }
        if let Some(prev) = lex.terms.insert(term.clone(), value) {
            log::warn!("lexicon line {line_no}: `{term}` redefined ({prev} -> {value})");
        }
    }
    Ok(lex)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexiconConfig {
    pub tau: f64,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        LexiconConfig { tau: 0.1 }
    }
}

impl LexiconConfig {
    pub fn new(tau: f64) -> Result<Self, LexiconError> {
        if !(0.0..1.0).contains(&tau) {
            return Err(LexiconError::BadTau(tau));
        }
        Ok(LexiconConfig { tau })
    }
}

/// Mean polarity of the lexicon tokens in `text`; 0 when none match.
pub fn polarity_score(lexicon: &Lexicon, text: &str) -> f64 {
    let (sum, n) = tokenize(text)
        .filter_map(|t| lexicon.polarity(&t))
        .fold((0.0, 0usize), |(s, n), p| (s + p, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn classify_lexicon(score: f64, config: LexiconConfig) -> SentimentLabel {
    if score > config.tau {
        SentimentLabel::Positive
    } else if score < -config.tau {
        SentimentLabel::Negative
    } else {
        SentimentLabel::Neutral
    }
}

/// Lexicon plus decision band, ready to label sentences.
#[derive(Debug, Clone)]
pub struct LexiconBaseline {
    pub lexicon: Lexicon,
    pub config: LexiconConfig,
}

impl LexiconBaseline {
    pub fn predict(&self, text: &str) -> SentimentLabel {
        classify_lexicon(polarity_score(&self.lexicon, text), self.config)
    }
}

/// Scores the baseline on every annotation of `split`. A sentence gets the
/// same label in each of its domains.
pub fn evaluate_baseline(
    baseline: &LexiconBaseline,
    corpus: &Corpus,
    split: Split,
    name: Option<String>,
) -> Result<EvalReport, MetricsError> {
    let examples = corpus.examples().iter().filter(|e| e.split == split);
    let matrices = tally_by_domain(examples, |ex| {
        let label = baseline.predict(&ex.text);
        Ok::<_, MetricsError>(ex.domains().map(|d| (d, label)).collect())
    })?;
    EvalReport::from_confusions(name, &matrices)
}
