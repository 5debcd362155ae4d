//! Annotated sentence corpora.
//!
//! A corpus is a JSONL stream, one [`Example`] per line:
//!
//! ```text
//! {"id": "s1", "text": "Tearful, presented very depressed with sad affect.", "split": "train",
//!  "annotations": [{"domain": "mood", "sentiment": "negative"}]}
//! ```
//!
//! Training examples carry exactly one annotation; test examples may carry one
//! per risk domain they touch.

mod folds;
mod synth;

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use folds::{stratified_kfold, FoldError};
pub use synth::{generate_synthetic, GenCell, GenSpec, SynthError};

/// One of the seven readmission risk factor domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskDomain {
    Appearance,
    Mood,
    Interpersonal,
    SubstanceUse,
    Occupation,
    ThoughtProcess,
    ThoughtContent,
}

impl RiskDomain {
    pub const ALL: [RiskDomain; 7] = [
        RiskDomain::Appearance,
        RiskDomain::Mood,
        RiskDomain::Interpersonal,
        RiskDomain::SubstanceUse,
        RiskDomain::Occupation,
        RiskDomain::ThoughtProcess,
        RiskDomain::ThoughtContent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskDomain::Appearance => "appearance",
            RiskDomain::Mood => "mood",
            RiskDomain::Interpersonal => "interpersonal",
            RiskDomain::SubstanceUse => "substance_use",
            RiskDomain::Occupation => "occupation",
            RiskDomain::ThoughtProcess => "thought_process",
            RiskDomain::ThoughtContent => "thought_content",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RiskDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} `{token}`")]
pub struct UnknownToken {
    pub kind: &'static str,
    pub token: String,
}

impl FromStr for RiskDomain {
    type Err = UnknownToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RiskDomain::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| UnknownToken { kind: "domain", token: s.to_string() })
    }
}

/// Three-way clinical sentiment. The declaration order is the one-hot and
/// confusion-matrix order used everywhere: positive, negative, neutral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] =
        [SentimentLabel::Positive, SentimentLabel::Negative, SentimentLabel::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Positive => "positive",
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Swaps positive and negative; neutral is fixed.
    pub fn mirror(self) -> Self {
        match self {
            SentimentLabel::Positive => SentimentLabel::Negative,
            SentimentLabel::Negative => SentimentLabel::Positive,
            SentimentLabel::Neutral => SentimentLabel::Neutral,
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = UnknownToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SentimentLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownToken { kind: "sentiment", token: s.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = UnknownToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(UnknownToken { kind: "split", token: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Annotation {
    pub domain: RiskDomain,
    pub sentiment: SentimentLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub split: Split,
    pub annotations: Vec<Annotation>,
}

impl Example {
    pub fn label_for(&self, domain: RiskDomain) -> Option<SentimentLabel> {
        self.annotations.iter().find(|a| a.domain == domain).map(|a| a.sentiment)
    }

    pub fn domains(&self) -> impl Iterator<Item = RiskDomain> + '_ {
        self.annotations.iter().map(|a| a.domain)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {source}")]
    Unknown {
        line: usize,
        #[source]
        source: UnknownToken,
    },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: example `{id}` has no annotations")]
    EmptyAnnotations { line: usize, id: String },
    #[error("line {line}: example `{id}` annotates domain `{domain}` more than once")]
    RepeatedDomain { line: usize, id: String, domain: RiskDomain },
    #[error("line {line}: training example `{id}` carries {count} annotations; training data must be single-domain")]
    MultiDomainTrain { line: usize, id: String, count: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// An immutable, validated collection of examples in input order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    examples: Vec<Example>,
}

#[derive(Deserialize)]
struct RawAnnotation {
    domain: String,
    sentiment: String,
}

#[derive(Deserialize)]
struct RawExample {
    id: String,
    text: String,
    split: String,
    annotations: Vec<RawAnnotation>,
}

impl Corpus {
    /// Validates `examples` and builds a corpus. Line numbers in errors are
    /// 1-based positions in `examples`.
    pub fn from_examples(examples: Vec<Example>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(examples.len());
        for (i, ex) in examples.iter().enumerate() {
            check_example(ex, i + 1, &mut seen)?;
        }
        Ok(Corpus { examples })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn annotation_count(&self) -> usize {
        self.examples.iter().map(|e| e.annotations.len()).sum()
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.examples.iter().find(|e| e.id == id)
    }

    /// Examples of one split, as a new corpus.
    pub fn split(&self, split: Split) -> Corpus {
        Corpus { examples: self.examples.iter().filter(|e| e.split == split).cloned().collect() }
    }

    /// Writes the corpus back out as JSONL.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for ex in &self.examples {
            serde_json::to_writer(&mut out, ex)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

fn check_example(ex: &Example, line: usize, seen: &mut HashSet<String>) -> Result<(), CorpusError> {
    if !seen.insert(ex.id.clone()) {
        return Err(CorpusError::DuplicateId { line, id: ex.id.clone() });
    }
    if ex.annotations.is_empty() {
        return Err(CorpusError::EmptyAnnotations { line, id: ex.id.clone() });
    }
    let mut domains = [false; 7];
    for a in &ex.annotations {
        if std::mem::replace(&mut domains[a.domain.index()], true) {
            return Err(CorpusError::RepeatedDomain { line, id: ex.id.clone(), domain: a.domain });
        }
    }
    if ex.split == Split::Train && ex.annotations.len() != 1 {
        return Err(CorpusError::MultiDomainTrain {
            line,
            id: ex.id.clone(),
            count: ex.annotations.len(),
        });
    }
    Ok(())
}

/// Parses a JSONL corpus, validating every invariant. Blank lines are skipped
/// but still counted for line numbers.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawExample = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Malformed { line: line_no, message: e.to_string() })?;
        let unknown = |source| CorpusError::Unknown { line: line_no, source };
        let split = raw.split.parse().map_err(unknown)?;
        let annotations = raw
            .annotations
            .into_iter()
            .map(|a| {
                Ok(Annotation {
                    domain: a.domain.parse().map_err(unknown)?,
                    sentiment: a.sentiment.parse().map_err(unknown)?,
                })
            })
            .collect::<Result<Vec<_>, CorpusError>>()?;
        let ex = Example { id: raw.id, text: raw.text, split, annotations };
        check_example(&ex, line_no, &mut seen)?;
        examples.push(ex);
    }
    Ok(Corpus { examples })
}

pub fn parse_corpus_str(s: &str) -> Result<Corpus, CorpusError> {
    parse_corpus(s.as_bytes())
}

/// Annotation counts per (domain, label).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionTable {
    counts: [[usize; 3]; 7],
}

impl DistributionTable {
    pub fn get(&self, domain: RiskDomain, label: SentimentLabel) -> usize {
        self.counts[domain.index()][label.index()]
    }

    pub fn set(&mut self, domain: RiskDomain, label: SentimentLabel, count: usize) {
        self.counts[domain.index()][label.index()] = count;
    }

    /// (positive, negative, neutral) for one domain.
    pub fn row(&self, domain: RiskDomain) -> [usize; 3] {
        self.counts[domain.index()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// TSV with a header row, columns in positive/negative/neutral order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("domain\tpositive\tnegative\tneutral\n");
        for d in RiskDomain::ALL {
            let [p, n, u] = self.row(d);
            out.push_str(&format!("{d}\t{p}\t{n}\t{u}\n"));
        }
        out
    }
}

pub fn distribution(corpus: &Corpus) -> DistributionTable {
    let mut table = DistributionTable::default();
    for a in corpus.examples.iter().flat_map(|e| &e.annotations) {
        table.counts[a.domain.index()][a.sentiment.index()] += 1;
    }
    table
}

/// One annotation of a single domain, borrowed from its example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainItem<'a> {
    pub id: &'a str,
    pub text: &'a str,
    pub label: SentimentLabel,
}

/// Every annotation of `domain`, in corpus order.
pub fn filter_by_domain(corpus: &Corpus, domain: RiskDomain) -> Vec<DomainItem<'_>> {
    corpus
        .examples
        .iter()
        .filter_map(|e| {
            e.label_for(domain).map(|label| DomainItem { id: &e.id, text: &e.text, label })
        })
        .collect()
}
