//! Dictionary-based word-category scoring.
//!
//! A lexicon maps category names to patterns: literal words, or prefixes
//! ending in `*`. A document's score for a category is the percentage of its
//! tokens matching any of that category's patterns.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persona::TraitName;
use crate::stats;

const MINI_LEX: &str = include_str!("../data/mini.lex");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("document {doc} has no value for metric {metric}")]
    MissingMetric { doc: usize, metric: String },
    #[error("contrast needs documents in both groups")]
    EmptyGroup,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryLexicon {
    categories: Vec<String>,
    patterns: BTreeMap<String, Vec<String>>,
    exact: HashMap<String, Vec<usize>>,
    prefixes: Vec<(String, usize)>,
}

impl CategoryLexicon {
    pub fn builtin() -> &'static CategoryLexicon {
        static LEX: OnceLock<CategoryLexicon> = OnceLock::new();
        LEX.get_or_init(|| CategoryLexicon::parse(MINI_LEX).expect("builtin lexicon is valid"))
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| LexiconError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Builds a lexicon from category → patterns pairs.
    pub fn from_categories<I, C, P>(entries: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = (C, Vec<P>)>,
        C: Into<String>,
        P: Into<String>,
    {
        let mut categories = Vec::new();
        let mut patterns = BTreeMap::new();
        for (c, ps) in entries {
            let c = c.into();
            if patterns.contains_key(&c) {
                return Err(LexiconError::Format { line: 0, message: format!("duplicate category {c}") });
            }
            categories.push(c.clone());
            patterns.insert(c, ps.into_iter().map(Into::into).collect());
        }
        Self::build(categories, patterns)
    }

    /// Parses the dictionary format: a `%`-delimited header naming the
    /// categories (optionally `id<TAB>name`), then one `word<TAB>cats` line
    /// per pattern, with categories separated by tabs or commas and given by
    /// name or header id.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == "%" => {}
            Some((n, _)) => return Err(LexiconError::Format { line: n + 1, message: "expected '%' header".into() }),
            None => return Err(LexiconError::Format { line: 0, message: "empty lexicon".into() }),
        }
        let mut categories = Vec::new();
        let mut ids: HashMap<String, String> = HashMap::new();
        let mut closed = false;
        for (n, line) in lines.by_ref() {
            let line = line.trim();
            if line == "%" {
                closed = true;
                break;
            }
            let (id, name) = match line.split_once(char::is_whitespace) {
                Some((id, name)) => (Some(id.to_string()), name.trim().to_string()),
                None => (None, line.to_string()),
            };
            if categories.contains(&name) {
                return Err(LexiconError::Format { line: n + 1, message: format!("duplicate category {name}") });
            }
            if let Some(id) = id {
                ids.insert(id, name.clone());
            }
            categories.push(name);
        }
        if !closed {
            return Err(LexiconError::Format { line: 0, message: "unterminated header".into() });
        }
        let mut patterns: BTreeMap<String, Vec<String>> =
            categories.iter().map(|c| (c.clone(), Vec::new())).collect();
        for (n, line) in lines {
            let mut parts = line.splitn(2, '\t');
            let word = parts.next().unwrap_or("").trim().to_lowercase();
            let cats = parts.next().unwrap_or("");
            if word.is_empty() || word == "*" {
                return Err(LexiconError::Format { line: n + 1, message: "empty pattern".into() });
            }
            let mut any = false;
            for c in cats.split(['\t', ',']).map(str::trim).filter(|c| !c.is_empty()) {
                let name = ids.get(c).map(String::as_str).unwrap_or(c);
                let Some(list) = patterns.get_mut(name) else {
                    return Err(LexiconError::Format { line: n + 1, message: format!("unknown category {c}") });
                };
                list.push(word.clone());
                any = true;
            }
            if !any {
                return Err(LexiconError::Format { line: n + 1, message: format!("{word} has no category") });
            }
        }
        Self::build(categories, patterns)
    }

    fn build(categories: Vec<String>, patterns: BTreeMap<String, Vec<String>>) -> Result<Self, LexiconError> {
        let mut exact: HashMap<String, Vec<usize>> = HashMap::new();
        let mut prefixes = Vec::new();
        for (k, c) in categories.iter().enumerate() {
            for p in &patterns[c] {
                let p = p.to_lowercase();
                match p.strip_suffix('*') {
                    Some("") => return Err(LexiconError::Format { line: 0, message: "empty pattern".into() }),
                    Some(prefix) => prefixes.push((prefix.to_string(), k)),
                    None if p.is_empty() => {
                        return Err(LexiconError::Format { line: 0, message: "empty pattern".into() });
                    }
                    None => exact.entry(p).or_default().push(k),
                }
            }
        }
        Ok(Self { categories, patterns, exact, prefixes })
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn patterns(&self, category: &str) -> Option<&[String]> {
        self.patterns.get(category).map(Vec::as_slice)
    }

    /// Indices of the categories `token` falls into, each at most once.
    fn matches(&self, token: &str) -> Vec<usize> {
        let mut hit = vec![false; self.categories.len()];
        if let Some(ks) = self.exact.get(token) {
            for &k in ks {
                hit[k] = true;
            }
        }
        for (prefix, k) in &self.prefixes {
            if token.starts_with(prefix.as_str()) {
                hit[*k] = true;
            }
        }
        hit.iter().enumerate().filter(|(_, h)| **h).map(|(k, _)| k).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScores {
    pub word_count: usize,
    pub pct: BTreeMap<String, f64>,
}

impl CategoryScores {
    pub fn get(&self, metric: &str) -> Option<f64> {
        self.pct.get(metric).copied()
    }
}

/// Lowercases and splits on anything other than letters, digits, and
/// apostrophes inside a word.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '\u{2019}')) {
        let t = raw.trim_matches(|c| c == '\'' || c == '\u{2019}');
        if !t.is_empty() {
            out.push(t.to_lowercase().replace('\u{2019}', "'"));
        }
    }
    out
}

pub fn score_text(text: &str, lexicon: &CategoryLexicon) -> CategoryScores {
    let tokens = tokenize(text);
    let mut counts = vec![0usize; lexicon.categories.len()];
    for t in &tokens {
        for k in lexicon.matches(t) {
            counts[k] += 1;
        }
    }
    let n = tokens.len();
    let pct = lexicon
        .categories
        .iter()
        .zip(counts)
        .map(|(c, m)| (c.clone(), if n == 0 { 0.0 } else { 100.0 * m as f64 / n as f64 }))
        .collect();
    CategoryScores { word_count: n, pct }
}

/// The marker categories associated with each trait.
pub fn trait_metrics(t: TraitName) -> &'static [&'static str] {
    match t {
        TraitName::Extraversion => &["emo_pos", "social", "affiliation", "you", "we", "focuspresent"],
        TraitName::Agreeableness => &["emo_pos", "polite", "prosocial", "family", "friend", "i", "conflict", "swear"],
        TraitName::Conscientiousness => &["certitude", "cause", "focusfuture", "achieve", "negate", "swear", "Analytic"],
        TraitName::Neuroticism => &["emo_neg", "emo_anx", "emo_sad", "emo_anger", "i", "focuspast"],
        TraitName::Openness => &["article", "prep", "insight", "tentat", "differ", "cogproc"],
    }
}

/// Summary variables that a word list cannot produce; only available from
/// imported scores.
pub const IMPORT_ONLY_METRICS: &[&str] = &["Analytic"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub n_high: usize,
    pub n_rest: usize,
    pub mean_high: f64,
    pub mean_rest: f64,
    /// Absent when both groups have zero variance.
    pub d: Option<f64>,
    pub p: Option<f64>,
}

/// Compares per-document scores on `metric` between the two groups with
/// Cohen's d and the pooled t-test.
pub fn contrast(high: &[CategoryScores], rest: &[CategoryScores], metric: &str) -> Result<Contrast, LexiconError> {
    let values = |docs: &[CategoryScores]| -> Result<Vec<f64>, LexiconError> {
        docs.iter()
            .enumerate()
            .map(|(doc, s)| s.get(metric).ok_or_else(|| LexiconError::MissingMetric { doc, metric: metric.into() }))
            .collect()
    };
    contrast_values(&values(high)?, &values(rest)?)
}

pub fn contrast_values(high: &[f64], rest: &[f64]) -> Result<Contrast, LexiconError> {
    let (Some(h), Some(r)) = (stats::SampleSummary::from_slice(high), stats::SampleSummary::from_slice(rest)) else {
        return Err(LexiconError::EmptyGroup);
    };
    let (d, p) = match stats::t_test_pooled(high, rest) {
        Ok(t) => (t.effect, Some(t.p)),
        Err(_) => (None, None),
    };
    Ok(Contrast { n_high: h.n, n_rest: r.n, mean_high: h.mean, mean_rest: r.mean, d, p })
}

/// Reads externally computed scores: a document-id column first, then one
/// numeric column per category. A `WC` column, if present, becomes the word
/// count. Returns (document id, scores) in file order.
pub fn import_csv(path: &Path) -> Result<Vec<(String, CategoryScores)>, LexiconError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut out = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row = row?;
        let id = row.get(0).unwrap_or("").to_string();
        let mut pct = BTreeMap::new();
        let mut word_count = 0;
        for (h, v) in headers.iter().zip(row.iter()).skip(1) {
            let v = v.trim();
            if v.is_empty() {
                continue;
            }
            let x: f64 = v.parse().map_err(|_| LexiconError::Format {
                line: n + 2,
                message: format!("column {h}: {v:?} is not a number"),
            })?;
            if h == "WC" {
                word_count = x as usize;
            } else {
                pct.insert(h.to_string(), x);
            }
        }
        out.push((id, CategoryScores { word_count, pct }));
    }
    Ok(out)
}
