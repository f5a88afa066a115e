//! Text features: tokens, stopword removal, 1–2-grams, vocabulary, and a
//! sparse document-term matrix with optional TF-IDF weighting.
//!
//! Pipeline order matters: stopwords are removed before n-grams are built, so
//! "checked the labels" yields the bigram "checked labels".
//!
//! Text formats:
//!
//! ```text
//! # vocabulary n_docs=2 n_terms=3
//! fixed\t0\t2
//! fixed labels\t1\t1
//! labels\t2\t1
//! ```
//!
//! ```text
//! # matrix n_docs=2 n_terms=3 weighting=tfidf fingerprint=0123abcd
//! doc-1\t0:0.5 2:0.8660254037844386
//! doc-2\t
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::fingerprint::short_digest;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("empty vocabulary")]
    EmptyVocabulary,
    #[error("no documents")]
    NoDocuments,
    #[error("invalid n-gram range {min}..={max}")]
    InvalidNgramRange { min: usize, max: usize },
    #[error("matrix already has {0} weighting")]
    WrongWeighting(Weighting),
    #[error("malformed {what} at line {line}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Counts,
    #[default]
    Tfidf,
}

impl std::fmt::Display for Weighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Weighting::Counts => "counts",
            Weighting::Tfidf => "tfidf",
        })
    }
}

impl std::str::FromStr for Weighting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "counts" => Ok(Weighting::Counts),
            "tfidf" => Ok(Weighting::Tfidf),
            other => Err(format!("unknown weighting {other:?}")),
        }
    }
}

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// Parses a stopword file: one word per line, `#` starts a comment line.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub lowercase: bool,
    pub stopwords: BTreeSet<String>,
    pub weighting: Weighting,
    pub min_token_len: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            ngram_min: 1,
            ngram_max: 2,
            lowercase: true,
            stopwords: default_stopwords(),
            weighting: Weighting::Tfidf,
            min_token_len: 2,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(FeatureError::InvalidNgramRange {
                min: self.ngram_min,
                max: self.ngram_max,
            });
        }
        Ok(())
    }

    /// Tokens, stopwords removed, expanded to n-grams.
    pub fn analyze(&self, text: &str) -> Vec<String> {
        let tokens = remove_stopwords(tokenize(text, self), &self.stopwords);
        extract_ngrams(&tokens, self.ngram_min, self.ngram_max)
    }
}

/// Maximal runs of alphanumeric characters at least `min_token_len` long.
pub fn tokenize(text: &str, config: &FeatureConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && t.chars().count() >= config.min_token_len)
        .map(|t| if config.lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

pub fn remove_stopwords(tokens: Vec<String>, stopwords: &BTreeSet<String>) -> Vec<String> {
    if stopwords.is_empty() {
        return tokens;
    }
    tokens
        .into_iter()
        .filter(|t| !stopwords.contains(&t.to_lowercase()))
        .collect()
}

/// All contiguous n-grams for n in `min..=max`, space-joined; all 1-grams
/// first, then all 2-grams, and so on.
pub fn extract_ngrams(tokens: &[String], min: usize, max: usize) -> Vec<String> {
    let mut out = Vec::new();
    for n in min.max(1)..=max {
        if n > tokens.len() {
            break;
        }
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<u32>,
    n_docs: usize,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, df: Vec<u32>, n_docs: usize) -> Vocabulary {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            terms,
            df,
            n_docs,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn df(&self, term: &str) -> Option<u32> {
        self.index_of(term).map(|i| self.df[i])
    }

    pub fn df_at(&self, index: usize) -> u32 {
        self.df[index]
    }

    /// Number of documents the vocabulary was fitted on.
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// Smoothed inverse document frequency `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf_at(&self, index: usize) -> f64 {
        idf(self.n_docs, self.df[index] as usize)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# vocabulary n_docs={} n_terms={}\n", self.n_docs, self.terms.len());
        for (i, (term, df)) in self.terms.iter().zip(&self.df).enumerate() {
            let _ = writeln!(out, "{term}\t{i}\t{df}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Vocabulary, FeatureError> {
        let parse_err = |line: usize, message: String| FeatureError::Parse {
            what: "vocabulary",
            line,
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
        let fields = header_fields(header, "# vocabulary").ok_or_else(|| parse_err(1, "bad header".into()))?;
        let n_docs: usize = field(&fields, "n_docs").ok_or_else(|| parse_err(1, "missing n_docs".into()))?;
        let n_terms: usize = field(&fields, "n_terms").ok_or_else(|| parse_err(1, "missing n_terms".into()))?;
        let mut terms = Vec::with_capacity(n_terms);
        let mut df = Vec::with_capacity(n_terms);
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let mut parts = line.split('\t');
            let (Some(term), Some(index), Some(freq), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(parse_err(line_no, "expected term<TAB>index<TAB>df".into()));
            };
            let index: usize = index.parse().map_err(|_| parse_err(line_no, "bad index".into()))?;
            if index != terms.len() {
                return Err(parse_err(line_no, format!("index {index} out of sequence")));
            }
            if terms.last().is_some_and(|prev: &String| prev.as_str() >= term) {
                return Err(parse_err(line_no, "terms not sorted".into()));
            }
            terms.push(term.to_string());
            df.push(freq.parse().map_err(|_| parse_err(line_no, "bad df".into()))?);
        }
        if terms.len() != n_terms {
            return Err(parse_err(1, format!("header says {n_terms} terms, found {}", terms.len())));
        }
        Ok(Vocabulary::from_parts(terms, df, n_docs))
    }
}

fn header_fields<'a>(line: &'a str, prefix: &str) -> Option<BTreeMap<&'a str, &'a str>> {
    let rest = line.strip_prefix(prefix)?;
    Some(rest.split_whitespace().filter_map(|kv| kv.split_once('=')).collect())
}

fn field<T: std::str::FromStr>(fields: &BTreeMap<&str, &str>, key: &str) -> Option<T> {
    fields.get(key).and_then(|v| v.parse().ok())
}

pub fn idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

pub fn fit_vocabulary<S: AsRef<str>>(docs: &[S], config: &FeatureConfig) -> Result<Vocabulary, FeatureError> {
    config.validate()?;
    if docs.is_empty() {
        return Err(FeatureError::NoDocuments);
    }
    let mut df: BTreeMap<String, u32> = BTreeMap::new();
    for doc in docs {
        let distinct: BTreeSet<String> = config.analyze(doc.as_ref()).into_iter().collect();
        for term in distinct {
            *df.entry(term).or_default() += 1;
        }
    }
    if df.is_empty() {
        return Err(FeatureError::EmptyVocabulary);
    }
    let (terms, counts) = df.into_iter().unzip();
    Ok(Vocabulary::from_parts(terms, counts, docs.len()))
}

/// Sparse rows of `(term index, weight)` sorted by term index.
#[derive(Clone, Debug, PartialEq)]
pub struct DocTermMatrix {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub n_terms: usize,
    pub weighting: Weighting,
    /// Identifies the feature space the columns belong to.
    pub fingerprint: String,
}

impl DocTermMatrix {
    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn is_zero_row(&self, row: usize) -> bool {
        self.rows[row].iter().all(|&(_, w)| w == 0.0)
    }

    /// Rows with no in-vocabulary terms.
    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|&r| self.is_zero_row(r)).collect()
    }

    pub fn get(&self, row: usize, term: usize) -> f64 {
        self.rows[row]
            .binary_search_by_key(&term, |&(i, _)| i)
            .map(|pos| self.rows[row][pos].1)
            .unwrap_or(0.0)
    }

    pub fn select_rows(&self, indices: &[usize]) -> DocTermMatrix {
        DocTermMatrix {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            n_terms: self.n_terms,
            weighting: self.weighting,
            fingerprint: self.fingerprint.clone(),
        }
    }

    pub fn write_text<W: Write, S: AsRef<str>>(&self, mut out: W, doc_ids: &[S]) -> std::io::Result<()> {
        writeln!(
            out,
            "# matrix n_docs={} n_terms={} weighting={} fingerprint={}",
            self.rows.len(),
            self.n_terms,
            self.weighting,
            self.fingerprint
        )?;
        for (row, id) in self.rows.iter().zip(doc_ids) {
            let cells: Vec<String> = row.iter().map(|(i, w)| format!("{i}:{w}")).collect();
            writeln!(out, "{}\t{}", id.as_ref(), cells.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<(DocTermMatrix, Vec<String>), FeatureError> {
        let parse_err = |line: usize, message: String| FeatureError::Parse {
            what: "matrix",
            line,
            message,
        };
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))??;
        let fields = header_fields(&header, "# matrix").ok_or_else(|| parse_err(1, "bad header".into()))?;
        let n_terms: usize = field(&fields, "n_terms").ok_or_else(|| parse_err(1, "missing n_terms".into()))?;
        let weighting: Weighting =
            field(&fields, "weighting").ok_or_else(|| parse_err(1, "missing weighting".into()))?;
        let fingerprint = fields.get("fingerprint").copied().unwrap_or_default().to_string();
        let mut rows = Vec::new();
        let mut ids = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line_no = i + 2;
            let (id, cells) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(line_no, "expected doc_id<TAB>cells".into()))?;
            let mut row = Vec::new();
            for cell in cells.split_whitespace() {
                let (idx, w) = cell
                    .split_once(':')
                    .ok_or_else(|| parse_err(line_no, format!("bad cell {cell:?}")))?;
                let idx: usize = idx.parse().map_err(|_| parse_err(line_no, format!("bad index in {cell:?}")))?;
                let w: f64 = w.parse().map_err(|_| parse_err(line_no, format!("bad weight in {cell:?}")))?;
                if idx >= n_terms {
                    return Err(parse_err(line_no, format!("term index {idx} out of range")));
                }
                row.push((idx, w));
            }
            ids.push(id.to_string());
            rows.push(row);
        }
        Ok((
            DocTermMatrix {
                rows,
                n_terms,
                weighting,
                fingerprint,
            },
            ids,
        ))
    }
}

/// Raw n-gram counts over `vocab`; out-of-vocabulary terms are ignored.
pub fn vectorize<S: AsRef<str>>(docs: &[S], vocab: &Vocabulary, config: &FeatureConfig) -> DocTermMatrix {
    let rows = docs
        .iter()
        .map(|doc| {
            let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
            for term in config.analyze(doc.as_ref()) {
                if let Some(i) = vocab.index_of(&term) {
                    *counts.entry(i).or_default() += 1.0;
                }
            }
            counts.into_iter().collect()
        })
        .collect();
    DocTermMatrix {
        rows,
        n_terms: vocab.len(),
        weighting: Weighting::Counts,
        fingerprint: String::new(),
    }
}

/// Scales counts by idf and normalizes every nonzero row to unit length.
pub fn apply_tfidf(matrix: &DocTermMatrix, vocab: &Vocabulary) -> Result<DocTermMatrix, FeatureError> {
    if matrix.weighting != Weighting::Counts {
        return Err(FeatureError::WrongWeighting(matrix.weighting));
    }
    let rows = matrix
        .rows
        .iter()
        .map(|row| {
            let weighted: Vec<(usize, f64)> = row.iter().map(|&(i, c)| (i, c * vocab.idf_at(i))).collect();
            let norm = weighted.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                weighted.into_iter().map(|(i, w)| (i, w / norm)).collect()
            } else {
                weighted
            }
        })
        .collect();
    Ok(DocTermMatrix {
        rows,
        n_terms: matrix.n_terms,
        weighting: Weighting::Tfidf,
        fingerprint: matrix.fingerprint.clone(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermAggregate {
    #[default]
    Max,
    Mean,
}

/// Top `k` terms by their maximum (or mean) weight across documents; ties
/// are broken by term text.
pub fn top_terms_by_tfidf(
    matrix: &DocTermMatrix,
    vocab: &Vocabulary,
    k: usize,
    aggregate: TermAggregate,
) -> Vec<(String, f64)> {
    let mut score = vec![0.0f64; vocab.len()];
    for row in &matrix.rows {
        for &(i, w) in row {
            match aggregate {
                TermAggregate::Max => score[i] = score[i].max(w),
                TermAggregate::Mean => score[i] += w,
            }
        }
    }
    if aggregate == TermAggregate::Mean && !matrix.rows.is_empty() {
        let n = matrix.rows.len() as f64;
        score.iter_mut().for_each(|s| *s /= n);
    }
    let mut ranked: Vec<(String, f64)> = vocab.terms().iter().cloned().zip(score).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// A fitted vocabulary together with the configuration that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSpace {
    pub config: FeatureConfig,
    pub vocab: Vocabulary,
}

impl FeatureSpace {
    pub fn fit<S: AsRef<str>>(docs: &[S], config: FeatureConfig) -> Result<FeatureSpace, FeatureError> {
        let vocab = fit_vocabulary(docs, &config)?;
        Ok(FeatureSpace { config, vocab })
    }

    /// Digest of the configuration and vocabulary; matrices built from this
    /// space carry it so models can refuse foreign inputs.
    pub fn fingerprint(&self) -> String {
        let mut bytes = serde_json::to_vec(&self.config).expect("config serializes");
        bytes.push(b'\n');
        bytes.extend_from_slice(self.vocab.to_text().as_bytes());
        short_digest(&bytes)
    }

    pub fn transform<S: AsRef<str>>(&self, docs: &[S]) -> DocTermMatrix {
        let counts = vectorize(docs, &self.vocab, &self.config);
        let mut matrix = match self.config.weighting {
            Weighting::Counts => counts,
            Weighting::Tfidf => apply_tfidf(&counts, &self.vocab).expect("counts input"),
        };
        matrix.fingerprint = self.fingerprint();
        matrix
    }

    /// Config as one JSON line followed by the vocabulary text.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# features ");
        out.push_str(&serde_json::to_string(&self.config).expect("config serializes"));
        out.push('\n');
        out.push_str(&self.vocab.to_text());
        out
    }

    pub fn from_text(text: &str) -> Result<FeatureSpace, FeatureError> {
        let (header, rest) = text.split_once('\n').unwrap_or((text, ""));
        let json = header.strip_prefix("# features ").ok_or(FeatureError::Parse {
            what: "feature space",
            line: 1,
            message: "missing '# features' header".into(),
        })?;
        let config: FeatureConfig = serde_json::from_str(json).map_err(|e| FeatureError::Parse {
            what: "feature space",
            line: 1,
            message: e.to_string(),
        })?;
        config.validate()?;
        let vocab = Vocabulary::from_text(rest)?;
        Ok(FeatureSpace { config, vocab })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn no_stopwords() -> FeatureConfig {
        FeatureConfig {
            stopwords: BTreeSet::new(),
            ..FeatureConfig::default()
        }
    }

    fn strings(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        let config = FeatureConfig::default();
        assert_eq!(
            tokenize("Ran self-checks; 1QC complete.", &config),
            strings(&["ran", "self", "checks", "1qc", "complete"])
        );
        assert!(tokenize("", &config).is_empty());
        assert!(tokenize("a b c", &config).is_empty());
    }

    #[test]
    fn ngram_examples() {
        assert_eq!(
            extract_ngrams(&strings(&["fixed", "missing", "values"]), 1, 2),
            strings(&["fixed", "missing", "values", "fixed missing", "missing values"])
        );
        assert_eq!(extract_ngrams(&strings(&["qc"]), 1, 2), strings(&["qc"]));
        assert!(extract_ngrams(&[], 1, 2).is_empty());
    }

    #[test]
    fn vocabulary_examples() {
        let vocab = fit_vocabulary(&["fixed labels", "fixed values"], &no_stopwords()).unwrap();
        assert_eq!(
            vocab.terms(),
            strings(&["fixed", "fixed labels", "fixed values", "labels", "values"]).as_slice()
        );
        assert_eq!(vocab.df("fixed"), Some(2));
        assert_eq!(vocab.df("labels"), Some(1));

        let vocab = fit_vocabulary(&["qc qc qc"], &no_stopwords()).unwrap();
        assert_eq!(vocab.terms(), &["qc".to_string(), "qc qc".to_string()]);
        assert_eq!(vocab.df("qc"), Some(1));
    }

    #[test]
    fn unigram_only_dedup() {
        let config = FeatureConfig {
            ngram_max: 1,
            ..no_stopwords()
        };
        let vocab = fit_vocabulary(&["qc qc qc"], &config).unwrap();
        assert_eq!(vocab.terms(), &["qc".to_string()]);
        assert_eq!(vocab.df("qc"), Some(1));
    }

    #[test]
    fn stopwords_removed_before_bigrams() {
        let config = FeatureConfig {
            stopwords: ["the".to_string()].into(),
            ..FeatureConfig::default()
        };
        let vocab = fit_vocabulary(&["checked the labels"], &config).unwrap();
        assert!(vocab.index_of("checked labels").is_some());
        assert!(vocab.terms().iter().all(|t| !t.split(' ').any(|w| w == "the")));
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        assert!(matches!(
            fit_vocabulary(&["", "a"], &FeatureConfig::default()),
            Err(FeatureError::EmptyVocabulary)
        ));
        assert!(matches!(
            fit_vocabulary::<&str>(&[], &FeatureConfig::default()),
            Err(FeatureError::NoDocuments)
        ));
    }

    #[test]
    fn count_vectorization() {
        let config = no_stopwords();
        let vocab = fit_vocabulary(&["fixed labels", "fixed values", "fixed fixed"], &config).unwrap();
        let m = vectorize(&["fixed fixed labels", "unknown words", ""], &vocab, &config);
        let at = |t: &str| m.get(0, vocab.index_of(t).unwrap());
        assert_eq!(at("fixed"), 2.0);
        assert_eq!(at("labels"), 1.0);
        assert_eq!(at("fixed fixed"), 1.0);
        assert_eq!(at("fixed labels"), 1.0);
        assert_eq!(m.rows[0].len(), 4);
        assert_eq!(m.zero_rows(), vec![1, 2]);
    }

    #[test]
    fn idf_of_ubiquitous_term_is_one() {
        assert_eq!(idf(5, 5), 1.0);
    }

    #[test]
    fn single_term_row_normalizes_to_one() {
        let config = FeatureConfig {
            ngram_max: 1,
            ..no_stopwords()
        };
        let space = FeatureSpace::fit(&["qc"], config).unwrap();
        let m = space.transform(&["qc"]);
        assert_eq!(m.rows[0], vec![(0, 1.0)]);
    }

    #[test]
    fn worked_two_document_example() {
        let config = FeatureConfig {
            ngram_max: 1,
            ..no_stopwords()
        };
        let space = FeatureSpace::fit(&["aa", "aa bb"], config).unwrap();
        assert!((space.vocab.idf_at(1) - 1.405465).abs() < 1e-6);
        let m = space.transform(&["aa", "aa bb"]);
        assert_eq!(m.rows[0], vec![(0, 1.0)]);
        assert!((m.rows[1][0].1 - 0.57974).abs() < 5e-6);
        assert!((m.rows[1][1].1 - 0.81480).abs() < 5e-6);
    }

    #[test]
    fn rare_phrase_outranks_ubiquitous_term() {
        let docs = ["study self checks", "study files", "study labels", "study files labels"];
        let space = FeatureSpace::fit(&docs, no_stopwords()).unwrap();
        let m = space.transform(&docs);
        let ranked = top_terms_by_tfidf(&m, &space.vocab, space.vocab.len(), TermAggregate::Max);
        let pos = |t: &str| ranked.iter().position(|(x, _)| x == t).unwrap();
        assert!(pos("self checks") < pos("study"));
        assert!(top_terms_by_tfidf(&m, &space.vocab, 0, TermAggregate::Max).is_empty());
        let mut all: Vec<String> = ranked.into_iter().map(|(t, _)| t).collect();
        all.sort();
        assert_eq!(all, space.vocab.terms());
        assert_eq!(
            top_terms_by_tfidf(&m, &space.vocab, 1000, TermAggregate::Mean).len(),
            space.vocab.len()
        );
    }

    #[test]
    fn text_formats_round_trip() {
        let docs = ["Reviewed deposit files", "ran 1QC checks", "fixed missing values"];
        let space = FeatureSpace::fit(&docs, FeatureConfig::default()).unwrap();
        let again = FeatureSpace::from_text(&space.to_text()).unwrap();
        assert_eq!(again, space);
        assert_eq!(again.fingerprint(), space.fingerprint());

        let m = space.transform(&docs);
        let mut buf = Vec::new();
        m.write_text(&mut buf, &["a", "b", "c"]).unwrap();
        let (back, ids) = DocTermMatrix::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn fingerprint_depends_on_config() {
        let docs = ["fixed labels"];
        let a = FeatureSpace::fit(&docs, FeatureConfig::default()).unwrap();
        let b = FeatureSpace::fit(
            &docs,
            FeatureConfig {
                weighting: Weighting::Counts,
                ..FeatureConfig::default()
            },
        )
        .unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn rejects_bad_ngram_range() {
        let config = FeatureConfig {
            ngram_min: 3,
            ngram_max: 2,
            ..FeatureConfig::default()
        };
        assert!(matches!(
            fit_vocabulary(&["x y"], &config),
            Err(FeatureError::InvalidNgramRange { .. })
        ));
    }

    proptest! {
        #[test]
        fn tfidf_rows_are_unit_norm(docs in prop::collection::vec("[a-e ]{0,30}", 1..12)) {
            let config = FeatureConfig { min_token_len: 1, ..no_stopwords() };
            if let Ok(space) = FeatureSpace::fit(&docs, config) {
                let m = space.transform(&docs);
                for row in &m.rows {
                    let norm = row.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        prop_assert!((norm - 1.0).abs() <= 1e-9);
                    }
                    prop_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
                    prop_assert!(row.iter().all(|&(i, _)| i < m.n_terms));
                }
            }
        }

        #[test]
        fn idf_is_strictly_decreasing_in_df(n in 1usize..500, a in 0usize..500, b in 0usize..500) {
            let (lo, hi) = (a.min(b).min(n), a.max(b).min(n));
            if lo < hi {
                prop_assert!(idf(n, lo) > idf(n, hi));
            }
        }

        #[test]
        fn vocabulary_never_contains_stopwords(docs in prop::collection::vec("(the|a|of|fixed|labels|qc|and|values| )*", 1..8)) {
            let config = FeatureConfig::default();
            if let Ok(vocab) = fit_vocabulary(&docs, &config) {
                for term in vocab.terms() {
                    prop_assert!(term.split(' ').all(|w| !config.stopwords.contains(w)));
                }
            }
        }

        #[test]
        fn fitting_is_deterministic(docs in prop::collection::vec("[a-f ]{0,20}", 1..8)) {
            let config = FeatureConfig { min_token_len: 1, ..FeatureConfig::default() };
            if let Ok(a) = FeatureSpace::fit(&docs, config.clone()) {
                let b = FeatureSpace::fit(&docs, config).unwrap();
                prop_assert_eq!(a.to_text(), b.to_text());
                let (mut x, mut y) = (Vec::new(), Vec::new());
                a.transform(&docs).write_text(&mut x, &docs).unwrap();
                b.transform(&docs).write_text(&mut y, &docs).unwrap();
                prop_assert_eq!(x, y);
            }
        }
    }
}
