//! Text to binary features: tokenization, vocabulary construction, bag-of-words
//! binarization, and the line-delimited dataset format.
//!
//! Tokenization is deliberately simple and reproducible: lowercase, strip
//! punctuation and symbols, split on whitespace. Stripping does not introduce
//! token boundaries, so compound and hyphenated terms stay single tokens.
//! There is no stemming; a stop-word list is opt-in via [`VocabSpec`].

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("vocabulary is empty after frequency filtering")]
    EmptyVocabulary,
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("vocabulary file line {line}: {reason}")]
    BadVocabFile { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercased whitespace-separated tokens with punctuation and symbols
/// removed. Characters that are neither alphanumeric nor whitespace are
/// deleted in place, so "state-of-the-art" becomes one token. Text with no
/// alphanumeric content tokenizes to an empty list.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur).to_lowercase());
            }
        } else if ch.is_alphanumeric() {
            cur.push(ch);
        }
    }
    if !cur.is_empty() {
        tokens.push(cur.to_lowercase());
    }
    tokens
}

/// Construction parameters for [`build_vocabulary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabSpec {
    /// Minimum number of distinct documents a token must appear in.
    pub min_doc_freq: u32,
    /// Hard cap on vocabulary size; lowest-frequency tokens are dropped first.
    pub max_size: usize,
    /// Tokens removed before counting. Compared post-tokenization, so entries
    /// should be lowercase single tokens.
    pub stop_words: Vec<String>,
}

impl Default for VocabSpec {
    fn default() -> Self {
        VocabSpec { min_doc_freq: 2, max_size: 20_000, stop_words: Vec::new() }
    }
}

/// Token-to-index mapping fixed at build time. Index order is descending
/// document frequency with lexicographic tie-break, which makes construction
/// deterministic for a given document set.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_doc_freq: u32,
    max_size: usize,
}

const VOCAB_TAG: &str = "vocab-v1";

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn min_doc_freq(&self) -> u32 {
        self.min_doc_freq
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// Identity hash over the ordered token list. Models record this value so
    /// that a vector binarized under a different vocabulary is rejected.
    pub fn hash(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(VOCAB_TAG.as_bytes());
        for t in &self.tokens {
            h.update([0u8]);
            h.update(t.as_bytes());
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    fn from_parts(tokens: Vec<String>, min_doc_freq: u32, max_size: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index, min_doc_freq, max_size }
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut f = File::create(path)?;
        self.write(&mut f)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<(), CorpusError> {
        writeln!(
            w,
            "{VOCAB_TAG} min_doc_freq={} max_size={}",
            self.min_doc_freq, self.max_size
        )?;
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self, CorpusError> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(CorpusError::BadVocabFile {
            line: 1,
            reason: "empty file".into(),
        })?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(VOCAB_TAG) {
            return Err(CorpusError::BadVocabFile {
                line: 1,
                reason: format!("expected {VOCAB_TAG} header"),
            });
        }
        let mut min_doc_freq = None;
        let mut max_size = None;
        for field in fields {
            let (key, value) = field.split_once('=').ok_or_else(|| CorpusError::BadVocabFile {
                line: 1,
                reason: format!("malformed header field {field:?}"),
            })?;
            let bad = |_| CorpusError::BadVocabFile {
                line: 1,
                reason: format!("bad value for {key}: {value:?}"),
            };
            match key {
                "min_doc_freq" => min_doc_freq = Some(value.parse::<u32>().map_err(bad)?),
                "max_size" => max_size = Some(value.parse::<usize>().map_err(bad)?),
                _ => {
                    return Err(CorpusError::BadVocabFile {
                        line: 1,
                        reason: format!("unknown header field {key:?}"),
                    });
                }
            }
        }
        let (Some(min_doc_freq), Some(max_size)) = (min_doc_freq, max_size) else {
            return Err(CorpusError::BadVocabFile {
                line: 1,
                reason: "header is missing min_doc_freq or max_size".into(),
            });
        };

        let mut tokens = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            if line.is_empty() || line.split_whitespace().count() != 1 {
                return Err(CorpusError::BadVocabFile {
                    line: lineno,
                    reason: "expected exactly one token".into(),
                });
            }
            if !seen.insert(line.to_string()) {
                return Err(CorpusError::BadVocabFile {
                    line: lineno,
                    reason: format!("duplicate token {line:?}"),
                });
            }
            tokens.push(line.to_string());
        }
        if tokens.is_empty() {
            return Err(CorpusError::EmptyVocabulary);
        }
        if tokens.len() > max_size {
            return Err(CorpusError::BadVocabFile {
                line: 1,
                reason: format!("{} tokens exceeds declared max_size {max_size}", tokens.len()),
            });
        }
        Ok(Self::from_parts(tokens, min_doc_freq, max_size))
    }
}

/// Builds a vocabulary from tokenized documents. A token counts once per
/// document toward its frequency. Errors with [`CorpusError::EmptyVocabulary`]
/// when nothing survives the frequency filter.
pub fn build_vocabulary<S: AsRef<str>>(
    docs: &[S],
    spec: &VocabSpec,
) -> Result<Vocabulary, CorpusError> {
    let stop: HashSet<&str> = spec.stop_words.iter().map(|s| s.as_str()).collect();
    let mut doc_freq: HashMap<String, u32> = HashMap::new();
    for doc in docs {
        let distinct: BTreeSet<String> = tokenize(doc.as_ref()).into_iter().collect();
        for token in distinct {
            if !stop.contains(token.as_str()) {
                *doc_freq.entry(token).or_insert(0) += 1;
            }
        }
    }
    let mut entries: Vec<(String, u32)> = doc_freq
        .into_iter()
        .filter(|(_, df)| *df >= spec.min_doc_freq)
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(spec.max_size);
    if entries.is_empty() {
        return Err(CorpusError::EmptyVocabulary);
    }
    let tokens = entries.into_iter().map(|(t, _)| t).collect();
    Ok(Vocabulary::from_parts(tokens, spec.min_doc_freq, spec.max_size))
}

/// Fixed-width bit vector packed into u64 words. Bit k corresponds to
/// vocabulary index k (plus injected indicator columns when enriched).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BowVector {
    words: Vec<u64>,
    len: usize,
}

impl BowVector {
    pub fn zeros(len: usize) -> Self {
        BowVector { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(len: usize, indices: I) -> Self {
        let mut v = Self::zeros(len);
        for i in indices {
            v.set(i, true);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for width {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range for width {}", self.len);
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }

    /// Packed words, for mask-based clause evaluation. Trailing bits beyond
    /// `len` are always zero.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Widens by `extra` zero bits, keeping existing bits at their indices.
    pub fn extended(&self, extra: usize) -> BowVector {
        let mut out = Self::zeros(self.len + extra);
        out.words[..self.words.len()].copy_from_slice(&self.words);
        out
    }
}

/// Bag-of-words binarization. Out-of-vocabulary tokens are ignored; text with
/// no in-vocabulary tokens yields the zero vector.
pub fn binarize(text: &str, vocab: &Vocabulary) -> BowVector {
    let mut v = BowVector::zeros(vocab.len());
    for token in tokenize(text) {
        if let Some(i) = vocab.get(&token) {
            v.set(i, true);
        }
    }
    v
}

/// One dataset record. `text` and `label` are non-empty after trimming;
/// `sub_intent` is carried by generated corpora and absent in real data.
/// `injected` lists indicator column names set for this record; it only
/// appears in enriched datasets and pairs with an indicator sidecar file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_intent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injected: Option<Vec<String>>,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, label: impl Into<String>) -> Self {
        LabeledExample { text: text.into(), label: label.into(), sub_intent: None, injected: None }
    }
}

/// Reads a line-delimited dataset: one JSON object per line with required
/// `text` and `label` fields. Errors name the offending 1-based line.
pub fn load_dataset(path: &Path) -> Result<Vec<LabeledExample>, CorpusError> {
    read_dataset(BufReader::new(File::open(path)?))
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Vec<LabeledExample>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        out.push(parse_record(&line, lineno)?);
    }
    Ok(out)
}

pub fn parse_record(line: &str, lineno: usize) -> Result<LabeledExample, CorpusError> {
    let malformed = |reason: String| CorpusError::MalformedRecord { line: lineno, reason };
    if line.trim().is_empty() {
        return Err(malformed("blank line".into()));
    }
    let mut rec: LabeledExample =
        serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    rec.text = rec.text.trim().to_string();
    rec.label = rec.label.trim().to_string();
    if rec.text.is_empty() {
        return Err(malformed("text is empty".into()));
    }
    if rec.label.is_empty() {
        return Err(malformed("label is empty".into()));
    }
    if let Some(si) = &rec.sub_intent {
        let si = si.trim().to_string();
        if si.is_empty() {
            return Err(malformed("sub_intent present but empty".into()));
        }
        rec.sub_intent = Some(si);
    }
    if let Some(names) = &rec.injected
        && names.iter().any(|n| n.trim().is_empty())
    {
        return Err(malformed("injected contains an empty indicator name".into()));
    }
    Ok(rec)
}

/// Writes records in canonical form: one compact JSON object per line with
/// fields in declaration order. Loading then saving a file reproduces it
/// byte for byte.
pub fn save_dataset(path: &Path, records: &[LabeledExample]) -> Result<(), CorpusError> {
    let mut f = File::create(path)?;
    write_dataset(&mut f, records)
}

pub fn write_dataset<W: Write>(w: &mut W, records: &[LabeledExample]) -> Result<(), CorpusError> {
    for rec in records {
        let line = serde_json::to_string(rec).expect("record serialization cannot fail");
        writeln!(w, "{line}")?;
    }
    Ok(())
}
