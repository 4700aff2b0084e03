//! Indicator-column enrichment of the bag-of-words space.
//!
//! Extracted feature groups become extra input columns, one per
//! (sub-intent, literal) pair, appended after the base vocabulary. A sample's
//! indicator bits are driven by which sub-intents the pretrained model
//! predicts for it, so downstream classifiers can condition on semantic
//! groupings no single surface token carries. Base columns are never touched:
//! the first `n` bits of an enriched vector equal plain binarization.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, BowVector, LabeledExample, Vocabulary};
use crate::ntm::{FeatureGroup, NTMModel, predict_sub_intents};

/// A bit vector over base columns `0..n` plus indicator columns `n..n+m`.
pub type EnrichedVector = BowVector;

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("model is bound to vocabulary {model:016x}, enriching with {vocab:016x}")]
    VocabMismatch { model: u64, vocab: u64 },
    #[error("feature groups do not match the model: {0}")]
    GroupsMismatch(String),
    #[error("literal {literal:?} of {subintent} is not in the base vocabulary")]
    LiteralNotInVocabulary { subintent: String, literal: String },
    #[error("duplicate indicator {0}")]
    DuplicateIndicator(String),
    #[error("unknown indicator {0:?}")]
    UnknownIndicator(String),
    #[error("indicator sidecar: {0}")]
    Sidecar(String),
}

/// Separator between sub-intent and literal in an indicator's display name.
pub const INDICATOR_SEPARATOR: &str = "::";

pub fn indicator_name(subintent: &str, literal: &str) -> String {
    format!("{subintent}{INDICATOR_SEPARATOR}{literal}")
}

/// The base vocabulary plus ordered indicator columns. Column `n + i` holds
/// the i-th injected (sub-intent, literal) pair; pairs follow group order,
/// then each group's literal order.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedVocabulary {
    base: Vocabulary,
    injected: Vec<(String, String)>,
    index: BTreeMap<String, usize>,
}

impl EnrichedVocabulary {
    pub fn new(
        base: Vocabulary,
        groups: &[FeatureGroup],
    ) -> Result<EnrichedVocabulary, EnrichError> {
        let mut injected = Vec::new();
        let mut index = BTreeMap::new();
        for g in groups {
            for lit in &g.literals {
                if base.get(lit).is_none() {
                    return Err(EnrichError::LiteralNotInVocabulary {
                        subintent: g.subintent.name.clone(),
                        literal: lit.clone(),
                    });
                }
                let name = indicator_name(&g.subintent.name, lit);
                if index.insert(name.clone(), injected.len()).is_some() {
                    return Err(EnrichError::DuplicateIndicator(name));
                }
                injected.push((g.subintent.name.clone(), lit.clone()));
            }
        }
        Ok(EnrichedVocabulary { base, injected, index })
    }

    pub fn base(&self) -> &Vocabulary {
        &self.base
    }

    pub fn injected(&self) -> &[(String, String)] {
        &self.injected
    }

    pub fn base_len(&self) -> usize {
        self.base.len()
    }

    pub fn injected_len(&self) -> usize {
        self.injected.len()
    }

    /// Total input width, base plus indicators.
    pub fn width(&self) -> usize {
        self.base.len() + self.injected.len()
    }

    /// Display name of an absolute column: the vocabulary token below `n`,
    /// the prefixed indicator name from `n` up.
    pub fn column_name(&self, col: usize) -> String {
        if col < self.base.len() {
            self.base.token(col).to_string()
        } else {
            let (sub, lit) = &self.injected[col - self.base.len()];
            indicator_name(sub, lit)
        }
    }

    /// Absolute column of an indicator name, if it exists.
    pub fn indicator_column(&self, name: &str) -> Option<usize> {
        self.index.get(name).map(|i| self.base.len() + i)
    }

    /// Identity over the base vocabulary and the injected pairs. Classifiers
    /// trained on enriched vectors record this as their vocabulary hash.
    pub fn hash(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(b"enriched-vocab-v1");
        h.update(self.base.hash().to_le_bytes());
        for (sub, lit) in &self.injected {
            h.update([0u8]);
            h.update(sub.as_bytes());
            h.update([1u8]);
            h.update(lit.as_bytes());
        }
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("sha256 digest is 32 bytes"))
    }

    /// Writes the indicator sidecar: a header binding the base vocabulary,
    /// then one `sub-intent<TAB>literal` line per injected column, in order.
    pub fn save(&self, path: &Path) -> Result<(), EnrichError> {
        let mut out = format!(
            "enriched-vocab-v1 base={:016x} count={}\n",
            self.base.hash(),
            self.injected.len()
        );
        for (sub, lit) in &self.injected {
            out.push_str(&format!("{sub}\t{lit}\n"));
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Reads a sidecar written by [`save`](Self::save) and re-binds it to the
    /// base vocabulary, which must hash to the recorded value.
    pub fn load(path: &Path, base: Vocabulary) -> Result<EnrichedVocabulary, EnrichError> {
        let raw = fs::read_to_string(path)?;
        Self::parse(&raw, base)
    }

    pub fn parse(raw: &str, base: Vocabulary) -> Result<EnrichedVocabulary, EnrichError> {
        let bad = |m: String| EnrichError::Sidecar(m);
        let mut lines = raw.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 3 || fields[0] != "enriched-vocab-v1" {
            return Err(bad(format!("unrecognized header {header:?}")));
        }
        let base_hash = fields[1]
            .strip_prefix("base=")
            .and_then(|h| u64::from_str_radix(h, 16).ok())
            .ok_or_else(|| bad(format!("bad base field {:?}", fields[1])))?;
        let count: usize = fields[2]
            .strip_prefix("count=")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| bad(format!("bad count field {:?}", fields[2])))?;
        if base_hash != base.hash() {
            return Err(bad(format!(
                "sidecar is bound to vocabulary {base_hash:016x}, got {:016x}",
                base.hash()
            )));
        }
        let mut injected = Vec::with_capacity(count);
        let mut index = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let Some((sub, lit)) = line.split_once('\t') else {
                return Err(bad(format!("line {}: expected sub-intent<TAB>literal", i + 2)));
            };
            if base.get(lit).is_none() {
                return Err(EnrichError::LiteralNotInVocabulary {
                    subintent: sub.to_string(),
                    literal: lit.to_string(),
                });
            }
            let name = indicator_name(sub, lit);
            if index.insert(name.clone(), injected.len()).is_some() {
                return Err(EnrichError::DuplicateIndicator(name));
            }
            injected.push((sub.to_string(), lit.to_string()));
        }
        if injected.len() != count {
            return Err(bad(format!(
                "header says {count} indicators, file has {}",
                injected.len()
            )));
        }
        Ok(EnrichedVocabulary { base, injected, index })
    }
}

/// How indicator bits are driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnrichMode {
    /// An indicator is set whenever its sub-intent is predicted, regardless
    /// of whether the literal token occurs in the text. The indicator then
    /// carries the model's semantic attribution, not surface overlap.
    #[default]
    Attribution,
    /// An indicator is set only when its sub-intent is predicted and the
    /// literal token occurs in the text. Ablation mode; strictly weaker.
    Lexical,
}

/// Validated binding of an enriched vocabulary, a pretrained model and its
/// feature groups. Construction checks the pieces belong together once so
/// per-sample enrichment stays cheap.
pub struct Enricher<'a> {
    vocab: &'a EnrichedVocabulary,
    model: &'a NTMModel,
    mode: EnrichMode,
    /// Per model pool: (absolute indicator column, base column of the
    /// literal) for every literal in the pool's group.
    pool_columns: Vec<Vec<(usize, usize)>>,
}

impl<'a> Enricher<'a> {
    pub fn new(
        vocab: &'a EnrichedVocabulary,
        model: &'a NTMModel,
        groups: &'a [FeatureGroup],
        mode: EnrichMode,
    ) -> Result<Enricher<'a>, EnrichError> {
        if model.vocab_hash() != vocab.base().hash() {
            return Err(EnrichError::VocabMismatch {
                model: model.vocab_hash(),
                vocab: vocab.base().hash(),
            });
        }
        let model_names: BTreeSet<&str> =
            model.subintents().iter().map(|s| s.name.as_str()).collect();
        let group_names: BTreeSet<&str> =
            groups.iter().map(|g| g.subintent.name.as_str()).collect();
        if let Some(extra) = group_names.difference(&model_names).next() {
            return Err(EnrichError::GroupsMismatch(format!(
                "group {extra} is not a model sub-intent"
            )));
        }
        if let Some(missing) = model_names.difference(&group_names).next() {
            return Err(EnrichError::GroupsMismatch(format!(
                "model sub-intent {missing} has no group"
            )));
        }
        let flattened: Vec<(String, String)> = groups
            .iter()
            .flat_map(|g| {
                g.literals.iter().map(|l| (g.subintent.name.clone(), l.clone()))
            })
            .collect();
        if flattened != vocab.injected() {
            return Err(EnrichError::GroupsMismatch(
                "indicator columns were built from different groups".into(),
            ));
        }
        let by_name: BTreeMap<&str, &FeatureGroup> =
            groups.iter().map(|g| (g.subintent.name.as_str(), g)).collect();
        let mut pool_columns = Vec::with_capacity(model.subintents().len());
        for si in model.subintents() {
            let g = by_name[si.name.as_str()];
            let mut cols = Vec::with_capacity(g.literals.len());
            for lit in &g.literals {
                let col = vocab
                    .indicator_column(&indicator_name(&si.name, lit))
                    .expect("flattened pairs matched the vocabulary");
                let base_col = vocab.base().get(lit).expect("literal checked at build");
                cols.push((col, base_col));
            }
            pool_columns.push(cols);
        }
        Ok(Enricher { vocab, model, mode, pool_columns })
    }

    /// Enriches one text: base bits are plain binarization, indicator bits
    /// follow the mode for every predicted sub-intent. Also returns the
    /// predicted pool indices for audit.
    pub fn enrich_text(&self, text: &str) -> (EnrichedVector, Vec<usize>) {
        let base_x = corpus::binarize(text, self.vocab.base());
        let mut x = BowVector::zeros(self.vocab.width());
        for i in 0..self.vocab.base_len() {
            if base_x.get(i) {
                x.set(i, true);
            }
        }
        let predictions = predict_sub_intents(self.model, &base_x);
        let mut pools = Vec::with_capacity(predictions.len());
        for p in &predictions {
            pools.push(p.pool);
            for &(col, base_col) in &self.pool_columns[p.pool] {
                let on = match self.mode {
                    EnrichMode::Attribution => true,
                    EnrichMode::Lexical => base_x.get(base_col),
                };
                if on {
                    x.set(col, true);
                }
            }
        }
        (x, pools)
    }
}

/// One enriched dataset: the widened vocabulary, one vector per input record
/// in input order, the records with their indicator names filled in, and how
/// often each sub-intent was predicted.
pub struct EnrichOutcome {
    pub vocabulary: EnrichedVocabulary,
    pub vectors: Vec<EnrichedVector>,
    pub records: Vec<LabeledExample>,
    /// (sub-intent name, number of records it was predicted for), in model
    /// pool order.
    pub activations: Vec<(String, usize)>,
}

/// Enriches a dataset against a pretrained model and its extracted groups.
/// Deterministic and order-preserving; the result carries everything needed
/// to persist the dataset and retrain on it without the model.
pub fn enrich_dataset(
    dataset: &[LabeledExample],
    vocab: &Vocabulary,
    model: &NTMModel,
    groups: &[FeatureGroup],
    mode: EnrichMode,
) -> Result<EnrichOutcome, EnrichError> {
    let vocabulary = EnrichedVocabulary::new(vocab.clone(), groups)?;
    let enricher = Enricher::new(&vocabulary, model, groups, mode)?;
    let mut vectors = Vec::with_capacity(dataset.len());
    let mut records = Vec::with_capacity(dataset.len());
    let mut counts = vec![0usize; model.subintents().len()];
    for rec in dataset {
        let (x, pools) = enricher.enrich_text(&rec.text);
        for &p in &pools {
            counts[p] += 1;
        }
        let names: Vec<String> = (vocabulary.base_len()..vocabulary.width())
            .filter(|&c| x.get(c))
            .map(|c| vocabulary.column_name(c))
            .collect();
        let mut out = rec.clone();
        out.injected = if names.is_empty() { None } else { Some(names) };
        records.push(out);
        vectors.push(x);
    }
    let activations = model
        .subintents()
        .iter()
        .zip(&counts)
        .map(|(si, &c)| (si.name.clone(), c))
        .collect();
    Ok(EnrichOutcome { vocabulary, vectors, records, activations })
}

/// Rebuilds the enriched vector of a persisted record: base bits from the
/// text, indicator bits from the recorded names. No model needed, so a saved
/// enriched dataset is self-contained alongside its sidecar.
pub fn vector_from_record(
    rec: &LabeledExample,
    vocab: &EnrichedVocabulary,
) -> Result<EnrichedVector, EnrichError> {
    let base_x = corpus::binarize(&rec.text, vocab.base());
    let mut x = BowVector::zeros(vocab.width());
    for i in 0..vocab.base_len() {
        if base_x.get(i) {
            x.set(i, true);
        }
    }
    for name in rec.injected.iter().flatten() {
        let col = vocab
            .indicator_column(name)
            .ok_or_else(|| EnrichError::UnknownIndicator(name.clone()))?;
        x.set(col, true);
    }
    Ok(x)
}
