//! Non-negated Tsetlin machine: one pool of monotone clauses per sub-intent.
//!
//! Monotone clauses hold only plain literals, so a clause is a bare keyword
//! conjunction and turning any input bit on can never silence a firing
//! clause. Training boosts Type I feedback so that matching included
//! literals are reinforced with certainty and never penalized; combined with
//! the monotone structure this makes inclusion a one-way door and lets deep
//! automaton states serve as a stability signal. Extraction reads that
//! signal: literals whose confidence (state depth beyond the boundary)
//! exceeds a threshold form the feature group of their sub-intent.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::RngExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{binarize, BowVector, LabeledExample, Vocabulary};
use crate::rng;
use crate::tm::EvalMode;

/// Default stability threshold for feature extraction.
pub const DEFAULT_STABILITY_THRESHOLD: u16 = 5;

#[derive(Debug, Error)]
pub enum NtmError {
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("bad sub-intent name {0:?}: expected lowercase `label_due_to_reason`")]
    BadSubIntentName(String),
    #[error("duplicate sub-intent {0:?}")]
    DuplicateSubIntent(String),
    #[error("vocabulary mismatch: model is bound to {expected:#018x}, got {actual:#018x}")]
    VocabularyMismatch { expected: u64, actual: u64 },
    #[error("input width mismatch: model expects {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("example {index} carries no sub-intent")]
    MissingSubIntent { index: usize },
    #[error("unknown sub-intent {name:?} at example {index}")]
    UnknownSubIntent { name: String, index: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("malformed feature-group file at line {line}: {reason}")]
    BadGroupsFile { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A fine-grained reason for class membership, named `label_due_to_reason`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubIntent {
    /// Compact machine name, e.g. `positive_due_to_plot`.
    pub name: String,
    /// Parent class label, always recoverable as the part before `_due_to_`.
    pub parent_label: String,
    /// Free-text reason as produced during discovery; may be empty when the
    /// sub-intent was reloaded from a file that stores only names.
    pub explanation: String,
}

pub(crate) fn is_slug(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with('_')
        && !s.ends_with('_')
        && !s.contains("__")
        && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl SubIntent {
    pub fn new(name: &str, explanation: &str) -> Result<SubIntent, NtmError> {
        let parent = Self::parent_of(name)?;
        Ok(SubIntent {
            name: name.to_string(),
            parent_label: parent.to_string(),
            explanation: explanation.trim().to_string(),
        })
    }

    /// Rebuild from a bare name, e.g. when loading a feature-group file.
    pub fn from_name(name: &str) -> Result<SubIntent, NtmError> {
        Self::new(name, "")
    }

    /// The class label encoded in a sub-intent name.
    pub fn parent_of(name: &str) -> Result<&str, NtmError> {
        let bad = || NtmError::BadSubIntentName(name.to_string());
        if !is_slug(name) {
            return Err(bad());
        }
        let (parent, reason) = name.split_once("_due_to_").ok_or_else(bad)?;
        // a second separator would make the parent ambiguous
        if parent.is_empty() || reason.is_empty() || reason.contains("_due_to_") {
            return Err(bad());
        }
        Ok(parent)
    }
}

/// Hyperparameters for a sub-intent model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtmParams {
    pub clauses_per_subintent: usize,
    pub threshold: u32,
    pub specificity: f64,
    pub states_per_action: u16,
    pub seed: u64,
}

impl Default for NtmParams {
    fn default() -> Self {
        NtmParams {
            clauses_per_subintent: 150,
            threshold: 5000,
            specificity: 5.0,
            states_per_action: 100,
            seed: 0,
        }
    }
}

impl NtmParams {
    pub fn validate(&self) -> Result<(), NtmError> {
        if self.clauses_per_subintent == 0 {
            return Err(NtmError::InvalidParams("clauses_per_subintent must be positive".into()));
        }
        if self.threshold == 0 {
            return Err(NtmError::InvalidParams("threshold must be positive".into()));
        }
        if !self.specificity.is_finite() || self.specificity <= 1.0 {
            return Err(NtmError::InvalidParams(format!(
                "specificity must be finite and greater than 1, got {}",
                self.specificity
            )));
        }
        if self.states_per_action == 0 || self.states_per_action > u16::MAX / 2 {
            return Err(NtmError::InvalidParams(format!(
                "states_per_action must be in [1, {}], got {}",
                u16::MAX / 2,
                self.states_per_action
            )));
        }
        Ok(())
    }
}

/// A conjunction of plain literals only. There is deliberately no negated
/// state array anywhere in this type.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneClause {
    include: Vec<u16>,
    inc_mask: Vec<u64>,
    included: u32,
    weight: u32,
    n: u16,
}

impl MonotoneClause {
    pub fn new(width: usize, n: u16) -> MonotoneClause {
        MonotoneClause {
            include: vec![n; width],
            inc_mask: vec![0; width.div_ceil(64)],
            included: 0,
            weight: 1,
            n,
        }
    }

    pub fn from_states(include: Vec<u16>, weight: u32, n: u16) -> Result<MonotoneClause, NtmError> {
        if n == 0 || n > u16::MAX / 2 {
            return Err(NtmError::InvalidParams(format!("bad state bound n={n}")));
        }
        let width = include.len();
        let mut clause = MonotoneClause {
            include,
            inc_mask: vec![0; width.div_ceil(64)],
            included: 0,
            weight,
            n,
        };
        for i in 0..width {
            let s = clause.include[i];
            if s == 0 || s > 2 * n {
                return Err(NtmError::InvalidParams(format!(
                    "automaton state {s} outside [1, {}] at feature {i}",
                    2 * n
                )));
            }
            if s > n {
                clause.inc_mask[i / 64] |= 1 << (i % 64);
                clause.included += 1;
            }
        }
        Ok(clause)
    }

    pub fn width(&self) -> usize {
        self.include.len()
    }

    pub fn n(&self) -> u16 {
        self.n
    }

    pub fn weight(&self) -> u32 {
        self.weight
    }

    pub fn include_states(&self) -> &[u16] {
        &self.include
    }

    pub fn included_count(&self) -> u32 {
        self.included
    }

    pub fn included_features(&self) -> Vec<usize> {
        (0..self.width()).filter(|&i| self.include[i] > self.n).collect()
    }

    /// State depth beyond the include boundary: max(0, state - n).
    pub fn confidence(&self, feature: usize) -> u16 {
        self.include[feature].saturating_sub(self.n)
    }

    pub fn evaluate(&self, x: &BowVector, mode: EvalMode) -> bool {
        debug_assert_eq!(x.len(), self.width(), "input width mismatch");
        if self.included == 0 {
            return mode == EvalMode::Learning;
        }
        for (i, &w) in x.words().iter().enumerate() {
            if self.inc_mask[i] & !w != 0 {
                return false;
            }
        }
        true
    }

    fn ta_up(&mut self, i: usize) {
        let s = self.include[i];
        if s >= 2 * self.n {
            return;
        }
        self.include[i] = s + 1;
        if s == self.n {
            self.inc_mask[i / 64] |= 1 << (i % 64);
            self.included += 1;
        }
    }

    fn ta_down(&mut self, i: usize) {
        let s = self.include[i];
        if s <= 1 {
            return;
        }
        self.include[i] = s - 1;
        if s == self.n + 1 {
            self.inc_mask[i / 64] &= !(1 << (i % 64));
            self.included -= 1;
        }
    }
}

/// Conjunction over packed words; the free-function form of
/// [`MonotoneClause::evaluate`] for callers holding clause and input apart.
pub fn evaluate_monotone_clause(clause: &MonotoneClause, x: &BowVector, mode: EvalMode) -> bool {
    clause.evaluate(x, mode)
}

/// The boosted feedback table, isolated here so the deviation from the
/// standard table is visible in one place. Returns the probability and
/// direction (+1 toward include, -1 toward exclude) of the single
/// state-moving outcome for a reachable cell.
///
/// Deviations: a matching included literal is rewarded with certainty
/// instead of (s-1)/s, and penalties on included literals are disabled
/// entirely, making inclusion a one-way door. Excluded automata move at the
/// gentle 1/s rate in both directions, toward include on a match and toward
/// exclude otherwise, so inclusion stays rare enough that the one-way door
/// does not trap every co-occurring token.
fn boosted_cell(included: bool, fires_and_true: bool, s: f64) -> (f64, i8) {
    match (included, fires_and_true) {
        (true, true) => (1.0, 1),
        (true, false) => (0.0, -1),
        (false, true) => (1.0 / s, 1),
        (false, false) => (1.0 / s, -1),
    }
}

/// Boosted Type I feedback for monotone clauses. Consumes exactly one
/// uniform draw per automaton in feature order, even for certain outcomes,
/// so trajectories replay bit-for-bit from a seed.
pub fn boosted_type_i_feedback(
    clause: &mut MonotoneClause,
    x: &BowVector,
    s: f64,
    rng: &mut rng::Stream,
) {
    debug_assert!(s > 1.0);
    let fires = clause.evaluate(x, EvalMode::Learning);
    let n = clause.n;
    for i in 0..clause.include.len() {
        let u = rng.random::<f64>();
        let included = clause.include[i] > n;
        let (p, dir) = boosted_cell(included, fires && x.get(i), s);
        if u < p {
            if dir > 0 {
                clause.ta_up(i);
            } else {
                clause.ta_down(i);
            }
        }
    }
}

/// Type II feedback on a monotone clause: identical to the standard rule
/// restricted to plain literals. Excluded automata whose feature is absent
/// step toward include on firing clauses; consumes no randomness.
pub fn monotone_type_ii_feedback(clause: &mut MonotoneClause, x: &BowVector) {
    if !clause.evaluate(x, EvalMode::Learning) {
        return;
    }
    let n = clause.n;
    for i in 0..clause.include.len() {
        if !x.get(i) && clause.include[i] <= n {
            clause.ta_up(i);
        }
    }
}

/// One clause pool per sub-intent, trained with sub-intents as flat classes.
#[derive(Debug, Clone, PartialEq)]
pub struct NTMModel {
    params: NtmParams,
    input_width: usize,
    vocab_hash: u64,
    subintents: Vec<SubIntent>,
    pools: Vec<Vec<MonotoneClause>>,
}

impl NTMModel {
    pub fn new(
        params: NtmParams,
        input_width: usize,
        vocab_hash: u64,
        subintents: Vec<SubIntent>,
    ) -> Result<NTMModel, NtmError> {
        params.validate()?;
        Self::check_shape(input_width, &subintents)?;
        let pools = (0..subintents.len())
            .map(|_| {
                (0..params.clauses_per_subintent)
                    .map(|_| MonotoneClause::new(input_width, params.states_per_action))
                    .collect()
            })
            .collect();
        Ok(NTMModel { params, input_width, vocab_hash, subintents, pools })
    }

    pub fn from_parts(
        params: NtmParams,
        input_width: usize,
        vocab_hash: u64,
        subintents: Vec<SubIntent>,
        pools: Vec<Vec<MonotoneClause>>,
    ) -> Result<NTMModel, NtmError> {
        params.validate()?;
        Self::check_shape(input_width, &subintents)?;
        if pools.len() != subintents.len() {
            return Err(NtmError::InvalidParams(format!(
                "{} pools for {} sub-intents",
                pools.len(),
                subintents.len()
            )));
        }
        for pool in &pools {
            if pool.len() != params.clauses_per_subintent {
                return Err(NtmError::InvalidParams(format!(
                    "pool holds {} clauses, expected {}",
                    pool.len(),
                    params.clauses_per_subintent
                )));
            }
            for clause in pool {
                if clause.width() != input_width {
                    return Err(NtmError::WidthMismatch {
                        expected: input_width,
                        actual: clause.width(),
                    });
                }
                if clause.n() != params.states_per_action {
                    return Err(NtmError::InvalidParams(format!(
                        "clause state bound {} does not match params {}",
                        clause.n(),
                        params.states_per_action
                    )));
                }
            }
        }
        Ok(NTMModel { params, input_width, vocab_hash, subintents, pools })
    }

    fn check_shape(input_width: usize, subintents: &[SubIntent]) -> Result<(), NtmError> {
        if input_width == 0 {
            return Err(NtmError::InvalidParams("input width must be positive".into()));
        }
        if subintents.len() < 2 {
            return Err(NtmError::InvalidParams(
                "need at least two sub-intents to sample contrast from".into(),
            ));
        }
        for (i, si) in subintents.iter().enumerate() {
            if SubIntent::parent_of(&si.name)? != si.parent_label {
                return Err(NtmError::BadSubIntentName(si.name.clone()));
            }
            if subintents[..i].iter().any(|other| other.name == si.name) {
                return Err(NtmError::DuplicateSubIntent(si.name.clone()));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> &NtmParams {
        &self.params
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn vocab_hash(&self) -> u64 {
        self.vocab_hash
    }

    pub fn subintents(&self) -> &[SubIntent] {
        &self.subintents
    }

    pub fn pools(&self) -> &[Vec<MonotoneClause>] {
        &self.pools
    }

    pub fn subintent_index(&self, name: &str) -> Option<usize> {
        self.subintents.iter().position(|s| s.name == name)
    }

    /// Weighted sum of firing clauses; drives feedback gating during
    /// training. As a pool's weights grow toward the threshold, its feedback
    /// dries up, so a pool that already recognizes its sub-intent stops
    /// accumulating stray inclusions.
    fn vote_sum(&self, pool: usize, x: &BowVector, mode: EvalMode) -> i64 {
        self.pools[pool]
            .iter()
            .filter(|c| c.evaluate(x, mode))
            .map(|c| c.weight as i64)
            .sum()
    }

    /// Weighted firing score under inference semantics.
    pub fn pool_score(&self, pool: usize, x: &BowVector) -> i64 {
        self.pools[pool]
            .iter()
            .filter(|c| c.evaluate(x, EvalMode::Inference))
            .map(|c| c.weight as i64)
            .sum()
    }

    /// One online update: boosted Type I for the attributed pool, Type II
    /// for one uniformly drawn other pool. The contrast pool is drawn first,
    /// then each pool is walked clause by clause with one gate draw each.
    pub fn train_step(&mut self, x: &BowVector, target: usize, rng: &mut rng::Stream) {
        assert!(target < self.pools.len(), "target pool out of range");
        debug_assert_eq!(x.len(), self.input_width);
        let t = self.params.threshold as i64;
        let s = self.params.specificity;
        let contrast = {
            let r = rng.random_range(0..self.pools.len() - 1);
            if r >= target { r + 1 } else { r }
        };
        let v = self.vote_sum(target, x, EvalMode::Learning).clamp(-t, t);
        let p = (t - v) as f64 / (2 * t) as f64;
        for clause in &mut self.pools[target] {
            let gate = rng.random::<f64>();
            if gate >= p {
                continue;
            }
            let fired = clause.evaluate(x, EvalMode::Learning);
            boosted_type_i_feedback(clause, x, s, rng);
            if fired {
                clause.weight = clause.weight.saturating_add(1);
            }
        }
        let v = self.vote_sum(contrast, x, EvalMode::Learning).clamp(-t, t);
        let p = (t + v) as f64 / (2 * t) as f64;
        for clause in &mut self.pools[contrast] {
            let gate = rng.random::<f64>();
            if gate >= p {
                continue;
            }
            let fired = clause.evaluate(x, EvalMode::Learning);
            monotone_type_ii_feedback(clause, x);
            if fired {
                clause.weight = clause.weight.saturating_sub(1);
            }
        }
    }
}

/// Train a sub-intent model on attributed samples. Every example must carry
/// a sub-intent known to the model. Epochs reshuffle with one Fisher-Yates
/// pass; returns the per-epoch attribution accuracy on the corpus.
pub fn train_ntm(
    model: &mut NTMModel,
    corpus: &[LabeledExample],
    vocab: &Vocabulary,
    epochs: u32,
    seed: u64,
) -> Result<Vec<f64>, NtmError> {
    if vocab.hash() != model.vocab_hash {
        return Err(NtmError::VocabularyMismatch {
            expected: model.vocab_hash,
            actual: vocab.hash(),
        });
    }
    if vocab.len() != model.input_width {
        return Err(NtmError::WidthMismatch { expected: model.input_width, actual: vocab.len() });
    }
    if corpus.is_empty() {
        return Err(NtmError::EmptyCorpus);
    }
    let mut xs = Vec::with_capacity(corpus.len());
    let mut ys = Vec::with_capacity(corpus.len());
    for (i, example) in corpus.iter().enumerate() {
        let name = example
            .sub_intent
            .as_deref()
            .ok_or(NtmError::MissingSubIntent { index: i + 1 })?;
        let pool = model.subintent_index(name).ok_or_else(|| NtmError::UnknownSubIntent {
            name: name.to_string(),
            index: i + 1,
        })?;
        xs.push(binarize(&example.text, vocab));
        ys.push(pool);
    }
    let mut r = rng::stream(seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut trace = Vec::with_capacity(epochs as usize);
    for _ in 0..epochs {
        for i in (1..order.len()).rev() {
            let j = r.random_range(0..=i);
            order.swap(i, j);
        }
        for &k in &order {
            model.train_step(&xs[k], ys[k], &mut r);
        }
        let correct = xs
            .iter()
            .zip(&ys)
            .filter(|&(x, &y)| {
                let best = predict_sub_intents(model, x);
                best.first().is_some_and(|p| p.pool == y)
            })
            .count();
        trace.push(correct as f64 / xs.len() as f64);
    }
    Ok(trace)
}

/// Per-pool, per-clause, per-literal confidence values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceReport {
    pub stability_threshold: u16,
    /// conf[pool][clause][feature] = max(0, state - n)
    pub conf: Vec<Vec<Vec<u16>>>,
}

/// Exact confidence of every literal; no thresholding happens here.
pub fn literal_confidence(model: &NTMModel) -> ConfidenceReport {
    let conf = model
        .pools()
        .iter()
        .map(|pool| {
            pool.iter()
                .map(|clause| (0..clause.width()).map(|i| clause.confidence(i)).collect())
                .collect()
        })
        .collect();
    ConfidenceReport { stability_threshold: DEFAULT_STABILITY_THRESHOLD, conf }
}

/// The stable literals of one sub-intent's pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub subintent: SubIntent,
    /// Tokens ordered by descending peak confidence, ties lexicographic.
    pub literals: Vec<String>,
    /// Peak confidence per literal, parallel to `literals`.
    pub confidence: Vec<u16>,
}

/// Union, per sub-intent, of literals whose confidence strictly exceeds
/// delta in at least one clause of the pool.
pub fn extract_feature_groups(
    model: &NTMModel,
    vocab: &Vocabulary,
    delta: u16,
) -> Result<Vec<FeatureGroup>, NtmError> {
    if vocab.hash() != model.vocab_hash() {
        return Err(NtmError::VocabularyMismatch {
            expected: model.vocab_hash(),
            actual: vocab.hash(),
        });
    }
    if vocab.len() != model.input_width() {
        return Err(NtmError::WidthMismatch {
            expected: model.input_width(),
            actual: vocab.len(),
        });
    }
    let mut groups = Vec::with_capacity(model.subintents().len());
    for (pool_idx, pool) in model.pools().iter().enumerate() {
        let mut peak = vec![0u16; model.input_width()];
        for clause in pool {
            for i in 0..model.input_width() {
                peak[i] = peak[i].max(clause.confidence(i));
            }
        }
        let mut stable: Vec<(usize, u16)> =
            peak.iter().copied().enumerate().filter(|&(_, c)| c > delta).collect();
        stable.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| vocab.token(a.0).cmp(vocab.token(b.0))));
        groups.push(FeatureGroup {
            subintent: model.subintents()[pool_idx].clone(),
            literals: stable.iter().map(|&(i, _)| vocab.token(i).to_string()).collect(),
            confidence: stable.iter().map(|&(_, c)| c).collect(),
        });
    }
    Ok(groups)
}

/// One entry of a sub-intent ranking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubIntentPrediction {
    /// Index into the model's sub-intent list.
    pub pool: usize,
    /// Weighted sum over firing clauses.
    pub score: i64,
    /// Indices of the clauses that fired on this input.
    pub fired_clauses: Vec<usize>,
}

/// All sub-intents with positive weighted score, ranked by score descending;
/// equal scores keep pool order.
pub fn predict_sub_intents(model: &NTMModel, x: &BowVector) -> Vec<SubIntentPrediction> {
    let mut out = Vec::new();
    for (pool_idx, pool) in model.pools().iter().enumerate() {
        let mut score = 0i64;
        let mut fired = Vec::new();
        for (i, clause) in pool.iter().enumerate() {
            if clause.evaluate(x, EvalMode::Inference) {
                score += clause.weight() as i64;
                fired.push(i);
            }
        }
        if score > 0 {
            out.push(SubIntentPrediction { pool: pool_idx, score, fired_clauses: fired });
        }
    }
    out.sort_by(|a, b| b.score.cmp(&a.score));
    out
}

/// Metadata carried in the header of a feature-group file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureGroupsMeta {
    pub config_hash: u64,
    pub vocab_hash: u64,
    pub delta: u16,
}

/// Write groups in the versioned `featgroups-v1` text format: a header line
/// with the binding hashes and threshold, then one block per sub-intent.
pub fn write_feature_groups<W: Write>(
    w: &mut W,
    meta: &FeatureGroupsMeta,
    groups: &[FeatureGroup],
) -> Result<(), NtmError> {
    writeln!(
        w,
        "featgroups-v1 config={:016x} vocab={:016x} delta={}",
        meta.config_hash, meta.vocab_hash, meta.delta
    )?;
    for group in groups {
        writeln!(w, "subintent {}", group.subintent.name)?;
        for (literal, conf) in group.literals.iter().zip(&group.confidence) {
            writeln!(w, "{literal} {conf}")?;
        }
    }
    Ok(())
}

pub fn save_feature_groups(
    path: &Path,
    meta: &FeatureGroupsMeta,
    groups: &[FeatureGroup],
) -> Result<(), NtmError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_feature_groups(&mut w, meta, groups)?;
    w.flush()?;
    Ok(())
}

pub fn read_feature_groups<R: Read>(
    r: &mut R,
) -> Result<(FeatureGroupsMeta, Vec<FeatureGroup>), NtmError> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();
    let bad = |line: usize, reason: &str| NtmError::BadGroupsFile {
        line,
        reason: reason.to_string(),
    };

    let (_, header) = lines
        .next()
        .ok_or_else(|| bad(1, "empty file"))
        .and_then(|(i, l)| Ok((i, l.map_err(NtmError::Io)?)))?;
    let mut fields = header.split(' ');
    if fields.next() != Some("featgroups-v1") {
        return Err(bad(1, "expected `featgroups-v1` header"));
    }
    let mut parse_field = |key: &str| -> Result<String, NtmError> {
        let field = fields.next().ok_or_else(|| bad(1, "truncated header"))?;
        field
            .strip_prefix(key)
            .and_then(|v| v.strip_prefix('='))
            .map(str::to_string)
            .ok_or_else(|| bad(1, &format!("expected `{key}=` field")))
    };
    let config_hash = u64::from_str_radix(&parse_field("config")?, 16)
        .map_err(|_| bad(1, "config hash is not hex"))?;
    let vocab_hash = u64::from_str_radix(&parse_field("vocab")?, 16)
        .map_err(|_| bad(1, "vocab hash is not hex"))?;
    let delta: u16 =
        parse_field("delta")?.parse().map_err(|_| bad(1, "delta is not a number"))?;
    if fields.next().is_some() {
        return Err(bad(1, "trailing fields in header"));
    }

    let mut groups: Vec<FeatureGroup> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(NtmError::Io)?;
        if let Some(name) = line.strip_prefix("subintent ") {
            let subintent = SubIntent::from_name(name)
                .map_err(|_| bad(lineno, &format!("bad sub-intent name {name:?}")))?;
            if groups.iter().any(|g| g.subintent.name == name) {
                return Err(bad(lineno, &format!("duplicate sub-intent {name:?}")));
            }
            groups.push(FeatureGroup { subintent, literals: vec![], confidence: vec![] });
            continue;
        }
        let group = groups
            .last_mut()
            .ok_or_else(|| bad(lineno, "literal line before any `subintent` block"))?;
        let (literal, conf) = line
            .split_once(' ')
            .ok_or_else(|| bad(lineno, "expected `<literal> <confidence>`"))?;
        if literal.is_empty() || literal.contains(char::is_whitespace) {
            return Err(bad(lineno, "bad literal token"));
        }
        let conf: u16 =
            conf.parse().map_err(|_| bad(lineno, "confidence is not a number"))?;
        if conf <= delta {
            return Err(bad(lineno, "confidence does not exceed the threshold"));
        }
        if group.literals.contains(&literal.to_string()) {
            return Err(bad(lineno, &format!("duplicate literal {literal:?}")));
        }
        if let (Some(last), Some(&last_conf)) = (group.literals.last(), group.confidence.last()) {
            // enforce the canonical ordering so files diff deterministically
            if last_conf < conf || (last_conf == conf && last.as_str() >= literal) {
                return Err(bad(lineno, "literals out of order"));
            }
        }
        group.literals.push(literal.to_string());
        group.confidence.push(conf);
    }
    Ok((FeatureGroupsMeta { config_hash, vocab_hash, delta }, groups))
}

pub fn load_feature_groups(
    path: &Path,
) -> Result<(FeatureGroupsMeta, Vec<FeatureGroup>), NtmError> {
    let mut f = File::open(path)?;
    read_feature_groups(&mut f)
}
