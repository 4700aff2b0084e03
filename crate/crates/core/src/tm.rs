//! Coalesced Tsetlin machine over packed Boolean vectors.
//!
//! Each class owns a bank of clauses. A clause is a conjunction of literals
//! (features in plain or negated form) governed by two-action automata, one
//! per literal. Training applies Type I feedback (pattern reinforcement) and
//! Type II feedback (false-positive correction); inference is a weighted
//! majority vote between clauses of opposite polarity.
//!
//! Training is strictly sequential and the draw order of the RNG is part of
//! the contract: one uniform draw per automaton visit during Type I feedback,
//! none during Type II, one gate draw per clause, one draw per training step
//! for the contrast class, and one draw per position for the epoch shuffle.
//! Identical seeds therefore replay identical trajectories.

use rand::RngExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{binarize, BowVector, LabeledExample, Vocabulary};
use crate::rng;

#[derive(Debug, Error)]
pub enum TmError {
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("vocabulary mismatch: model is bound to {expected:#018x}, got {actual:#018x}")]
    VocabularyMismatch { expected: u64, actual: u64 },
    #[error("input width mismatch: model expects {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("unknown label {label:?} at example {index}")]
    UnknownLabel { label: String, index: usize },
    #[error("class index {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("example and label counts differ: {examples} vs {labels}")]
    LengthMismatch { examples: usize, labels: usize },
    #[error("empty dataset")]
    EmptyDataset,
}

/// Hyperparameters shared by every clause bank of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmParams {
    /// Clauses per class bank; must be even so polarities pair up.
    pub clauses_per_class: usize,
    pub num_classes: usize,
    /// Vote-sum clamp governing feedback probability.
    pub threshold: u32,
    /// Higher values make clauses more specific; must exceed 1.
    pub specificity: f64,
    /// Automaton states per action; states live in [1, 2n], include iff > n.
    pub states_per_action: u16,
    /// Track integer clause weights during training.
    pub weighted: bool,
    pub seed: u64,
}

impl Default for TmParams {
    fn default() -> Self {
        TmParams {
            clauses_per_class: 150,
            num_classes: 2,
            threshold: 5000,
            specificity: 5.0,
            states_per_action: 100,
            weighted: true,
            seed: 0,
        }
    }
}

impl TmParams {
    pub fn validate(&self) -> Result<(), TmError> {
        if self.clauses_per_class == 0 || self.clauses_per_class % 2 != 0 {
            return Err(TmError::InvalidParams(format!(
                "clauses_per_class must be positive and even, got {}",
                self.clauses_per_class
            )));
        }
        if self.num_classes < 2 {
            return Err(TmError::InvalidParams(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.threshold == 0 {
            return Err(TmError::InvalidParams("threshold must be positive".into()));
        }
        if !self.specificity.is_finite() || self.specificity <= 1.0 {
            return Err(TmError::InvalidParams(format!(
                "specificity must be finite and greater than 1, got {}",
                self.specificity
            )));
        }
        if self.states_per_action == 0 || self.states_per_action > u16::MAX / 2 {
            return Err(TmError::InvalidParams(format!(
                "states_per_action must be in [1, {}], got {}",
                u16::MAX / 2,
                self.states_per_action
            )));
        }
        Ok(())
    }
}

/// How empty clauses behave during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Empty clauses match everything, so fresh clauses receive feedback.
    Learning,
    /// Empty clauses are mute and contribute no votes.
    Inference,
}

/// One literal of a rendered conjunction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Literal {
    pub feature: usize,
    pub negated: bool,
}

/// A conjunction of literals plus the automata that decide its shape.
///
/// `include[i] > n` means feature i participates in plain form, and
/// `negate[i] > n` in negated form; the two are kept mutually exclusive.
/// The packed masks mirror the automaton states so evaluation is a couple
/// of bit operations per 64 features.
#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    include: Vec<u16>,
    negate: Vec<u16>,
    inc_mask: Vec<u64>,
    neg_mask: Vec<u64>,
    included: u32,
    weight: u32,
    n: u16,
}

impl Clause {
    /// A fresh clause: every automaton at n, the deepest exclude state next
    /// to the decision boundary, so clauses start empty but can commit fast.
    pub fn new(width: usize, n: u16) -> Clause {
        let words = width.div_ceil(64);
        Clause {
            include: vec![n; width],
            negate: vec![n; width],
            inc_mask: vec![0; words],
            neg_mask: vec![0; words],
            included: 0,
            weight: 1,
            n,
        }
    }

    /// Rebuild a clause from raw automaton states, e.g. when decoding a
    /// serialized model. Validates bounds and mutual exclusion.
    pub fn from_states(
        include: Vec<u16>,
        negate: Vec<u16>,
        weight: u32,
        n: u16,
    ) -> Result<Clause, TmError> {
        if n == 0 || n > u16::MAX / 2 {
            return Err(TmError::InvalidParams(format!("bad state bound n={n}")));
        }
        if include.len() != negate.len() {
            return Err(TmError::InvalidParams(format!(
                "state arrays differ in length: {} vs {}",
                include.len(),
                negate.len()
            )));
        }
        let width = include.len();
        let words = width.div_ceil(64);
        let mut clause = Clause {
            include,
            negate,
            inc_mask: vec![0; words],
            neg_mask: vec![0; words],
            included: 0,
            weight,
            n,
        };
        for i in 0..width {
            let inc = clause.include[i];
            let neg = clause.negate[i];
            for s in [inc, neg] {
                if s == 0 || s > 2 * n {
                    return Err(TmError::InvalidParams(format!(
                        "automaton state {s} outside [1, {}] at feature {i}",
                        2 * n
                    )));
                }
            }
            if inc > n && neg > n {
                return Err(TmError::InvalidParams(format!(
                    "feature {i} included in both plain and negated form"
                )));
            }
            if inc > n {
                set_bit(&mut clause.inc_mask, i);
                clause.included += 1;
            }
            if neg > n {
                set_bit(&mut clause.neg_mask, i);
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

    pub fn negate_states(&self) -> &[u16] {
        &self.negate
    }

    pub fn included_count(&self) -> u32 {
        self.included
    }

    /// Included literals ordered by feature, plain before negated.
    pub fn included_literals(&self) -> Vec<Literal> {
        let mut out = Vec::new();
        for i in 0..self.width() {
            if self.include[i] > self.n {
                out.push(Literal { feature: i, negated: false });
            }
            if self.negate[i] > self.n {
                out.push(Literal { feature: i, negated: true });
            }
        }
        out
    }

    pub fn evaluate(&self, x: &BowVector, mode: EvalMode) -> bool {
        debug_assert_eq!(x.len(), self.width(), "input width mismatch");
        if self.included == 0 {
            return mode == EvalMode::Learning;
        }
        // An included literal fails when the plain feature is absent or the
        // negated feature is present. Mask bits never exceed the true width,
        // so the tail garbage of !w cannot leak in.
        for (i, &w) in x.words().iter().enumerate() {
            if self.inc_mask[i] & !w != 0 || self.neg_mask[i] & w != 0 {
                return false;
            }
        }
        true
    }

    /// Move one automaton a step deeper toward include. Crossing the
    /// boundary flips the literal on; if its sibling of opposite sign was
    /// included, the newcomer wins and the sibling is reset to n.
    fn ta_up(&mut self, negated: bool, i: usize) {
        let n = self.n;
        let s0 = if negated { self.negate[i] } else { self.include[i] };
        if s0 >= 2 * n {
            return;
        }
        if negated {
            self.negate[i] = s0 + 1;
        } else {
            self.include[i] = s0 + 1;
        }
        if s0 == n {
            self.included += 1;
            if negated {
                set_bit(&mut self.neg_mask, i);
                if self.include[i] > n {
                    self.include[i] = n;
                    clear_bit(&mut self.inc_mask, i);
                    self.included -= 1;
                }
            } else {
                set_bit(&mut self.inc_mask, i);
                if self.negate[i] > n {
                    self.negate[i] = n;
                    clear_bit(&mut self.neg_mask, i);
                    self.included -= 1;
                }
            }
        }
    }

    /// Move one automaton a step deeper toward exclude, dropping the literal
    /// when it crosses the boundary.
    fn ta_down(&mut self, negated: bool, i: usize) {
        let n = self.n;
        let s0 = if negated { self.negate[i] } else { self.include[i] };
        if s0 <= 1 {
            return;
        }
        if negated {
            self.negate[i] = s0 - 1;
        } else {
            self.include[i] = s0 - 1;
        }
        if s0 == n + 1 {
            self.included -= 1;
            if negated {
                clear_bit(&mut self.neg_mask, i);
            } else {
                clear_bit(&mut self.inc_mask, i);
            }
        }
    }
}

fn set_bit(mask: &mut [u64], i: usize) {
    mask[i / 64] |= 1 << (i % 64);
}

fn clear_bit(mask: &mut [u64], i: usize) {
    mask[i / 64] &= !(1 << (i % 64));
}

/// Stochastic feedback for true-positive events.
///
/// Every automaton moves toward include with probability (s-1)/s when the
/// clause fires and its literal is true, and toward exclude with probability
/// 1/s in every other reachable case; rewards and penalties collapse to that
/// single direction test. Consumes exactly one uniform draw per automaton,
/// plain then negated per feature, even when the outcome is certain, so
/// trajectories replay bit-for-bit from a seed.
pub fn type_i_feedback(clause: &mut Clause, x: &BowVector, s: f64, rng: &mut rng::Stream) {
    debug_assert!(s > 1.0);
    let fires = clause.evaluate(x, EvalMode::Learning);
    let p_up = (s - 1.0) / s;
    let p_down = 1.0 / s;
    let n = clause.n;
    for i in 0..clause.include.len() {
        let xi = x.get(i);
        // A firing clause cannot hold a false included literal, so the
        // include/true-literal cell is the only one that pushes up.
        debug_assert!(!(fires && clause.include[i] > n && !xi));
        debug_assert!(!(fires && clause.negate[i] > n && xi));
        let u = rng.random::<f64>();
        if fires && xi {
            if u < p_up {
                clause.ta_up(false, i);
            }
        } else if u < p_down {
            clause.ta_down(false, i);
        }
        let u = rng.random::<f64>();
        if fires && !xi {
            if u < p_up {
                clause.ta_up(true, i);
            }
        } else if u < p_down {
            clause.ta_down(true, i);
        }
    }
}

/// Corrective feedback for false-positive events: every excluded automaton
/// whose literal is currently false steps toward include, handing the clause
/// a reason to reject this input next time. No-op unless the clause fires.
/// Consumes no randomness.
pub fn type_ii_feedback(clause: &mut Clause, x: &BowVector) {
    if !clause.evaluate(x, EvalMode::Learning) {
        return;
    }
    let n = clause.n;
    for i in 0..clause.include.len() {
        if x.get(i) {
            if clause.negate[i] <= n {
                clause.ta_up(true, i);
            }
        } else if clause.include[i] <= n {
            clause.ta_up(false, i);
        }
    }
}

/// Probability that a clause of the given bank receives feedback, from the
/// clamped vote sum v: target banks anneal as v approaches t, contrast banks
/// as v approaches -t.
pub(crate) fn gate_probability(v: i64, t: i64, target: bool) -> f64 {
    let v = v.clamp(-t, t);
    if target {
        (t - v) as f64 / (2 * t) as f64
    } else {
        (t + v) as f64 / (2 * t) as f64
    }
}

/// A multi-class model: one clause bank per label.
///
/// Clause polarity is positional: odd indices vote for the class, even
/// indices against it.
#[derive(Debug, Clone, PartialEq)]
pub struct TMModel {
    params: TmParams,
    input_width: usize,
    vocab_hash: u64,
    labels: Vec<String>,
    banks: Vec<Vec<Clause>>,
}

/// Positional polarity convention: odd clause indices vote for their class,
/// even indices against it.
pub fn polarity_of(clause_idx: usize) -> i64 {
    if clause_idx % 2 == 1 { 1 } else { -1 }
}

impl TMModel {
    pub fn new(
        params: TmParams,
        input_width: usize,
        vocab_hash: u64,
        labels: Vec<String>,
    ) -> Result<TMModel, TmError> {
        params.validate()?;
        if input_width == 0 {
            return Err(TmError::InvalidParams("input width must be positive".into()));
        }
        if labels.len() != params.num_classes {
            return Err(TmError::InvalidParams(format!(
                "{} labels for {} classes",
                labels.len(),
                params.num_classes
            )));
        }
        let banks = (0..params.num_classes)
            .map(|_| {
                (0..params.clauses_per_class)
                    .map(|_| Clause::new(input_width, params.states_per_action))
                    .collect()
            })
            .collect();
        Ok(TMModel { params, input_width, vocab_hash, labels, banks })
    }

    /// Reassemble a model from its pieces, validating every shape. Used by
    /// the serialization layer and by tests that build models directly.
    pub fn from_parts(
        params: TmParams,
        input_width: usize,
        vocab_hash: u64,
        labels: Vec<String>,
        banks: Vec<Vec<Clause>>,
    ) -> Result<TMModel, TmError> {
        params.validate()?;
        if input_width == 0 {
            return Err(TmError::InvalidParams("input width must be positive".into()));
        }
        if labels.len() != params.num_classes {
            return Err(TmError::InvalidParams(format!(
                "{} labels for {} classes",
                labels.len(),
                params.num_classes
            )));
        }
        if banks.len() != params.num_classes {
            return Err(TmError::InvalidParams(format!(
                "{} banks for {} classes",
                banks.len(),
                params.num_classes
            )));
        }
        for bank in &banks {
            if bank.len() != params.clauses_per_class {
                return Err(TmError::InvalidParams(format!(
                    "bank holds {} clauses, expected {}",
                    bank.len(),
                    params.clauses_per_class
                )));
            }
            for clause in bank {
                if clause.width() != input_width {
                    return Err(TmError::WidthMismatch {
                        expected: input_width,
                        actual: clause.width(),
                    });
                }
                if clause.n() != params.states_per_action {
                    return Err(TmError::InvalidParams(format!(
                        "clause state bound {} does not match params {}",
                        clause.n(),
                        params.states_per_action
                    )));
                }
            }
        }
        Ok(TMModel { params, input_width, vocab_hash, labels, banks })
    }

    pub fn params(&self) -> &TmParams {
        &self.params
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn vocab_hash(&self) -> u64 {
        self.vocab_hash
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn banks(&self) -> &[Vec<Clause>] {
        &self.banks
    }

    fn vote_sum(&self, class: usize, x: &BowVector, mode: EvalMode) -> i64 {
        self.banks[class]
            .iter()
            .enumerate()
            .filter(|(_, c)| c.evaluate(x, mode))
            .map(|(i, c)| polarity_of(i) * c.weight as i64)
            .sum()
    }

    /// Weighted vote sum for one class under inference semantics.
    pub fn class_score(&self, class: usize, x: &BowVector) -> i64 {
        assert!(class < self.params.num_classes, "class out of range");
        self.vote_sum(class, x, EvalMode::Inference)
    }

    pub fn score_all(&self, x: &BowVector) -> Vec<i64> {
        (0..self.params.num_classes).map(|c| self.class_score(c, x)).collect()
    }

    /// Argmax of class scores; ties resolve to the lowest class index.
    pub fn predict(&self, x: &BowVector) -> usize {
        let mut best = 0;
        let mut best_score = self.class_score(0, x);
        for class in 1..self.params.num_classes {
            let score = self.class_score(class, x);
            if score > best_score {
                best = class;
                best_score = score;
            }
        }
        best
    }

    /// One online update. The contrast class is drawn first, then each bank
    /// is processed clause by clause: one gate draw, then the clause's
    /// feedback draws if the gate opens.
    pub fn train_step(&mut self, x: &BowVector, target: usize, rng: &mut rng::Stream) {
        assert!(target < self.params.num_classes, "target class out of range");
        debug_assert_eq!(x.len(), self.input_width);
        let t = self.params.threshold as i64;
        let contrast = {
            let r = rng.random_range(0..self.params.num_classes - 1);
            if r >= target { r + 1 } else { r }
        };
        let v = self.vote_sum(target, x, EvalMode::Learning);
        self.feedback_bank(target, x, gate_probability(v, t, true), true, rng);
        let v = self.vote_sum(contrast, x, EvalMode::Learning);
        self.feedback_bank(contrast, x, gate_probability(v, t, false), false, rng);
    }

    fn feedback_bank(
        &mut self,
        class: usize,
        x: &BowVector,
        p: f64,
        is_target: bool,
        rng: &mut rng::Stream,
    ) {
        let s = self.params.specificity;
        let weighted = self.params.weighted;
        for (idx, clause) in self.banks[class].iter_mut().enumerate() {
            let gate = rng.random::<f64>();
            if gate >= p {
                continue;
            }
            let fired = clause.evaluate(x, EvalMode::Learning);
            if (polarity_of(idx) > 0) == is_target {
                type_i_feedback(clause, x, s, rng);
                // Type Ia strengthens the voice of clauses that matched.
                if weighted && fired {
                    clause.weight = clause.weight.saturating_add(1);
                }
            } else {
                type_ii_feedback(clause, x);
                if weighted && fired {
                    clause.weight = clause.weight.saturating_sub(1);
                }
            }
        }
    }

    /// Train on labeled text bound to the model's vocabulary. Returns the
    /// training-set accuracy measured after each epoch.
    pub fn fit(
        &mut self,
        dataset: &[LabeledExample],
        vocab: &Vocabulary,
        epochs: u32,
        seed: u64,
    ) -> Result<Vec<f64>, TmError> {
        if vocab.hash() != self.vocab_hash {
            return Err(TmError::VocabularyMismatch {
                expected: self.vocab_hash,
                actual: vocab.hash(),
            });
        }
        if dataset.is_empty() {
            return Err(TmError::EmptyDataset);
        }
        let xs: Vec<BowVector> = dataset.iter().map(|e| binarize(&e.text, vocab)).collect();
        let mut ys = Vec::with_capacity(dataset.len());
        for (i, example) in dataset.iter().enumerate() {
            match self.label_index(&example.label) {
                Some(class) => ys.push(class),
                None => {
                    return Err(TmError::UnknownLabel {
                        label: example.label.clone(),
                        index: i + 1,
                    });
                }
            }
        }
        self.fit_vectors(&xs, &ys, epochs, seed)
    }

    /// Train on pre-binarized vectors. Each epoch reshuffles with one
    /// Fisher-Yates pass (one draw per position, high to low) and then
    /// applies train_step in the shuffled order.
    pub fn fit_vectors(
        &mut self,
        xs: &[BowVector],
        ys: &[usize],
        epochs: u32,
        seed: u64,
    ) -> Result<Vec<f64>, TmError> {
        if xs.is_empty() {
            return Err(TmError::EmptyDataset);
        }
        if xs.len() != ys.len() {
            return Err(TmError::LengthMismatch { examples: xs.len(), labels: ys.len() });
        }
        for x in xs {
            if x.len() != self.input_width {
                return Err(TmError::WidthMismatch {
                    expected: self.input_width,
                    actual: x.len(),
                });
            }
        }
        for &y in ys {
            if y >= self.params.num_classes {
                return Err(TmError::ClassOutOfRange {
                    class: y,
                    num_classes: self.params.num_classes,
                });
            }
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
                self.train_step(&xs[k], ys[k], &mut r);
            }
            let correct = xs.iter().zip(ys).filter(|&(x, &y)| self.predict(x) == y).count();
            trace.push(correct as f64 / xs.len() as f64);
        }
        Ok(trace)
    }
}
