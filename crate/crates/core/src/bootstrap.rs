//! Corpus bootstrapping through a text-completion provider.
//!
//! A discovery prompt asks the provider to split each class label into
//! fine-grained sub-intents. Three generation stages (seed, core, enriched)
//! then produce samples per sub-intent, each stage anchored on output of the
//! previous one so vocabulary widens while staying on topic. Providers sit
//! behind one trait; the deterministic [`StubProvider`] drives every test and
//! makes whole pipeline runs reproducible bit for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::RngExt;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{self, CorpusError, LabeledExample};
use crate::ntm::{self, NtmError, SubIntent};
use crate::rng;

/// Retries allowed after the first generation request for a stage.
pub const RETRY_BUDGET: u32 = 5;
/// Minimum whitespace-separated words for a generated sample to count.
pub const MIN_SAMPLE_WORDS: usize = 15;
/// How many samples of the previous stage are embedded in the next prompt.
pub const CHAIN_ANCHORS: usize = 3;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    SubIntent(#[from] NtmError),
    #[error("{stage} template: placeholder {{{name}}} has no binding")]
    UnboundPlaceholder { stage: Stage, name: String },
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("provider {id}: {reason}")]
    Provider { id: String, reason: String },
    #[error("discovery response has no valid sub-intent line ({rejected} rejected; first: {first})")]
    NoSubIntents { rejected: usize, first: String },
    #[error("{stage}/{subintent}: {got} of {want} valid samples after {attempts} attempts")]
    Shortfall {
        stage: Stage,
        subintent: String,
        got: usize,
        want: usize,
        attempts: u32,
        /// Valid samples collected before the budget ran out.
        partial: Vec<LabeledExample>,
    },
    #[error("no anchor examples available: {0}")]
    MissingAnchors(String),
    #[error("corpus manifest: {0}")]
    Manifest(String),
    #[error("corpus layout: {0}")]
    Layout(String),
}

fn hash64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("sha256 digest is 32 bytes"))
}

// ---------------------------------------------------------------------------
// Prompt templates

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Discovery,
    Seed,
    Core,
    Enriched,
}

impl Stage {
    /// The three stages that produce samples, in generation order.
    pub const GENERATION: [Stage; 3] = [Stage::Seed, Stage::Core, Stage::Enriched];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Discovery => "discovery",
            Stage::Seed => "seed",
            Stage::Core => "core",
            Stage::Enriched => "enriched",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A stage's prompt text with `{NAME}` placeholders. The builtin bodies live
/// under `prompts/` and are embedded at compile time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    stage: Stage,
    body: String,
}

impl PromptTemplate {
    pub fn builtin(stage: Stage) -> PromptTemplate {
        let body = match stage {
            Stage::Discovery => include_str!("../prompts/discovery.txt"),
            Stage::Seed => include_str!("../prompts/seed.txt"),
            Stage::Core => include_str!("../prompts/core.txt"),
            Stage::Enriched => include_str!("../prompts/enriched.txt"),
        };
        PromptTemplate { stage, body: body.to_string() }
    }

    pub fn from_body(stage: Stage, body: impl Into<String>) -> PromptTemplate {
        PromptTemplate { stage, body: body.into() }
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Substitutes every `{NAME}` placeholder. A placeholder is a brace pair
    /// holding only `A-Z`, `0-9` and `_`; anything else is literal text.
    /// Every placeholder in the body must have a binding.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, BootstrapError> {
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let tail = &rest[open..];
            match tail[1..].find('}') {
                Some(close) => {
                    let name = &tail[1..close + 1];
                    if is_placeholder_name(name) {
                        let value = bindings.get(name).ok_or_else(|| {
                            BootstrapError::UnboundPlaceholder {
                                stage: self.stage,
                                name: name.to_string(),
                            }
                        })?;
                        out.push_str(value);
                        rest = &tail[close + 2..];
                    } else {
                        out.push('{');
                        rest = &tail[1..];
                    }
                }
                None => {
                    out.push('{');
                    rest = &tail[1..];
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

/// Renders the discovery prompt for a dataset.
pub fn render_discovery_prompt(
    dataset_name: &str,
    domain_description: &str,
    labels: &[String],
) -> Result<String, BootstrapError> {
    let mut bindings = BTreeMap::new();
    bindings.insert("DATASET_NAME", dataset_name.to_string());
    bindings.insert("DOMAIN_DESCRIPTION", domain_description.to_string());
    bindings.insert("CLASS_LABELS", labels.join(", "));
    PromptTemplate::builtin(Stage::Discovery).render(&bindings)
}

/// Renders a generation prompt. The anchors render as a `- text` bullet list
/// under {EXAMPLES}; the category line carries the sub-intent name plus its
/// explanation when one is known.
pub fn render_generation_prompt(
    stage: Stage,
    subintent: &SubIntent,
    anchors: &[String],
    count: usize,
) -> Result<String, BootstrapError> {
    if stage == Stage::Discovery {
        return Err(BootstrapError::InvalidConfig(
            "discovery stage does not generate samples".into(),
        ));
    }
    if anchors.is_empty() {
        return Err(BootstrapError::MissingAnchors(format!(
            "{stage} prompt for {} has no example sentences",
            subintent.name
        )));
    }
    let category = if subintent.explanation.is_empty() {
        subintent.name.clone()
    } else {
        format!("{}: {}", subintent.name, subintent.explanation)
    };
    let examples =
        anchors.iter().map(|a| format!("- {a}")).collect::<Vec<_>>().join("\n");
    let mut bindings = BTreeMap::new();
    bindings.insert("CATEGORY_LABEL", category);
    bindings.insert("EXAMPLES", examples);
    bindings.insert("N", count.to_string());
    PromptTemplate::builtin(stage).render(&bindings)
}

// ---------------------------------------------------------------------------
// Discovery response parsing

/// First words of an explanation, lowercased and joined with underscores.
/// The words "due" and "to" are skipped so the result can never embed the
/// `_due_to_` separator; four words keep names compact.
pub fn slug_reason(explanation: &str) -> String {
    explanation
        .split(|c: char| !c.is_ascii_alphanumeric())
        .map(|w| w.to_ascii_lowercase())
        .filter(|w| !w.is_empty() && w != "due" && w != "to")
        .take(4)
        .collect::<Vec<_>>()
        .join("_")
}

/// The compact name [`parse_sub_intents`] assigns to a discovery line,
/// before any collision suffix.
pub fn discovered_name(label: &str, explanation: &str) -> Result<String, BootstrapError> {
    let slug = slug_reason(explanation);
    if slug.is_empty() {
        return Err(BootstrapError::InvalidConfig(format!(
            "explanation for {label} has no usable words"
        )));
    }
    Ok(format!("{label}_due_to_{slug}"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedLine {
    /// 1-based line number in the provider response.
    pub line: usize,
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveredSubIntents {
    pub subintents: Vec<SubIntent>,
    /// Non-empty lines that did not match the grammar, for audit.
    pub rejected: Vec<RejectedLine>,
}

/// Parses a discovery response: one `<label>_due_to: <explanation>` per
/// non-empty line. Exact duplicate lines (case-insensitive) collapse
/// silently; other non-matching lines are reported. Explanations are slugged
/// into compact names, with a numeric suffix when two lines slug alike.
pub fn parse_sub_intents(response: &str) -> Result<DiscoveredSubIntents, BootstrapError> {
    let mut subintents: Vec<SubIntent> = Vec::new();
    let mut rejected = Vec::new();
    let mut seen_lines = BTreeSet::new();
    let mut taken_names = BTreeSet::new();
    for (i, raw) in response.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !seen_lines.insert(line.to_lowercase()) {
            continue;
        }
        let reject = |reason: &str, rejected: &mut Vec<RejectedLine>| {
            rejected.push(RejectedLine {
                line: lineno,
                text: line.to_string(),
                reason: reason.to_string(),
            });
        };
        let Some((head, tail)) = line.split_once(':') else {
            reject("missing ':' separator", &mut rejected);
            continue;
        };
        let Some(label) = head.trim().strip_suffix("_due_to") else {
            reject("name part does not end with _due_to", &mut rejected);
            continue;
        };
        if !ntm::is_slug(label) {
            reject("class label is not a lowercase slug", &mut rejected);
            continue;
        }
        let explanation = tail.trim();
        if explanation.is_empty() {
            reject("explanation is empty", &mut rejected);
            continue;
        }
        let slug = slug_reason(explanation);
        if slug.is_empty() {
            reject("explanation has no usable words", &mut rejected);
            continue;
        }
        let base = format!("{label}_due_to_{slug}");
        let mut name = base.clone();
        let mut k = 2u32;
        while !taken_names.insert(name.clone()) {
            name = format!("{base}_{k}");
            k += 1;
        }
        match SubIntent::new(&name, explanation) {
            Ok(si) => subintents.push(si),
            Err(_) => reject("assembled name is not a valid sub-intent", &mut rejected),
        }
    }
    if subintents.is_empty() {
        let first = rejected
            .first()
            .map(|r| format!("line {}: {}", r.line, r.reason))
            .unwrap_or_else(|| "(response had no non-empty lines)".into());
        return Err(BootstrapError::NoSubIntents { rejected: rejected.len(), first });
    }
    Ok(DiscoveredSubIntents { subintents, rejected })
}

// ---------------------------------------------------------------------------
// Sample validation

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SampleRejection {
    TooShort { words: usize },
    MultiLine,
    ListMarker,
    LabelPrefix,
}

impl fmt::Display for SampleRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleRejection::TooShort { words } => {
                write!(f, "only {words} of {MIN_SAMPLE_WORDS} required words")
            }
            SampleRejection::MultiLine => write!(f, "spans multiple lines"),
            SampleRejection::ListMarker => write!(f, "starts with a list marker"),
            SampleRejection::LabelPrefix => write!(f, "starts with a label prefix"),
        }
    }
}

/// Accepts a generated sample if it is a single line of at least
/// [`MIN_SAMPLE_WORDS`] words with no leading list marker or `label:` prefix.
/// The rules are the same for every stage; the stage is part of the call so
/// rejects can be attributed.
pub fn validate_sample(text: &str, _stage: Stage) -> Result<(), SampleRejection> {
    let text = text.trim();
    if text.contains('\n') {
        return Err(SampleRejection::MultiLine);
    }
    if text.starts_with(['-', '*', '•']) || starts_with_numbering(text) {
        return Err(SampleRejection::ListMarker);
    }
    if let Some(first) = text.split_whitespace().next()
        && first.ends_with(':')
    {
        return Err(SampleRejection::LabelPrefix);
    }
    let words = text.split_whitespace().count();
    if words < MIN_SAMPLE_WORDS {
        return Err(SampleRejection::TooShort { words });
    }
    Ok(())
}

fn starts_with_numbering(text: &str) -> bool {
    let digits = text.chars().take_while(|c| c.is_ascii_digit()).count();
    digits > 0 && matches!(text[digits..].chars().next(), Some('.') | Some(')'))
}

// ---------------------------------------------------------------------------
// Generation config and providers

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub nucleus_p: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub seed_count: usize,
    pub core_count: usize,
    pub enriched_count: usize,
    pub nucleus_p: f64,
    pub temperature: f64,
    /// Provider identifier recorded in corpus provenance.
    pub provider: String,
    /// Real examples embedded in each seed-stage prompt.
    pub seed_anchors: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            seed_count: 50,
            core_count: 50,
            enriched_count: 100,
            nucleus_p: 0.9,
            temperature: 0.7,
            provider: "stub".into(),
            seed_anchors: 2,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), BootstrapError> {
        let bad = |m: String| Err(BootstrapError::InvalidConfig(m));
        if self.seed_count == 0 || self.core_count == 0 || self.enriched_count == 0 {
            return bad("stage sample counts must be at least 1".into());
        }
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return bad(format!("nucleus_p {} outside (0, 1]", self.nucleus_p));
        }
        if !(self.temperature >= 0.0) {
            return bad(format!("temperature {} is negative or NaN", self.temperature));
        }
        if self.seed_anchors == 0 {
            return bad("seed_anchors must be at least 1".into());
        }
        if self.provider.trim().is_empty() {
            return bad("provider id is empty".into());
        }
        Ok(())
    }

    /// Samples required for a generation stage; discovery has none.
    pub fn count_for(&self, stage: Stage) -> usize {
        match stage {
            Stage::Discovery => 0,
            Stage::Seed => self.seed_count,
            Stage::Core => self.core_count,
            Stage::Enriched => self.enriched_count,
        }
    }

    pub fn sampling(&self) -> SamplingParams {
        SamplingParams { nucleus_p: self.nucleus_p, temperature: self.temperature }
    }

    /// Identity over every field, recorded in the corpus manifest so stale
    /// corpora are detected when the config changes.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serialization cannot fail");
        hash64(&[b"genconfig-v1", json.as_bytes()])
    }
}

/// A text-completion backend. One request in, one response out; all retry
/// and validation logic lives on the caller side.
pub trait Provider {
    /// Stable identifier recorded in corpus provenance.
    fn id(&self) -> &str;
    fn complete(&mut self, prompt: &str, sampling: SamplingParams)
    -> Result<String, BootstrapError>;
}

// ---------------------------------------------------------------------------
// Generation driver

/// Runs one generation stage for a sub-intent until the configured count of
/// validated samples is collected, re-prompting for the shortfall at most
/// [`RETRY_BUDGET`] times after the first request. Invalid response lines are
/// dropped; falling short is an error carrying the partial result.
pub fn generate_stage(
    stage: Stage,
    subintent: &SubIntent,
    anchors: &[String],
    config: &GenerationConfig,
    provider: &mut dyn Provider,
) -> Result<Vec<LabeledExample>, BootstrapError> {
    config.validate()?;
    let want = config.count_for(stage);
    if want == 0 {
        return Err(BootstrapError::InvalidConfig(format!(
            "stage {stage} does not generate samples"
        )));
    }
    let mut samples: Vec<LabeledExample> = Vec::with_capacity(want);
    let mut attempts = 0u32;
    while samples.len() < want && attempts <= RETRY_BUDGET {
        attempts += 1;
        let prompt =
            render_generation_prompt(stage, subintent, anchors, want - samples.len())?;
        let response = provider.complete(&prompt, config.sampling())?;
        for line in response.lines() {
            let text = line.trim();
            if text.is_empty() || samples.len() == want {
                continue;
            }
            if validate_sample(text, stage).is_ok() {
                let mut rec = LabeledExample::new(text, &subintent.parent_label);
                rec.sub_intent = Some(subintent.name.clone());
                samples.push(rec);
            }
        }
    }
    if samples.len() < want {
        return Err(BootstrapError::Shortfall {
            stage,
            subintent: subintent.name.clone(),
            got: samples.len(),
            want,
            attempts,
            partial: samples,
        });
    }
    Ok(samples)
}

/// Asks the provider to split the class labels into sub-intents and parses
/// the response. Rejected lines ride along in the result for audit.
pub fn discover_sub_intents(
    dataset_name: &str,
    domain_description: &str,
    labels: &[String],
    config: &GenerationConfig,
    provider: &mut dyn Provider,
) -> Result<DiscoveredSubIntents, BootstrapError> {
    config.validate()?;
    if labels.is_empty() {
        return Err(BootstrapError::InvalidConfig("no class labels to discover for".into()));
    }
    let prompt = render_discovery_prompt(dataset_name, domain_description, labels)?;
    let response = provider.complete(&prompt, config.sampling())?;
    parse_sub_intents(&response)
}

/// Samples generated for one sub-intent, split by stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub subintent: SubIntent,
    pub seed: Vec<LabeledExample>,
    pub core: Vec<LabeledExample>,
    pub enriched: Vec<LabeledExample>,
}

impl CorpusEntry {
    pub fn stage(&self, stage: Stage) -> &[LabeledExample] {
        match stage {
            Stage::Discovery => &[],
            Stage::Seed => &self.seed,
            Stage::Core => &self.core,
            Stage::Enriched => &self.enriched,
        }
    }
}

/// A generated corpus plus the provenance recorded in its manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub provider_id: String,
    pub config_hash: u64,
    pub entries: Vec<CorpusEntry>,
}

impl SyntheticCorpus {
    /// All samples in a fixed order: entries as discovered, stages seed then
    /// core then enriched. Training consumes this order.
    pub fn all_samples(&self) -> impl Iterator<Item = &LabeledExample> {
        self.entries.iter().flat_map(|e| {
            Stage::GENERATION.iter().flat_map(|s| e.stage(*s).iter())
        })
    }

    pub fn total_samples(&self) -> usize {
        self.all_samples().count()
    }

    pub fn subintents(&self) -> Vec<SubIntent> {
        self.entries.iter().map(|e| e.subintent.clone()).collect()
    }
}

/// Runs the three generation stages for every sub-intent. Seed prompts are
/// anchored on real examples of the parent class; later stages chain on the
/// first [`CHAIN_ANCHORS`] samples of the stage before them.
pub fn generate_corpus(
    subintents: &[SubIntent],
    real_examples: &BTreeMap<String, Vec<String>>,
    config: &GenerationConfig,
    provider: &mut dyn Provider,
) -> Result<SyntheticCorpus, BootstrapError> {
    config.validate()?;
    if subintents.is_empty() {
        return Err(BootstrapError::InvalidConfig("no sub-intents to generate for".into()));
    }
    let mut entries = Vec::with_capacity(subintents.len());
    for si in subintents {
        let pool = real_examples
            .get(&si.parent_label)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| BootstrapError::MissingAnchors(si.parent_label.clone()))?;
        let seed_anchors: Vec<String> =
            pool.iter().take(config.seed_anchors).cloned().collect();
        let seed = generate_stage(Stage::Seed, si, &seed_anchors, config, provider)?;
        let core_anchors = chain_anchors(&seed);
        let core = generate_stage(Stage::Core, si, &core_anchors, config, provider)?;
        let enriched_anchors = chain_anchors(&core);
        let enriched =
            generate_stage(Stage::Enriched, si, &enriched_anchors, config, provider)?;
        entries.push(CorpusEntry { subintent: si.clone(), seed, core, enriched });
    }
    Ok(SyntheticCorpus {
        provider_id: provider.id().to_string(),
        config_hash: config.hash(),
        entries,
    })
}

fn chain_anchors(previous: &[LabeledExample]) -> Vec<String> {
    previous.iter().take(CHAIN_ANCHORS).map(|s| s.text.clone()).collect()
}

// ---------------------------------------------------------------------------
// On-disk layout: <dir>/<subintent>/<stage>.jsonl plus <dir>/manifest

const MANIFEST_FORMAT: &str = "corpus-manifest-v1";

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    format: String,
    provider: String,
    config_hash: String,
    subintents: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    explanation: String,
    seed: usize,
    core: usize,
    enriched: usize,
}

fn stage_path(dir: &Path, name: &str, stage: Stage) -> PathBuf {
    dir.join(name).join(format!("{}.jsonl", stage.name()))
}

pub fn save_corpus(dir: &Path, corpus: &SyntheticCorpus) -> Result<(), BootstrapError> {
    fs::create_dir_all(dir)?;
    let mut manifest = ManifestFile {
        format: MANIFEST_FORMAT.into(),
        provider: corpus.provider_id.clone(),
        config_hash: format!("{:016x}", corpus.config_hash),
        subintents: Vec::new(),
    };
    for entry in &corpus.entries {
        let name = &entry.subintent.name;
        fs::create_dir_all(dir.join(name))?;
        for stage in Stage::GENERATION {
            corpus::save_dataset(&stage_path(dir, name, stage), entry.stage(stage))?;
        }
        manifest.subintents.push(ManifestEntry {
            name: name.clone(),
            explanation: entry.subintent.explanation.clone(),
            seed: entry.seed.len(),
            core: entry.core.len(),
            enriched: entry.enriched.len(),
        });
    }
    let json =
        serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail");
    fs::write(dir.join("manifest"), json + "\n")?;
    Ok(())
}

/// Loads a saved corpus, re-validating every sample and checking counts and
/// tags against the manifest.
pub fn load_corpus(dir: &Path) -> Result<SyntheticCorpus, BootstrapError> {
    let manifest_path = dir.join("manifest");
    let raw = fs::read_to_string(&manifest_path)?;
    let manifest: ManifestFile = serde_json::from_str(&raw)
        .map_err(|e| BootstrapError::Manifest(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(BootstrapError::Manifest(format!(
            "unsupported format {:?}",
            manifest.format
        )));
    }
    let config_hash = u64::from_str_radix(&manifest.config_hash, 16)
        .map_err(|_| BootstrapError::Manifest(format!(
            "config_hash {:?} is not 16 hex digits",
            manifest.config_hash
        )))?;
    let mut seen = BTreeSet::new();
    let mut entries = Vec::with_capacity(manifest.subintents.len());
    for me in &manifest.subintents {
        if !seen.insert(me.name.clone()) {
            return Err(BootstrapError::Manifest(format!("duplicate sub-intent {}", me.name)));
        }
        let subintent = SubIntent::new(&me.name, &me.explanation)?;
        let mut stages = Vec::with_capacity(3);
        for (stage, want) in
            [(Stage::Seed, me.seed), (Stage::Core, me.core), (Stage::Enriched, me.enriched)]
        {
            let path = stage_path(dir, &me.name, stage);
            let records = corpus::load_dataset(&path)?;
            if records.len() != want {
                return Err(BootstrapError::Layout(format!(
                    "{}: {} records, manifest says {want}",
                    path.display(),
                    records.len()
                )));
            }
            for (i, rec) in records.iter().enumerate() {
                let at = || format!("{} line {}", path.display(), i + 1);
                if let Err(why) = validate_sample(&rec.text, stage) {
                    return Err(BootstrapError::Layout(format!("{}: {why}", at())));
                }
                if rec.label != subintent.parent_label {
                    return Err(BootstrapError::Layout(format!(
                        "{}: label {:?} does not match parent {:?}",
                        at(),
                        rec.label,
                        subintent.parent_label
                    )));
                }
                if rec.sub_intent.as_deref() != Some(me.name.as_str()) {
                    return Err(BootstrapError::Layout(format!(
                        "{}: sub_intent tag {:?} does not match {:?}",
                        at(),
                        rec.sub_intent,
                        me.name
                    )));
                }
            }
            stages.push(records);
        }
        let enriched = stages.pop().expect("three stages pushed");
        let core = stages.pop().expect("three stages pushed");
        let seed = stages.pop().expect("three stages pushed");
        entries.push(CorpusEntry { subintent, seed, core, enriched });
    }
    Ok(SyntheticCorpus { provider_id: manifest.provider, config_hash, entries })
}

// ---------------------------------------------------------------------------
// Stub provider

/// Shared low-frequency words mixed into stub sentences so the vocabulary is
/// not purely keywords. Each individual filler stays rare enough that it
/// never accumulates inclusion confidence.
const FILLERS: [&str; 24] = [
    "the", "a", "of", "and", "that", "it", "with", "for", "was", "were", "this", "those",
    "study", "report", "case", "result", "often", "also", "after", "before", "under",
    "about", "during", "between",
];

/// One sub-intent in a stub world: the reason line it emits at discovery and
/// the keyword pools its samples draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubSubIntentSpec {
    pub reason: String,
    /// Keywords for seed and core samples.
    pub base_pool: Vec<String>,
    /// Keywords for enriched samples; empty means reuse the base pool.
    #[serde(default)]
    pub enriched_pool: Vec<String>,
    /// Extra words sprinkled into every stage at `rare_rate` per word slot.
    #[serde(default)]
    pub rare_pool: Vec<String>,
    #[serde(default)]
    pub rare_rate: f64,
}

impl StubSubIntentSpec {
    pub fn new(reason: &str, base_pool: &[&str]) -> StubSubIntentSpec {
        StubSubIntentSpec {
            reason: reason.to_string(),
            base_pool: base_pool.iter().map(|s| s.to_string()).collect(),
            enriched_pool: Vec::new(),
            rare_pool: Vec::new(),
            rare_rate: 0.0,
        }
    }

    pub fn with_enriched_pool(mut self, pool: &[&str]) -> Self {
        self.enriched_pool = pool.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_rare_pool(mut self, pool: &[&str], rate: f64) -> Self {
        self.rare_pool = pool.iter().map(|s| s.to_string()).collect();
        self.rare_rate = rate;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubClassSpec {
    pub label: String,
    pub subintents: Vec<StubSubIntentSpec>,
}

impl StubClassSpec {
    pub fn new(label: &str, subintents: Vec<StubSubIntentSpec>) -> StubClassSpec {
        StubClassSpec { label: label.to_string(), subintents }
    }
}

struct StubPool {
    base: Vec<String>,
    enriched: Vec<String>,
    rare: Vec<String>,
    rare_rate: f64,
}

/// Deterministic provider over a fixed universe of classes, sub-intents and
/// keyword pools. Discovery prompts get the configured reason lines;
/// generation prompts get sentences drawn from the matching pool. Responses
/// are a pure function of (construction seed, prompt text), so identical runs
/// produce identical corpora.
pub struct StubProvider {
    seed: u64,
    classes: Vec<StubClassSpec>,
    pools: BTreeMap<String, StubPool>,
    words_per_sample: usize,
    filler_rate: f64,
}

/// Phrases unique to each builtin template, used by the stub to tell which
/// stage a prompt belongs to.
const DISCOVERY_MARKER: &str = "identify fine-grained sub-intents";
const SEED_MARKER: &str = "Below are real example sentences";
const CORE_MARKER: &str = "Use formal and precise language";
const ENRICHED_MARKER: &str = "expand the vocabulary beyond what has already been used";

impl StubProvider {
    pub fn new(seed: u64, classes: Vec<StubClassSpec>) -> Result<StubProvider, BootstrapError> {
        let bad = |m: String| BootstrapError::InvalidConfig(m);
        let mut pools = BTreeMap::new();
        for class in &classes {
            if !ntm::is_slug(&class.label) {
                return Err(bad(format!("stub class label {:?} is not a slug", class.label)));
            }
            for si in &class.subintents {
                if si.base_pool.is_empty() {
                    return Err(bad(format!("stub pool for {:?} is empty", si.reason)));
                }
                if !(0.0..1.0).contains(&si.rare_rate) {
                    return Err(bad(format!("rare_rate {} outside [0, 1)", si.rare_rate)));
                }
                let name = discovered_name(&class.label, &si.reason)?;
                let pool = StubPool {
                    base: si.base_pool.clone(),
                    enriched: if si.enriched_pool.is_empty() {
                        si.base_pool.clone()
                    } else {
                        si.enriched_pool.clone()
                    },
                    rare: si.rare_pool.clone(),
                    rare_rate: if si.rare_pool.is_empty() { 0.0 } else { si.rare_rate },
                };
                if pools.insert(name.clone(), pool).is_some() {
                    return Err(bad(format!("two stub sub-intents share the name {name}")));
                }
            }
        }
        if pools.is_empty() {
            return Err(bad("stub world has no sub-intents".into()));
        }
        Ok(StubProvider { seed, classes, pools, words_per_sample: 16, filler_rate: 0.125 })
    }

    pub fn with_words_per_sample(mut self, n: usize) -> Self {
        assert!(n >= MIN_SAMPLE_WORDS, "stub sentences must pass validation");
        self.words_per_sample = n;
        self
    }

    pub fn with_filler_rate(mut self, rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate));
        self.filler_rate = rate;
        self
    }

    /// The sub-intent names this world will produce at discovery.
    pub fn expected_names(&self) -> Vec<String> {
        self.pools.keys().cloned().collect()
    }
}

fn parse_requested_count(prompt: &str) -> Option<usize> {
    let idx = prompt.find(" new sentences")?;
    let digits: Vec<char> = prompt[..idx]
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    if digits.is_empty() {
        return None;
    }
    digits.iter().rev().collect::<String>().parse().ok()
}

impl Provider for StubProvider {
    fn id(&self) -> &str {
        "stub"
    }

    fn complete(
        &mut self,
        prompt: &str,
        _sampling: SamplingParams,
    ) -> Result<String, BootstrapError> {
        let err = |reason: String| BootstrapError::Provider { id: "stub".into(), reason };
        if prompt.contains(DISCOVERY_MARKER) {
            let mut out = String::new();
            for class in &self.classes {
                for si in &class.subintents {
                    out.push_str(&format!("{}_due_to: {}\n", class.label, si.reason));
                }
            }
            return Ok(out);
        }
        let stage = if prompt.contains(SEED_MARKER) {
            Stage::Seed
        } else if prompt.contains(CORE_MARKER) {
            Stage::Core
        } else if prompt.contains(ENRICHED_MARKER) {
            Stage::Enriched
        } else {
            return Err(err("prompt matches no known template".into()));
        };
        let category = prompt
            .lines()
            .find_map(|l| l.strip_prefix("Category: "))
            .ok_or_else(|| err("prompt has no Category line".into()))?;
        let name = category.split_once(": ").map_or(category, |(n, _)| n).trim();
        let count =
            parse_requested_count(prompt).ok_or_else(|| err("no sentence count".into()))?;
        let pool =
            self.pools.get(name).ok_or_else(|| err(format!("unknown category {name:?}")))?;
        let words = if stage == Stage::Enriched { &pool.enriched } else { &pool.base };
        let mut rng = rng::stream(rng::derive_seed(self.seed, prompt));
        let mut out = String::new();
        for _ in 0..count {
            let mut sentence = Vec::with_capacity(self.words_per_sample);
            for _ in 0..self.words_per_sample {
                let r: f64 = rng.random();
                let w = if r < pool.rare_rate {
                    &pool.rare[rng.random_range(0..pool.rare.len())]
                } else if r < pool.rare_rate + self.filler_rate {
                    FILLERS[rng.random_range(0..FILLERS.len())]
                } else {
                    &words[rng.random_range(0..words.len())]
                };
                sentence.push(w);
            }
            out.push_str(&sentence.join(" "));
            out.push_str(".\n");
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Recording and replay

fn exchange_key(prompt: &str) -> String {
    format!("{:016x}", hash64(&[b"exchange-v1", prompt.as_bytes()]))
}

/// Wraps a provider, keeping every exchange in memory and optionally writing
/// response files a [`ReplayProvider`] can serve later.
pub struct RecordingProvider<P> {
    inner: P,
    dir: Option<PathBuf>,
    exchanges: Vec<(String, String)>,
}

impl<P: Provider> RecordingProvider<P> {
    pub fn new(inner: P) -> RecordingProvider<P> {
        RecordingProvider { inner, dir: None, exchanges: Vec::new() }
    }

    pub fn persisting(inner: P, dir: &Path) -> Result<RecordingProvider<P>, BootstrapError> {
        fs::create_dir_all(dir)?;
        Ok(RecordingProvider { inner, dir: Some(dir.to_path_buf()), exchanges: Vec::new() })
    }

    /// (prompt, response) pairs in request order.
    pub fn exchanges(&self) -> &[(String, String)] {
        &self.exchanges
    }
}

impl<P: Provider> Provider for RecordingProvider<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(
        &mut self,
        prompt: &str,
        sampling: SamplingParams,
    ) -> Result<String, BootstrapError> {
        let response = self.inner.complete(prompt, sampling)?;
        if let Some(dir) = &self.dir {
            let key = exchange_key(prompt);
            fs::write(dir.join(format!("{key}.prompt.txt")), prompt)?;
            fs::write(dir.join(format!("{key}.txt")), &response)?;
        }
        self.exchanges.push((prompt.to_string(), response.clone()));
        Ok(response)
    }
}

/// Serves responses recorded by a persisting [`RecordingProvider`], keyed by
/// prompt hash. A prompt with no recording is an error.
pub struct ReplayProvider {
    dir: PathBuf,
}

impl ReplayProvider {
    pub fn new(dir: impl Into<PathBuf>) -> ReplayProvider {
        ReplayProvider { dir: dir.into() }
    }
}

impl Provider for ReplayProvider {
    fn id(&self) -> &str {
        "replay"
    }

    fn complete(
        &mut self,
        prompt: &str,
        _sampling: SamplingParams,
    ) -> Result<String, BootstrapError> {
        let key = exchange_key(prompt);
        fs::read_to_string(self.dir.join(format!("{key}.txt"))).map_err(|e| {
            BootstrapError::Provider {
                id: "replay".into(),
                reason: format!("no recorded response {key}: {e}"),
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Live provider, compiled only with the `live` feature

#[cfg(feature = "live")]
pub mod live {
    //! Chat-completion HTTP provider. Configuration comes strictly from the
    //! environment so endpoints and credentials never land in files:
    //! `SEMTM_LIVE_ENDPOINT`, `SEMTM_LIVE_API_KEY`, `SEMTM_LIVE_MODEL`.
    //! Provenance records only a hash of endpoint and model.

    use super::{BootstrapError, Provider, SamplingParams, hash64};

    pub struct HttpProvider {
        endpoint: String,
        api_key: String,
        model: String,
        id: String,
        client: reqwest::blocking::Client,
    }

    impl HttpProvider {
        pub fn from_env() -> Result<HttpProvider, BootstrapError> {
            let var = |k: &str| {
                std::env::var(k).map_err(|_| {
                    BootstrapError::InvalidConfig(format!("{k} is not set"))
                })
            };
            let endpoint = var("SEMTM_LIVE_ENDPOINT")?;
            let api_key = var("SEMTM_LIVE_API_KEY")?;
            let model = var("SEMTM_LIVE_MODEL")?;
            let id =
                format!("live-{:016x}", hash64(&[endpoint.as_bytes(), model.as_bytes()]));
            Ok(HttpProvider {
                endpoint,
                api_key,
                model,
                id,
                client: reqwest::blocking::Client::new(),
            })
        }
    }

    impl Provider for HttpProvider {
        fn id(&self) -> &str {
            &self.id
        }

        fn complete(
            &mut self,
            prompt: &str,
            sampling: SamplingParams,
        ) -> Result<String, BootstrapError> {
            let err = |reason: String| BootstrapError::Provider {
                id: self.id.clone(),
                reason,
            };
            let body = serde_json::json!({
                "model": self.model,
                "messages": [{"role": "user", "content": prompt}],
                "top_p": sampling.nucleus_p,
                "temperature": sampling.temperature,
            });
            let resp = self
                .client
                .post(&self.endpoint)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send()
                .map_err(|e| err(e.to_string()))?
                .error_for_status()
                .map_err(|e| err(e.to_string()))?;
            let json: serde_json::Value = resp.json().map_err(|e| err(e.to_string()))?;
            json["choices"][0]["message"]["content"]
                .as_str()
                .map(|s| s.to_string())
                .ok_or_else(|| err("response has no message content".into()))
        }
    }
}
