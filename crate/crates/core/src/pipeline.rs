//! End-to-end orchestration: one TOML config drives discovery, generation,
//! pretraining, feature extraction, enrichment, classifier training and
//! evaluation, with every stage persisting its artifact under the output
//! directory. Stages are resumable: a run manifest records what finished
//! under which config identity, and reruns skip stages whose artifacts are
//! already present for that identity.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bootstrap::{
    self, GenerationConfig, Provider, ReplayProvider, StubClassSpec, StubProvider,
};
use crate::corpus::{self, LabeledExample, VocabSpec, Vocabulary};
use crate::enrich::{self, EnrichMode, EnrichedVocabulary, Enricher};
use crate::eval::{self, EvalReport, RunMeta};
use crate::model_io;
use crate::ntm::{self, FeatureGroupsMeta, NTMModel, NtmParams, SubIntent};
use crate::rng;
use crate::tm::{TMModel, TmParams};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("stage {stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

/// Tags every error raised while a stage runs with the stage name.
#[derive(Clone, Copy)]
struct StageCx(&'static str);

impl StageCx {
    fn err<E: std::fmt::Display>(self, e: E) -> PipelineError {
        PipelineError::Stage { stage: self.0, message: e.to_string() }
    }
}

// ---------------------------------------------------------------------------
// Configuration

/// Which completion backend generates the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSpec {
    /// Deterministic keyword-pool provider; the only one tests rely on.
    Stub { classes: Vec<StubClassSpec> },
    /// Serves responses recorded from an earlier run.
    Replay { dir: PathBuf },
    /// HTTP provider configured from the environment. Requires the `live`
    /// feature; never used by tests.
    Live,
}

impl Default for ProviderSpec {
    fn default() -> Self {
        ProviderSpec::Stub { classes: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NtmStageConfig {
    pub clauses_per_subintent: usize,
    pub threshold: u32,
    pub specificity: f64,
    pub states_per_action: u16,
    pub epochs: u32,
    /// Confidence floor for feature extraction; literals must exceed it.
    pub delta: u16,
}

impl Default for NtmStageConfig {
    fn default() -> Self {
        NtmStageConfig {
            clauses_per_subintent: 150,
            threshold: 5000,
            specificity: 5.0,
            states_per_action: 100,
            epochs: 30,
            delta: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TmStageConfig {
    pub clauses_per_class: usize,
    pub threshold: u32,
    pub specificity: f64,
    pub states_per_action: u16,
    pub weighted: bool,
    pub epochs: u32,
}

impl Default for TmStageConfig {
    fn default() -> Self {
        TmStageConfig {
            clauses_per_class: 100,
            threshold: 15,
            specificity: 3.9,
            states_per_action: 100,
            weighted: true,
            epochs: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EnrichStageConfig {
    pub mode: EnrichMode,
}

/// A sub-intent pinned in the config, bypassing the discovery stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinnedSubIntent {
    pub name: String,
    #[serde(default)]
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub dataset_name: String,
    pub domain_description: String,
    /// Train and test datasets, one JSON record per line.
    pub train: PathBuf,
    pub test: PathBuf,
    pub output_dir: PathBuf,
    /// Master seed; every stochastic stage derives its own child seed.
    pub seed: u64,
    pub vocab: VocabSpec,
    pub generation: GenerationConfig,
    pub provider: ProviderSpec,
    pub ntm: NtmStageConfig,
    pub tm: TmStageConfig,
    pub enrich: EnrichStageConfig,
    /// Optional pinned sub-intents; empty means run discovery.
    pub subintents: Vec<PinnedSubIntent>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset_name: String::new(),
            domain_description: String::new(),
            train: PathBuf::new(),
            test: PathBuf::new(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            vocab: VocabSpec::default(),
            generation: GenerationConfig::default(),
            provider: ProviderSpec::default(),
            ntm: NtmStageConfig::default(),
            tm: TmStageConfig::default(),
            enrich: EnrichStageConfig::default(),
            subintents: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(raw: &str) -> Result<PipelineConfig, PipelineError> {
        toml::from_str(raw).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory, then validates.
    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let raw = fs::read_to_string(path)?;
        let mut cfg = Self::parse(&raw)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
        cfg.train = resolve(&cfg.train);
        cfg.test = resolve(&cfg.test);
        cfg.output_dir = resolve(&cfg.output_dir);
        if let ProviderSpec::Replay { dir } = &cfg.provider {
            cfg.provider = ProviderSpec::Replay { dir: resolve(dir) };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.dataset_name.trim().is_empty() {
            return bad("dataset_name is empty".into());
        }
        for (what, path) in [("train", &self.train), ("test", &self.test)] {
            if path.as_os_str().is_empty() {
                return bad(format!("{what} dataset path is empty"));
            }
            if !path.is_file() {
                return bad(format!("{what} dataset {} does not exist", path.display()));
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir is empty".into());
        }
        self.generation.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.ntm_params().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.ntm.epochs == 0 || self.tm.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        // Classifier parameter validation needs a class count; two stands in
        // for the real count, which is only known once the data is read.
        TmParams { num_classes: 2, ..self.tm_params(2) }
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        match &self.provider {
            ProviderSpec::Stub { classes } => {
                if classes.is_empty() {
                    return bad("stub provider has no classes".into());
                }
                if self.generation.provider != "stub" {
                    return bad(format!(
                        "generation.provider {:?} does not match provider.kind \"stub\"",
                        self.generation.provider
                    ));
                }
            }
            ProviderSpec::Replay { dir } => {
                if !dir.is_dir() {
                    return bad(format!("replay dir {} does not exist", dir.display()));
                }
                if self.generation.provider != "replay" {
                    return bad(format!(
                        "generation.provider {:?} does not match provider.kind \"replay\"",
                        self.generation.provider
                    ));
                }
            }
            ProviderSpec::Live => {}
        }
        for pin in &self.subintents {
            SubIntent::new(&pin.name, &pin.explanation)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn ntm_params(&self) -> NtmParams {
        NtmParams {
            clauses_per_subintent: self.ntm.clauses_per_subintent,
            threshold: self.ntm.threshold,
            specificity: self.ntm.specificity,
            states_per_action: self.ntm.states_per_action,
            seed: rng::derive_seed(self.seed, "ntm"),
        }
    }

    pub fn tm_params(&self, num_classes: usize) -> TmParams {
        TmParams {
            clauses_per_class: self.tm.clauses_per_class,
            num_classes,
            threshold: self.tm.threshold,
            specificity: self.tm.specificity,
            states_per_action: self.tm.states_per_action,
            weighted: self.tm.weighted,
            seed: rng::derive_seed(self.seed, "tm"),
        }
    }

    /// Identity of everything that shapes the artifacts. Filesystem locations
    /// are excluded: binding to the data goes through the vocabulary hash,
    /// and the same config must hash alike wherever its outputs land.
    pub fn hash(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let mut scrubbed = self.clone();
        scrubbed.train = PathBuf::new();
        scrubbed.test = PathBuf::new();
        scrubbed.output_dir = PathBuf::new();
        if let ProviderSpec::Replay { .. } = &scrubbed.provider {
            scrubbed.provider = ProviderSpec::Replay { dir: PathBuf::new() };
        }
        let json = serde_json::to_string(&scrubbed).expect("config serialization cannot fail");
        let mut h = Sha256::new();
        h.update(b"pipeline-config-v1");
        h.update(json.as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("sha256 digest is 32 bytes"))
    }

    fn build_provider(&self) -> Result<Box<dyn Provider>, PipelineError> {
        match &self.provider {
            ProviderSpec::Stub { classes } => {
                let stub =
                    StubProvider::new(rng::derive_seed(self.seed, "provider"), classes.clone())
                        .map_err(|e| PipelineError::Config(e.to_string()))?;
                Ok(Box::new(stub))
            }
            ProviderSpec::Replay { dir } => Ok(Box::new(ReplayProvider::new(dir.clone()))),
            #[cfg(feature = "live")]
            ProviderSpec::Live => {
                let p = bootstrap::live::HttpProvider::from_env()
                    .map_err(|e| PipelineError::Config(e.to_string()))?;
                Ok(Box::new(p))
            }
            #[cfg(not(feature = "live"))]
            ProviderSpec::Live => Err(PipelineError::Config(
                "provider.kind \"live\" needs a build with the live feature".into(),
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// Artifacts

/// Where each stage's artifact lives under the output directory.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    root: PathBuf,
}

impl ArtifactPaths {
    pub fn new(root: impl Into<PathBuf>) -> ArtifactPaths {
        ArtifactPaths { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn subintents(&self) -> PathBuf {
        self.root.join("subintents.json")
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn vocab(&self) -> PathBuf {
        self.root.join("vocab")
    }

    pub fn ntm_model(&self) -> PathBuf {
        self.root.join("ntm.model")
    }

    pub fn ntm_trace(&self) -> PathBuf {
        self.root.join("ntm_trace.json")
    }

    pub fn feature_groups(&self) -> PathBuf {
        self.root.join("features.groups")
    }

    pub fn enriched_train(&self) -> PathBuf {
        self.root.join("train_enriched.jsonl")
    }

    pub fn enriched_test(&self) -> PathBuf {
        self.root.join("test_enriched.jsonl")
    }

    pub fn indicators(&self) -> PathBuf {
        self.root.join("indicators")
    }

    pub fn tm_model(&self) -> PathBuf {
        self.root.join("tm.model")
    }

    pub fn tm_trace(&self) -> PathBuf {
        self.root.join("tm_trace.json")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn run_manifest(&self) -> PathBuf {
        self.root.join("run.json")
    }
}

/// Stage names in execution order.
pub const STAGES: [&str; 8] =
    ["subintents", "corpus", "vocab", "ntm", "features", "enrich", "tm", "eval"];

fn stage_artifacts(paths: &ArtifactPaths, stage: &str) -> Vec<PathBuf> {
    match stage {
        "subintents" => vec![paths.subintents()],
        "corpus" => vec![paths.corpus_dir().join("manifest")],
        "vocab" => vec![paths.vocab()],
        "ntm" => vec![paths.ntm_model(), paths.ntm_trace()],
        "features" => vec![paths.feature_groups()],
        "enrich" => vec![paths.enriched_train(), paths.enriched_test(), paths.indicators()],
        "tm" => vec![paths.tm_model(), paths.tm_trace()],
        "eval" => vec![paths.report()],
        _ => unreachable!("unknown stage"),
    }
}

const RUN_MANIFEST_FORMAT: &str = "run-manifest-v1";

#[derive(Serialize, Deserialize)]
struct RunManifest {
    format: String,
    config_hash: String,
    completed: Vec<String>,
}

fn read_run_manifest(paths: &ArtifactPaths, config_hash: u64) -> Vec<String> {
    let Ok(raw) = fs::read_to_string(paths.run_manifest()) else {
        return Vec::new();
    };
    let Ok(m) = serde_json::from_str::<RunManifest>(&raw) else {
        return Vec::new();
    };
    if m.format != RUN_MANIFEST_FORMAT || m.config_hash != format!("{config_hash:016x}") {
        return Vec::new();
    }
    m.completed
}

fn write_run_manifest(
    paths: &ArtifactPaths,
    config_hash: u64,
    completed: &[String],
) -> Result<(), PipelineError> {
    let m = RunManifest {
        format: RUN_MANIFEST_FORMAT.into(),
        config_hash: format!("{config_hash:016x}"),
        completed: completed.to_vec(),
    };
    let json = serde_json::to_string_pretty(&m).expect("manifest serialization cannot fail");
    fs::write(paths.run_manifest(), json + "\n")?;
    Ok(())
}

fn write_json_artifact<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(value).expect("artifact serialization cannot fail");
    fs::write(path, json + "\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Stages

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SubIntentRecord {
    name: String,
    explanation: String,
}

fn sorted_labels(dataset: &[LabeledExample]) -> Vec<String> {
    let mut labels: Vec<String> = dataset.iter().map(|r| r.label.clone()).collect();
    labels.sort();
    labels.dedup();
    labels
}

fn stage_subintents(cfg: &PipelineConfig, paths: &ArtifactPaths) -> Result<(), PipelineError> {
    let stage = StageCx("subintents");
    let records: Vec<SubIntentRecord> = if cfg.subintents.is_empty() {
        let train = corpus::load_dataset(&cfg.train).map_err(|e| stage.err(e))?;
        let labels = sorted_labels(&train);
        let mut provider = cfg.build_provider()?;
        let found = bootstrap::discover_sub_intents(
            &cfg.dataset_name,
            &cfg.domain_description,
            &labels,
            &cfg.generation,
            provider.as_mut(),
        )
        .map_err(|e| stage.err(e))?;
        for r in &found.rejected {
            log::warn!("discovery line {} rejected: {} ({:?})", r.line, r.reason, r.text);
        }
        found
            .subintents
            .into_iter()
            .map(|s| SubIntentRecord { name: s.name, explanation: s.explanation })
            .collect()
    } else {
        cfg.subintents
            .iter()
            .map(|p| SubIntentRecord { name: p.name.clone(), explanation: p.explanation.clone() })
            .collect()
    };
    write_json_artifact(&paths.subintents(), &records)
}

fn load_subintents(paths: &ArtifactPaths) -> Result<Vec<SubIntent>, String> {
    let raw = fs::read_to_string(paths.subintents()).map_err(|e| e.to_string())?;
    let records: Vec<SubIntentRecord> =
        serde_json::from_str(&raw).map_err(|e| e.to_string())?;
    records
        .iter()
        .map(|r| SubIntent::new(&r.name, &r.explanation).map_err(|e| e.to_string()))
        .collect()
}

fn stage_corpus(cfg: &PipelineConfig, paths: &ArtifactPaths) -> Result<(), PipelineError> {
    let stage = StageCx("corpus");
    let subintents = load_subintents(paths).map_err(|e| stage.err(e))?;
    let train = corpus::load_dataset(&cfg.train).map_err(|e| stage.err(e))?;
    let mut real_examples: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for rec in &train {
        real_examples.entry(rec.label.clone()).or_default().push(rec.text.clone());
    }
    let mut provider = cfg.build_provider()?;
    let corpus =
        bootstrap::generate_corpus(&subintents, &real_examples, &cfg.generation, provider.as_mut())
            .map_err(|e| stage.err(e))?;
    bootstrap::save_corpus(&paths.corpus_dir(), &corpus).map_err(|e| stage.err(e))
}

fn stage_vocab(cfg: &PipelineConfig, paths: &ArtifactPaths) -> Result<(), PipelineError> {
    let stage = StageCx("vocab");
    let train = corpus::load_dataset(&cfg.train).map_err(|e| stage.err(e))?;
    let synthetic = bootstrap::load_corpus(&paths.corpus_dir()).map_err(|e| stage.err(e))?;
    let mut docs: Vec<String> = train.iter().map(|r| r.text.clone()).collect();
    docs.extend(synthetic.all_samples().map(|r| r.text.clone()));
    let vocab = corpus::build_vocabulary(&docs, &cfg.vocab).map_err(|e| stage.err(e))?;
    vocab.save(&paths.vocab()).map_err(|e| stage.err(e))
}

fn stage_ntm(cfg: &PipelineConfig, paths: &ArtifactPaths) -> Result<(), PipelineError> {
    let stage = StageCx("ntm");
    let vocab = Vocabulary::load(&paths.vocab()).map_err(|e| stage.err(e))?;
    let synthetic = bootstrap::load_corpus(&paths.corpus_dir()).map_err(|e| stage.err(e))?;
    let samples: Vec<LabeledExample> = synthetic.all_samples().cloned().collect();
    let mut model = NTMModel::new(
        cfg.ntm_params(),
        vocab.len(),
        vocab.hash(),
        synthetic.subintents(),
    )
    .map_err(|e| stage.err(e))?;
    let trace = ntm::train_ntm(
        &mut model,
        &samples,
        &vocab,
        cfg.ntm.epochs,
        rng::derive_seed(cfg.seed, "ntm-train"),
    )
    .map_err(|e| stage.err(e))?;
    model_io::save_ntm_model(&paths.ntm_model(), &model, cfg.hash()).map_err(|e| stage.err(e))?;
    write_json_artifact(&paths.ntm_trace(), &trace)
}

fn stage_features(cfg: &PipelineConfig, paths: &ArtifactPaths) -> Result<(), PipelineError> {
    let stage = StageCx("features");
    let vocab = Vocabulary::load(&paths.vocab()).map_err(|e| stage.err(e))?;
    let (model, _) = model_io::load_ntm_model(&paths.ntm_model()).map_err(|e| stage.err(e))?;
    let groups = ntm::extract_feature_groups(&model, &vocab, cfg.ntm.delta).map_err(|e| stage.err(e))?;
    let meta = FeatureGroupsMeta {
        config_hash: cfg.hash(),
        vocab_hash: vocab.hash(),
        delta: cfg.ntm.delta,
    };
    ntm::save_feature_groups(&paths.feature_groups(), &meta, &groups).map_err(|e| stage.err(e))
}

fn stage_enrich(cfg: &PipelineConfig, paths: &ArtifactPaths) -> Result<(), PipelineError> {
    let stage = StageCx("enrich");
    let vocab = Vocabulary::load(&paths.vocab()).map_err(|e| stage.err(e))?;
    let (model, _) = model_io::load_ntm_model(&paths.ntm_model()).map_err(|e| stage.err(e))?;
    let (meta, groups) = ntm::load_feature_groups(&paths.feature_groups()).map_err(|e| stage.err(e))?;
    if meta.vocab_hash != vocab.hash() {
        return Err(stage.err("feature groups were extracted under a different vocabulary"));
    }
    let train = corpus::load_dataset(&cfg.train).map_err(|e| stage.err(e))?;
    let test = corpus::load_dataset(&cfg.test).map_err(|e| stage.err(e))?;
    let out =
        enrich::enrich_dataset(&train, &vocab, &model, &groups, cfg.enrich.mode).map_err(|e| stage.err(e))?;
    for (name, count) in &out.activations {
        log::info!("train activations: {name} predicted for {count} of {}", train.len());
    }
    corpus::save_dataset(&paths.enriched_train(), &out.records).map_err(|e| stage.err(e))?;
    out.vocabulary.save(&paths.indicators()).map_err(|e| stage.err(e))?;
    let out_test =
        enrich::enrich_dataset(&test, &vocab, &model, &groups, cfg.enrich.mode).map_err(|e| stage.err(e))?;
    corpus::save_dataset(&paths.enriched_test(), &out_test.records).map_err(|e| stage.err(e))
}

fn load_enriched(
    dataset_path: &Path,
    paths: &ArtifactPaths,
) -> Result<(EnrichedVocabulary, Vec<LabeledExample>, Vec<corpus::BowVector>), String> {
    let base = Vocabulary::load(&paths.vocab()).map_err(|e| e.to_string())?;
    let enriched_vocab =
        EnrichedVocabulary::load(&paths.indicators(), base).map_err(|e| e.to_string())?;
    let records = corpus::load_dataset(dataset_path).map_err(|e| e.to_string())?;
    let vectors = records
        .iter()
        .map(|r| enrich::vector_from_record(r, &enriched_vocab).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((enriched_vocab, records, vectors))
}

fn stage_tm(cfg: &PipelineConfig, paths: &ArtifactPaths) -> Result<(), PipelineError> {
    let stage = StageCx("tm");
    let (enriched_vocab, records, vectors) =
        load_enriched(&paths.enriched_train(), paths).map_err(|e| stage.err(e))?;
    let labels = sorted_labels(&records);
    let ys = records
        .iter()
        .map(|r| labels.iter().position(|l| l == &r.label).expect("label from this set"))
        .collect::<Vec<_>>();
    let mut model = TMModel::new(
        cfg.tm_params(labels.len()),
        enriched_vocab.width(),
        enriched_vocab.hash(),
        labels,
    )
    .map_err(|e| stage.err(e))?;
    let trace = model
        .fit_vectors(&vectors, &ys, cfg.tm.epochs, rng::derive_seed(cfg.seed, "tm-train"))
        .map_err(|e| stage.err(e))?;
    model_io::save_tm_model(&paths.tm_model(), &model, cfg.hash()).map_err(|e| stage.err(e))?;
    write_json_artifact(&paths.tm_trace(), &trace)
}

fn stage_eval(cfg: &PipelineConfig, paths: &ArtifactPaths) -> Result<(), PipelineError> {
    let stage = StageCx("eval");
    let (model, _) = model_io::load_tm_model(&paths.tm_model()).map_err(|e| stage.err(e))?;
    let (enriched_vocab, records, vectors) =
        load_enriched(&paths.enriched_test(), paths).map_err(|e| stage.err(e))?;
    if enriched_vocab.hash() != model.vocab_hash() {
        return Err(stage.err("classifier was trained under different indicator columns"));
    }
    let mut pairs = Vec::with_capacity(records.len());
    for (rec, x) in records.iter().zip(&vectors) {
        let truth = model
            .labels()
            .iter()
            .position(|l| l == &rec.label)
            .ok_or_else(|| stage.err(format!("test label {:?} never seen in training", rec.label)))?;
        pairs.push((truth, model.predict(x)));
    }
    let meta = RunMeta {
        config_hash: format!("{:016x}", cfg.hash()),
        seed: cfg.seed,
        test_size: 0,
    };
    let report =
        eval::evaluate_predictions(model.labels(), &pairs, meta).map_err(|e| stage.err(e))?;
    write_json_artifact(&paths.report(), &report)
}

// ---------------------------------------------------------------------------
// Driver

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub skipped: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: EvalReport,
    pub stages: Vec<StageOutcome>,
    pub paths: ArtifactPaths,
}

fn dispatch_stage(
    cfg: &PipelineConfig,
    paths: &ArtifactPaths,
    stage: &str,
) -> Result<(), PipelineError> {
    match stage {
        "subintents" => stage_subintents(cfg, paths),
        "corpus" => stage_corpus(cfg, paths),
        "vocab" => stage_vocab(cfg, paths),
        "ntm" => stage_ntm(cfg, paths),
        "features" => stage_features(cfg, paths),
        "enrich" => stage_enrich(cfg, paths),
        "tm" => stage_tm(cfg, paths),
        "eval" => stage_eval(cfg, paths),
        other => Err(PipelineError::Config(format!("unknown stage {other:?}"))),
    }
}

/// Runs one named stage unconditionally, assuming earlier stages already
/// left their artifacts in the output directory, and records it in the run
/// manifest so a later full run can resume past it.
pub fn run_stage(cfg: &PipelineConfig, stage: &str) -> Result<(), PipelineError> {
    cfg.validate()?;
    let paths = ArtifactPaths::new(&cfg.output_dir);
    fs::create_dir_all(paths.root())?;
    let config_hash = cfg.hash();
    let mut completed = read_run_manifest(&paths, config_hash);
    dispatch_stage(cfg, &paths, stage)?;
    if !completed.iter().any(|s| s == stage) {
        completed.push(stage.to_string());
    }
    write_run_manifest(&paths, config_hash, &completed)
}

/// Runs every stage in order, skipping the ones whose artifacts already
/// exist for this exact config identity. The first stage error halts the run
/// with the stage name attached.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun, PipelineError> {
    cfg.validate()?;
    let paths = ArtifactPaths::new(&cfg.output_dir);
    fs::create_dir_all(paths.root())?;
    let config_hash = cfg.hash();
    let mut completed = read_run_manifest(&paths, config_hash);
    let mut stages = Vec::with_capacity(STAGES.len());
    for stage in STAGES {
        let done = completed.iter().any(|s| s == stage)
            && stage_artifacts(&paths, stage).iter().all(|p| p.exists());
        if done {
            log::info!("stage {stage}: artifacts present, skipping");
            stages.push(StageOutcome { stage, skipped: true });
            continue;
        }
        log::info!("stage {stage}: running");
        dispatch_stage(cfg, &paths, stage)?;
        if !completed.iter().any(|s| s == stage) {
            completed.push(stage.to_string());
        }
        write_run_manifest(&paths, config_hash, &completed)?;
        stages.push(StageOutcome { stage, skipped: false });
    }
    let raw = fs::read_to_string(paths.report())?;
    let report: EvalReport =
        serde_json::from_str(&raw).map_err(|e| StageCx("eval").err(e))?;
    Ok(PipelineRun { report, stages, paths })
}

/// Accuracy across several seeds of the same config, each run in its own
/// subdirectory of the output dir.
#[derive(Debug, Clone)]
pub struct SeedsSummary {
    pub per_seed: Vec<(u64, EvalReport)>,
    pub mean_accuracy: f64,
    pub stddev_accuracy: f64,
}

pub fn run_seeds(cfg: &PipelineConfig, seeds: &[u64]) -> Result<SeedsSummary, PipelineError> {
    if seeds.is_empty() {
        return Err(PipelineError::Config("no seeds given".into()));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut run_cfg = cfg.clone();
        run_cfg.seed = seed;
        run_cfg.output_dir = cfg.output_dir.join(format!("seed-{seed}"));
        let run = run_pipeline(&run_cfg)?;
        per_seed.push((seed, run.report));
    }
    let accs: Vec<f64> = per_seed.iter().map(|(_, r)| r.accuracy).collect();
    let (mean_accuracy, stddev_accuracy) = eval::mean_stddev(&accs);
    Ok(SeedsSummary { per_seed, mean_accuracy, stddev_accuracy })
}

// ---------------------------------------------------------------------------
// Explanation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainedClause {
    /// Clause index within the predicted class's bank.
    pub index: usize,
    /// Clause weight signed by polarity: positive clauses argue for the
    /// class, negative ones against it.
    pub vote: i64,
    /// Rendered literals: `token`, `¬token`, or a `subintent::literal`
    /// indicator column.
    pub literals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    pub text: String,
    pub predicted: String,
    /// Inference-mode score per class label, model label order.
    pub scores: Vec<(String, i64)>,
    /// Every clause of the predicted class that fires on this input. Each
    /// one re-evaluates to true on the enriched vector by construction.
    pub clauses: Vec<ExplainedClause>,
}

impl Explanation {
    /// Plain-text rendering for terminals.
    pub fn render(&self) -> String {
        let mut out = format!("predicted: {}\n", self.predicted);
        out.push_str("scores:");
        for (label, score) in &self.scores {
            out.push_str(&format!(" {label}={score}"));
        }
        out.push('\n');
        for c in &self.clauses {
            let vote = if c.vote >= 0 { format!("+{}", c.vote) } else { c.vote.to_string() };
            out.push_str(&format!("clause {} ({}): {}\n", c.index, vote, c.literals.join(" ∧ ")));
        }
        out
    }
}

/// Explains one text against the artifacts of a finished run: predicted
/// class, all class scores, and the firing clauses of the predicted class
/// rendered with vocabulary tokens and indicator names.
pub fn explain_text(
    cfg: &PipelineConfig,
    paths: &ArtifactPaths,
    text: &str,
) -> Result<Explanation, PipelineError> {
    let stage = StageCx("explain");
    let base = Vocabulary::load(&paths.vocab()).map_err(|e| stage.err(e))?;
    let (ntm_model, _) = model_io::load_ntm_model(&paths.ntm_model()).map_err(|e| stage.err(e))?;
    let (_, groups) = ntm::load_feature_groups(&paths.feature_groups()).map_err(|e| stage.err(e))?;
    let enriched_vocab =
        EnrichedVocabulary::load(&paths.indicators(), base).map_err(|e| stage.err(e))?;
    let (tm_model, _) = model_io::load_tm_model(&paths.tm_model()).map_err(|e| stage.err(e))?;
    if tm_model.vocab_hash() != enriched_vocab.hash() {
        return Err(stage.err("classifier was trained under different indicator columns"));
    }
    let enricher =
        Enricher::new(&enriched_vocab, &ntm_model, &groups, cfg.enrich.mode).map_err(|e| stage.err(e))?;
    let (x, _) = enricher.enrich_text(text);
    explain_vector(&tm_model, &enriched_vocab, text, &x)
}

/// The model- and vector-level core of [`explain_text`], usable when the
/// enriched vector is already at hand.
pub fn explain_vector(
    model: &TMModel,
    vocab: &EnrichedVocabulary,
    text: &str,
    x: &corpus::BowVector,
) -> Result<Explanation, PipelineError> {
    let stage = StageCx("explain");
    if x.len() != vocab.width() {
        return Err(stage.err(format!(
            "vector width {} does not match vocabulary width {}",
            x.len(),
            vocab.width()
        )));
    }
    let predicted = model.predict(x);
    let scores = model
        .labels()
        .iter()
        .cloned()
        .zip(model.score_all(x))
        .collect::<Vec<_>>();
    let mut clauses = Vec::new();
    for (i, clause) in model.banks()[predicted].iter().enumerate() {
        if !clause.evaluate(x, crate::tm::EvalMode::Inference) {
            continue;
        }
        let literals = clause
            .included_literals()
            .iter()
            .map(|l| {
                let name = vocab.column_name(l.feature);
                if l.negated { format!("¬{name}") } else { name }
            })
            .collect();
        clauses.push(ExplainedClause {
            index: i,
            vote: crate::tm::polarity_of(i) * clause.weight() as i64,
            literals,
        });
    }
    Ok(Explanation {
        text: text.to_string(),
        predicted: model.labels()[predicted].clone(),
        scores,
        clauses,
    })
}
