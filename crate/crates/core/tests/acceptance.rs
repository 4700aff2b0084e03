//! Acceptance gate: each test checks one release criterion end to end and
//! prints a single PASS line so a full run reads as a checklist. Budgets and
//! tolerances are part of the contract; do not loosen them here.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::RngExt;
use semtm_core::bootstrap::{
    discover_sub_intents, generate_corpus, GenerationConfig, StubClassSpec, StubProvider,
    StubSubIntentSpec,
};
use semtm_core::corpus::{
    binarize, build_vocabulary, save_dataset, BowVector, LabeledExample, VocabSpec,
};
use semtm_core::enrich::{enrich_dataset, EnrichMode, EnrichedVocabulary, Enricher};
use semtm_core::model_io;
use semtm_core::ntm::{
    boosted_type_i_feedback, extract_feature_groups, train_ntm, MonotoneClause, NTMModel,
    NtmParams,
};
use semtm_core::pipeline::{
    self, run_pipeline, ArtifactPaths, NtmStageConfig, PipelineConfig, ProviderSpec,
    TmStageConfig,
};
use semtm_core::rng;
use semtm_core::tm::{
    type_i_feedback, type_ii_feedback, Clause, EvalMode, TMModel, TmParams,
};

fn bow(len: usize, ones: &[usize]) -> BowVector {
    BowVector::from_indices(len, ones.iter().copied())
}

/// Empirical up/down transition frequency of one automaton over fresh trials.
fn transition_frequency(
    clause: &Clause,
    x: &BowVector,
    negated: bool,
    idx: usize,
    trials: u32,
    seed: u64,
    apply: impl Fn(&mut Clause, &BowVector, &mut rng::Stream),
) -> (f64, f64) {
    let mut r = rng::stream(seed);
    let before = if negated {
        clause.negate_states()[idx]
    } else {
        clause.include_states()[idx]
    };
    let (mut up, mut down) = (0u64, 0u64);
    for _ in 0..trials {
        let mut c = clause.clone();
        apply(&mut c, x, &mut r);
        let after = if negated { c.negate_states()[idx] } else { c.include_states()[idx] };
        if after > before {
            up += 1;
        } else if after < before {
            down += 1;
        }
    }
    (up as f64 / trials as f64, down as f64 / trials as f64)
}

struct Cell {
    name: &'static str,
    clause: Clause,
    x: BowVector,
    negated: bool,
    idx: usize,
    expect_up: f64,
    expect_down: f64,
}

/// The reachable feedback cells for s = 5, automata watched one at a time.
/// Plain-side cells cover every (action, clause, literal) combination that
/// can occur; two negated-side cells check the mirrored literal value.
fn type_i_cells(n: u16) -> Vec<Cell> {
    vec![
        Cell {
            name: "include, clause fires, literal true",
            clause: Clause::from_states(vec![n + 3], vec![n - 1], 1, n).unwrap(),
            x: bow(1, &[0]),
            negated: false,
            idx: 0,
            expect_up: 0.8,
            expect_down: 0.0,
        },
        Cell {
            name: "include, clause blocked, literal true",
            clause: Clause::from_states(vec![n + 3, n + 3], vec![n, n], 1, n).unwrap(),
            x: bow(2, &[0]),
            negated: false,
            idx: 0,
            expect_up: 0.0,
            expect_down: 0.2,
        },
        Cell {
            name: "include, clause blocked, literal false",
            clause: Clause::from_states(vec![n + 3], vec![n], 1, n).unwrap(),
            x: bow(1, &[]),
            negated: false,
            idx: 0,
            expect_up: 0.0,
            expect_down: 0.2,
        },
        Cell {
            name: "exclude, clause fires, literal true",
            clause: Clause::from_states(vec![n - 2], vec![n - 2], 1, n).unwrap(),
            x: bow(1, &[0]),
            negated: false,
            idx: 0,
            expect_up: 0.8,
            expect_down: 0.0,
        },
        Cell {
            name: "exclude, clause fires, literal false",
            clause: Clause::from_states(vec![n - 2], vec![n - 2], 1, n).unwrap(),
            x: bow(1, &[]),
            negated: false,
            idx: 0,
            expect_up: 0.0,
            expect_down: 0.2,
        },
        Cell {
            name: "exclude, clause blocked, literal true",
            clause: Clause::from_states(vec![n, n + 1], vec![n, n], 1, n).unwrap(),
            x: bow(2, &[0]),
            negated: false,
            idx: 0,
            expect_up: 0.0,
            expect_down: 0.2,
        },
        Cell {
            name: "exclude, clause blocked, literal false",
            clause: Clause::from_states(vec![n, n + 1], vec![n, n], 1, n).unwrap(),
            x: bow(2, &[1]),
            negated: false,
            idx: 0,
            expect_up: 0.0,
            expect_down: 0.2,
        },
        Cell {
            name: "negated include, clause fires, literal true",
            clause: Clause::from_states(vec![n], vec![n + 3], 1, n).unwrap(),
            x: bow(1, &[]),
            negated: true,
            idx: 0,
            expect_up: 0.8,
            expect_down: 0.0,
        },
        Cell {
            name: "negated exclude, clause fires, literal true",
            clause: Clause::from_states(vec![n - 2], vec![n - 2], 1, n).unwrap(),
            x: bow(1, &[]),
            negated: true,
            idx: 0,
            expect_up: 0.8,
            expect_down: 0.0,
        },
    ]
}

#[test]
fn acceptance_01_feedback_conformance() {
    let start = Instant::now();
    let n = 10;
    let s = 5.0;
    let trials = 100_000;
    let tol = 0.02;

    for (i, cell) in type_i_cells(n).into_iter().enumerate() {
        let (up, down) = transition_frequency(
            &cell.clause,
            &cell.x,
            cell.negated,
            cell.idx,
            trials,
            1000 + i as u64,
            |c, x, r| type_i_feedback(c, x, s, r),
        );
        assert!(
            (up - cell.expect_up).abs() < tol,
            "type I {}: up {} expected {}",
            cell.name,
            up,
            cell.expect_up
        );
        assert!(
            (down - cell.expect_down).abs() < tol,
            "type I {}: down {} expected {}",
            cell.name,
            down,
            cell.expect_down
        );
    }

    // Type II is deterministic: excluded automata with a false literal step
    // up on firing clauses, everything else is inaction.
    let type_ii = |c: &mut Clause, x: &BowVector, _r: &mut rng::Stream| type_ii_feedback(c, x);
    let cells = vec![
        ("exclude, fires, literal false", Clause::new(1, n), bow(1, &[]), false, 1.0),
        ("exclude, fires, literal true", Clause::new(1, n), bow(1, &[0]), false, 0.0),
        (
            // the negated sibling sits below the boundary so its step up
            // cannot cross and demote the watched automaton
            "include, fires, literal true",
            Clause::from_states(vec![n + 2], vec![n - 3], 1, n).unwrap(),
            bow(1, &[0]),
            false,
            0.0,
        ),
        (
            "exclude, blocked, literal false",
            Clause::from_states(vec![n, n + 2], vec![n, n], 1, n).unwrap(),
            bow(2, &[]),
            false,
            0.0,
        ),
        ("negated exclude, fires, literal false", Clause::new(1, n), bow(1, &[0]), true, 1.0),
    ];
    for (i, (name, clause, x, negated, expect_up)) in cells.into_iter().enumerate() {
        let (up, down) =
            transition_frequency(&clause, &x, negated, 0, trials, 2000 + i as u64, type_ii);
        assert_eq!(up, expect_up, "type II {name}: up");
        assert_eq!(down, 0.0, "type II {name}: down");
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "budget exceeded: {elapsed:?}");
    println!(
        "acceptance 1 feedback conformance: PASS ({} trials/cell, {:.1}s)",
        trials,
        elapsed.as_secs_f64()
    );
}

/// Empirical up/down frequency of one monotone automaton over fresh trials.
fn monotone_frequency(
    clause: &MonotoneClause,
    x: &BowVector,
    idx: usize,
    trials: u32,
    seed: u64,
    s: f64,
) -> (f64, f64) {
    let mut r = rng::stream(seed);
    let before = clause.include_states()[idx];
    let (mut up, mut down) = (0u64, 0u64);
    for _ in 0..trials {
        let mut c = clause.clone();
        boosted_type_i_feedback(&mut c, x, s, &mut r);
        let after = c.include_states()[idx];
        if after > before {
            up += 1;
        } else if after < before {
            down += 1;
        }
    }
    (up as f64 / trials as f64, down as f64 / trials as f64)
}

#[test]
fn acceptance_02_boosted_feedback_conformance() {
    let start = Instant::now();
    let n = 10;
    let s = 5.0;
    let trials = 100_000;
    let tol = 0.02;

    // (name, clause, input, watched automaton, expected up, expected down)
    let cells = vec![
        (
            "include, clause fires, literal true: boosted reward is certain",
            MonotoneClause::from_states(vec![n + 3], 1, n).unwrap(),
            bow(1, &[0]),
            0,
            1.0,
            0.0,
        ),
        (
            "include, clause blocked by own literal: penalty disabled",
            MonotoneClause::from_states(vec![n + 3], 1, n).unwrap(),
            bow(1, &[]),
            0,
            0.0,
            0.0,
        ),
        (
            "include, clause blocked by sibling: penalty disabled",
            MonotoneClause::from_states(vec![n + 3, n + 3], 1, n).unwrap(),
            bow(2, &[0]),
            0,
            0.0,
            0.0,
        ),
        (
            "exclude, clause fires, literal true: standard 1/s toward include",
            MonotoneClause::from_states(vec![n - 2], 1, n).unwrap(),
            bow(1, &[0]),
            0,
            0.2,
            0.0,
        ),
        (
            "exclude, clause fires, literal false: standard 1/s toward exclude",
            MonotoneClause::from_states(vec![n - 2], 1, n).unwrap(),
            bow(1, &[]),
            0,
            0.0,
            0.2,
        ),
        (
            "exclude, clause blocked: standard 1/s toward exclude",
            MonotoneClause::from_states(vec![n, n + 2], 1, n).unwrap(),
            bow(2, &[0]),
            0,
            0.0,
            0.2,
        ),
    ];
    for (i, (name, clause, x, idx, expect_up, expect_down)) in cells.into_iter().enumerate() {
        let (up, down) = monotone_frequency(&clause, &x, idx, trials, 4000 + i as u64, s);
        assert!(
            (up - expect_up).abs() < tol,
            "boosted {name}: up {up} expected {expect_up}"
        );
        assert!(
            (down - expect_down).abs() < tol,
            "boosted {name}: down {down} expected {expect_down}"
        );
        // the certain cells must be exact, not merely within tolerance
        if expect_up == 1.0 {
            assert_eq!(up, 1.0, "boosted {name}: reward must be certain");
        }
        if expect_up == 0.0 && expect_down == 0.0 {
            assert_eq!((up, down), (0.0, 0.0), "boosted {name}: cell must be inert");
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "budget exceeded: {elapsed:?}");
    println!(
        "acceptance 2 boosted feedback conformance: PASS ({} trials/cell, {:.1}s)",
        trials,
        elapsed.as_secs_f64()
    );
}

/// Noisy XOR: labels flip with probability 0.1 in training, test is clean.
fn xor_data(count: usize, noise: f64, seed: u64) -> (Vec<BowVector>, Vec<usize>) {
    let mut r = rng::stream(seed);
    let mut xs = Vec::with_capacity(count);
    let mut ys = Vec::with_capacity(count);
    for _ in 0..count {
        let a = r.random::<bool>();
        let b = r.random::<bool>();
        let mut y = (a != b) as usize;
        if noise > 0.0 && r.random::<f64>() < noise {
            y = 1 - y;
        }
        let mut x = BowVector::zeros(2);
        x.set(0, a);
        x.set(1, b);
        xs.push(x);
        ys.push(y);
    }
    (xs, ys)
}

#[test]
fn acceptance_03_noisy_xor_learnability() {
    let start = Instant::now();
    let (train_x, train_y) = xor_data(5000, 0.1, 42);
    let (test_x, test_y) = xor_data(1000, 0.0, 43);
    let params = TmParams {
        clauses_per_class: 20,
        num_classes: 2,
        threshold: 15,
        specificity: 3.9,
        states_per_action: 100,
        weighted: false,
        seed: 0,
    };
    let mut model = TMModel::new(params, 2, 0, vec!["even".into(), "odd".into()]).unwrap();
    let mut accuracy = 0.0;
    let mut epochs_used = 0;
    for chunk in 0..10u64 {
        model.fit_vectors(&train_x, &train_y, 10, 9000 + chunk).unwrap();
        epochs_used += 10;
        let correct = test_x
            .iter()
            .zip(&test_y)
            .filter(|&(x, &y)| model.predict(x) == y)
            .count();
        accuracy = correct as f64 / test_x.len() as f64;
        if accuracy >= 0.95 {
            break;
        }
    }
    let elapsed = start.elapsed();
    assert!(accuracy >= 0.95, "test accuracy {accuracy} after {epochs_used} epochs");
    assert!(elapsed.as_secs() < 30, "budget exceeded: {elapsed:?}");
    println!(
        "acceptance 3 noisy-xor learnability: PASS ({:.1}% after {} epochs, {:.1}s)",
        accuracy * 100.0,
        epochs_used,
        elapsed.as_secs_f64()
    );
}

/// Reference evaluation straight from automaton states, no masks.
fn clause_oracle(clause: &Clause, x: &BowVector, mode: EvalMode) -> bool {
    let n = clause.n();
    let mut any = false;
    for i in 0..clause.width() {
        if clause.include_states()[i] > n {
            any = true;
            if !x.get(i) {
                return false;
            }
        }
        if clause.negate_states()[i] > n {
            any = true;
            if x.get(i) {
                return false;
            }
        }
    }
    any || mode == EvalMode::Learning
}

fn random_clause(width: usize, n: u16, r: &mut rng::Stream) -> Clause {
    let mut include = Vec::with_capacity(width);
    let mut negate = Vec::with_capacity(width);
    for _ in 0..width {
        let a = r.random_range(1..=n);
        let b = r.random_range(1..=n);
        match r.random_range(0..3u8) {
            0 => {
                include.push(a);
                negate.push(b);
            }
            1 => {
                include.push(n + a);
                negate.push(b);
            }
            _ => {
                include.push(a);
                negate.push(n + b);
            }
        }
    }
    Clause::from_states(include, negate, r.random_range(0..5u32), n).unwrap()
}

#[test]
fn acceptance_06_oracle_equivalence() {
    let start = Instant::now();
    let mut r = rng::stream(606);
    let models = 10_000;
    for _ in 0..models {
        let width = r.random_range(1..=12usize);
        let n = r.random_range(3..=10u16);
        let num_classes = r.random_range(2..=4usize);
        let clauses_per_class = 2 * r.random_range(1..=3usize);
        let params = TmParams {
            clauses_per_class,
            num_classes,
            threshold: 10,
            specificity: 3.0,
            states_per_action: n,
            weighted: true,
            seed: 0,
        };
        let banks: Vec<Vec<Clause>> = (0..num_classes)
            .map(|_| (0..clauses_per_class).map(|_| random_clause(width, n, &mut r)).collect())
            .collect();
        let labels = (0..num_classes).map(|c| format!("c{c}")).collect();
        let model = TMModel::from_parts(params, width, 0, labels, banks).unwrap();

        for bits in 0..1u64 << width {
            let mut x = BowVector::zeros(width);
            for i in 0..width {
                x.set(i, bits >> i & 1 == 1);
            }
            // brute-force scores: positional polarity, weighted inference votes
            let mut scores = vec![0i64; num_classes];
            for (class, bank) in model.banks().iter().enumerate() {
                for (idx, clause) in bank.iter().enumerate() {
                    let fired = clause_oracle(clause, &x, EvalMode::Inference);
                    assert_eq!(
                        clause.evaluate(&x, EvalMode::Inference),
                        fired,
                        "clause eval diverged"
                    );
                    assert_eq!(
                        clause.evaluate(&x, EvalMode::Learning),
                        clause_oracle(clause, &x, EvalMode::Learning),
                        "clause eval diverged in learning mode"
                    );
                    if fired {
                        let sign = if idx % 2 == 1 { 1 } else { -1 };
                        scores[class] += sign * clause.weight() as i64;
                    }
                }
            }
            let mut best = 0;
            for c in 1..num_classes {
                if scores[c] > scores[best] {
                    best = c;
                }
            }
            for c in 0..num_classes {
                assert_eq!(model.class_score(c, &x), scores[c], "class score diverged");
            }
            assert_eq!(model.predict(&x), best, "prediction diverged");
        }
    }
    let elapsed = start.elapsed();
    println!(
        "acceptance 6 oracle equivalence: PASS ({models} models, {:.1}s)",
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Planted-keyword recovery

const PLANTED_POOLS: [(&str, &str, [&str; 8]); 6] = [
    (
        "billing",
        "unexpected charges on the invoice",
        ["invoice", "charge", "refund", "overbilled", "statement", "fee", "surcharge", "billing"],
    ),
    (
        "billing",
        "confusion about subscription renewal",
        ["renewal", "subscription", "autopay", "cycle", "plan", "tier", "prorated", "expiry"],
    ),
    (
        "shipping",
        "parcels arriving late",
        ["parcel", "delayed", "courier", "transit", "tracking", "eta", "customs", "dispatch"],
    ),
    (
        "shipping",
        "packages damaged in transit",
        ["crushed", "dented", "torn", "leaking", "packaging", "fragile", "shattered", "bruised"],
    ),
    (
        "quality",
        "products failing early",
        ["defective", "broken", "malfunction", "faulty", "dead", "worn", "failing", "flimsy"],
    ),
    (
        "quality",
        "materials feeling cheap",
        ["plastic", "flimsier", "brittle", "thin", "rough", "loose", "wobbly", "peeling"],
    ),
];

#[test]
fn acceptance_04_planted_keyword_recovery() {
    let start = Instant::now();

    let mut classes: Vec<StubClassSpec> = Vec::new();
    for (label, reason, pool) in PLANTED_POOLS {
        let sub = StubSubIntentSpec::new(reason, &pool);
        match classes.iter_mut().find(|c| c.label == label) {
            Some(c) => c.subintents.push(sub),
            None => classes.push(StubClassSpec::new(label, vec![sub])),
        }
    }
    // planted pools are disjoint: inclusion is a one-way door for monotone
    // clauses, so a frequent token shared across pools would ride along in
    // some surviving clause and never leave
    let mut provider = StubProvider::new(77, classes).unwrap().with_filler_rate(0.0);

    let config = GenerationConfig::default();
    assert_eq!(
        config.seed_count + config.core_count + config.enriched_count,
        200,
        "criterion fixes 200 staged samples per sub-intent"
    );
    let labels: Vec<String> =
        ["billing", "quality", "shipping"].iter().map(|s| s.to_string()).collect();
    let found =
        discover_sub_intents("support-tickets", "customer support tickets", &labels, &config,
            &mut provider)
        .unwrap();
    assert_eq!(found.subintents.len(), 6);

    let mut anchors = std::collections::BTreeMap::new();
    for (label, _, pool) in PLANTED_POOLS {
        anchors
            .entry(label.to_string())
            .or_insert_with(Vec::new)
            .push(format!("the {} and the {} again", pool[0], pool[1]));
    }
    let corpus = generate_corpus(&found.subintents, &anchors, &config, &mut provider).unwrap();
    assert_eq!(corpus.total_samples(), 1200);

    let docs: Vec<String> = corpus.all_samples().map(|r| r.text.clone()).collect();
    let vocab = build_vocabulary(&docs, &VocabSpec::default()).unwrap();
    let samples: Vec<LabeledExample> = corpus.all_samples().cloned().collect();

    let params = NtmParams { seed: 41, ..NtmParams::default() };
    let mut model =
        NTMModel::new(params, vocab.len(), vocab.hash(), corpus.subintents()).unwrap();
    train_ntm(&mut model, &samples, &vocab, 30, 414).unwrap();

    let groups = extract_feature_groups(&model, &vocab, 5).unwrap();
    let mut worst = (2.0f64, String::new());
    for (label, reason, pool) in PLANTED_POOLS {
        let group = groups
            .iter()
            .find(|g| g.subintent.parent_label == label && {
                // slugged reason words prefix the generated name
                let tail = g.subintent.name.splitn(2, "_due_to_").nth(1).unwrap();
                reason.split_whitespace().filter(|w| *w != "due" && *w != "to").take(1).all(
                    |w| tail.starts_with(w),
                )
            })
            .unwrap_or_else(|| panic!("no group for {label}: {reason}"));
        let planted: BTreeSet<&str> = pool.iter().copied().collect();
        let got: BTreeSet<&str> = group.literals.iter().map(|s| s.as_str()).collect();
        let jaccard = got.intersection(&planted).count() as f64
            / got.union(&planted).count() as f64;
        if jaccard < worst.0 {
            worst = (jaccard, group.subintent.name.clone());
        }
        assert!(
            jaccard >= 0.8,
            "pool {} recovered with Jaccard {jaccard:.2}: planted {planted:?}, got {got:?}",
            group.subintent.name
        );
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "budget exceeded: {elapsed:?}");
    println!(
        "acceptance 4 planted-keyword recovery: PASS (worst Jaccard {:.2} at {}, {:.1}s)",
        worst.0,
        if worst.1.is_empty() { "-" } else { &worst.1 },
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Enrichment gain

const SURFACE_POS: [&str; 8] =
    ["bright", "cheerful", "delight", "glowing", "sunny", "upbeat", "vibrant", "warm"];
const SYNONYM_POS: [&str; 8] =
    ["joyous", "radiant", "jubilant", "elated", "buoyant", "gleeful", "blissful", "merry"];
const SURFACE_NEG: [&str; 8] =
    ["bleak", "dismal", "dreary", "gloomy", "grim", "somber", "sullen", "murky"];
const SYNONYM_NEG: [&str; 8] =
    ["sorrowful", "mournful", "dejected", "despondent", "forlorn", "woeful", "doleful", "weary"];

fn pool_docs(pool: &[&str], label: &str, count: usize, words: usize, seed: u64) -> Vec<LabeledExample> {
    let mut r = rng::stream(seed);
    (0..count)
        .map(|_| {
            let text: Vec<&str> =
                (0..words).map(|_| pool[r.random_range(0..pool.len())]).collect();
            LabeledExample::new(text.join(" "), label)
        })
        .collect()
}

#[test]
fn acceptance_05_enrichment_gain() {
    let start = Instant::now();

    // Real data: training documents speak in surface vocabulary, test
    // documents express the same classes purely through held-out synonyms.
    let mut train = pool_docs(&SURFACE_POS, "pos", 30, 10, 51);
    train.extend(pool_docs(&SURFACE_NEG, "neg", 30, 10, 52));
    let mut test = pool_docs(&SYNONYM_POS, "pos", 20, 10, 53);
    test.extend(pool_docs(&SYNONYM_NEG, "neg", 20, 10, 54));

    // The synthetic corpus mixes surface words with the synonyms, so the
    // pretrained pools and their feature groups cover both registers.
    fn union(a: &[&'static str; 8], b: &[&'static str; 8]) -> Vec<&'static str> {
        a.iter().chain(b.iter()).copied().collect()
    }
    let classes = vec![
        StubClassSpec::new(
            "pos",
            vec![StubSubIntentSpec::new("an upbeat mood", &union(&SURFACE_POS, &SYNONYM_POS))],
        ),
        StubClassSpec::new(
            "neg",
            vec![StubSubIntentSpec::new("a gloomy mood", &union(&SURFACE_NEG, &SYNONYM_NEG))],
        ),
    ];
    let mut provider = StubProvider::new(90, classes).unwrap().with_filler_rate(0.0);
    let config = GenerationConfig::default();
    let labels = vec!["neg".to_string(), "pos".to_string()];
    let found = discover_sub_intents("mood", "short mood reports", &labels, &config, &mut provider)
        .unwrap();
    let mut anchors = std::collections::BTreeMap::new();
    for rec in &train {
        anchors.entry(rec.label.clone()).or_insert_with(Vec::new).push(rec.text.clone());
    }
    let corpus = generate_corpus(&found.subintents, &anchors, &config, &mut provider).unwrap();

    // shared vocabulary: real training text plus the synthetic corpus, so
    // both models know the synonym columns exist
    let mut docs: Vec<String> = train.iter().map(|r| r.text.clone()).collect();
    docs.extend(corpus.all_samples().map(|r| r.text.clone()));
    let vocab = build_vocabulary(&docs, &VocabSpec::default()).unwrap();
    for w in SYNONYM_POS.iter().chain(&SYNONYM_NEG) {
        assert!(vocab.get(w).is_some(), "synonym {w} missing from vocabulary");
    }

    let samples: Vec<LabeledExample> = corpus.all_samples().cloned().collect();
    let mut ntm = NTMModel::new(
        NtmParams { seed: 5510, ..NtmParams::default() },
        vocab.len(),
        vocab.hash(),
        corpus.subintents(),
    )
    .unwrap();
    train_ntm(&mut ntm, &samples, &vocab, 30, 5511).unwrap();
    let groups = extract_feature_groups(&ntm, &vocab, 5).unwrap();
    let covered = groups
        .iter()
        .flat_map(|g| g.literals.iter())
        .filter(|l| SYNONYM_POS.contains(&l.as_str()) || SYNONYM_NEG.contains(&l.as_str()))
        .count();
    assert!(covered >= 8, "feature groups cover only {covered} of 16 held-out synonyms");

    let tm_params = |num_classes| TmParams {
        clauses_per_class: 40,
        num_classes,
        threshold: 15,
        specificity: 3.9,
        states_per_action: 100,
        weighted: true,
        seed: 5520,
    };
    let class_labels = vec!["neg".to_string(), "pos".to_string()];

    // vanilla: raw bag of words over the same vocabulary
    let mut vanilla =
        TMModel::new(tm_params(2), vocab.len(), vocab.hash(), class_labels.clone()).unwrap();
    vanilla.fit(&train, &vocab, 25, 5521).unwrap();
    let vanilla_correct = test
        .iter()
        .filter(|rec| {
            let x = binarize(&rec.text, &vocab);
            class_labels[vanilla.predict(&x)] == rec.label
        })
        .count();
    let vanilla_acc = vanilla_correct as f64 / test.len() as f64;

    // enriched: same params and seeds, indicator columns appended
    let enriched_train =
        enrich_dataset(&train, &vocab, &ntm, &groups, EnrichMode::Attribution).unwrap();
    let enriched_test =
        enrich_dataset(&test, &vocab, &ntm, &groups, EnrichMode::Attribution).unwrap();
    let evocab = enriched_train.vocabulary;
    let ys: Vec<usize> = train
        .iter()
        .map(|r| class_labels.iter().position(|l| l == &r.label).unwrap())
        .collect();
    let mut enriched =
        TMModel::new(tm_params(2), evocab.width(), evocab.hash(), class_labels.clone()).unwrap();
    enriched.fit_vectors(&enriched_train.vectors, &ys, 25, 5521).unwrap();
    let enriched_correct = test
        .iter()
        .zip(&enriched_test.vectors)
        .filter(|(rec, x)| class_labels[enriched.predict(x)] == rec.label)
        .count();
    let enriched_acc = enriched_correct as f64 / test.len() as f64;

    let gain = enriched_acc - vanilla_acc;
    let elapsed = start.elapsed();
    assert!(
        gain >= 0.10,
        "enrichment gain {gain:.3} (vanilla {vanilla_acc:.3}, enriched {enriched_acc:.3})"
    );
    println!(
        "acceptance 5 enrichment gain: PASS (vanilla {:.1}%, enriched {:.1}%, gain {:.1} points, {:.1}s)",
        vanilla_acc * 100.0,
        enriched_acc * 100.0,
        gain * 100.0,
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Structural monotonicity

#[test]
fn acceptance_07_structural_monotonicity() {
    let start = Instant::now();
    let mut r = rng::stream(707);

    // Serialized models: the byte length must match the layout that has no
    // room for negated-literal state, and a round trip must preserve it.
    for _ in 0..50 {
        let width = r.random_range(1..=24usize);
        let n = r.random_range(3..=80u16);
        let clauses = r.random_range(1..=6usize);
        let subintents = vec![
            semtm_core::ntm::SubIntent::from_name("alpha_due_to_one_thing").unwrap(),
            semtm_core::ntm::SubIntent::from_name("beta_due_to_another_thing").unwrap(),
        ];
        let pools: Vec<Vec<MonotoneClause>> = (0..2)
            .map(|_| {
                (0..clauses)
                    .map(|_| {
                        let states =
                            (0..width).map(|_| r.random_range(1..=2 * n)).collect::<Vec<_>>();
                        MonotoneClause::from_states(states, r.random_range(0..9u32), n).unwrap()
                    })
                    .collect()
            })
            .collect();
        let params = NtmParams {
            clauses_per_subintent: clauses,
            threshold: 100,
            specificity: 5.0,
            states_per_action: n,
            seed: 0,
        };
        let model =
            NTMModel::from_parts(params, width, 12345, subintents.clone(), pools).unwrap();
        let mut bytes = Vec::new();
        model_io::write_ntm_model(&mut bytes, &model, 99).unwrap();
        let names_len: usize = subintents.iter().map(|s| 2 + s.name.len()).sum();
        let expected = 64 + names_len + 2 * clauses * (4 + 2 * width);
        assert_eq!(
            bytes.len(),
            expected,
            "serialized size must leave no room for negated-literal state"
        );
        let (back, _) = model_io::decode_ntm_model(&bytes).unwrap();
        assert_eq!(back.pools(), model.pools());
    }

    // Flip property: raising any input bit can never turn a firing monotone
    // clause off, in either evaluation mode.
    let trials = 10_000;
    for _ in 0..trials {
        let width = r.random_range(1..=24usize);
        let n = r.random_range(2..=20u16);
        let states = (0..width).map(|_| r.random_range(1..=2 * n)).collect::<Vec<_>>();
        let clause = MonotoneClause::from_states(states, 1, n).unwrap();
        let mut x = BowVector::zeros(width);
        for i in 0..width {
            x.set(i, r.random::<bool>());
        }
        for mode in [EvalMode::Learning, EvalMode::Inference] {
            if !clause.evaluate(&x, mode) {
                continue;
            }
            for i in 0..width {
                if x.get(i) {
                    continue;
                }
                let mut flipped = x.clone();
                flipped.set(i, true);
                assert!(
                    clause.evaluate(&flipped, mode),
                    "flipping bit {i} 0->1 deactivated a firing monotone clause"
                );
            }
        }
    }

    let elapsed = start.elapsed();
    println!(
        "acceptance 7 structural monotonicity: PASS ({trials} flip trials, {:.1}s)",
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Pipeline determinism and explanation faithfulness

fn acceptance_world(dir: &Path) -> PipelineConfig {
    let mut train = pool_docs(&SURFACE_POS, "pos", 12, 7, 81);
    train.extend(pool_docs(&SURFACE_NEG, "neg", 12, 7, 82));
    let mut test = pool_docs(&SURFACE_POS, "pos", 6, 7, 83);
    test.extend(pool_docs(&SURFACE_NEG, "neg", 6, 7, 84));
    save_dataset(&dir.join("train.jsonl"), &train).unwrap();
    save_dataset(&dir.join("test.jsonl"), &test).unwrap();
    PipelineConfig {
        dataset_name: "moods".into(),
        domain_description: "short mood reports".into(),
        train: dir.join("train.jsonl"),
        test: dir.join("test.jsonl"),
        output_dir: dir.join("out"),
        seed: 9,
        generation: GenerationConfig {
            seed_count: 6,
            core_count: 6,
            enriched_count: 8,
            ..GenerationConfig::default()
        },
        provider: ProviderSpec::Stub {
            classes: vec![
                StubClassSpec::new(
                    "pos",
                    vec![StubSubIntentSpec::new("an upbeat mood", &SURFACE_POS)],
                ),
                StubClassSpec::new(
                    "neg",
                    vec![StubSubIntentSpec::new("a gloomy mood", &SURFACE_NEG)],
                ),
            ],
        },
        ntm: NtmStageConfig {
            clauses_per_subintent: 10,
            threshold: 40,
            epochs: 12,
            ..NtmStageConfig::default()
        },
        tm: TmStageConfig { clauses_per_class: 20, threshold: 10, epochs: 15, ..TmStageConfig::default() },
        ..PipelineConfig::default()
    }
}

fn artifact_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut walk = vec![root.to_path_buf()];
    while let Some(dir) = walk.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn acceptance_08_run_determinism() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let cfg_a = acceptance_world(tmp.path());
    let mut cfg_b = cfg_a.clone();
    cfg_b.output_dir = tmp.path().join("out-b");

    let run_a = run_pipeline(&cfg_a).unwrap();
    let run_b = run_pipeline(&cfg_b).unwrap();
    let tree_a = artifact_tree(run_a.paths.root());
    let tree_b = artifact_tree(run_b.paths.root());
    assert_eq!(tree_a.len(), tree_b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in tree_a.iter().zip(&tree_b) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "artifact {name_a} differs between identical runs");
    }
    assert_eq!(run_a.report, run_b.report);

    // a second invocation over the finished directory must not change a byte
    run_pipeline(&cfg_a).unwrap();
    assert_eq!(artifact_tree(run_a.paths.root()), tree_a);

    let elapsed = start.elapsed();
    println!(
        "acceptance 8 run determinism: PASS ({} artifacts bit-identical, {:.1}s)",
        tree_a.len(),
        elapsed.as_secs_f64()
    );
}

#[test]
fn acceptance_09_explanation_faithfulness() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = acceptance_world(tmp.path());
    run_pipeline(&cfg).unwrap();
    let paths = ArtifactPaths::new(&cfg.output_dir);

    let base = semtm_core::corpus::Vocabulary::load(&paths.vocab()).unwrap();
    let evocab = EnrichedVocabulary::load(&paths.indicators(), base).unwrap();
    let (tm_model, _) = model_io::load_tm_model(&paths.tm_model()).unwrap();
    let (ntm_model, _) = model_io::load_ntm_model(&paths.ntm_model()).unwrap();
    let (_, groups) = semtm_core::ntm::load_feature_groups(&paths.feature_groups()).unwrap();
    let enricher = Enricher::new(&evocab, &ntm_model, &groups, EnrichMode::Attribution).unwrap();

    // random texts over both registers plus unknown words, so predictions
    // cover strong, weak, and empty evidence
    let mut words: Vec<&str> = Vec::new();
    words.extend(SURFACE_POS);
    words.extend(SURFACE_NEG);
    words.extend(SYNONYM_POS);
    words.extend(["the", "a", "very", "unseen", "token"]);
    let mut r = rng::stream(909);
    let mut listed = 0usize;
    for i in 0..1000usize {
        let len = r.random_range(3..=14usize);
        let text: Vec<&str> = (0..len).map(|_| words[r.random_range(0..words.len())]).collect();
        let text = text.join(" ");
        let (x, _) = enricher.enrich_text(&text);
        let explanation = if i % 100 == 0 {
            // periodically exercise the artifact-loading entry point
            pipeline::explain_text(&cfg, &paths, &text).unwrap()
        } else {
            pipeline::explain_vector(&tm_model, &evocab, &text, &x).unwrap()
        };
        let predicted = tm_model
            .labels()
            .iter()
            .position(|l| l == &explanation.predicted)
            .unwrap();
        assert_eq!(predicted, tm_model.predict(&x));
        for clause in &explanation.clauses {
            assert!(
                tm_model.banks()[predicted][clause.index].evaluate(&x, EvalMode::Inference),
                "listed clause {} does not re-evaluate to 1 on {text:?}",
                clause.index
            );
            listed += 1;
        }
    }
    assert!(listed > 0, "no explanation listed any firing clause");

    let elapsed = start.elapsed();
    println!(
        "acceptance 9 explanation faithfulness: PASS (1000 predictions, {listed} clauses checked, {:.1}s)",
        elapsed.as_secs_f64()
    );
}
