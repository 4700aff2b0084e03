#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use semtm_core::corpus::{build_vocabulary, VocabSpec, Vocabulary};
use semtm_core::enrich::EnrichedVocabulary;

// fixed base so the sidecar's binding hash is reachable by the fuzzer via
// the checked-in seed
fn base() -> &'static Vocabulary {
    static BASE: OnceLock<Vocabulary> = OnceLock::new();
    BASE.get_or_init(|| {
        let docs = ["alpha beta gamma delta", "alpha beta gamma delta"];
        build_vocabulary(&docs, &VocabSpec::default()).unwrap()
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = EnrichedVocabulary::parse(text, base().clone());
});
