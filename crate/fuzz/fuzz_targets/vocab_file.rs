#![no_main]

use libfuzzer_sys::fuzz_target;
use semtm_core::corpus::Vocabulary;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(vocab) = Vocabulary::parse(text) else { return };
    // anything accepted must survive a write/parse round trip unchanged
    let mut bytes = Vec::new();
    vocab.write(&mut bytes).unwrap();
    let back = Vocabulary::parse(std::str::from_utf8(&bytes).unwrap()).unwrap();
    assert_eq!(back.tokens(), vocab.tokens());
    assert_eq!(back.hash(), vocab.hash());
});
