#![no_main]

use libfuzzer_sys::fuzz_target;
use semtm_core::bootstrap::parse_sub_intents;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(found) = parse_sub_intents(text) {
        // every accepted name must survive the stricter name parser
        for sub in &found.subintents {
            semtm_core::ntm::SubIntent::from_name(&sub.name).unwrap();
        }
    }
});
