#![no_main]

use libfuzzer_sys::fuzz_target;
use semtm_core::pipeline::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = PipelineConfig::parse(text) else { return };
    // the identity hash must be total over accepted configs
    let _ = cfg.hash();
});
