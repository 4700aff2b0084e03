#![no_main]

use libfuzzer_sys::fuzz_target;
use semtm_core::model_io::{decode_ntm_model, write_ntm_model};

fuzz_target!(|data: &[u8]| {
    let Ok((model, config_hash)) = decode_ntm_model(data) else { return };
    let mut bytes = Vec::new();
    write_ntm_model(&mut bytes, &model, config_hash).unwrap();
    let (back, h) = decode_ntm_model(&bytes).unwrap();
    assert_eq!(h, config_hash);
    assert_eq!(back, model);
});
