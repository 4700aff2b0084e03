#![no_main]

use libfuzzer_sys::fuzz_target;
use semtm_core::ntm::{read_feature_groups, write_feature_groups};

fuzz_target!(|data: &[u8]| {
    let mut r = data;
    let Ok((meta, groups)) = read_feature_groups(&mut r) else { return };
    // the reader enforces canonical ordering, so accepted files round-trip
    let mut bytes = Vec::new();
    write_feature_groups(&mut bytes, &meta, &groups).unwrap();
    let (meta2, groups2) = read_feature_groups(&mut bytes.as_slice()).unwrap();
    assert_eq!(meta2, meta);
    assert_eq!(groups2, groups);
});
