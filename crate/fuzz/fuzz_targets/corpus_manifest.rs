#![no_main]

use std::fs;
use std::path::PathBuf;
use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use semtm_core::bootstrap::load_corpus;

// one scratch directory per process; sub-intent names are slug-checked
// before any path join, so inputs cannot escape it
fn scratch() -> &'static PathBuf {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir =
            std::env::temp_dir().join(format!("semtm-fuzz-manifest-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    })
}

fuzz_target!(|data: &[u8]| {
    let dir = scratch();
    fs::write(dir.join("manifest"), data).unwrap();
    let _ = load_corpus(dir);
});
