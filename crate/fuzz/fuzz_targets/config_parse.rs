#![no_main]

use libfuzzer_sys::fuzz_target;
use mlg_cli::config::{parse_config_text, RunConfig};

fuzz_target!(|data: &str| {
    let _ = parse_config_text(data);
    let mut cfg = RunConfig::default();
    if cfg.apply_text(data).is_ok() {
        let _ = cfg.validate();
    }
});
