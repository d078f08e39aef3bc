#![no_main]

use libfuzzer_sys::fuzz_target;
use mlg_core::gram::GramMatrix;

fuzz_target!(|data: &str| {
    if let Ok(g) = GramMatrix::parse(data) {
        let again = GramMatrix::parse(&g.to_text()).expect("serialized Gram must parse");
        assert_eq!(g.size(), again.size());
    }
});
