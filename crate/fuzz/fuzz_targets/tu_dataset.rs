#![no_main]

use libfuzzer_sys::fuzz_target;
use mlg_core::dataset::{parse_tu_dataset, TuFiles};

// Input is the file contents joined by NUL: A, graph_indicator, graph_labels
// and an optional node_labels section.
fuzz_target!(|data: &str| {
    let mut parts = data.split('\0');
    let (Some(edges), Some(graph_indicator), Some(graph_labels)) = (parts.next(), parts.next(), parts.next()) else {
        return;
    };
    let files = TuFiles { edges, graph_indicator, graph_labels, node_labels: parts.next() };
    if let Ok(ds) = parse_tu_dataset("FUZZ", files) {
        assert_eq!(ds.graphs.len(), ds.labels.len());
        if let Some(nl) = &ds.node_labels {
            for (g, l) in ds.graphs.iter().zip(nl) {
                assert_eq!(g.vertex_count(), l.len());
            }
        }
    }
});
