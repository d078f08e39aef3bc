mod common;

use mlg_core::exact::{gram_exact, mlg_kernel, ExactEngine, MlsParams, VertexId};
use mlg_core::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn engine_matches_plain_recursion() {
    let graphs = common::random_graphs(31, 4, 6, 2);
    let params = MlsParams::default();
    let gram = gram_exact(&graphs, &params).unwrap();
    let oracle = common::naive::Recursion::new(&graphs, params.radius, params.levels, params.flg);
    for i in 0..graphs.len() {
        for j in i..graphs.len() {
            let want = oracle.mlg(params.levels, i, j);
            assert!((gram.matrix[(i, j)] - want).abs() <= 1e-12, "({i},{j}) {} vs {want}", gram.matrix[(i, j)]);
        }
    }
}

#[test]
fn mls_values_match_plain_recursion() {
    let graphs = common::random_graphs(32, 3, 7, 3);
    let params = MlsParams {
        levels: 3,
        radius: 1,
        ..MlsParams::default()
    };
    let engine = ExactEngine::new(&graphs, params).unwrap();
    let oracle = common::naive::Recursion::new(&graphs, 1, 3, params.flg);
    let mut rng = common::rng(1);
    for _ in 0..20 {
        let a = rng.random_range(0..graphs.len());
        let b = rng.random_range(0..graphs.len());
        let va = rng.random_range(0..graphs[a].vertex_count());
        let vb = rng.random_range(0..graphs[b].vertex_count());
        let level = rng.random_range(1..=2);
        let got = engine.mls_kernel(level, VertexId::new(a, va), VertexId::new(b, vb)).unwrap();
        let want = oracle.mls(level, (a, va), (b, vb));
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

#[test]
fn dedup_reduces_work_without_changing_values() {
    // Long paths have many vertices with identical neighborhoods.
    let graphs: Vec<_> = (0..3)
        .map(|k| {
            let n = 8 + k;
            let pairs: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
            mlg_core::graph::Graph::from_pairs(n, &pairs)
                .unwrap()
                .with_features(common::one_hot(&vec![0; n], 1))
                .unwrap()
        })
        .collect();
    let with = ExactEngine::new(&graphs, MlsParams::default()).unwrap();
    let without = ExactEngine::new(&graphs, MlsParams { dedup: false, ..MlsParams::default() }).unwrap();
    let (a, b) = (with.gram().unwrap(), without.gram().unwrap());
    assert!(a.max_abs_diff(&b) <= 1e-12);
    assert!(with.cache().evaluations() < without.cache().evaluations() / 4);
    println!(
        "evaluations with/without dedup: {}/{}",
        with.cache().evaluations(),
        without.cache().evaluations()
    );
}

#[test]
fn cache_prevents_recomputation() {
    let graphs = common::random_graphs(33, 3, 6, 2);
    let engine = ExactEngine::new(&graphs, MlsParams::default()).unwrap();
    let first = engine.gram().unwrap();
    let evals = engine.cache().evaluations();
    let second = engine.gram().unwrap();
    assert_eq!(engine.cache().evaluations(), evals);
    assert_eq!(first, second);
}

#[test]
fn budget_overrun_reports_progress() {
    let graphs = common::random_graphs(34, 6, 8, 3);
    let params = MlsParams { budget: 50, dedup: false, ..MlsParams::default() };
    match gram_exact(&graphs, &params) {
        Err(Error::GramAborted { completed, total, source }) => {
            assert_eq!(total, 21);
            assert!(completed < total);
            assert!(matches!(*source, Error::BudgetExceeded { budget: 50, .. }));
        }
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn single_level_equals_flg_on_level_one_features() {
    // With L = 1 and a radius covering each whole (small) graph, every level-1
    // neighborhood is the graph itself.
    let graphs = common::random_graphs(35, 3, 4, 2);
    let params = MlsParams { levels: 1, radius: 4, ..MlsParams::default() };
    let engine = ExactEngine::new(&graphs, params).unwrap();
    for g in 0..graphs.len() {
        for v in 0..graphs[g].vertex_count() {
            assert_eq!(engine.stack(g).set(v, 1).len(), graphs[g].vertex_count());
        }
    }
    let k = engine.gram().unwrap();
    let (min, max) = k.eigen_extremes();
    assert!(min >= -1e-10 * max);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn mlg_is_permutation_invariant(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = rng.random_range(1..=8);
        let g = common::random_graph(&mut rng, n, 0.3, 3);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let k = mlg_kernel(&g, &g.permuted(&perm).unwrap(), &MlsParams::default()).unwrap();
        prop_assert!((k - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn mlg_is_symmetric_and_bounded(seed in any::<u64>()) {
        let graphs = common::random_graphs(seed, 2, 7, 3);
        let p = MlsParams::default();
        let ab = mlg_kernel(&graphs[0], &graphs[1], &p).unwrap();
        let ba = mlg_kernel(&graphs[1], &graphs[0], &p).unwrap();
        prop_assert!(ab > 0.0 && ab <= 1.0 + 1e-12);
        prop_assert!((ab - ba).abs() <= 1e-12);
    }
}
