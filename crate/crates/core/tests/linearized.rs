mod common;

use mlg_core::exact::{gram_exact, MlsParams};
use mlg_core::flg::{flg_explicit, FeatureMatrix, FlgParams};
use mlg_core::graph::build_neighborhood_stack;
use mlg_core::linearized::{
    all_vertices, gram_linearized, linearize_all, linearize_level, s_matrices_per_graph, sample_vertices,
    PipelineParams,
};

fn full(graphs: &[mlg_core::graph::Graph], levels: usize, radius: usize) -> PipelineParams {
    let n = all_vertices(graphs).len();
    PipelineParams {
        levels,
        radius,
        samples: n,
        rank: n,
        ..PipelineParams::default()
    }
}

fn exact_params(p: &PipelineParams) -> MlsParams {
    MlsParams {
        levels: p.levels,
        radius: p.radius,
        flg: p.flg(),
        ..MlsParams::default()
    }
}

#[test]
fn full_sample_matches_exact_gram() {
    for seed in 0..3 {
        let graphs = common::random_graphs(seed, 6, 7, 3);
        for (levels, radius) in [(1, 1), (2, 1), (2, 2)] {
            let p = full(&graphs, levels, radius);
            let lin = gram_linearized(&graphs, &p).unwrap();
            let ex = gram_exact(&graphs, &exact_params(&p)).unwrap();
            let d = lin.max_abs_diff(&ex);
            assert!(d <= 1e-4, "seed {seed} L={levels} r={radius}: diff {d}");
        }
    }
}

#[test]
fn full_rank_rows_reproduce_level_one_kernel() {
    let graphs = common::random_graphs(11, 5, 6, 3);
    let p = full(&graphs, 1, 1);
    let lin = linearize_all(&graphs, &p).unwrap().remove(0);
    let verts = all_vertices(&graphs);
    let stacks: Vec<_> = graphs.iter().map(|g| build_neighborhood_stack(g, 1, 1).unwrap()).collect();
    let flg = FlgParams::new(p.eta, p.gamma);
    for (i, &a) in verts.iter().enumerate().step_by(3) {
        for &b in &verts[i..] {
            let sa = stacks[a.graph].subgraph(a.vertex, 1);
            let sb = stacks[b.graph].subgraph(b.vertex, 1);
            let ua = FeatureMatrix::from_vertex_rows(sa.graph.features().unwrap());
            let ub = FeatureMatrix::from_vertex_rows(sb.graph.features().unwrap());
            let want = flg_explicit(&sa.graph, &ua, &sb.graph, &ub, &flg).unwrap();
            let qa = lin.features[a.graph].row(a.vertex);
            let qb = lin.features[b.graph].row(b.vertex);
            assert!((qa.dot(&qb) - want).abs() < 1e-6, "{a:?} {b:?}");
        }
    }
}

#[test]
fn identical_graphs_get_identical_rows() {
    let g = common::random_graphs(4, 1, 7, 3).remove(0);
    let graphs = vec![g.clone(), g.clone(), g];
    let n = all_vertices(&graphs).len();
    let p = PipelineParams {
        samples: n,
        rank: 6,
        ..PipelineParams::default()
    };
    for lin in linearize_all(&graphs, &p).unwrap() {
        assert!((&lin.features[0] - &lin.features[1]).abs().max() < 1e-8);
        assert!((&lin.features[0] - &lin.features[2]).abs().max() < 1e-8);
    }
}

#[test]
fn graph_s_matrices_match_explicit_construction() {
    let graphs = common::random_graphs(5, 4, 7, 3);
    let p = PipelineParams {
        samples: 10,
        rank: 4,
        ..PipelineParams::default()
    };
    let top = linearize_all(&graphs, &p).unwrap().pop().unwrap();
    let s = s_matrices_per_graph(&graphs, &top.features, p.eta, p.gamma).unwrap();
    for ((g, q), got) in graphs.iter().zip(&top.features).zip(&s) {
        let u = FeatureMatrix::new(q.transpose());
        let l = mlg_core::graph::laplacian(g, p.eta).unwrap();
        let want = mlg_core::flg::s_matrix_explicit(g, &u, &l, p.gamma).unwrap();
        assert!((got.matrix() - want.matrix()).abs().max() < 1e-12);
    }
}

#[test]
fn approximation_error_shrinks_toward_full_sample() {
    let graphs = common::random_graphs(8, 6, 7, 3);
    let n = all_vertices(&graphs).len();
    let exact = gram_exact(&graphs, &MlsParams::default()).unwrap();
    let mut schedule: Vec<usize> = std::iter::successors(Some(4usize), |s| Some(s * 2)).take_while(|&s| s < n).collect();
    schedule.push(n);
    let diffs: Vec<f64> = schedule
        .iter()
        .map(|&s| {
            let p = PipelineParams {
                samples: s,
                rank: s,
                ..PipelineParams::default()
            };
            gram_linearized(&graphs, &p).unwrap().max_abs_diff(&exact)
        })
        .collect();
    println!("samples {schedule:?} -> max diff {diffs:?}");
    assert!(*diffs.last().unwrap() <= 1e-4);
}

#[test]
fn gram_is_psd_for_varied_parameters() {
    let graphs = common::random_graphs(21, 12, 9, 4);
    for (levels, radius, eta, gamma, samples, rank) in
        [(1, 1, 0.1, 0.1, 20, 5), (2, 1, 0.01, 1.0, 30, 10), (3, 2, 1.0, 0.01, 15, 3), (2, 2, 0.1, 0.1, 40, 40)]
    {
        let p = PipelineParams {
            levels,
            radius,
            eta,
            gamma,
            samples,
            rank,
            seed: 3,
            ..PipelineParams::default()
        };
        let k = gram_linearized(&graphs, &p).unwrap();
        let (min, max) = k.eigen_extremes();
        assert!(min >= -1e-8 * max, "{p:?}: {min} vs {max}");
    }
}

#[test]
fn same_seed_same_bits() {
    let graphs = common::random_graphs(2, 10, 8, 3);
    let p = PipelineParams {
        samples: 20,
        rank: 5,
        seed: 42,
        ..PipelineParams::default()
    };
    let a = gram_linearized(&graphs, &p).unwrap().to_text();
    let b = gram_linearized(&graphs, &p).unwrap().to_text();
    assert_eq!(a, b);
    let c = gram_linearized(&graphs, &PipelineParams { seed: 43, ..p }).unwrap().to_text();
    assert_ne!(a, c);
}

#[test]
fn sample_frequencies_are_uniform() {
    let graphs = common::random_graphs(6, 3, 5, 2);
    let n = all_vertices(&graphs).len();
    let k = 3.min(n);
    let trials = 10_000u64;
    let mut counts = vec![0u64; n];
    let verts = all_vertices(&graphs);
    for seed in 0..trials {
        for v in sample_vertices(&graphs, k, seed, 1).unwrap() {
            counts[verts.iter().position(|&x| x == v).unwrap()] += 1;
        }
    }
    let rate = k as f64 / n as f64;
    let mean = trials as f64 * rate;
    let sigma = (trials as f64 * rate * (1.0 - rate)).sqrt();
    for c in counts {
        assert!((c as f64 - mean).abs() <= 3.0 * sigma + 1.0, "{c} vs {mean} ± {sigma}");
    }
}

#[test]
fn linearize_level_accepts_explicit_previous_features() {
    let graphs = common::random_graphs(9, 3, 5, 2);
    let stacks: Vec<_> = graphs.iter().map(|g| build_neighborhood_stack(g, 1, 2).unwrap()).collect();
    let prev: Vec<_> = graphs.iter().map(|g| g.features().unwrap().clone()).collect();
    let p = PipelineParams {
        samples: 4,
        rank: 2,
        ..PipelineParams::default()
    };
    let lin = linearize_level(2, &graphs, &stacks, &prev, &p).unwrap();
    assert_eq!(lin.level, 2);
    assert!(lin.effective_rank() <= 2);
    for (g, f) in graphs.iter().zip(&lin.features) {
        assert_eq!(f.nrows(), g.vertex_count());
    }
    let k = &lin.sample_gram;
    for i in 0..k.nrows() {
        assert!((k[(i, i)] - 1.0).abs() < 1e-12);
    }
}
