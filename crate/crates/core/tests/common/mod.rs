#![allow(dead_code)]

use std::path::PathBuf;

use mlg_core::dataset::{load_tu_dataset, one_hot_features, Dataset};
use mlg_core::graph::Graph;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn one_hot(labels: &[usize], width: usize) -> DMatrix<f64> {
    DMatrix::from_fn(labels.len(), width, |i, j| if labels[i] == j { 1.0 } else { 0.0 })
}

/// Random connected graph: a random spanning tree plus extra edges with
/// probability `p`, one-hot labels from an alphabet of size `alphabet`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64, alphabet: usize) -> Graph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut pairs = Vec::new();
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        pairs.push((parent.min(order[k]), parent.max(order[k])));
    }
    for i in 0..n {
        for j in i + 1..n {
            if !pairs.contains(&(i, j)) && rng.random_bool(p) {
                pairs.push((i, j));
            }
        }
    }
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..alphabet)).collect();
    Graph::from_pairs(n, &pairs)
        .unwrap()
        .with_features(one_hot(&labels, alphabet))
        .unwrap()
}

pub fn random_graphs(seed: u64, count: usize, max_n: usize, alphabet: usize) -> Vec<Graph> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let n = r.random_range(1..=max_n);
            random_graph(&mut r, n, 0.3, alphabet)
        })
        .collect()
}

/// Directory holding TU datasets: `MLG_DATA_DIR` or the workspace `data/`.
pub fn data_dir() -> PathBuf {
    std::env::var_os("MLG_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

pub fn load(name: &str) -> Dataset {
    let dir = data_dir().join(name);
    load_tu_dataset(&dir, name).unwrap_or_else(|e| panic!("loading {name} from {}: {e}", dir.display()))
}

pub fn mutag() -> Dataset {
    one_hot_features(&load("MUTAG")).unwrap()
}

/// Plain recursive MLS/MLG evaluation: no memo table, no deduplication,
/// every base-kernel value recomputed from scratch.
pub mod naive {
    use mlg_core::flg::{flg_kernelized, BaseKernel, FlgParams};
    use mlg_core::graph::{build_neighborhood_stack, Graph, NeighborhoodStack};

    pub struct Recursion<'a> {
        pub graphs: &'a [Graph],
        pub stacks: Vec<NeighborhoodStack>,
        pub params: FlgParams,
    }

    struct Level<'r, 'a> {
        rec: &'r Recursion<'a>,
        level: usize,
    }

    impl BaseKernel<(usize, usize)> for Level<'_, '_> {
        fn eval(&self, a: &(usize, usize), b: &(usize, usize)) -> f64 {
            self.rec.mls(self.level, *a, *b)
        }
    }

    impl<'a> Recursion<'a> {
        pub fn new(graphs: &'a [Graph], radius: usize, levels: usize, params: FlgParams) -> Self {
            let stacks = graphs.iter().map(|g| build_neighborhood_stack(g, radius, levels).unwrap()).collect();
            Recursion { graphs, stacks, params }
        }

        /// `level == 0` is the dot product of input features.
        pub fn mls(&self, level: usize, a: (usize, usize), b: (usize, usize)) -> f64 {
            if level == 0 {
                let fa = self.graphs[a.0].features().unwrap();
                let fb = self.graphs[b.0].features().unwrap();
                return fa.row(a.1).dot(&fb.row(b.1));
            }
            let sa = self.stacks[a.0].subgraph(a.1, level);
            let sb = self.stacks[b.0].subgraph(b.1, level);
            let pa: Vec<(usize, usize)> = sa.parent.iter().map(|&v| (a.0, v)).collect();
            let pb: Vec<(usize, usize)> = sb.parent.iter().map(|&v| (b.0, v)).collect();
            let below = Level { rec: self, level: level - 1 };
            flg_kernelized(&sa.graph, &pa, &sb.graph, &pb, &below, &self.params).unwrap()
        }

        pub fn mlg(&self, levels: usize, i: usize, j: usize) -> f64 {
            let pi: Vec<(usize, usize)> = (0..self.graphs[i].vertex_count()).map(|v| (i, v)).collect();
            let pj: Vec<(usize, usize)> = (0..self.graphs[j].vertex_count()).map(|v| (j, v)).collect();
            let top = Level { rec: self, level: levels };
            flg_kernelized(&self.graphs[i], &pi, &self.graphs[j], &pj, &top, &self.params).unwrap()
        }
    }
}

/// Brute-force numerical integration of the Gaussian overlap.
pub mod quadrature {
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    /// Random SPD matrix with eigenvalues in `[lo, hi]`.
    pub fn random_spd(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = a.qr().q();
        let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(lo..hi)));
        let m = &q * d * q.transpose();
        (&m + m.transpose()) * 0.5
    }

    fn gauss_density(x: &DVector<f64>, s: &DMatrix<f64>) -> f64 {
        let n = x.len() as f64;
        let inv = s.clone().try_inverse().unwrap();
        let q = (x.transpose() * inv * x)[(0, 0)];
        (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powf(n / 2.0) * s.determinant().sqrt())
    }

    /// Composite Simpson weights on `2m + 1` points of `[-r, r]`.
    fn simpson(r: f64, m: usize) -> Vec<(f64, f64)> {
        let h = r / m as f64;
        (0..=2 * m)
            .map(|i| {
                let w = if i == 0 || i == 2 * m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                (-r + i as f64 * h, w * h / 3.0)
            })
            .collect()
    }

    pub fn quadrature_overlap(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> f64 {
        let spread = s1.trace().max(s2.trace()).sqrt();
        let r = 12.0 * spread;
        match s1.nrows() {
            1 => simpson(r, 4000)
                .iter()
                .map(|&(x, w)| {
                    let v = DVector::from_element(1, x);
                    w * (gauss_density(&v, s1) * gauss_density(&v, s2)).sqrt()
                })
                .sum(),
            2 => {
                let nodes = simpson(r, 300);
                let (i1, i2) = (s1.clone().try_inverse().unwrap(), s2.clone().try_inverse().unwrap());
                let c = 1.0 / (2.0 * std::f64::consts::PI * (s1.determinant() * s2.determinant()).powf(0.25));
                let mut total = 0.0;
                for &(x, wx) in &nodes {
                    for &(y, wy) in &nodes {
                        let v = DVector::from_vec(vec![x, y]);
                        let q = (v.transpose() * (&i1 + &i2) * &v)[(0, 0)];
                        total += wx * wy * c * (-0.25 * q).exp();
                    }
                }
                total
            }
            _ => unreachable!(),
        }
    }
}
