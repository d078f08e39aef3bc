//! Self-check suite: kernel properties verified on random fixtures.
//!
//! Every property builds its own small random graphs from the suite seed,
//! so a report is reproducible from `(seed, fault)` alone.

use std::fmt;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::exact::{ExactEngine, MlsParams};
use crate::flg::{feature_payloads, flg_explicit, flg_kernelized, s_matrix_explicit, DotProduct, FeatureMatrix, FlgParams};
use crate::graph::{laplacian, Graph};
use crate::linearized::{all_vertices, gram_linearized, PipelineParams};
use crate::spd::{asymmetry, bhattacharyya_ratio};

/// Deliberate corruption used to confirm the suite catches failures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Perturb one off-diagonal entry of a freshly built S matrix.
    FlipSEntry,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "flip-s-entry" => Ok(Fault::FlipSEntry),
            other => Err(format!("unknown fault {other:?} (known: flip-s-entry)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub seed: u64,
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| !r.passed).count()
    }

    /// Single machine-readable line.
    pub fn summary_line(&self) -> String {
        let failed: Vec<&str> = self.results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        format!(
            "SUMMARY seed={} total={} passed={} failed={}{}",
            self.seed,
            self.results.len(),
            self.results.len() - failed.len(),
            failed.len(),
            if failed.is_empty() {
                String::new()
            } else {
                format!(" failing={}", failed.join(","))
            }
        )
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(f, "{} {:<28} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)?;
        }
        write!(f, "{}", self.summary_line())
    }
}

/// Random connected graph (random spanning tree plus extra edges with
/// probability `p`) with one-hot labels over `alphabet` symbols.
pub fn random_labeled_graph(rng: &mut impl Rng, n: usize, p: f64, alphabet: usize) -> Graph {
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
    let f = DMatrix::from_fn(n, alphabet, |i, j| if labels[i] == j { 1.0 } else { 0.0 });
    Graph::from_pairs(n, &pairs)
        .expect("generated edges are valid")
        .with_features(f)
        .expect("feature rows match vertex count")
}

fn random_graphs(rng: &mut ChaCha8Rng, count: usize, max_n: usize) -> Vec<Graph> {
    (0..count)
        .map(|_| {
            let n = rng.random_range(1..=max_n);
            random_labeled_graph(rng, n, 0.3, 3)
        })
        .collect()
}

fn outcome(name: &'static str, r: Result<(bool, String)>) -> CheckResult {
    match r {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn kernelization(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let g = random_graphs(rng, 2, 8);
        let params = FlgParams::new(rng.random_range(0.01..1.0), [0.01, 0.1, 1.0][rng.random_range(0..3)]);
        let explicit = flg_explicit(
            &g[0],
            &FeatureMatrix::of_graph(&g[0])?,
            &g[1],
            &FeatureMatrix::of_graph(&g[1])?,
            &params,
        )?;
        let kern = flg_kernelized(&g[0], &feature_payloads(&g[0])?, &g[1], &feature_payloads(&g[1])?, &DotProduct, &params)?;
        worst = worst.max((explicit - kern).abs());
    }
    Ok((worst <= 1e-8, format!("max |kernelized - explicit| = {worst:.3e}")))
}

fn s_symmetry(rng: &mut ChaCha8Rng, fault: Option<Fault>) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for g in random_graphs(rng, 10, 8) {
        let s = s_matrix_explicit(&g, &FeatureMatrix::of_graph(&g)?, &laplacian(&g, 0.1)?, 0.1)?;
        let mut m = s.matrix().clone();
        if fault == Some(Fault::FlipSEntry) && m.nrows() > 1 {
            m[(0, 1)] = -m[(0, 1)] - 1.0;
        }
        worst = worst.max(asymmetry(&m));
    }
    Ok((worst <= 1e-12, format!("max relative asymmetry = {worst:.3e}")))
}

fn ratio_range(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let (mut lo, mut self_err) = (f64::INFINITY, 0.0f64);
    let mut hi = f64::NEG_INFINITY;
    let params = FlgParams::new(0.1, 0.1);
    for pair in random_graphs(rng, 20, 8).chunks(2) {
        let s: Vec<_> = pair
            .iter()
            .map(|g| s_matrix_explicit(g, &FeatureMatrix::of_graph(g)?, &laplacian(g, params.eta)?, params.gamma))
            .collect::<Result<_>>()?;
        let k = bhattacharyya_ratio(&s[0], &s[1])?;
        lo = lo.min(k);
        hi = hi.max(k);
        self_err = self_err.max((bhattacharyya_ratio(&s[0], &s[0])? - 1.0).abs());
    }
    let ok = lo > 0.0 && hi <= 1.0 + 1e-12 && self_err <= 1e-12;
    Ok((ok, format!("range [{lo:.4}, {hi:.4}], max |k(S,S) - 1| = {self_err:.1e}")))
}

fn permutation_invariance(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for g in random_graphs(rng, 5, 8) {
        let mut perm: Vec<usize> = (0..g.vertex_count()).collect();
        perm.shuffle(rng);
        let graphs = [g.clone(), g.permuted(&perm)?];
        let k = ExactEngine::new(&graphs, MlsParams::default())?.mlg_kernel(0, 1)?;
        worst = worst.max((k - 1.0).abs());
    }
    Ok((worst <= 1e-9, format!("max |K(g, πg) - 1| = {worst:.3e}")))
}

fn exact_symmetry(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let graphs = random_graphs(rng, 4, 7);
    let engine = ExactEngine::new(&graphs, MlsParams::default())?;
    let mut worst: f64 = 0.0;
    for i in 0..graphs.len() {
        for j in i + 1..graphs.len() {
            worst = worst.max((engine.mlg_kernel(i, j)? - engine.mlg_kernel(j, i)?).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max |K(a,b) - K(b,a)| = {worst:.3e}")))
}

fn dedup_transparency(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let graphs = random_graphs(rng, 4, 7);
    let with = ExactEngine::new(&graphs, MlsParams::default())?.gram()?;
    let without = ExactEngine::new(
        &graphs,
        MlsParams {
            dedup: false,
            ..MlsParams::default()
        },
    )?
    .gram()?;
    let d = with.max_abs_diff(&without);
    Ok((d <= 1e-12, format!("max |dedup - plain| = {d:.3e}")))
}

fn exact_vs_linearized(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let graphs = random_graphs(rng, 5, 7);
    let n = all_vertices(&graphs).len();
    let lin = gram_linearized(
        &graphs,
        &PipelineParams {
            samples: n,
            rank: n,
            ..PipelineParams::default()
        },
    )?;
    let exact = ExactEngine::new(&graphs, MlsParams::default())?.gram()?;
    let d = lin.max_abs_diff(&exact);
    Ok((d <= 1e-4, format!("max entry diff at full sample (N={n}) = {d:.3e}")))
}

fn linearized_psd(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let graphs = random_graphs(rng, 15, 9);
    let seed = rng.random();
    let k = gram_linearized(
        &graphs,
        &PipelineParams {
            samples: 30,
            rank: 8,
            seed,
            ..PipelineParams::default()
        },
    )?;
    let (min, max) = k.eigen_extremes();
    Ok((min >= -1e-8 * max, format!("eigenvalues in [{min:.3e}, {max:.3e}]")))
}

pub fn run_checks(seed: u64, fault: Option<Fault>) -> CheckReport {
    let mut results = Vec::new();
    let mut stream = 0u64;
    let mut next_rng = || {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        stream += 1;
        r
    };
    results.push(outcome("flg.kernelization", kernelization(&mut next_rng())));
    results.push(outcome("flg.s_matrix_symmetry", s_symmetry(&mut next_rng(), fault)));
    results.push(outcome("flg.ratio_range", ratio_range(&mut next_rng())));
    results.push(outcome("exact.permutation_invariance", permutation_invariance(&mut next_rng())));
    results.push(outcome("exact.symmetry", exact_symmetry(&mut next_rng())));
    results.push(outcome("exact.dedup_transparency", dedup_transparency(&mut next_rng())));
    results.push(outcome("linearized.exact_agreement", exact_vs_linearized(&mut next_rng())));
    results.push(outcome("linearized.psd", linearized_psd(&mut next_rng())));
    CheckReport { seed, results }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_seed_passes() {
        let r = run_checks(0, None);
        assert!(r.passed(), "{r}");
        assert!(r.summary_line().starts_with("SUMMARY seed=0 total=8 passed=8 failed=0"));
    }

    #[test]
    fn injected_fault_is_caught() {
        let r = run_checks(0, Some(Fault::FlipSEntry));
        assert_eq!(r.failures(), 1);
        assert!(r.summary_line().ends_with("failing=flg.s_matrix_symmetry"));
    }

    #[test]
    fn fault_names_parse() {
        assert_eq!("flip-s-entry".parse::<Fault>(), Ok(Fault::FlipSEntry));
        assert!("nope".parse::<Fault>().is_err());
    }
}
