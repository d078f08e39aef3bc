//! C-SVM on a precomputed kernel and the repeated cross-validation protocol.
//!
//! The binary solver is SMO with second-order working-set selection, the
//! same scheme libsvm uses. Multiclass problems use one-vs-rest with ties
//! broken toward the lowest class index.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spd::spectrum_extremes;

pub const DEFAULT_C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
/// KKT tolerance used as the stopping criterion.
pub const KKT_TOL: f64 = 1e-3;
/// Relative size of negative eigenvalues tolerated without comment.
pub const PSD_CLIP: f64 = 1e-8;

const TAU: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SvmModel {
    /// Dual coefficients in `[0, C]`, one per training point.
    pub alpha: Vec<f64>,
    /// Training labels (±1).
    pub y: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub iterations: usize,
    /// Maximal KKT violation at exit.
    pub kkt_gap: f64,
}

impl SvmModel {
    pub fn support(&self) -> Vec<usize> {
        (0..self.alpha.len()).filter(|&i| self.alpha[i] > 0.0).collect()
    }

    /// `Σ α_i y_i K(x, x_i) + b` given `K(x, x_i)` for every training point.
    pub fn decision(&self, k_row: &[f64]) -> f64 {
        self.alpha
            .iter()
            .zip(&self.y)
            .zip(k_row)
            .map(|((a, y), k)| a * y * k)
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: KKT_TOL,
            max_iter: 10_000_000,
        }
    }
}

/// Shifts the spectrum by `εI` when the smallest eigenvalue is negative.
/// Returns the repaired matrix and `ε` (zero when nothing was done).
pub fn repair_psd(k: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    if k.nrows() == 0 {
        return (k.clone(), 0.0);
    }
    let (min, max) = spectrum_extremes(k);
    if min >= 0.0 {
        return (k.clone(), 0.0);
    }
    let eps = -min;
    if eps > PSD_CLIP * max.abs() {
        log::warn!("Gram matrix has eigenvalue {min:e} (max {max:e}); adding {eps:e}·I");
    } else {
        log::debug!("clipping eigenvalue {min:e} with {eps:e}·I");
    }
    let mut out = k.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += eps;
    }
    (out, eps)
}

/// Trains a binary C-SVM. `k` is the training Gram matrix, `y` holds ±1.
pub fn svm_train(k: &DMatrix<f64>, y: &[f64], c: f64, opts: &SolverOptions) -> Result<SvmModel> {
    let n = y.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "Gram size vs label count",
            left: k.nrows(),
            right: n,
        });
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::invalid(format!("C must be positive, got {c}")));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::invalid("labels must be +1 or -1"));
    }
    let mut alpha = vec![0.0; n];
    // Gradient of ½αᵀQα − eᵀα with Q_ij = y_i y_j K_ij.
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * k[(i, j)];
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let mut gap;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i_sel = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i_sel != usize::MAX && v < gmax {
                let b = gmax - v;
                let mut a = k[(i_sel, i_sel)] + k[(t, t)] - 2.0 * k[(i_sel, t)];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -b * b / a;
                if obj < best {
                    best = obj;
                    j_sel = t;
                }
            }
        }
        gap = gmax - gmin;
        if i_sel == usize::MAX || j_sel == usize::MAX || gap < opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence { iterations, gap });
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let mut quad = k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)];
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 && alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            } else if diff <= 0.0 && alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 && alpha[i] > c {
                alpha[i] = c;
                alpha[j] = c - diff;
            } else if diff <= 0.0 && alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c && alpha[i] > c {
                alpha[i] = c;
                alpha[j] = sum - c;
            } else if sum <= c && alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c && alpha[j] > c {
                alpha[j] = c;
                alpha[i] = sum - c;
            } else if sum <= c && alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // ρ from free vectors, else the midpoint of the feasible interval.
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += yg;
            free_n += 1;
        } else if (alpha[t] >= c && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    };
    Ok(SvmModel {
        alpha,
        y: y.to_vec(),
        bias: -rho,
        c,
        iterations,
        kkt_gap: gap.max(0.0),
    })
}

/// One-vs-rest ensemble; two-class problems use a single machine.
#[derive(Clone, Debug)]
pub struct MultiClassModel {
    pub classes: usize,
    pub machines: Vec<SvmModel>,
}

impl MultiClassModel {
    pub fn train(k: &DMatrix<f64>, labels: &[usize], classes: usize, c: f64, opts: &SolverOptions) -> Result<Self> {
        let targets: Vec<usize> = if classes == 2 { vec![1] } else { (0..classes).collect() };
        let machines = targets
            .iter()
            .map(|&cls| {
                let y: Vec<f64> = labels.iter().map(|&l| if l == cls { 1.0 } else { -1.0 }).collect();
                svm_train(k, &y, c, opts)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiClassModel { classes, machines })
    }

    /// Class for a point given its kernel values against the training set.
    pub fn predict(&self, k_row: &[f64]) -> usize {
        if self.classes == 2 {
            return usize::from(self.machines[0].decision(k_row) > 0.0);
        }
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (cls, m) in self.machines.iter().enumerate() {
            let v = m.decision(k_row);
            if v > best_v {
                best = cls;
                best_v = v;
            }
        }
        best
    }
}

/// Stratified assignment of `labels` to `folds` folds. Each class is
/// shuffled and dealt round-robin, continuing where the previous class
/// stopped so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[usize], folds: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for cls in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == cls).collect();
        members.shuffle(rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

fn check_strata(labels: &[usize], classes: usize, assignment: &[usize], folds: usize) -> Result<()> {
    for fold in 0..folds {
        for class in 0..classes {
            let present = labels.iter().zip(assignment).any(|(&l, &f)| l == class && f != fold);
            let exists = labels.iter().any(|&l| l == class);
            if exists && !present {
                return Err(Error::Stratification { class, fold });
            }
        }
    }
    Ok(())
}

fn sub_gram(k: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| k[(rows[r], cols[c])])
}

/// Trains on `train`, returns the number of correct predictions on `test`.
fn fit_and_score(
    k: &DMatrix<f64>,
    labels: &[usize],
    classes: usize,
    train: &[usize],
    test: &[usize],
    c: f64,
    opts: &SolverOptions,
) -> Result<usize> {
    let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let model = MultiClassModel::train(&sub_gram(k, train, train), &train_labels, classes, c, opts)?;
    Ok(test
        .iter()
        .filter(|&&t| {
            let row: Vec<f64> = train.iter().map(|&s| k[(t, s)]).collect();
            model.predict(&row) == labels[t]
        })
        .count())
}

#[derive(Clone, Debug)]
pub struct CvOptions {
    pub folds: usize,
    pub repeats: usize,
    /// Folds used to pick `C` on each outer training set.
    pub inner_folds: usize,
    pub c_grid: Vec<f64>,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 10,
            repeats: 10,
            inner_folds: 5,
            c_grid: DEFAULT_C_GRID.to_vec(),
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CvReport {
    /// `[repeat][fold]` test accuracy.
    pub fold_accuracies: Vec<Vec<f64>>,
    /// `[repeat][fold]` selected `C`.
    pub chosen_c: Vec<Vec<f64>>,
    /// Pooled test accuracy of each repeat.
    pub repeat_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `repeat_accuracies`.
    pub std: f64,
    /// Diagonal shift applied to make the Gram PSD.
    pub psd_shift: f64,
}

impl CvReport {
    /// `mean ± std` in percent, two decimals.
    pub fn summary(&self) -> String {
        format!("{:.2} (±{:.2})", 100.0 * self.mean, 100.0 * self.std)
    }
}

/// Picks the grid value with the best inner cross-validated accuracy;
/// earlier grid entries win ties.
fn select_c(
    k: &DMatrix<f64>,
    labels: &[usize],
    classes: usize,
    train: &[usize],
    opts: &CvOptions,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if opts.c_grid.len() == 1 {
        return Ok(opts.c_grid[0]);
    }
    let sub_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let assignment = stratified_folds(&sub_labels, opts.inner_folds, rng);
    check_strata(&sub_labels, classes, &assignment, opts.inner_folds)?;
    let mut best = (0usize, opts.c_grid[0]);
    for &c in &opts.c_grid {
        let mut correct = 0;
        for fold in 0..opts.inner_folds {
            let (tr, te): (Vec<usize>, Vec<usize>) = (0..train.len()).partition(|&i| assignment[i] != fold);
            let tr: Vec<usize> = tr.iter().map(|&i| train[i]).collect();
            let te: Vec<usize> = te.iter().map(|&i| train[i]).collect();
            correct += fit_and_score(k, labels, classes, &tr, &te, c, &opts.solver)?;
        }
        if correct > best.0 {
            best = (correct, c);
        }
    }
    Ok(best.1)
}

/// Repeated stratified k-fold cross-validation with inner selection of `C`.
pub fn cross_validate(gram: &DMatrix<f64>, labels: &[usize], opts: &CvOptions) -> Result<CvReport> {
    let m = labels.len();
    if gram.nrows() != m || gram.ncols() != m {
        return Err(Error::DimensionMismatch {
            what: "Gram size vs label count",
            left: gram.nrows(),
            right: m,
        });
    }
    if opts.folds < 2 || opts.repeats == 0 || opts.c_grid.is_empty() || opts.inner_folds < 2 {
        return Err(Error::invalid("need folds >= 2, inner folds >= 2, repeats >= 1 and a non-empty C grid"));
    }
    let classes = labels.iter().copied().max().map_or(0, |c| c + 1);
    if classes < 2 {
        return Err(Error::invalid("cross-validation needs at least two classes"));
    }
    let (k, psd_shift) = repair_psd(gram);

    let assignments: Vec<Vec<usize>> = (0..opts.repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            let a = stratified_folds(labels, opts.folds, &mut rng);
            check_strata(labels, classes, &a, opts.folds).map(|_| a)
        })
        .collect::<Result<_>>()?;

    let tasks: Vec<(usize, usize)> = (0..opts.repeats)
        .flat_map(|r| (0..opts.folds).map(move |f| (r, f)))
        .collect();
    let outcomes = tasks
        .par_iter()
        .map(|&(r, f)| {
            let a = &assignments[r];
            let (train, test): (Vec<usize>, Vec<usize>) = (0..m).partition(|&i| a[i] != f);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
            rng.set_stream((r * opts.folds + f) as u64);
            let c = select_c(&k, labels, classes, &train, opts, &mut rng)?;
            let correct = fit_and_score(&k, labels, classes, &train, &test, c, &opts.solver)?;
            Ok((c, correct, test.len()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut fold_accuracies = vec![Vec::with_capacity(opts.folds); opts.repeats];
    let mut chosen_c = vec![Vec::with_capacity(opts.folds); opts.repeats];
    let mut pooled = vec![(0usize, 0usize); opts.repeats];
    for (&(r, _), &(c, correct, total)) in tasks.iter().zip(&outcomes) {
        fold_accuracies[r].push(if total == 0 { 0.0 } else { correct as f64 / total as f64 });
        chosen_c[r].push(c);
        pooled[r].0 += correct;
        pooled[r].1 += total;
    }
    let repeat_accuracies: Vec<f64> = pooled.iter().map(|&(c, t)| c as f64 / t as f64).collect();
    let mean = repeat_accuracies.iter().sum::<f64>() / opts.repeats as f64;
    let var = repeat_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / opts.repeats as f64;
    Ok(CvReport {
        fold_accuracies,
        chosen_c,
        repeat_accuracies,
        mean,
        std: var.sqrt(),
        psd_shift,
    })
}
