//! Linear-probe evaluation of frozen representations.
//!
//! One multinomial logistic regression per latent factor, fit on an 80/20
//! split of the distinct `(representation, labels)` rows. Repeated rows are
//! folded into weights, so duplicating a dataset leaves the result unchanged.

use crate::autodiff::{logsumexp_rows, Tensor};
use crate::datasets::{mix_seed, PairDataset};
use crate::error::{Error, Result};
use crate::models::{encode_chunked, CriticState, Side};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const TRAIN_FRACTION: f64 = 0.8;
pub const L2_PENALTY: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-6;
const MAX_ITER: usize = 2000;
const HISTORY: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub per_factor_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    /// Distinct rows with training weight, per factor.
    pub n_train: Vec<usize>,
    /// Distinct rows with held-out weight, per factor.
    pub n_test: Vec<usize>,
    pub factor_cardinalities: Vec<usize>,
    /// Factors with a single class present; their accuracy is 1 by definition.
    pub degenerate: Vec<bool>,
}

struct Distinct {
    rows: Vec<usize>,
    weight: Vec<f64>,
}

/// First occurrence of every distinct `(representation, labels)` row and its multiplicity.
fn distinct_rows(reps: &Tensor, labels: &Array2<u32>) -> Distinct {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let (mut rows, mut weight) = (Vec::new(), Vec::new());
    for i in 0..reps.nrows() {
        let key: Vec<u64> = reps
            .row(i)
            .iter()
            .map(|v| if *v == 0.0 { 0 } else { v.to_bits() })
            .chain(labels.row(i).iter().map(|&l| l as u64))
            .collect();
        match index.get(&key) {
            Some(&u) => weight[u] += 1.0,
            None => {
                index.insert(key, rows.len());
                rows.push(i);
                weight.push(1.0);
            }
        }
    }
    Distinct { rows, weight }
}

/// Train and test weights per distinct row for one factor.
///
/// Classes with several distinct rows are split by row; a class with one
/// distinct row has its weight split 80/20, since identical rows cannot be
/// separated anyway.
fn split_weights(classes: &[u32], weight: &[f64], seed: u64) -> (Vec<f64>, Vec<f64>) {
    let n = classes.len();
    let mut by_class: HashMap<u32, Vec<usize>> = HashMap::new();
    for (u, &c) in classes.iter().enumerate() {
        by_class.entry(c).or_default().push(u);
    }
    let mut keys: Vec<u32> = by_class.keys().copied().collect();
    keys.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (weight.to_vec(), vec![0.0; n]);
    for c in keys {
        let mut members = by_class.remove(&c).unwrap_or_default();
        if members.len() == 1 {
            let u = members[0];
            test[u] = weight[u] * (1.0 - TRAIN_FRACTION);
            train[u] = weight[u] * TRAIN_FRACTION;
            continue;
        }
        members.shuffle(&mut rng);
        let n_test = ((members.len() as f64 * (1.0 - TRAIN_FRACTION)).round() as usize).clamp(1, members.len() - 1);
        for &u in &members[..n_test] {
            test[u] = weight[u];
            train[u] = 0.0;
        }
    }
    (train, test)
}

/// Weighted multinomial logistic regression with an L2 penalty on the weights
/// (not the intercepts). Features must already carry a trailing bias column.
struct Softmax<'a> {
    x: &'a Tensor,
    onehot: Tensor,
    w: Vec<f64>,
    total: f64,
    l2: f64,
    classes: usize,
}

impl Softmax<'_> {
    fn value_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let d = self.x.ncols();
        let beta = Tensor::from_shape_vec((d, self.classes), theta.to_vec()).expect("parameter length");
        let logits = self.x.dot(&beta);
        let lse = logsumexp_rows(&logits);
        let mut loss = 0.0;
        let mut resid = logits;
        for (i, mut row) in resid.rows_mut().into_iter().enumerate() {
            let wi = self.w[i] / self.total;
            let z = lse[[i, 0]];
            for (k, v) in row.iter_mut().enumerate() {
                let y = self.onehot[[i, k]];
                if y > 0.0 {
                    loss += wi * (z - *v);
                }
                *v = wi * ((*v - z).exp() - y);
            }
        }
        let mut grad = self.x.t().dot(&resid);
        for j in 0..d - 1 {
            for k in 0..self.classes {
                let b = beta[[j, k]];
                loss += 0.5 * self.l2 * b * b;
                grad[[j, k]] += self.l2 * b;
            }
        }
        (loss, grad.into_iter().collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with a backtracking Armijo line search.
fn lbfgs(f: impl Fn(&[f64]) -> (f64, Vec<f64>), mut x: Vec<f64>, tol: f64) -> Vec<f64> {
    let (mut fx, mut g) = f(&x);
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    for it in 0..MAX_ITER {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < tol {
            break;
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alpha = vec![0.0; hist.len()];
        for (i, (s, y, rho)) in hist.iter().enumerate().rev() {
            alpha[i] = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(q, y)| *q -= alpha[i] * y);
        }
        let gamma = match hist.last() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for (i, (s, y, rho)) in hist.iter().enumerate() {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(q, s)| *q += (alpha[i] - b) * s);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
            hist.clear();
        }
        let mut step = 1.0;
        let (mut x_new, mut f_new, mut g_new);
        loop {
            x_new = x.iter().zip(&dir).map(|(x, d)| x + step * d).collect::<Vec<_>>();
            (f_new, g_new) = f(&x_new);
            if f_new <= fx + 1e-4 * step * slope || step < 1e-16 {
                break;
            }
            step *= 0.5;
        }
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if hist.len() == HISTORY {
                hist.remove(0);
            }
            hist.push((s, y, 1.0 / sy));
        }
        let converged = (fx - f_new).abs() <= 1e-14 * fx.abs().max(1.0) && it > 0;
        x = x_new;
        fx = f_new;
        g = g_new;
        if converged || step < 1e-16 {
            break;
        }
    }
    x
}

/// Fits one probe per factor and reports held-out accuracy.
pub fn fit_linear_probe(
    representations: &Tensor,
    labels: &Array2<u32>,
    cardinalities: &[usize],
    split_seed: u64,
) -> Result<ProbeResult> {
    let (n, d) = representations.dim();
    if labels.nrows() != n {
        return Err(Error::Shape(format!("{n} representations but {} label rows", labels.nrows())));
    }
    if labels.ncols() != cardinalities.len() {
        return Err(Error::Shape(format!(
            "{} label columns but {} cardinalities",
            labels.ncols(),
            cardinalities.len()
        )));
    }
    if n == 0 {
        return Err(Error::Shape("no samples to probe".into()));
    }
    if representations.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("representations contain non-finite values".into()));
    }
    for (f, &c) in cardinalities.iter().enumerate() {
        if let Some(&bad) = labels.column(f).iter().find(|&&l| l as usize >= c) {
            return Err(Error::Shape(format!("factor {f} label {bad} outside 0..{c}")));
        }
    }

    let distinct = distinct_rows(representations, labels);
    let reps = representations.select(Axis(0), &distinct.rows);
    let labs = labels.select(Axis(0), &distinct.rows);
    let m = distinct.rows.len();

    let mut result = ProbeResult {
        per_factor_accuracy: Vec::new(),
        mean_accuracy: 0.0,
        n_train: Vec::new(),
        n_test: Vec::new(),
        factor_cardinalities: cardinalities.to_vec(),
        degenerate: Vec::new(),
    };
    for (f, &c) in cardinalities.iter().enumerate() {
        let classes: Vec<u32> = labs.column(f).to_vec();
        let (train_w, test_w) = split_weights(&classes, &distinct.weight, mix_seed(&[split_seed, f as u64]));
        result.n_train.push(train_w.iter().filter(|&&w| w > 0.0).count());
        result.n_test.push(test_w.iter().filter(|&&w| w > 0.0).count());
        if classes.iter().all(|&k| k == classes[0]) {
            result.per_factor_accuracy.push(1.0);
            result.degenerate.push(true);
            continue;
        }
        result.degenerate.push(false);

        // Standardize with weighted training statistics.
        let total: f64 = train_w.iter().sum();
        let mut x = Tensor::ones((m, d + 1));
        for j in 0..d {
            let col = reps.column(j);
            let mean = col.iter().zip(&train_w).map(|(v, w)| v * w).sum::<f64>() / total;
            let var = col.iter().zip(&train_w).map(|(v, w)| w * (v - mean).powi(2)).sum::<f64>() / total;
            let sd = if var > 1e-24 { var.sqrt() } else { 1.0 };
            for i in 0..m {
                x[[i, j]] = (reps[[i, j]] - mean) / sd;
            }
        }
        let onehot = Tensor::from_shape_fn((m, c), |(i, k)| f64::from(classes[i] as usize == k));
        let problem = Softmax { x: &x, onehot, w: train_w, total, l2: L2_PENALTY, classes: c };
        let theta = lbfgs(|t| problem.value_grad(t), vec![0.0; (d + 1) * c], TOLERANCE);
        let beta = Tensor::from_shape_vec((d + 1, c), theta).expect("parameter length");
        let logits = x.dot(&beta);
        let (mut hit, mut all) = (0.0, 0.0);
        for (i, row) in logits.rows().into_iter().enumerate() {
            if test_w[i] == 0.0 {
                continue;
            }
            let pred = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                .0;
            all += test_w[i];
            if pred == classes[i] as usize {
                hit += test_w[i];
            }
        }
        result.per_factor_accuracy.push(if all > 0.0 { hit / all } else { 1.0 });
    }
    result.mean_accuracy = if result.per_factor_accuracy.is_empty() {
        0.0
    } else {
        result.per_factor_accuracy.iter().sum::<f64>() / result.per_factor_accuracy.len() as f64
    };
    Ok(result)
}

/// Encodes `dataset.x` with the x-side encoder and probes it against `dataset.z`.
pub fn evaluate_model(state: &CriticState, dataset: &PairDataset, split_seed: u64) -> Result<ProbeResult> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    let reps = encode_chunked(state, Side::X, &dataset.x_rows(&all), 256)?;
    fit_linear_probe(&reps, &dataset.z, &dataset.factor_cardinalities, split_seed)
}
