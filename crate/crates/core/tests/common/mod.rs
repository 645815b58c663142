//! Oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::{array, Array2};
use rand::Rng;
use wdm_core::autodiff::Tensor;
use wdm_core::models::{Activation, CriticState, EncoderConfig};
use wdm_core::ot::{DiscreteDistribution, Point};

pub fn normalize(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    let mut m: Vec<f64> = w.iter().map(|v| v / s).collect();
    // Put rounding residue on the largest entry.
    let r = 1.0 - m.iter().sum::<f64>();
    let i = (0..m.len()).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap();
    m[i] += r;
    m
}

pub fn dist(points: Vec<Vec<f64>>, weights: &[f64]) -> DiscreteDistribution {
    DiscreteDistribution::new(points.into_iter().map(Point::vector).collect(), normalize(weights)).unwrap()
}

pub fn random_dist(rng: &mut impl Rng, max_points: usize, dim: usize) -> DiscreteDistribution {
    let n = rng.random_range(1..=max_points);
    let pts = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    dist(pts, &w)
}

/// Gaussian elimination with partial pivoting on the `(rows, cols)` system;
/// `None` when the columns are dependent or the system is inconsistent.
pub fn solve_exact(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let rows = a.len();
    let cols = a[0].len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| r.iter().copied().chain([v]).collect()).collect();
    let mut r = 0;
    let mut pivots = Vec::new();
    for c in 0..cols {
        let p = (r..rows).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c].abs() < 1e-12 {
            return None;
        }
        m.swap(r, p);
        for i in 0..rows {
            if i != r {
                let f = m[i][c] / m[r][c];
                for k in c..=cols {
                    m[i][k] -= f * m[r][k];
                }
            }
        }
        pivots.push(r);
        r += 1;
    }
    if (r..rows).any(|i| m[i][cols].abs() > 1e-9) {
        return None;
    }
    Some((0..cols).map(|c| m[pivots[c]][cols] / m[pivots[c]][c]).collect())
}

/// Minimum cost over every basic feasible coupling of the transportation polytope.
pub fn brute_force_ot(cost: &Array2<f64>, p: &[f64], q: &[f64]) -> f64 {
    let (n, m) = cost.dim();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let basis = n + m - 1;
    let mut best = f64::INFINITY;
    let mut rhs: Vec<f64> = p.to_vec();
    rhs.extend_from_slice(q);
    let mut choose = vec![false; cells.len()];
    fn walk(
        k: usize,
        left: usize,
        choose: &mut Vec<bool>,
        cells: &[(usize, usize)],
        visit: &mut dyn FnMut(&[bool]),
    ) {
        if left == 0 {
            visit(choose);
            return;
        }
        if cells.len() - k < left {
            return;
        }
        choose[k] = true;
        walk(k + 1, left - 1, choose, cells, visit);
        choose[k] = false;
        walk(k + 1, left, choose, cells, visit);
    }
    let mut visit = |sel: &[bool]| {
        let chosen: Vec<(usize, usize)> = cells.iter().zip(sel).filter(|(_, &s)| s).map(|(c, _)| *c).collect();
        let a: Vec<Vec<f64>> = (0..n + m)
            .map(|row| {
                chosen
                    .iter()
                    .map(|&(i, j)| if (row < n && i == row) || (row >= n && j == row - n) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        if let Some(x) = solve_exact(&a, &rhs) {
            if x.iter().all(|&v| v >= -1e-12) {
                let c: f64 = chosen.iter().zip(&x).map(|(&(i, j), v)| cost[[i, j]] * v).sum();
                best = best.min(c);
            }
        }
    };
    walk(0, basis, &mut choose, &cells, &mut visit);
    best
}

pub fn tiny_tanh() -> EncoderConfig {
    EncoderConfig { hidden_widths: vec![4], repr_dim: 2, activation: Activation::Tanh, ..EncoderConfig::mlp([1, 1, 2]) }
}

pub fn batch() -> (Tensor, Tensor, Tensor, Tensor, Vec<f64>) {
    let xp = array![[0.3, -0.2], [1.1, 0.4], [-0.7, 0.9]];
    let yp = array![[0.5, 0.1], [-0.4, -1.2], [0.8, 0.3]];
    let xn = array![[0.3, -0.2], [1.1, 0.4], [-0.7, 0.9]];
    let yn = array![[-0.4, -1.2], [0.8, 0.3], [0.5, 0.1]];
    (xp, yp, xn, yn, vec![0.25, 0.6, 0.9])
}

/// Closed-form penalty for `⟨φ(x), ψ(y)⟩` with one tanh hidden layer per side.
pub fn penalty_by_hand(state: &CriticState, b: &(Tensor, Tensor, Tensor, Tensor, Vec<f64>)) -> f64 {
    let (xp, yp, xn, yn, eps) = b;
    let [w1x, b1x, w2x, b2x] = [0, 1, 2, 3].map(|i| &state.encoder_x.params[i]);
    let [w1y, b1y, w2y, b2y] = [0, 1, 2, 3].map(|i| &state.encoder_y.params[i]);
    let mut total = 0.0;
    for i in 0..xp.nrows() {
        let e = eps[i];
        let x = &xp.row(i) * e + &xn.row(i) * (1.0 - e);
        let y = &yp.row(i) * e + &yn.row(i) * (1.0 - e);
        let hx = (x.dot(w1x) + b1x.row(0)).mapv(f64::tanh);
        let hy = (y.dot(w1y) + b1y.row(0)).mapv(f64::tanh);
        let phi = hx.dot(w2x) + b2x.row(0);
        let psi = hy.dot(w2y) + b2y.row(0);
        // ∇ₓ⟨φ, ψ⟩ = W1 ((1 − h²) ⊙ W2 ψ)
        let gx = w1x.dot(&(w2x.dot(&psi) * hx.mapv(|h| 1.0 - h * h)));
        let gy = w1y.dot(&(w2y.dot(&phi) * hy.mapv(|h| 1.0 - h * h)));
        let norm = (gx.dot(&gx) + gy.dot(&gy) + 1e-12).sqrt();
        total += (norm - 1.0).powi(2);
    }
    total / xp.nrows() as f64
}
