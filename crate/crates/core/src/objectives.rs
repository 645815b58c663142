//! Contrastive (CPC), Wasserstein predictive coding (WPC) and dual
//! Wasserstein dependency objectives, all in the maximization sense.
//!
//! Scores arrive as a `(K, K)` matrix `S_ij = f(x_i, y_j)` where row `i`'s
//! positive is on the diagonal and the other in-batch `y_j` are negatives.

use crate::autodiff::{logsumexp_rows, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::Critic;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Cpc,
    Wpc,
    WdmDual,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Cpc => "cpc",
            ObjectiveKind::Wpc => "wpc",
            ObjectiveKind::WdmDual => "wdm_dual",
        }
    }

    pub fn uses_penalty(self) -> bool {
        !matches!(self, ObjectiveKind::Cpc)
    }
}

fn default_penalty_coeff() -> f64 {
    10.0
}

fn default_penalty_target() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    /// Weight λ of the gradient penalty.
    #[serde(default = "default_penalty_coeff")]
    pub penalty_coeff: f64,
    /// Target input-gradient norm of the penalty.
    #[serde(default = "default_penalty_target")]
    pub penalty_target: f64,
    pub batch_size: usize,
}

impl ObjectiveConfig {
    pub fn new(kind: ObjectiveKind, batch_size: usize) -> Self {
        Self { kind, penalty_coeff: default_penalty_coeff(), penalty_target: default_penalty_target(), batch_size }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch size K must be at least 2".into()));
        }
        if !(self.penalty_coeff >= 0.0 && self.penalty_coeff.is_finite()) {
            return Err(Error::Config("penalty_coeff must be a nonnegative real".into()));
        }
        if !(self.penalty_target > 0.0 && self.penalty_target.is_finite()) {
            return Err(Error::Config("penalty_target must be positive".into()));
        }
        Ok(())
    }
}

fn check_scores(s: &Tensor) -> Result<usize> {
    let (k, m) = s.dim();
    if k != m {
        return Err(Error::Shape(format!("score matrix must be square, got {k}x{m}")));
    }
    if k < 2 {
        return Err(Error::Config("batch size K must be at least 2".into()));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("score matrix has non-finite entries".into()));
    }
    Ok(k)
}

/// `(1/K) Σᵢ [S_ii − ln Σⱼ exp S_ij]`, with the positive included in the sum.
pub fn cpc_objective(s: &Tensor) -> Result<f64> {
    let k = check_scores(s)?;
    let lse = logsumexp_rows(s);
    Ok((0..k).map(|i| s[[i, i]] - lse[[i, 0]]).sum::<f64>() / k as f64)
}

/// `J + ln K`; never above `ln K` because `J ≤ 0`.
pub fn mi_estimate(j: f64, k: usize) -> f64 {
    j + (k as f64).ln()
}

pub fn wpc_objective(s: &Tensor, gp: f64, lambda: f64) -> Result<f64> {
    if gp < 0.0 || lambda < 0.0 {
        return Err(Error::Config("penalty and its weight must be nonnegative".into()));
    }
    Ok(cpc_objective(s)? - lambda * gp)
}

/// Mean diagonal minus mean off-diagonal score, minus `λ·GP`.
pub fn wdm_dual_objective(s: &Tensor, gp: f64, lambda: f64) -> Result<f64> {
    let k = check_scores(s)? as f64;
    let diag: f64 = s.diag().sum();
    let off = s.sum() - diag;
    Ok(diag / k - off / (k * (k - 1.0)) - lambda * gp)
}

/// Graph form of [`cpc_objective`].
pub fn cpc_objective_var(g: &mut Graph, s: Var) -> Var {
    let k = g.value(s).nrows() as f64;
    let d = g.diag(s);
    let lse = g.logsumexp_cols(s);
    let terms = g.sub(d, lse);
    let total = g.sum_all(terms);
    g.scale(total, 1.0 / k)
}

/// Graph form of the penalty-free part of [`wdm_dual_objective`].
pub fn wdm_dual_var(g: &mut Graph, s: Var) -> Var {
    let k = g.value(s).nrows() as f64;
    let d = g.diag(s);
    let dsum = g.sum_all(d);
    let all = g.sum_all(s);
    let off = g.sub(all, dsum);
    let a = g.scale(dsum, 1.0 / k);
    let b = g.scale(off, -1.0 / (k * (k - 1.0)));
    g.add(a, b)
}

/// Per-sample interpolation weights `ε ~ U[0, 1)`.
pub fn interpolation_weights(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn lerp_rows(pos: &Tensor, neg: &Tensor, eps: &[f64]) -> Tensor {
    let mut out = neg.clone();
    for ((mut o, p), &e) in out.rows_mut().into_iter().zip(pos.rows()).zip(eps) {
        o.zip_mut_with(&p, |n, &p| *n = e * p + (1.0 - e) * *n);
    }
    out
}

/// Paired and unpaired `(x, y)` batches for the gradient penalty.
pub struct PenaltyBatch<'a> {
    pub x_pos: &'a Tensor,
    pub y_pos: &'a Tensor,
    pub x_neg: &'a Tensor,
    pub y_neg: &'a Tensor,
}

/// Builds `E[(‖∇_{(x,y)} f(x̃, ỹ)‖₂ − target)²]` on the graph, where
/// `(x̃, ỹ) = ε (x_pos, y_pos) + (1 − ε)(x_neg, y_neg)` per row.
///
/// The result can be differentiated with respect to the critic parameters.
pub fn gradient_penalty_var<C: Critic>(
    g: &mut Graph,
    critic: &C,
    batch: &PenaltyBatch,
    eps: &[f64],
    target: f64,
) -> Result<Var> {
    let n = batch.x_pos.nrows();
    if batch.y_pos.nrows() != n || batch.x_neg.dim() != batch.x_pos.dim() || batch.y_neg.dim() != batch.y_pos.dim() {
        return Err(Error::Shape("paired and unpaired batches are not shape-compatible".into()));
    }
    if eps.len() != n {
        return Err(Error::Shape(format!("{} interpolation weights for {n} samples", eps.len())));
    }
    let xt = g.leaf(lerp_rows(batch.x_pos, batch.x_neg, eps));
    let yt = g.leaf(lerp_rows(batch.y_pos, batch.y_neg, eps));
    let f = critic.pair_scores(g, xt, yt);
    let total = g.sum_all(f);
    let grads = g.grad(total, &[xt, yt]);
    if grads.iter().any(|&v| g.value(v).iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite("critic input-gradient is NaN".into()));
    }
    let sx = g.mul(grads[0], grads[0]);
    let sy = g.mul(grads[1], grads[1]);
    let nx = g.sum_cols(sx);
    let ny = g.sum_cols(sy);
    let sq = g.add(nx, ny);
    let sq = g.add_scalar(sq, 1e-12);
    let norm = g.powf(sq, 0.5);
    let dev = g.add_scalar(norm, -target);
    let dev2 = g.mul(dev, dev);
    Ok(g.mean_all(dev2))
}

/// Value of the two-sided gradient penalty with unit target.
pub fn gradient_penalty<C: Critic>(
    g: &mut Graph,
    critic: &C,
    batch: &PenaltyBatch,
    eps: &[f64],
) -> Result<f64> {
    let v = gradient_penalty_var(g, critic, batch, eps, 1.0)?;
    Ok(g.scalar(v))
}
