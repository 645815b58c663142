//! Stochastic gradient ascent on a dependency objective.

use crate::autodiff::{Graph, Tensor};
use crate::datasets::{mix_seed, DatasetSpec, GlyphDatasetSpec, PairDataset};
use crate::error::{Error, Result};
use crate::models::{CriticState, EncoderConfig, Side};
use crate::objectives::{
    cpc_objective_var, gradient_penalty_var, mi_estimate, wdm_dual_var, ObjectiveConfig, ObjectiveKind, PenaltyBatch,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    PlainSgd,
    AdaptiveMoment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub eval_every: usize,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 64,
            learning_rate: 1e-4,
            seed: 0,
            eval_every: 500,
            optimizer: Optimizer::AdaptiveMoment,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        self.validate_schedule()
    }

    /// Everything but the step count; [`train`] accepts zero steps.
    fn validate_schedule(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch size K must be at least 2".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Window means over the steps since the previous record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub objective: f64,
    pub mi_estimate: f64,
    pub gp: f64,
    pub wallclock_s: f64,
}

/// How the parameter gradient of the penalty was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyGradient {
    /// Exact second-order reverse mode.
    DoubleBackprop,
    NotUsed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub batch_size: usize,
    pub records: Vec<LogRecord>,
    /// Largest single-batch MI estimate seen during training.
    pub max_mi_estimate: f64,
    /// Number of batches on which the CPC ≥ penalized-objective ordering was checked.
    pub ordering_checks: usize,
    pub penalty_gradient: PenaltyGradient,
}

impl RunLog {
    /// The log with wallclock fields zeroed, for determinism comparisons.
    pub fn without_wallclock(&self) -> RunLog {
        let mut log = self.clone();
        log.records.iter_mut().for_each(|r| r.wallclock_s = 0.0);
        log
    }

    /// Mean MI estimate over the last `frac` of records (at least one).
    pub fn final_mi_estimate(&self, frac: f64) -> f64 {
        tail_mean(&self.records, frac, |r| r.mi_estimate)
    }

    pub fn final_objective(&self, frac: f64) -> f64 {
        tail_mean(&self.records, frac, |r| r.objective)
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "objective", "mi_estimate", "gp", "wallclock_s"])?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.objective.to_string(),
                r.mi_estimate.to_string(),
                r.gp.to_string(),
                format!("{:.3}", r.wallclock_s),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn tail_mean(records: &[LogRecord], frac: f64, f: impl Fn(&LogRecord) -> f64) -> f64 {
    if records.is_empty() {
        return f64::NAN;
    }
    let n = ((records.len() as f64 * frac).ceil() as usize).clamp(1, records.len());
    records[records.len() - n..].iter().map(f).sum::<f64>() / n as f64
}

struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(state: &CriticState) -> Self {
        let zeros: Vec<Tensor> = state.parameters().iter().map(|p| Tensor::zeros(p.dim())).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn ascend(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = Self::B1 * *m + (1.0 - Self::B1) * g;
                *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
                *p += lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            });
        }
    }
}

/// Random cyclic permutation (no fixed points), Sattolo's algorithm.
fn derangement(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        p.swap(i, j);
    }
    p
}

/// Values of one training batch.
#[derive(Clone, Copy, Debug)]
pub struct StepStats {
    pub objective: f64,
    pub cpc: f64,
    pub gp: f64,
}

/// Objective and parameter gradient on one batch.
pub fn objective_and_gradient(
    state: &CriticState,
    objective: &ObjectiveConfig,
    xb: &Tensor,
    yb: &Tensor,
    rng: &mut impl Rng,
) -> Result<(StepStats, Vec<Tensor>)> {
    let k = xb.nrows();
    let mut g = Graph::new();
    let critic = state.bind(&mut g);
    let xv = g.leaf(xb.clone());
    let yv = g.leaf(yb.clone());
    let zx = critic.encode(&mut g, Side::X, xv);
    let zy = critic.encode(&mut g, Side::Y, yv);
    let s = critic.score_matrix(&mut g, zx, zy);
    if g.value(s).iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("score matrix".into()));
    }
    let cpc = cpc_objective_var(&mut g, s);

    let lambda = objective.penalty_coeff;
    let (obj, gp) = if objective.kind.uses_penalty() && lambda > 0.0 {
        let perm = derangement(k, rng);
        let y_neg = yb.select(ndarray::Axis(0), &perm);
        let eps: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let batch = PenaltyBatch { x_pos: xb, y_pos: yb, x_neg: xb, y_neg: &y_neg };
        let gp = gradient_penalty_var(&mut g, &critic, &batch, &eps, objective.penalty_target)?;
        let base = match objective.kind {
            ObjectiveKind::WdmDual => wdm_dual_var(&mut g, s),
            _ => cpc,
        };
        let pen = g.scale(gp, -lambda);
        (g.add(base, pen), Some(gp))
    } else if objective.kind == ObjectiveKind::WdmDual {
        (wdm_dual_var(&mut g, s), None)
    } else {
        (cpc, None)
    };

    let stats = StepStats { objective: g.scalar(obj), cpc: g.scalar(cpc), gp: gp.map_or(0.0, |v| g.scalar(v)) };
    let params = critic.params().to_vec();
    let grads = g.grad(obj, &params);
    let grads: Vec<Tensor> = grads.into_iter().map(|v| g.value(v).clone()).collect();
    Ok((stats, grads))
}

/// Maximizes the configured objective over both encoders.
///
/// Batches are drawn with replacement. A zero-step run returns the
/// initialization untouched.
pub fn train(
    dataset: &PairDataset,
    encoder: &EncoderConfig,
    objective: &ObjectiveConfig,
    config: &TrainConfig,
) -> Result<(CriticState, RunLog)> {
    if dataset.is_empty() {
        return Err(Error::Shape("dataset is empty".into()));
    }
    if encoder.input_dim() != dataset.input_dim() {
        return Err(Error::Shape(format!(
            "encoder input {:?} does not match dataset images {:?}",
            encoder.input_shape, dataset.image_shape
        )));
    }
    encoder.validate(dataset.n_factors())?;
    objective.validate()?;
    config.validate_schedule()?;
    let k = config.batch_size;
    let mut state = CriticState::symmetric(encoder.clone(), mix_seed(&[config.seed, 0x1417]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, 0xba7c]));
    let mut adam = Adam::new(&state);
    let uses_penalty = objective.kind.uses_penalty() && objective.penalty_coeff > 0.0;
    let mut log = RunLog {
        batch_size: k,
        records: Vec::new(),
        max_mi_estimate: f64::NEG_INFINITY,
        ordering_checks: 0,
        penalty_gradient: if uses_penalty { PenaltyGradient::DoubleBackprop } else { PenaltyGradient::NotUsed },
    };
    let start = Instant::now();
    let (mut acc_obj, mut acc_mi, mut acc_gp, mut acc_n) = (0.0, 0.0, 0.0, 0usize);

    for step in 1..=config.steps {
        let idx: Vec<usize> = (0..k).map(|_| rng.random_range(0..dataset.len())).collect();
        let xb = dataset.x_rows(&idx);
        let yb = dataset.y_rows(&idx);
        let (stats, grads) = objective_and_gradient(&state, objective, &xb, &yb, &mut rng)?;
        let mi = mi_estimate(stats.cpc, k);
        if !stats.objective.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!(
                "training diverged at step {step}: objective {}, cpc {}, gp {}, last record {:?}",
                stats.objective,
                stats.cpc,
                stats.gp,
                log.records.last()
            )));
        }
        if objective.kind == ObjectiveKind::Wpc {
            if stats.objective > stats.cpc {
                return Err(Error::NonFinite(format!(
                    "penalized objective {} exceeds CPC {} at step {step}",
                    stats.objective, stats.cpc
                )));
            }
            log.ordering_checks += 1;
        }
        log.max_mi_estimate = log.max_mi_estimate.max(mi);
        acc_obj += stats.objective;
        acc_mi += mi;
        acc_gp += stats.gp;
        acc_n += 1;

        match config.optimizer {
            Optimizer::AdaptiveMoment => adam.ascend(state.parameters_mut(), &grads, config.learning_rate),
            Optimizer::PlainSgd => {
                for (p, g) in state.parameters_mut().into_iter().zip(&grads) {
                    p.scaled_add(config.learning_rate, g);
                }
            }
        }

        if step % config.eval_every == 0 || step == config.steps {
            let n = acc_n as f64;
            log.records.push(LogRecord {
                step,
                objective: acc_obj / n,
                mi_estimate: acc_mi / n,
                gp: acc_gp / n,
                wallclock_s: start.elapsed().as_secs_f64(),
            });
            (acc_obj, acc_mi, acc_gp, acc_n) = (0.0, 0.0, 0.0, 0);
        }
    }
    Ok((state, log))
}

/// One true-MI level of the saturation experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationLevel {
    pub alphabet_sizes: Vec<usize>,
    /// Break the pairing so the true MI is 0.
    #[serde(default)]
    pub independent: bool,
}

impl SaturationLevel {
    pub fn true_mi(&self) -> f64 {
        if self.independent {
            0.0
        } else {
            crate::datasets::glyph_mi(&self.alphabet_sizes)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationSetup {
    pub n_samples: usize,
    pub cell_px: usize,
    pub jitter: f64,
    pub encoder: EncoderConfig,
    pub objective: ObjectiveKind,
    pub seeds: Vec<u64>,
    /// Fraction of trailing log records averaged into the final estimate.
    pub tail_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationRow {
    pub true_mi: f64,
    pub batch_size: usize,
    pub mean_final_mi_estimate: f64,
    /// Largest single-batch estimate over all seeds.
    pub max_mi_estimate: f64,
}

/// Trains on glyph datasets of increasing true MI for each batch size and
/// reports the converged in-batch MI estimate.
pub fn saturation_experiment(
    levels: &[SaturationLevel],
    k_values: &[usize],
    train_cfg: &TrainConfig,
    setup: &SaturationSetup,
) -> Result<Vec<SaturationRow>> {
    if setup.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let mut rows = Vec::new();
    for level in levels {
        let mut spec = GlyphDatasetSpec::stacked(level.alphabet_sizes.clone(), setup.n_samples, setup.cell_px, 0);
        spec.jitter = setup.jitter;
        for &k in k_values {
            let (mut sum, mut max) = (0.0, f64::NEG_INFINITY);
            for &seed in &setup.seeds {
                spec.seed = seed;
                let mut data = DatasetSpec::Glyph(spec.clone()).generate()?;
                if level.independent {
                    data = data.with_shuffled_pairs(mix_seed(&[seed, 0x5f]));
                }
                let mut enc = setup.encoder.clone();
                enc.input_shape = data.image_shape;
                let cfg = TrainConfig { batch_size: k, seed, ..train_cfg.clone() };
                let (_, log) = train(&data, &enc, &ObjectiveConfig::new(setup.objective, k), &cfg)?;
                sum += log.final_mi_estimate(setup.tail_fraction);
                max = max.max(log.max_mi_estimate);
            }
            rows.push(SaturationRow {
                true_mi: level.true_mi(),
                batch_size: k,
                mean_final_mi_estimate: sum / setup.seeds.len() as f64,
                max_mi_estimate: max,
            });
        }
    }
    Ok(rows)
}
