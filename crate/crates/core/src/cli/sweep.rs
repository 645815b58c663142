use crate::datasets::{mi_of_spec, mix_seed, DatasetSpec};
use crate::error::{Error, Result};
use crate::models::{Activation, Arch, EncoderConfig};
use crate::objectives::{ObjectiveConfig, ObjectiveKind};
use crate::probe::evaluate_model;
use crate::training::{train, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const FORMAT_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 8] = [
    "axis",
    "objective",
    "seed",
    "mi_certificate",
    "final_mi_estimate",
    "mean_probe_accuracy",
    "per_factor_accuracies",
    "wallclock_s",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NCharacters,
    DatasetSize,
    BatchSize,
}

/// Encoder settings without the input shape, which comes from the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderSettings {
    pub arch: Arch,
    #[serde(default)]
    pub hidden_widths: Option<Vec<usize>>,
    #[serde(default)]
    pub repr_dim: Option<usize>,
    #[serde(default)]
    pub activation: Option<Activation>,
    #[serde(default)]
    pub unit_norm: bool,
}

impl EncoderSettings {
    pub fn resolve(&self, input_shape: [usize; 3]) -> EncoderConfig {
        let base = match self.arch {
            Arch::Mlp => EncoderConfig::mlp(input_shape),
            Arch::Conv => EncoderConfig::conv(input_shape),
        };
        EncoderConfig {
            hidden_widths: self.hidden_widths.clone().unwrap_or(base.hidden_widths),
            repr_dim: self.repr_dim.unwrap_or(base.repr_dim),
            activation: self.activation.unwrap_or(base.activation),
            unit_norm: self.unit_norm,
            ..base
        }
    }
}

fn default_penalty_coeff() -> f64 {
    10.0
}

fn default_tail_fraction() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Template; the swept field and the seed are overwritten per cell.
    pub dataset: DatasetSpec,
    pub axis: SweepAxis,
    pub axis_values: Vec<usize>,
    pub objectives: Vec<ObjectiveKind>,
    pub seeds: Vec<u64>,
    pub encoder: EncoderSettings,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_penalty_coeff")]
    pub penalty_coeff: f64,
    /// Fraction of trailing log records averaged into `final_mi_estimate`.
    #[serde(default = "default_tail_fraction")]
    pub tail_fraction: f64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Write per-cell training logs under `logs/`.
    #[serde(default)]
    pub write_logs: bool,
}

/// One resolved `(axis value, objective, seed)` job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub axis_value: usize,
    pub objective: ObjectiveKind,
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub mi_certificate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub final_mi_estimate: f64,
    pub mean_probe_accuracy: f64,
    pub per_factor_accuracies: Vec<f64>,
    pub wallclock_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub axis_value: usize,
    pub objective: ObjectiveKind,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: SweepConfig,
    pub cells: Vec<SweepCell>,
    /// Training-set size per axis value.
    pub dataset_sizes: BTreeMap<usize, usize>,
    pub failures: Vec<CellFailure>,
}

/// 1-based line of the first occurrence of `"key"` in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

fn at_line(text: &str, key: &str, msg: String) -> Error {
    match line_of(text, key) {
        Some(line) => Error::Config(format!("line {line}: {msg}")),
        None => Error::Config(msg),
    }
}

impl SweepConfig {
    /// Parses and validates; errors carry the offending line.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_text("")
    }

    fn validate_text(&self, text: &str) -> Result<()> {
        if self.axis_values.is_empty() {
            return Err(at_line(text, "axis_values", "axis_values must be nonempty".into()));
        }
        if self.objectives.is_empty() {
            return Err(at_line(text, "objectives", "objectives must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(at_line(text, "seeds", "seeds must be nonempty".into()));
        }
        if self.axis == SweepAxis::NCharacters && !matches!(self.dataset, DatasetSpec::Glyph(_)) {
            return Err(at_line(text, "axis", "the n_characters axis needs a glyph dataset".into()));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(at_line(text, "tail_fraction", "tail_fraction must lie in (0, 1]".into()));
        }
        self.train.validate().map_err(|e| at_line(text, "train", e.to_string()))?;
        for cell in self.cells().map_err(|e| at_line(text, "dataset", e.to_string()))? {
            let msg = |e: Error| at_line(text, "encoder", format!("axis value {}: {e}", cell.axis_value));
            let n_factors = match &cell.dataset {
                DatasetSpec::Glyph(s) => s.alphabet_sizes.len(),
                DatasetSpec::Shapes(s) => s.shared_cardinalities().len(),
            };
            cell.encoder.validate(n_factors).map_err(msg)?;
            ObjectiveConfig { penalty_coeff: self.penalty_coeff, ..ObjectiveConfig::new(cell.objective, cell.train.batch_size) }
                .validate()
                .map_err(|e| at_line(text, "penalty_coeff", e.to_string()))?;
        }
        Ok(())
    }

    fn dataset_for(&self, axis_value: usize, seed: u64) -> Result<DatasetSpec> {
        let mut spec = self.dataset.clone();
        match (&mut spec, self.axis) {
            (DatasetSpec::Glyph(g), SweepAxis::NCharacters) => {
                let l = *g.alphabet_sizes.first().ok_or_else(|| Error::InvalidSpec("no alphabet size".into()))?;
                g.alphabet_sizes = vec![l; axis_value];
                g.grid = None;
            }
            (DatasetSpec::Glyph(g), SweepAxis::DatasetSize) => g.n_samples = axis_value,
            (DatasetSpec::Shapes(s), SweepAxis::DatasetSize) => s.n_samples = axis_value,
            (_, SweepAxis::BatchSize) => {}
            (DatasetSpec::Shapes(_), SweepAxis::NCharacters) => {
                return Err(Error::Config("the n_characters axis needs a glyph dataset".into()))
            }
        }
        match &mut spec {
            DatasetSpec::Glyph(g) => {
                g.seed = seed;
                g.validate()?;
            }
            DatasetSpec::Shapes(s) => {
                s.seed = seed;
                s.validate()?;
            }
        }
        Ok(spec)
    }

    fn input_shape(spec: &DatasetSpec) -> [usize; 3] {
        match spec {
            DatasetSpec::Glyph(g) => g.image_shape(),
            DatasetSpec::Shapes(s) => [s.image_px, s.image_px, 3],
        }
    }

    /// Every job in CSV order: axis value, then objective, then seed.
    pub fn cells(&self) -> Result<Vec<SweepCell>> {
        let mut cells = Vec::new();
        for &v in &self.axis_values {
            for &objective in &self.objectives {
                for &seed in &self.seeds {
                    let dataset = self.dataset_for(v, seed)?;
                    let encoder = self.encoder.resolve(Self::input_shape(&dataset));
                    let mut train = self.train.clone();
                    train.seed = mix_seed(&[seed, v as u64]);
                    if self.axis == SweepAxis::BatchSize {
                        train.batch_size = v;
                    }
                    let mi_certificate = mi_of_spec(&dataset);
                    cells.push(SweepCell { axis_value: v, objective, seed, dataset, encoder, train, mi_certificate });
                }
            }
        }
        Ok(cells)
    }

    pub fn dataset_sizes(&self) -> Result<BTreeMap<usize, usize>> {
        self.axis_values
            .iter()
            .map(|&v| Ok((v, self.dataset_for(v, 0)?.n_samples())))
            .collect()
    }
}

fn log_path(dir: &Path, cell: &SweepCell) -> PathBuf {
    dir.join("logs").join(format!("{}_{}_{}.csv", cell.axis_value, cell.objective.name(), cell.seed))
}

/// Trains, probes and reports one cell.
pub fn run_cell(cell: &SweepCell, penalty_coeff: f64, tail_fraction: f64, log_dir: Option<&Path>) -> Result<CellResult> {
    let start = Instant::now();
    let data = cell.dataset.generate()?;
    let objective = ObjectiveConfig { penalty_coeff, ..ObjectiveConfig::new(cell.objective, cell.train.batch_size) };
    let (state, log) = train(&data, &cell.encoder, &objective, &cell.train)?;
    if let Some(dir) = log_dir {
        log.write_csv(log_path(dir, cell))?;
    }
    let probe = evaluate_model(&state, &data, cell.seed)?;
    Ok(CellResult {
        final_mi_estimate: log.final_mi_estimate(tail_fraction),
        mean_probe_accuracy: probe.mean_accuracy,
        per_factor_accuracies: probe.per_factor_accuracy,
        wallclock_s: start.elapsed().as_secs_f64(),
    })
}

pub struct SweepOutcome {
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub plot_path: PathBuf,
    pub rows: usize,
    pub failures: Vec<CellFailure>,
}

fn csv_row(cell: &SweepCell, r: &CellResult) -> Vec<String> {
    vec![
        cell.axis_value.to_string(),
        cell.objective.name().to_string(),
        cell.seed.to_string(),
        format!("{:.10}", cell.mi_certificate),
        format!("{:.10}", r.final_mi_estimate),
        format!("{:.10}", r.mean_probe_accuracy),
        r.per_factor_accuracies.iter().map(|a| format!("{a:.10}")).collect::<Vec<_>>().join(";"),
        format!("{:.3}", r.wallclock_s),
    ]
}

/// Runs every cell in parallel and writes `sweep.csv`, `manifest.json` and
/// `sweep_accuracy.png` under `out_dir`. Rows of failed cells are omitted and the
/// failures recorded in the manifest.
pub fn run_sweep(config: &SweepConfig, out_dir: &Path) -> Result<SweepOutcome> {
    config.validate()?;
    let cells = config.cells()?;
    std::fs::create_dir_all(out_dir)?;
    if config.write_logs {
        std::fs::create_dir_all(out_dir.join("logs"))?;
    }
    let log_dir = config.write_logs.then_some(out_dir);
    let results: Vec<Result<CellResult>> = cells
        .par_iter()
        .map(|cell| {
            log::info!("cell axis={} objective={} seed={}", cell.axis_value, cell.objective.name(), cell.seed);
            run_cell(cell, config.penalty_coeff, config.tail_fraction, log_dir)
        })
        .collect();

    let csv_path = out_dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(CSV_HEADER)?;
    let mut failures = Vec::new();
    let mut rows = 0;
    for (cell, res) in cells.iter().zip(&results) {
        match res {
            Ok(r) => {
                w.write_record(csv_row(cell, r))?;
                rows += 1;
            }
            Err(e) => failures.push(CellFailure {
                axis_value: cell.axis_value,
                objective: cell.objective,
                seed: cell.seed,
                error: e.to_string(),
            }),
        }
    }
    w.flush()?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        cells,
        dataset_sizes: config.dataset_sizes()?,
        failures: failures.clone(),
    };
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;

    let table = super::report::read_rows(&csv_path)?;
    let plot_path = out_dir.join("sweep_accuracy.png");
    super::plot::accuracy_plot(&super::report::aggregate(&table), &plot_path)?;
    Ok(SweepOutcome { csv_path, manifest_path, plot_path, rows, failures })
}

/// Human-readable plan for `--dry-run`.
pub fn describe_plan(config: &SweepConfig) -> Result<String> {
    let cells = config.cells()?;
    let mut out = format!(
        "{} cells: {} axis values x {} objectives x {} seeds\n",
        cells.len(),
        config.axis_values.len(),
        config.objectives.len(),
        config.seeds.len()
    );
    for c in &cells {
        out.push_str(&format!(
            "  axis={} objective={} seed={} mi={:.4} n={} K={} steps={} input={:?}\n",
            c.axis_value,
            c.objective.name(),
            c.seed,
            c.mi_certificate,
            c.dataset.n_samples(),
            c.train.batch_size,
            c.train.steps,
            c.encoder.input_shape
        ));
    }
    Ok(out)
}
